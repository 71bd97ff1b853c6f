//! Intra-op parallelism switch.
//!
//! Kernels split their output into disjoint chunks and compute each chunk with
//! a fixed reduction order, so results do not depend on the thread count.
//! `VIOLA_THREADS=1` (or [`set_single_threaded`]) runs every chunk on the
//! calling thread.

use std::sync::atomic::{AtomicU8, Ordering};
use std::sync::Once;

use rayon::prelude::*;

const UNSET: u8 = 0;
const SINGLE: u8 = 1;
const MULTI: u8 = 2;

static MODE: AtomicU8 = AtomicU8::new(UNSET);
static POOL_INIT: Once = Once::new();

fn mode() -> u8 {
    let m = MODE.load(Ordering::Relaxed);
    if m != UNSET {
        return m;
    }
    let threads = std::env::var("VIOLA_THREADS")
        .ok()
        .and_then(|v| v.trim().parse::<usize>().ok());
    let m = match threads {
        Some(1) => SINGLE,
        Some(n) if n > 1 => {
            POOL_INIT.call_once(|| {
                let _ = rayon::ThreadPoolBuilder::new().num_threads(n).build_global();
            });
            MULTI
        }
        _ => MULTI,
    };
    MODE.store(m, Ordering::Relaxed);
    m
}

/// Forces (or releases) single-threaded execution for every kernel.
pub fn set_single_threaded(single: bool) {
    MODE.store(if single { SINGLE } else { MULTI }, Ordering::Relaxed);
}

pub fn is_single_threaded() -> bool {
    mode() == SINGLE
}

/// Calls `f(chunk_index, chunk)` for each `chunk_len`-sized piece of `out`.
pub(crate) fn for_each_chunk<F>(out: &mut [f64], chunk_len: usize, f: F)
where
    F: Fn(usize, &mut [f64]) + Sync + Send,
{
    if chunk_len == 0 || out.is_empty() {
        return;
    }
    // Tiny workloads are not worth the scheduling overhead.
    if is_single_threaded() || out.len() < 4096 {
        out.chunks_mut(chunk_len).enumerate().for_each(|(i, c)| f(i, c));
    } else {
        out.par_chunks_mut(chunk_len)
            .enumerate()
            .for_each(|(i, c)| f(i, c));
    }
}
