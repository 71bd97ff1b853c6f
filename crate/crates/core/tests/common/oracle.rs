//! Slow reference implementations used to check the optimised code paths.

use rand::Rng;
use viola_core::unet::Network;
use viola_core::volume::{Volume, VolumeKind};
use viola_core::Tensor;

pub fn mask_volume(dims: [usize; 3], spacing: [f64; 3], on: &[bool]) -> Volume {
    let data = on.iter().map(|&b| if b { 1.0 } else { 0.0 }).collect();
    Volume::new(dims, spacing, VolumeKind::LabelInt, data).unwrap()
}

/// Random mask made of a few filled boxes plus salt noise, so masks have
/// both solid interiors and isolated voxels.
pub fn random_mask<R: Rng>(dims: [usize; 3], rng: &mut R) -> Vec<bool> {
    let n = dims.iter().product();
    let mut m = vec![false; n];
    if rng.gen_bool(0.05) {
        return m;
    }
    for _ in 0..rng.gen_range(1..4) {
        let lo: [usize; 3] = std::array::from_fn(|a| rng.gen_range(0..dims[a]));
        let hi: [usize; 3] = std::array::from_fn(|a| rng.gen_range(lo[a]..dims[a]) + 1);
        for i in lo[0]..hi[0] {
            for j in lo[1]..hi[1] {
                for k in lo[2]..hi[2] {
                    m[(i * dims[1] + j) * dims[2] + k] = true;
                }
            }
        }
    }
    let p = rng.gen_range(0.0..0.1);
    m.iter_mut().for_each(|v| *v ^= rng.gen_bool(p));
    m
}

fn coords(dims: [usize; 3]) -> impl Iterator<Item = [usize; 3]> {
    let [h, w, d] = dims;
    (0..h).flat_map(move |i| (0..w).flat_map(move |j| (0..d).map(move |k| [i, j, k])))
}

/// Foreground voxels touching the border or a background face-neighbour.
pub fn surface(m: &[bool], dims: [usize; 3]) -> Vec<[usize; 3]> {
    let at = |c: [i64; 3]| -> Option<bool> {
        if (0..3).any(|a| c[a] < 0 || c[a] >= dims[a] as i64) {
            return None;
        }
        Some(m[(c[0] as usize * dims[1] + c[1] as usize) * dims[2] + c[2] as usize])
    };
    coords(dims)
        .filter(|c| {
            let ci = c.map(|x| x as i64);
            at(ci) == Some(true)
                && (0..3).any(|a| {
                    [-1i64, 1].iter().any(|s| {
                        let mut n = ci;
                        n[a] += s;
                        at(n) != Some(true)
                    })
                })
        })
        .collect()
}

fn dist(a: [usize; 3], b: [usize; 3], spacing: [f64; 3]) -> f64 {
    (0..3)
        .map(|i| ((a[i] as f64 - b[i] as f64) * spacing[i]).powi(2))
        .sum::<f64>()
        .sqrt()
}

/// For every point of `from`, the distance to the nearest point of `to`.
pub fn nearest(from: &[[usize; 3]], to: &[[usize; 3]], spacing: [f64; 3]) -> Vec<f64> {
    from.iter()
        .map(|&a| to.iter().map(|&b| dist(a, b, spacing)).fold(f64::INFINITY, f64::min))
        .collect()
}

/// Percentile in the "linear" convention: rank `q/100 * (n-1)` in the
/// sorted list, interpolating between neighbours.
pub fn percentile(values: &[f64], q: f64) -> f64 {
    let mut v = values.to_vec();
    v.sort_by(|a, b| a.partial_cmp(b).unwrap());
    let rank = q / 100.0 * (v.len() as f64 - 1.0);
    let below = rank.floor();
    let frac = rank - below;
    let i = below as usize;
    if i + 1 < v.len() {
        v[i] * (1.0 - frac) + v[i + 1] * frac
    } else {
        v[i]
    }
}

pub struct Expected {
    pub dsc: f64,
    pub hd: Option<f64>,
    pub hd95: Option<f64>,
    pub nsd: Option<f64>,
    pub rvd: Option<f64>,
}

pub fn metrics(p: &[bool], g: &[bool], dims: [usize; 3], spacing: [f64; 3], tau: f64) -> Expected {
    let np = p.iter().filter(|&&x| x).count();
    let ng = g.iter().filter(|&&x| x).count();
    let both = p.iter().zip(g).filter(|(a, b)| **a && **b).count();
    let dsc = if np + ng == 0 { 1.0 } else { 2.0 * both as f64 / (np + ng) as f64 };
    let sp = surface(p, dims);
    let sg = surface(g, dims);
    let (hd, hd95, nsd) = if sp.is_empty() || sg.is_empty() {
        let nsd = if sp.is_empty() && sg.is_empty() { None } else { Some(0.0) };
        (None, None, nsd)
    } else {
        let a = nearest(&sp, &sg, spacing);
        let b = nearest(&sg, &sp, spacing);
        let hd = percentile(&a, 100.0).max(percentile(&b, 100.0));
        let hd95 = percentile(&a, 95.0).max(percentile(&b, 95.0));
        let within = a.iter().chain(&b).filter(|&&d| d <= tau).count();
        (Some(hd), Some(hd95), Some(within as f64 / (a.len() + b.len()) as f64))
    };
    let rvd = (ng > 0).then(|| (np as f64 - ng as f64).abs() / ng as f64);
    Expected { dsc, hd, hd95, nsd, rvd }
}

/// Sliding-window reference: visits every tile origin explicitly, runs the
/// network on the tile and averages class probabilities where tiles overlap.
/// `image` must already be at least one patch in every axis.
pub fn tiled_probabilities(net: &Network, image: &Tensor, patch: [usize; 3], starts: [&[usize]; 3]) -> Vec<f64> {
    let c = image.shape()[0];
    let dims = [image.shape()[1], image.shape()[2], image.shape()[3]];
    let n: usize = dims.iter().product();
    let idx = |i: usize, j: usize, k: usize| (i * dims[1] + j) * dims[2] + k;
    let mut sum: Vec<f64> = Vec::new();
    let mut hits = vec![0.0; n];
    for &a in starts[0] {
        for &b in starts[1] {
            for &g in starts[2] {
                let mut tile = Vec::new();
                for ch in 0..c {
                    for i in 0..patch[0] {
                        for j in 0..patch[1] {
                            for k in 0..patch[2] {
                                tile.push(image.data()[ch * n + idx(a + i, b + j, g + k)]);
                            }
                        }
                    }
                }
                let x = Tensor::new(&[1, c, patch[0], patch[1], patch[2]], tile).unwrap();
                let logits = net.forward(&x).unwrap()[0].to_vec();
                let kc = logits.len() / patch.iter().product::<usize>();
                if sum.is_empty() {
                    sum = vec![0.0; kc * n];
                }
                let tn = logits.len() / kc;
                for v in 0..tn {
                    let (i, j, k) = (v / (patch[1] * patch[2]), (v / patch[2]) % patch[1], v % patch[2]);
                    let z: Vec<f64> = (0..kc).map(|cls| logits[cls * tn + v]).collect();
                    let probs: Vec<f64> = if kc == 1 {
                        vec![1.0 / (1.0 + (-z[0]).exp())]
                    } else {
                        let m = z.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
                        let e: Vec<f64> = z.iter().map(|x| (x - m).exp()).collect();
                        let s: f64 = e.iter().sum();
                        e.iter().map(|x| x / s).collect()
                    };
                    let at = idx(a + i, b + j, g + k);
                    for cls in 0..kc {
                        sum[cls * n + at] += probs[cls];
                    }
                    hits[at] += 1.0;
                }
            }
        }
    }
    let kc = sum.len() / n;
    (0..kc * n).map(|i| sum[i] / hits[i % n]).collect()
}
