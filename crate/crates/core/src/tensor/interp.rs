use super::reduce::split_at_axis;
use super::Tensor;
use crate::error::{shape_err, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum InterpMode {
    /// Source index `floor(i * in / out)`.
    Nearest,
    /// Corner-aligned linear: output `i` samples source position `i * (in-1) / (out-1)`.
    Linear,
}

/// For each output index, up to two (source index, weight) taps.
pub(crate) fn interp_taps(input: usize, output: usize, mode: InterpMode) -> Vec<[(usize, f64); 2]> {
    (0..output)
        .map(|i| match mode {
            InterpMode::Nearest => [((i * input) / output, 1.0), (0, 0.0)],
            InterpMode::Linear => {
                if input == 1 || output == 1 {
                    return [(0, 1.0), (0, 0.0)];
                }
                let pos = i as f64 * (input - 1) as f64 / (output - 1) as f64;
                let lo = (pos.floor() as usize).min(input - 1);
                let frac = pos - lo as f64;
                if lo + 1 < input && frac > 0.0 {
                    [(lo, 1.0 - frac), (lo + 1, frac)]
                } else {
                    [(lo, 1.0), (0, 0.0)]
                }
            }
        })
        .collect()
}

impl Tensor {
    /// Resamples one axis to `new_extent`.
    pub fn interpolate_axis(&self, axis: usize, new_extent: usize, mode: InterpMode) -> Result<Tensor> {
        if axis >= self.rank() {
            return Err(shape_err!("axis {axis} out of range for {:?}", self.shape()));
        }
        if new_extent == 0 {
            return Err(shape_err!("interpolation target extent must be at least 1"));
        }
        let (outer, n, inner) = split_at_axis(self.shape(), axis);
        if n == new_extent {
            return self.reshape(self.shape());
        }
        let taps = interp_taps(n, new_extent, mode);
        let x = self.data();
        let mut out = vec![0.0; outer * new_extent * inner];
        for o in 0..outer {
            for (i, t) in taps.iter().enumerate() {
                let dst = &mut out[(o * new_extent + i) * inner..(o * new_extent + i + 1) * inner];
                for &(src, w) in t {
                    if w == 0.0 {
                        continue;
                    }
                    let s = &x[(o * n + src) * inner..(o * n + src + 1) * inner];
                    dst.iter_mut().zip(s).for_each(|(d, v)| *d += w * v);
                }
            }
        }
        let mut shape = self.shape().to_vec();
        shape[axis] = new_extent;
        Tensor::from_op(
            "interpolate_axis",
            shape,
            out,
            vec![self.clone()],
            Box::new(move |g, _| {
                let mut gx = vec![0.0; outer * n * inner];
                for o in 0..outer {
                    for (i, t) in taps.iter().enumerate() {
                        let gs = &g[(o * new_extent + i) * inner..(o * new_extent + i + 1) * inner];
                        for &(src, w) in t {
                            if w == 0.0 {
                                continue;
                            }
                            let d = &mut gx[(o * n + src) * inner..(o * n + src + 1) * inner];
                            d.iter_mut().zip(gs).for_each(|(d, g)| *d += w * g);
                        }
                    }
                }
                vec![Some(gx)]
            }),
        )
    }
}
