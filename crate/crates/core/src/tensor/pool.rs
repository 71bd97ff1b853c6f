use super::Tensor;
use crate::error::{Error, Result};

/// Spatial axis of a `C×H×W×D` (or `B×C×H×W×D`) feature volume.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum SpatialAxis {
    H,
    W,
    D,
}

impl SpatialAxis {
    pub const ALL: [SpatialAxis; 3] = [SpatialAxis::H, SpatialAxis::W, SpatialAxis::D];

    pub fn index(self) -> usize {
        match self {
            SpatialAxis::H => 0,
            SpatialAxis::W => 1,
            SpatialAxis::D => 2,
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            SpatialAxis::H => "h",
            SpatialAxis::W => "w",
            SpatialAxis::D => "d",
        }
    }
}

impl Tensor {
    /// Averages over the two spatial axes other than `kept`.
    ///
    /// `[C,H,W,D] -> [C,L]` and `[B,C,H,W,D] -> [B,C,L]`.
    pub fn adaptive_avg_pool(&self, kept: SpatialAxis) -> Result<Tensor> {
        let (batched, lead) = match self.rank() {
            4 => (false, 1),
            5 => (true, self.shape()[0] * self.shape()[1]),
            got => {
                return Err(Error::Rank {
                    expected: "4 (C×H×W×D) or 5 (B×C×H×W×D)".into(),
                    got,
                })
            }
        };
        let sp: [usize; 3] = self.shape()[self.rank() - 3..].try_into().expect("rank checked");
        let lead = if batched { lead } else { self.shape()[0] };
        let k = kept.index();
        let len = sp[k];
        let vol = sp[0] * sp[1] * sp[2];
        let inv = 1.0 / (vol / len) as f64;
        let x = self.data();
        let mut out = vec![0.0; lead * len];
        for l in 0..lead {
            let src = &x[l * vol..(l + 1) * vol];
            let dst = &mut out[l * len..(l + 1) * len];
            for h in 0..sp[0] {
                for w in 0..sp[1] {
                    let row = &src[(h * sp[1] + w) * sp[2]..(h * sp[1] + w + 1) * sp[2]];
                    match kept {
                        SpatialAxis::H => dst[h] += row.iter().sum::<f64>(),
                        SpatialAxis::W => dst[w] += row.iter().sum::<f64>(),
                        SpatialAxis::D => dst.iter_mut().zip(row).for_each(|(o, v)| *o += v),
                    }
                }
            }
            dst.iter_mut().for_each(|v| *v *= inv);
        }
        let mut shape = self.shape()[..self.rank() - 3].to_vec();
        shape.push(len);
        Tensor::from_op(
            "adaptive_avg_pool",
            shape,
            out,
            vec![self.clone()],
            Box::new(move |g, _| {
                let mut gx = vec![0.0; lead * vol];
                for l in 0..lead {
                    let gl = &g[l * len..(l + 1) * len];
                    let dst = &mut gx[l * vol..(l + 1) * vol];
                    for h in 0..sp[0] {
                        for w in 0..sp[1] {
                            for d in 0..sp[2] {
                                let pos = [h, w, d][k];
                                dst[(h * sp[1] + w) * sp[2] + d] = gl[pos] * inv;
                            }
                        }
                    }
                }
                vec![Some(gx)]
            }),
        )
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn constant_input_gives_constant_latent() {
        let x = Tensor::full(&[2, 3, 4, 5], 7.0).unwrap();
        let p = x.adaptive_avg_pool(SpatialAxis::H).unwrap();
        assert_eq!(p.shape(), &[2, 3]);
        assert!(p.data().iter().all(|&v| (v - 7.0).abs() < 1e-12));
    }

    #[test]
    fn singleton_reduction_is_the_fiber() {
        let x = Tensor::new(&[1, 2, 1, 1], vec![3.0, 5.0]).unwrap();
        assert_eq!(x.adaptive_avg_pool(SpatialAxis::H).unwrap().data(), &[3.0, 5.0]);
    }

    #[test]
    fn keep_w_averages_over_d_in_row_major_layout() {
        // [C=1,H=1,W=2,D=2] row-major: (w0,d0)=1 (w0,d1)=2 (w1,d0)=3 (w1,d1)=4
        let x = Tensor::new(&[1, 1, 2, 2], vec![1.0, 2.0, 3.0, 4.0]).unwrap();
        assert_eq!(x.adaptive_avg_pool(SpatialAxis::W).unwrap().data(), &[1.5, 3.5]);
        assert_eq!(x.adaptive_avg_pool(SpatialAxis::D).unwrap().data(), &[2.0, 3.0]);
    }

    #[test]
    fn wrong_rank_is_rejected() {
        let x = Tensor::zeros(&[2, 3, 4]).unwrap();
        assert!(matches!(
            x.adaptive_avg_pool(SpatialAxis::H),
            Err(Error::Rank { got: 3, .. })
        ));
    }
}
