use super::Tensor;
use crate::error::{config_err, Error, Result};

/// Normalisation epsilon used throughout the network.
pub const GROUP_NORM_EPS: f64 = 1e-5;

impl Tensor {
    /// Group normalisation of `[B, C, ...]` without affine terms.
    ///
    /// Each batch item's channels are split into `groups` contiguous groups,
    /// and every group is shifted to zero mean and scaled by
    /// `1/sqrt(var + eps)` (population variance).
    pub fn group_norm(&self, groups: usize, eps: f64) -> Result<Tensor> {
        if self.rank() < 2 {
            return Err(Error::Rank {
                expected: "at least 2 (B×C×...)".into(),
                got: self.rank(),
            });
        }
        let (b, c) = (self.shape()[0], self.shape()[1]);
        if groups == 0 || c % groups != 0 {
            return Err(config_err!("{c} channels are not divisible into {groups} groups"));
        }
        let n = self.numel() / (b * groups);
        let x = self.data();
        let mut out = vec![0.0; x.len()];
        let mut inv_std = Vec::with_capacity(b * groups);
        for (src, dst) in x.chunks(n).zip(out.chunks_mut(n)) {
            let mean = src.iter().sum::<f64>() / n as f64;
            let var = src.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / n as f64;
            let is = 1.0 / (var + eps).sqrt();
            dst.iter_mut()
                .zip(src)
                .for_each(|(d, v)| *d = (v - mean) * is);
            inv_std.push(is);
        }
        let xhat = std::sync::Arc::new(out.clone());
        Tensor::from_op(
            "group_norm",
            self.shape().to_vec(),
            out,
            vec![self.clone()],
            Box::new(move |g, _| {
                let mut gx = vec![0.0; g.len()];
                for (((gs, xs), dst), &is) in g
                    .chunks(n)
                    .zip(xhat.chunks(n))
                    .zip(gx.chunks_mut(n))
                    .zip(&inv_std)
                {
                    let mean_g = gs.iter().sum::<f64>() / n as f64;
                    let mean_gx = gs.iter().zip(xs).map(|(g, x)| g * x).sum::<f64>() / n as f64;
                    for ((d, g), x) in dst.iter_mut().zip(gs).zip(xs) {
                        *d = is * (g - mean_g - x * mean_gx);
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
    fn constant_input_normalises_to_zero() {
        let x = Tensor::full(&[1, 4, 3], 2.5).unwrap();
        let y = x.group_norm(2, GROUP_NORM_EPS).unwrap();
        assert!(y.data().iter().all(|&v| v == 0.0));
    }

    #[test]
    fn two_values_become_minus_one_and_one() {
        let x = Tensor::new(&[1, 2], vec![1.0, 3.0]).unwrap();
        let y = x.group_norm(1, GROUP_NORM_EPS).unwrap();
        let s = 1.0 / (1.0 + GROUP_NORM_EPS).sqrt();
        assert!((y.data()[0] + s).abs() < 1e-15);
        assert!((y.data()[1] - s).abs() < 1e-15);
        assert!((y.data()[1] - 1.0).abs() < 1e-5);
    }

    #[test]
    fn groups_are_independent() {
        // group 0 = channels {0,1}: values 0,2,4,6 ; group 1 = channels {2,3}: 100,100,100,300
        let x = Tensor::new(
            &[1, 4, 2],
            vec![0.0, 2.0, 4.0, 6.0, 100.0, 100.0, 100.0, 300.0],
        )
        .unwrap();
        let y = x.group_norm(2, GROUP_NORM_EPS).unwrap();
        let oracle = |vals: &[f64]| -> Vec<f64> {
            let m = vals.iter().sum::<f64>() / vals.len() as f64;
            let v = vals.iter().map(|x| (x - m).powi(2)).sum::<f64>() / vals.len() as f64;
            vals.iter().map(|x| (x - m) / (v + GROUP_NORM_EPS).sqrt()).collect()
        };
        let mut expected = oracle(&[0.0, 2.0, 4.0, 6.0]);
        expected.extend(oracle(&[100.0, 100.0, 100.0, 300.0]));
        for (a, e) in y.data().iter().zip(expected) {
            assert!((a - e).abs() < 1e-12);
        }
    }

    #[test]
    fn indivisible_channels_rejected() {
        let x = Tensor::zeros(&[1, 3, 2]).unwrap();
        assert!(matches!(x.group_norm(2, GROUP_NORM_EPS), Err(Error::Config(_))));
    }
}
