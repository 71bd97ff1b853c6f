use std::sync::Arc;

use super::reduce::split_at_axis;
use super::Tensor;
use crate::error::{shape_err, Result};

impl Tensor {
    pub fn softmax(&self, axis: usize) -> Result<Tensor> {
        let (outer, n, inner, y) = self.log_softmax_values(axis)?;
        let y: Vec<f64> = y.into_iter().map(f64::exp).collect();
        let ys = Arc::new(y.clone());
        Tensor::from_op(
            "softmax",
            self.shape().to_vec(),
            y,
            vec![self.clone()],
            Box::new(move |g, _| {
                let mut gx = vec![0.0; g.len()];
                for o in 0..outer {
                    for i in 0..inner {
                        let at = |j: usize| (o * n + j) * inner + i;
                        let dot: f64 = (0..n).map(|j| g[at(j)] * ys[at(j)]).sum();
                        for j in 0..n {
                            gx[at(j)] = ys[at(j)] * (g[at(j)] - dot);
                        }
                    }
                }
                vec![Some(gx)]
            }),
        )
    }

    pub fn log_softmax(&self, axis: usize) -> Result<Tensor> {
        let (outer, n, inner, y) = self.log_softmax_values(axis)?;
        let ys = Arc::new(y.clone());
        Tensor::from_op(
            "log_softmax",
            self.shape().to_vec(),
            y,
            vec![self.clone()],
            Box::new(move |g, _| {
                let mut gx = vec![0.0; g.len()];
                for o in 0..outer {
                    for i in 0..inner {
                        let at = |j: usize| (o * n + j) * inner + i;
                        let gsum: f64 = (0..n).map(|j| g[at(j)]).sum();
                        for j in 0..n {
                            gx[at(j)] = g[at(j)] - ys[at(j)].exp() * gsum;
                        }
                    }
                }
                vec![Some(gx)]
            }),
        )
    }

    fn log_softmax_values(&self, axis: usize) -> Result<(usize, usize, usize, Vec<f64>)> {
        if axis >= self.rank() {
            return Err(shape_err!("axis {axis} out of range for {:?}", self.shape()));
        }
        let (outer, n, inner) = split_at_axis(self.shape(), axis);
        let x = self.data();
        let mut y = vec![0.0; x.len()];
        for o in 0..outer {
            for i in 0..inner {
                let at = |j: usize| (o * n + j) * inner + i;
                let m = (0..n).map(|j| x[at(j)]).fold(f64::NEG_INFINITY, f64::max);
                let lse = m + (0..n).map(|j| (x[at(j)] - m).exp()).sum::<f64>().ln();
                for j in 0..n {
                    y[at(j)] = x[at(j)] - lse;
                }
            }
        }
        Ok((outer, n, inner, y))
    }
}
