use super::Tensor;
use crate::error::{shape_err, Result};

/// (outer, axis extent, inner) factorisation of a shape around `axis`.
pub(crate) fn split_at_axis(shape: &[usize], axis: usize) -> (usize, usize, usize) {
    let outer = shape[..axis].iter().product();
    let inner = shape[axis + 1..].iter().product();
    (outer, shape[axis], inner)
}

impl Tensor {
    pub fn sum_all(&self) -> Result<Tensor> {
        let n = self.numel();
        let s = self.data().iter().sum();
        Tensor::from_op(
            "sum_all",
            vec![],
            vec![s],
            vec![self.clone()],
            Box::new(move |g, _| vec![Some(vec![g[0]; n])]),
        )
    }

    pub fn mean_all(&self) -> Result<Tensor> {
        let n = self.numel();
        self.sum_all()?.mul_scalar(1.0 / n as f64)
    }

    /// Sum over one axis, keeping it with extent 1.
    pub fn sum_axis(&self, axis: usize) -> Result<Tensor> {
        if axis >= self.rank() {
            return Err(shape_err!("axis {axis} out of range for shape {:?}", self.shape()));
        }
        let (outer, n, inner) = split_at_axis(self.shape(), axis);
        let x = self.data();
        let mut out = vec![0.0; outer * inner];
        for o in 0..outer {
            for j in 0..n {
                let src = &x[(o * n + j) * inner..(o * n + j + 1) * inner];
                let dst = &mut out[o * inner..(o + 1) * inner];
                dst.iter_mut().zip(src).for_each(|(d, s)| *d += s);
            }
        }
        let mut shape = self.shape().to_vec();
        shape[axis] = 1;
        Tensor::from_op(
            "sum_axis",
            shape,
            out,
            vec![self.clone()],
            Box::new(move |g, _| {
                let mut gx = vec![0.0; outer * n * inner];
                for o in 0..outer {
                    for j in 0..n {
                        gx[(o * n + j) * inner..(o * n + j + 1) * inner]
                            .copy_from_slice(&g[o * inner..(o + 1) * inner]);
                    }
                }
                vec![Some(gx)]
            }),
        )
    }

    /// Sums everything except `axis`, giving a rank-1 tensor of its extent.
    pub fn sum_keep_axis(&self, axis: usize) -> Result<Tensor> {
        if axis >= self.rank() {
            return Err(shape_err!("axis {axis} out of range for shape {:?}", self.shape()));
        }
        let (outer, n, inner) = split_at_axis(self.shape(), axis);
        let x = self.data();
        let mut out = vec![0.0; n];
        for o in 0..outer {
            for (j, acc) in out.iter_mut().enumerate() {
                *acc += x[(o * n + j) * inner..(o * n + j + 1) * inner].iter().sum::<f64>();
            }
        }
        Tensor::from_op(
            "sum_keep_axis",
            vec![n],
            out,
            vec![self.clone()],
            Box::new(move |g, _| {
                let mut gx = vec![0.0; outer * n * inner];
                for o in 0..outer {
                    for j in 0..n {
                        gx[(o * n + j) * inner..(o * n + j + 1) * inner].fill(g[j]);
                    }
                }
                vec![Some(gx)]
            }),
        )
    }

    /// Euclidean norm of all elements, as a rank-0 tensor.
    ///
    /// The gradient at the origin is taken as zero.
    pub fn l2_norm_flat(&self) -> Result<Tensor> {
        let rows = self.l2_rows(1)?;
        rows.reshape(&[])
    }

    /// Euclidean norm per item of the leading axis: `[B, ...] -> [B]`.
    pub fn l2_norm_per_item(&self) -> Result<Tensor> {
        if self.rank() == 0 {
            return Err(shape_err!("per-item norm needs a leading axis"));
        }
        self.l2_rows(self.shape()[0])
    }

    fn l2_rows(&self, rows: usize) -> Result<Tensor> {
        let len = self.numel() / rows;
        let x = self.data_arc();
        let norms: Vec<f64> = x
            .chunks(len)
            .map(|r| r.iter().map(|v| v * v).sum::<f64>().sqrt())
            .collect();
        let n2 = norms.clone();
        Tensor::from_op(
            "l2_norm",
            vec![rows],
            norms,
            vec![self.clone()],
            Box::new(move |g, _| {
                let mut gx = vec![0.0; x.len()];
                for (r, (chunk, out)) in x.chunks(len).zip(gx.chunks_mut(len)).enumerate() {
                    if n2[r] > 0.0 {
                        let s = g[r] / n2[r];
                        out.iter_mut().zip(chunk).for_each(|(o, v)| *o = s * v);
                    }
                }
                vec![Some(gx)]
            }),
        )
    }
}
