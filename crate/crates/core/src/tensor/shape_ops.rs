use super::reduce::split_at_axis;
use super::{numel, Tensor};
use crate::error::{shape_err, Result};

impl Tensor {
    pub fn reshape(&self, shape: &[usize]) -> Result<Tensor> {
        if numel(shape) != self.numel() || shape.iter().any(|&d| d == 0) {
            return Err(shape_err!(
                "cannot reshape {:?} into {shape:?}",
                self.shape()
            ));
        }
        Tensor::from_op(
            "reshape",
            shape.to_vec(),
            self.to_vec(),
            vec![self.clone()],
            Box::new(|g, _| vec![Some(g.to_vec())]),
        )
    }

    /// Inserts an axis of extent 1 at `axis`.
    pub fn unsqueeze(&self, axis: usize) -> Result<Tensor> {
        if axis > self.rank() {
            return Err(shape_err!("unsqueeze axis {axis} out of range for {:?}", self.shape()));
        }
        let mut shape = self.shape().to_vec();
        shape.insert(axis, 1);
        self.reshape(&shape)
    }

    /// Removes an axis of extent 1.
    pub fn squeeze_axis(&self, axis: usize) -> Result<Tensor> {
        if axis >= self.rank() || self.shape()[axis] != 1 {
            return Err(shape_err!("axis {axis} of {:?} is not a singleton", self.shape()));
        }
        let mut shape = self.shape().to_vec();
        shape.remove(axis);
        self.reshape(&shape)
    }

    /// Concatenation along `axis`; all other extents must agree.
    pub fn concat(parts: &[Tensor], axis: usize) -> Result<Tensor> {
        let first = parts
            .first()
            .ok_or_else(|| shape_err!("concat of an empty list"))?;
        if axis >= first.rank() {
            return Err(shape_err!("concat axis {axis} out of range for {:?}", first.shape()));
        }
        for p in parts {
            let compatible = p.rank() == first.rank()
                && p.shape()
                    .iter()
                    .zip(first.shape())
                    .enumerate()
                    .all(|(i, (a, b))| i == axis || a == b);
            if !compatible {
                return Err(shape_err!(
                    "concat along axis {axis}: {:?} incompatible with {:?}",
                    p.shape(),
                    first.shape()
                ));
            }
        }
        let (outer, _, inner) = split_at_axis(first.shape(), axis);
        let extents: Vec<usize> = parts.iter().map(|p| p.shape()[axis]).collect();
        let total: usize = extents.iter().sum();
        let mut out = Vec::with_capacity(outer * total * inner);
        for o in 0..outer {
            for (p, &n) in parts.iter().zip(&extents) {
                out.extend_from_slice(&p.data()[o * n * inner..(o + 1) * n * inner]);
            }
        }
        let mut shape = first.shape().to_vec();
        shape[axis] = total;
        let ext = extents.clone();
        Tensor::from_op(
            "concat",
            shape,
            out,
            parts.to_vec(),
            Box::new(move |g, needs| {
                let mut grads: Vec<Option<Vec<f64>>> = ext
                    .iter()
                    .zip(needs)
                    .map(|(&n, &need)| need.then(|| Vec::with_capacity(outer * n * inner)))
                    .collect();
                let mut off = 0;
                for _ in 0..outer {
                    for (gp, &n) in grads.iter_mut().zip(&ext) {
                        if let Some(gp) = gp {
                            gp.extend_from_slice(&g[off..off + n * inner]);
                        }
                        off += n * inner;
                    }
                }
                grads
            }),
        )
    }

    /// Contiguous sub-range `[start, start + len)` along `axis`.
    pub fn narrow(&self, axis: usize, start: usize, len: usize) -> Result<Tensor> {
        if axis >= self.rank() || len == 0 || start + len > self.shape()[axis] {
            return Err(shape_err!(
                "narrow({axis}, {start}, {len}) out of range for {:?}",
                self.shape()
            ));
        }
        let (outer, n, inner) = split_at_axis(self.shape(), axis);
        let x = self.data();
        let mut out = Vec::with_capacity(outer * len * inner);
        for o in 0..outer {
            let base = (o * n + start) * inner;
            out.extend_from_slice(&x[base..base + len * inner]);
        }
        let mut shape = self.shape().to_vec();
        shape[axis] = len;
        Tensor::from_op(
            "narrow",
            shape,
            out,
            vec![self.clone()],
            Box::new(move |g, _| {
                let mut gx = vec![0.0; outer * n * inner];
                for o in 0..outer {
                    let base = (o * n + start) * inner;
                    gx[base..base + len * inner]
                        .copy_from_slice(&g[o * len * inner..(o + 1) * len * inner]);
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
    fn concat_then_narrow_recovers_parts() {
        let a = Tensor::new(&[1, 1, 2], vec![1.0, 2.0]).unwrap();
        let b = Tensor::new(&[1, 2, 2], vec![3.0, 4.0, 5.0, 6.0]).unwrap();
        let c = Tensor::concat(&[a.clone(), b.clone()], 1).unwrap();
        assert_eq!(c.shape(), &[1, 3, 2]);
        assert_eq!(c.narrow(1, 0, 1).unwrap().data(), a.data());
        assert_eq!(c.narrow(1, 1, 2).unwrap().data(), b.data());
    }

    #[test]
    fn concat_rejects_mismatch() {
        let a = Tensor::zeros(&[1, 1, 2]).unwrap();
        let b = Tensor::zeros(&[1, 1, 3]).unwrap();
        assert!(Tensor::concat(&[a, b], 1).is_err());
    }

    #[test]
    fn reshape_checks_count() {
        let a = Tensor::zeros(&[2, 3]).unwrap();
        assert!(a.reshape(&[3, 2]).is_ok());
        assert!(a.reshape(&[4]).is_err());
    }
}
