use super::{numel, strides_of, Tensor};
use crate::error::{shape_err, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum CombineMode {
    Add,
    Sub,
    Mul,
    Div,
}

/// Broadcast shape of two equal-rank shapes (each axis equal or 1).
pub(crate) fn broadcast_shape(a: &[usize], b: &[usize]) -> Result<Vec<usize>> {
    if a.len() != b.len() {
        return Err(shape_err!(
            "cannot broadcast rank {} shape {a:?} with rank {} shape {b:?}",
            a.len(),
            b.len()
        ));
    }
    a.iter()
        .zip(b)
        .map(|(&x, &y)| match (x, y) {
            _ if x == y => Ok(x),
            (1, _) => Ok(y),
            (_, 1) => Ok(x),
            _ => Err(shape_err!("shapes {a:?} and {b:?} are not broadcastable")),
        })
        .collect()
}

/// Strides of `shape` viewed inside `out`, with 0 on broadcast axes.
fn broadcast_strides(shape: &[usize], out: &[usize]) -> Vec<usize> {
    let s = strides_of(shape);
    shape
        .iter()
        .zip(out)
        .zip(s)
        .map(|((&d, &o), s)| if d == 1 && o != 1 { 0 } else { s })
        .collect()
}

/// Visits every output position with the matching flat offsets into `a` and `b`.
fn visit(out: &[usize], sa: &[usize], sb: &[usize], mut f: impl FnMut(usize, usize, usize)) {
    let rank = out.len();
    let total = numel(out);
    if rank == 0 {
        f(0, 0, 0);
        return;
    }
    let last = rank - 1;
    let inner = out[last];
    let mut idx = vec![0usize; rank];
    let mut flat = 0;
    while flat < total {
        let mut ia = 0;
        let mut ib = 0;
        for ax in 0..last {
            ia += idx[ax] * sa[ax];
            ib += idx[ax] * sb[ax];
        }
        for i in 0..inner {
            f(flat + i, ia + i * sa[last], ib + i * sb[last]);
        }
        flat += inner;
        for ax in (0..last).rev() {
            idx[ax] += 1;
            if idx[ax] < out[ax] {
                break;
            }
            idx[ax] = 0;
        }
    }
}

impl Tensor {
    /// Element-wise binary op over the broadcast shape; gradients are summed
    /// back over broadcast axes.
    pub fn broadcast_combine(&self, other: &Tensor, mode: CombineMode) -> Result<Tensor> {
        let out_shape = broadcast_shape(self.shape(), other.shape())?;
        let sa = broadcast_strides(self.shape(), &out_shape);
        let sb = broadcast_strides(other.shape(), &out_shape);
        let a = self.data_arc();
        let b = other.data_arc();
        let mut out = vec![0.0; numel(&out_shape)];
        visit(&out_shape, &sa, &sb, |o, i, j| {
            let (x, y) = (a[i], b[j]);
            out[o] = match mode {
                CombineMode::Add => x + y,
                CombineMode::Sub => x - y,
                CombineMode::Mul => x * y,
                CombineMode::Div => x / y,
            };
        });
        let (na, nb) = (self.numel(), other.numel());
        let shape = out_shape.clone();
        let op = match mode {
            CombineMode::Add => "add",
            CombineMode::Sub => "sub",
            CombineMode::Mul => "mul",
            CombineMode::Div => "div",
        };
        Tensor::from_op(
            op,
            out_shape,
            out,
            vec![self.clone(), other.clone()],
            Box::new(move |g, needs| {
                let mut ga = needs[0].then(|| vec![0.0; na]);
                let mut gb = needs[1].then(|| vec![0.0; nb]);
                visit(&shape, &sa, &sb, |o, i, j| {
                    let (x, y, g) = (a[i], b[j], g[o]);
                    let (dx, dy) = match mode {
                        CombineMode::Add => (g, g),
                        CombineMode::Sub => (g, -g),
                        CombineMode::Mul => (g * y, g * x),
                        CombineMode::Div => (g / y, -g * x / (y * y)),
                    };
                    if let Some(ga) = ga.as_mut() {
                        ga[i] += dx;
                    }
                    if let Some(gb) = gb.as_mut() {
                        gb[j] += dy;
                    }
                });
                vec![ga, gb]
            }),
        )
    }

    pub fn add(&self, other: &Tensor) -> Result<Tensor> {
        self.broadcast_combine(other, CombineMode::Add)
    }

    pub fn sub(&self, other: &Tensor) -> Result<Tensor> {
        self.broadcast_combine(other, CombineMode::Sub)
    }

    pub fn mul(&self, other: &Tensor) -> Result<Tensor> {
        self.broadcast_combine(other, CombineMode::Mul)
    }

    pub fn div(&self, other: &Tensor) -> Result<Tensor> {
        self.broadcast_combine(other, CombineMode::Div)
    }
}
