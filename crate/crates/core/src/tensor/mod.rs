//! Dense row-major `f64` tensors with tape-free reverse-mode differentiation.
//!
//! Every op result that depends on a tracked tensor keeps a handle to its
//! parents and a closure computing parent gradients from the output gradient.
//! [`Tensor::backward`] walks that graph in reverse topological order and
//! accumulates into the `grad` buffer of tracked leaves.

mod broadcast;
mod conv;
mod elementwise;
mod interp;
mod norm;
mod pool;
mod reduce;
mod shape_ops;
mod softmax;

use std::collections::{HashMap, HashSet};
use std::fmt;
use std::sync::atomic::{AtomicUsize, Ordering};
use std::sync::{Arc, Mutex};

use crate::error::{shape_err, Error, Result};

pub use broadcast::CombineMode;
pub use conv::{conv_output_extent, ConvSpec};
pub use elementwise::Activation;
pub use interp::InterpMode;
pub use norm::GROUP_NORM_EPS;
pub use pool::SpatialAxis;

/// Gradient closure: receives the output gradient and a per-parent "needs
/// gradient" mask, returns one optional gradient buffer per parent.
type BackwardFn = Box<dyn Fn(&[f64], &[bool]) -> Vec<Option<Vec<f64>>> + Send + Sync>;

struct GradFn {
    op: &'static str,
    parents: Vec<Tensor>,
    backward: BackwardFn,
}

struct Inner {
    id: usize,
    shape: Vec<usize>,
    data: Arc<Vec<f64>>,
    requires_grad: bool,
    grad: Mutex<Option<Vec<f64>>>,
    grad_fn: Option<GradFn>,
}

static NEXT_ID: AtomicUsize = AtomicUsize::new(0);

/// Shared handle to an immutable tensor value. Cloning is cheap.
#[derive(Clone)]
pub struct Tensor(Arc<Inner>);

pub(crate) fn numel(shape: &[usize]) -> usize {
    shape.iter().product()
}

pub(crate) fn strides_of(shape: &[usize]) -> Vec<usize> {
    let mut strides = vec![1; shape.len()];
    for i in (0..shape.len().saturating_sub(1)).rev() {
        strides[i] = strides[i + 1] * shape[i + 1];
    }
    strides
}

impl Tensor {
    fn build(
        shape: Vec<usize>,
        data: Arc<Vec<f64>>,
        requires_grad: bool,
        grad_fn: Option<GradFn>,
    ) -> Self {
        Tensor(Arc::new(Inner {
            id: NEXT_ID.fetch_add(1, Ordering::Relaxed),
            shape,
            data,
            requires_grad,
            grad: Mutex::new(None),
            grad_fn,
        }))
    }

    fn check_new(shape: &[usize], len: usize) -> Result<()> {
        if shape.iter().any(|&d| d == 0) {
            return Err(shape_err!("zero-sized axis in shape {shape:?}"));
        }
        if numel(shape) != len {
            return Err(shape_err!(
                "shape {shape:?} holds {} elements but {len} were given",
                numel(shape)
            ));
        }
        Ok(())
    }

    /// Untracked constant.
    pub fn new(shape: &[usize], data: Vec<f64>) -> Result<Self> {
        Self::check_new(shape, data.len())?;
        if data.iter().any(|v| !v.is_finite()) {
            return Err(Error::NonFinite { op: "new" });
        }
        Ok(Self::build(shape.to_vec(), Arc::new(data), false, None))
    }

    /// Tracked leaf (a learnable parameter or an input we differentiate by).
    pub fn param(shape: &[usize], data: Vec<f64>) -> Result<Self> {
        Self::check_new(shape, data.len())?;
        if data.iter().any(|v| !v.is_finite()) {
            return Err(Error::NonFinite { op: "param" });
        }
        Ok(Self::build(shape.to_vec(), Arc::new(data), true, None))
    }

    pub fn full(shape: &[usize], value: f64) -> Result<Self> {
        Self::new(shape, vec![value; numel(shape)])
    }

    pub fn zeros(shape: &[usize]) -> Result<Self> {
        Self::full(shape, 0.0)
    }

    pub fn scalar(value: f64) -> Result<Self> {
        Self::new(&[], vec![value])
    }

    /// Result of an op. The backward closure is dropped when no parent is tracked.
    pub(crate) fn from_op(
        op: &'static str,
        shape: Vec<usize>,
        data: Vec<f64>,
        parents: Vec<Tensor>,
        backward: BackwardFn,
    ) -> Result<Self> {
        debug_assert_eq!(numel(&shape), data.len());
        if data.iter().any(|v| !v.is_finite()) {
            return Err(Error::NonFinite { op });
        }
        let tracked = parents.iter().any(|p| p.requires_grad());
        let grad_fn = tracked.then(|| GradFn {
            op,
            parents,
            backward,
        });
        Ok(Self::build(shape, Arc::new(data), tracked, grad_fn))
    }

    pub fn shape(&self) -> &[usize] {
        &self.0.shape
    }

    pub fn rank(&self) -> usize {
        self.0.shape.len()
    }

    pub fn numel(&self) -> usize {
        self.0.data.len()
    }

    pub fn data(&self) -> &[f64] {
        &self.0.data
    }

    pub(crate) fn data_arc(&self) -> Arc<Vec<f64>> {
        Arc::clone(&self.0.data)
    }

    pub fn to_vec(&self) -> Vec<f64> {
        self.0.data.to_vec()
    }

    /// The single value of a one-element tensor.
    pub fn item(&self) -> Result<f64> {
        match self.0.data.as_slice() {
            [v] => Ok(*v),
            _ => Err(shape_err!(
                "item() needs a one-element tensor, got shape {:?}",
                self.shape()
            )),
        }
    }

    pub fn requires_grad(&self) -> bool {
        self.0.requires_grad
    }

    pub fn is_leaf(&self) -> bool {
        self.0.grad_fn.is_none()
    }

    /// Name of the op that produced this tensor, if it is tracked.
    pub fn op_name(&self) -> Option<&'static str> {
        self.0.grad_fn.as_ref().map(|g| g.op)
    }

    pub fn grad(&self) -> Option<Vec<f64>> {
        self.0.grad.lock().expect("grad lock poisoned").clone()
    }

    pub fn zero_grad(&self) {
        *self.0.grad.lock().expect("grad lock poisoned") = None;
    }

    /// Untracked view sharing the same storage.
    pub fn detach(&self) -> Tensor {
        Self::build(self.0.shape.clone(), self.data_arc(), false, None)
    }

    /// Tracked leaf sharing the same storage (a fresh gradient buffer).
    pub fn detach_tracked(&self) -> Tensor {
        Self::build(self.0.shape.clone(), self.data_arc(), true, None)
    }

    /// Reverse-mode pass from a one-element tensor.
    ///
    /// Gradients are added to whatever the tracked leaves already hold; call
    /// [`Tensor::zero_grad`] on them between optimizer steps.
    pub fn backward(&self) -> Result<()> {
        if self.numel() != 1 {
            return Err(Error::Autograd(format!(
                "backward needs a scalar loss, got shape {:?}",
                self.shape()
            )));
        }
        if !self.requires_grad() {
            return Err(Error::Autograd(
                "loss does not depend on any tracked tensor".into(),
            ));
        }

        let order = self.topo_order();
        let mut pending: HashMap<usize, Vec<f64>> = HashMap::new();
        pending.insert(self.0.id, vec![1.0]);

        for node in order.iter().rev() {
            let Some(g) = pending.remove(&node.0.id) else {
                continue;
            };
            match &node.0.grad_fn {
                None => {
                    let mut slot = node.0.grad.lock().expect("grad lock poisoned");
                    match slot.as_mut() {
                        Some(acc) => acc.iter_mut().zip(&g).for_each(|(a, b)| *a += b),
                        None => *slot = Some(g),
                    }
                }
                Some(gf) => {
                    let needs: Vec<bool> = gf.parents.iter().map(|p| p.requires_grad()).collect();
                    let grads = (gf.backward)(&g, &needs);
                    for ((parent, pg), need) in gf.parents.iter().zip(grads).zip(needs) {
                        let Some(pg) = pg else { continue };
                        if !need {
                            continue;
                        }
                        debug_assert_eq!(pg.len(), parent.numel(), "grad size from {}", gf.op);
                        if pg.iter().any(|v| !v.is_finite()) {
                            return Err(Error::NonFinite { op: gf.op });
                        }
                        match pending.get_mut(&parent.0.id) {
                            Some(acc) => acc.iter_mut().zip(&pg).for_each(|(a, b)| *a += b),
                            None => {
                                pending.insert(parent.0.id, pg);
                            }
                        }
                    }
                }
            }
        }
        Ok(())
    }

    /// Tracked nodes reachable from `self`, parents before children.
    fn topo_order(&self) -> Vec<Tensor> {
        let mut order = Vec::new();
        let mut visited = HashSet::new();
        let mut stack: Vec<(Tensor, bool)> = vec![(self.clone(), false)];
        while let Some((node, expanded)) = stack.pop() {
            if expanded {
                order.push(node);
                continue;
            }
            if !visited.insert(node.0.id) {
                continue;
            }
            stack.push((node.clone(), true));
            if let Some(gf) = &node.0.grad_fn {
                for p in &gf.parents {
                    if p.requires_grad() && !visited.contains(&p.0.id) {
                        stack.push((p.clone(), false));
                    }
                }
            }
        }
        order
    }
}

impl fmt::Debug for Tensor {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let preview: Vec<f64> = self.data().iter().take(8).copied().collect();
        f.debug_struct("Tensor")
            .field("shape", &self.shape())
            .field("requires_grad", &self.requires_grad())
            .field("op", &self.op_name())
            .field("data", &preview)
            .finish()
    }
}
