//! Dense dilated convolutions merging (DDCM) over one axis latent.
//!
//! A `C×L` latent is read as a single-channel 2-D map with the channel index
//! as the first spatial axis. Four dilated `k×1` branches run in sequence;
//! branch `i` sees the original map concatenated with every earlier branch
//! output, convolves with a channel-axis stride, is resampled back to `C`
//! rows, normalised (one group) and rectified. A `1×1` convolution merges
//! the five stacked maps into one.

use crate::error::{config_err, Result};
use crate::tensor::{ConvSpec, InterpMode, Tensor, GROUP_NORM_EPS};

pub const BRANCHES: usize = 4;

/// Channel-axis strides of the four branches (the latent axis is never strided).
pub const BRANCH_STRIDES: [(usize, usize); BRANCHES] = [(2, 1), (2, 1), (4, 1), (4, 1)];

/// Kernel extent along the channel axis: `2*(C/32) + 3`.
pub fn kernel_size(channels: usize) -> usize {
    2 * (channels / 32) + 3
}

/// `[1, k, 2(k-1)+1, 3(k-1)+1]`.
pub fn dilations(k: usize) -> [usize; BRANCHES] {
    [1, k, 2 * (k - 1) + 1, 3 * (k - 1) + 1]
}

/// Parameter shapes for a DDCM block over `channels` rows:
/// `(name, shape)` in manifest order.
pub fn param_shapes(channels: usize) -> Vec<(String, Vec<usize>)> {
    let k = kernel_size(channels);
    let mut v = Vec::with_capacity(2 * BRANCHES + 2);
    for i in 0..BRANCHES {
        v.push((format!("branch{i}.weight"), vec![1, 1 + i, k, 1]));
        v.push((format!("branch{i}.bias"), vec![1]));
    }
    v.push(("merge.weight".into(), vec![1, 1 + BRANCHES, 1, 1]));
    v.push(("merge.bias".into(), vec![1]));
    v
}

#[derive(Debug, Clone)]
pub struct DdcmParams {
    pub k: usize,
    pub dilations: [usize; BRANCHES],
    pub strides: [(usize, usize); BRANCHES],
    /// `[1, 1+i, k, 1]` per branch.
    pub branch_weights: Vec<Tensor>,
    pub branch_biases: Vec<Tensor>,
    /// `[1, 1+BRANCHES, 1, 1]`.
    pub merge_weight: Tensor,
    pub merge_bias: Tensor,
}

impl DdcmParams {
    /// Assembles parameters for `channels` rows from tensors in
    /// [`param_shapes`] order.
    pub fn from_tensors(channels: usize, tensors: Vec<Tensor>) -> Result<Self> {
        let shapes = param_shapes(channels);
        if tensors.len() != shapes.len() {
            return Err(config_err!(
                "DDCM expects {} tensors, got {}",
                shapes.len(),
                tensors.len()
            ));
        }
        for ((name, shape), t) in shapes.iter().zip(&tensors) {
            if t.shape() != shape.as_slice() {
                return Err(config_err!(
                    "DDCM {name}: expected shape {shape:?}, got {:?}",
                    t.shape()
                ));
            }
        }
        let k = kernel_size(channels);
        let mut it = tensors.into_iter();
        let mut branch_weights = Vec::with_capacity(BRANCHES);
        let mut branch_biases = Vec::with_capacity(BRANCHES);
        for _ in 0..BRANCHES {
            branch_weights.push(it.next().expect("length checked"));
            branch_biases.push(it.next().expect("length checked"));
        }
        let p = DdcmParams {
            k,
            dilations: dilations(k),
            strides: BRANCH_STRIDES,
            branch_weights,
            branch_biases,
            merge_weight: it.next().expect("length checked"),
            merge_bias: it.next().expect("length checked"),
        };
        p.validate()?;
        Ok(p)
    }

    pub fn validate(&self) -> Result<()> {
        if self.k < 3 || self.k % 2 == 0 {
            return Err(config_err!("DDCM kernel size {} must be odd and at least 3", self.k));
        }
        if !self.dilations.windows(2).all(|w| w[0] < w[1]) {
            return Err(config_err!("DDCM dilations {:?} must increase strictly", self.dilations));
        }
        Ok(())
    }

    pub fn tensors(&self) -> Vec<Tensor> {
        let mut v = Vec::with_capacity(2 * BRANCHES + 2);
        for (w, b) in self.branch_weights.iter().zip(&self.branch_biases) {
            v.push(w.clone());
            v.push(b.clone());
        }
        v.push(self.merge_weight.clone());
        v.push(self.merge_bias.clone());
        v
    }
}

/// Fuses a `[B, C, L]` latent; the output has the same shape.
pub fn ddcm_fuse(latent: &Tensor, params: &DdcmParams) -> Result<Tensor> {
    let s = latent.shape();
    if s.len() != 3 {
        return Err(crate::Error::Rank {
            expected: "3 (B×C×L)".into(),
            got: s.len(),
        });
    }
    let (b, c, l) = (s[0], s[1], s[2]);
    if params.k != kernel_size(c) {
        return Err(config_err!(
            "DDCM built for kernel {} but latent has {c} channels (kernel {})",
            params.k,
            kernel_size(c)
        ));
    }
    let map = latent.reshape(&[b, 1, c, l])?;
    let mut stack = vec![map];
    for i in 0..BRANCHES {
        let input = Tensor::concat(&stack, 1)?;
        let spec = ConvSpec::same(
            &[params.k, 1],
            &[params.strides[i].0, params.strides[i].1],
            &[params.dilations[i], 1],
        );
        let y = input
            .conv(&params.branch_weights[i], Some(&params.branch_biases[i]), &spec)?
            .interpolate_axis(2, c, InterpMode::Linear)?
            .group_norm(1, GROUP_NORM_EPS)?
            .relu()?;
        stack.push(y);
    }
    let dense = Tensor::concat(&stack, 1)?;
    dense
        .conv(&params.merge_weight, Some(&params.merge_bias), &ConvSpec::plain(&[1, 1]))?
        .reshape(&[b, c, l])
}
