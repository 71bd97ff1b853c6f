//! Orthogonal-level attention: squeeze a feature volume onto each spatial
//! axis, fuse every axis latent with a DDCM block, gate the fused latents,
//! rebuild a full attention volume from broadcast sums and products, and
//! rescale the input with it.

pub mod ddcm;

use rand::Rng;

use crate::error::{config_err, shape_err, Error, Result};
use crate::tensor::{SpatialAxis, Tensor, GROUP_NORM_EPS};

pub use ddcm::{ddcm_fuse, DdcmParams};

pub const DEFAULT_ALPHA: f64 = 0.1;
pub const DEFAULT_BETA: f64 = 0.3;
pub const DEFAULT_GROUPS: usize = 2;
/// Lower bound on the attention norm before inversion.
pub const NORM_EPS: f64 = 1e-8;

/// One axis latent: `values` is `[B, C, L]` with `L` the extent of `axis`.
#[derive(Debug, Clone)]
pub struct AxisLatent {
    pub axis: SpatialAxis,
    pub values: Tensor,
}

#[derive(Debug, Clone)]
pub struct ViolaParams {
    pub alpha: f64,
    pub beta: f64,
    pub groups: usize,
    /// DDCM blocks for the H, W and D latents.
    pub ddcm: [DdcmParams; 3],
    /// Affine terms of the group-norm gate, `[C]` each.
    pub gn_scale: Tensor,
    pub gn_shift: Tensor,
}

/// Gated latents, reshaped to broadcast against `[B, C, H, W, D]`.
#[derive(Debug, Clone)]
pub struct ViolaGates {
    /// Sigmoid gates for H, W, D.
    pub tilde: [Tensor; 3],
    /// Normalised tanh gates for H, W, D.
    pub hat: [Tensor; 3],
}

/// Parameter names and shapes of a module over `channels` channels, in the
/// order [`ViolaParams::from_tensors`] expects.
pub fn param_shapes(channels: usize) -> Vec<(String, Vec<usize>)> {
    let mut v = Vec::new();
    for axis in SpatialAxis::ALL {
        for (name, shape) in ddcm::param_shapes(channels) {
            v.push((format!("ddcm_{}.{name}", axis.name()), shape));
        }
    }
    v.push(("gn_scale".into(), vec![channels]));
    v.push(("gn_shift".into(), vec![channels]));
    v
}

/// Initial value of the named parameter: fan-in scaled uniform DDCM
/// branches, zero merge convolution, unit scale and zero shift.
pub fn init_param<R: Rng>(name: &str, shape: &[usize], rng: &mut R) -> Vec<f64> {
    let n: usize = shape.iter().product();
    if name.ends_with("gn_scale") {
        return vec![1.0; n];
    }
    if name.contains(".merge.") || name.ends_with(".bias") || name.ends_with("gn_shift") {
        return vec![0.0; n];
    }
    let fan_in: usize = shape[1..].iter().product();
    let bound = 1.0 / (fan_in as f64).sqrt();
    (0..n).map(|_| rng.gen_range(-bound..bound)).collect()
}

impl ViolaParams {
    pub fn from_tensors(channels: usize, alpha: f64, beta: f64, groups: usize, tensors: Vec<Tensor>) -> Result<Self> {
        let per_axis = ddcm::param_shapes(channels).len();
        if tensors.len() != 3 * per_axis + 2 {
            return Err(config_err!(
                "viola module expects {} tensors, got {}",
                3 * per_axis + 2,
                tensors.len()
            ));
        }
        let mut it = tensors.into_iter();
        let mut take = |n: usize| -> Vec<Tensor> { it.by_ref().take(n).collect() };
        let ddcm = [
            DdcmParams::from_tensors(channels, take(per_axis))?,
            DdcmParams::from_tensors(channels, take(per_axis))?,
            DdcmParams::from_tensors(channels, take(per_axis))?,
        ];
        let mut rest = take(2).into_iter();
        let (gn_scale, gn_shift) = (rest.next().expect("counted"), rest.next().expect("counted"));
        let p = ViolaParams {
            alpha,
            beta,
            groups,
            ddcm,
            gn_scale,
            gn_shift,
        };
        p.validate(channels)?;
        Ok(p)
    }

    /// Freshly initialised parameters with the default coefficients.
    pub fn init<R: Rng>(channels: usize, rng: &mut R) -> Result<Self> {
        let tensors = param_shapes(channels)
            .into_iter()
            .map(|(name, shape)| Tensor::param(&shape, init_param(&name, &shape, rng)))
            .collect::<Result<Vec<_>>>()?;
        Self::from_tensors(channels, DEFAULT_ALPHA, DEFAULT_BETA, DEFAULT_GROUPS, tensors)
    }

    pub fn validate(&self, channels: usize) -> Result<()> {
        if !(self.alpha > 0.0) {
            return Err(config_err!("alpha must be positive, got {}", self.alpha));
        }
        if !(self.beta >= 0.0) {
            return Err(config_err!("beta must be non-negative, got {}", self.beta));
        }
        if self.groups == 0 || channels % self.groups != 0 {
            return Err(config_err!("{channels} channels not divisible into {} groups", self.groups));
        }
        for t in [&self.gn_scale, &self.gn_shift] {
            if t.shape() != [channels] {
                return Err(config_err!("group-norm affine shape {:?}, expected [{channels}]", t.shape()));
            }
        }
        for d in &self.ddcm {
            d.validate()?;
        }
        Ok(())
    }

    pub fn tensors(&self) -> Vec<Tensor> {
        let mut v: Vec<Tensor> = self.ddcm.iter().flat_map(|d| d.tensors()).collect();
        v.push(self.gn_scale.clone());
        v.push(self.gn_shift.clone());
        v
    }
}

/// Adds a batch axis to rank-4 input; returns whether one was added.
fn ensure_batched(x: &Tensor) -> Result<(Tensor, bool)> {
    match x.rank() {
        4 => Ok((x.unsqueeze(0)?, true)),
        5 => Ok((x.clone(), false)),
        got => Err(Error::Rank {
            expected: "4 (C×H×W×D) or 5 (B×C×H×W×D)".into(),
            got,
        }),
    }
}

/// Mean-pools the volume onto each spatial axis: `X_h`, `X_w`, `X_d`.
pub fn squeeze_orthogonal(x: &Tensor) -> Result<[AxisLatent; 3]> {
    let (xb, _) = ensure_batched(x)?;
    let pool = |axis| -> Result<AxisLatent> {
        Ok(AxisLatent {
            axis,
            values: xb.adaptive_avg_pool(axis)?,
        })
    };
    Ok([pool(SpatialAxis::H)?, pool(SpatialAxis::W)?, pool(SpatialAxis::D)?])
}

/// Runs the axis's DDCM block over a latent.
pub fn fuse_latent(latent: &AxisLatent, params: &ViolaParams) -> Result<AxisLatent> {
    Ok(AxisLatent {
        axis: latent.axis,
        values: ddcm_fuse(&latent.values, &params.ddcm[latent.axis.index()])?,
    })
}

/// Sigmoid and group-norm/tanh gates for the three fused latents.
pub fn viola_gates(fused: &[AxisLatent; 3], params: &ViolaParams) -> Result<ViolaGates> {
    let (b, c) = {
        let s = fused[0].values.shape();
        (s[0], s[1])
    };
    for f in fused {
        let s = f.values.shape();
        if s.len() != 3 || s[0] != b || s[1] != c {
            return Err(shape_err!(
                "fused latents must share [B, C]; got {:?} and {:?}",
                fused[0].values.shape(),
                s
            ));
        }
    }
    if params.groups == 0 || c % params.groups != 0 {
        return Err(config_err!("{c} channels not divisible into {} groups", params.groups));
    }
    let scale = params.gn_scale.reshape(&[1, c, 1])?;
    let shift = params.gn_shift.reshape(&[1, c, 1])?;
    let mut tilde = Vec::with_capacity(3);
    let mut hat = Vec::with_capacity(3);
    for f in fused {
        let l = f.values.shape()[2];
        let mut target = vec![b, c, 1, 1, 1];
        target[2 + f.axis.index()] = l;
        tilde.push(f.values.sigmoid()?.reshape(&target)?);
        let h = f
            .values
            .group_norm(params.groups, GROUP_NORM_EPS)?
            .mul(&scale)?
            .add(&shift)?
            .tanh()?;
        hat.push(h.reshape(&target)?);
    }
    let arr = |v: Vec<Tensor>| -> [Tensor; 3] { v.try_into().expect("three axes") };
    Ok(ViolaGates {
        tilde: arr(tilde),
        hat: arr(hat),
    })
}

/// `ReLU(sum of all six gates) + pairwise and triple products of the sigmoid gates`.
pub fn viola_attention_volume(gates: &ViolaGates) -> Result<Tensor> {
    let [th, tw, td] = &gates.tilde;
    let [hh, hw, hd] = &gates.hat;
    let sum = th.add(hh)?.add(tw)?.add(hw)?.add(td)?.add(hd)?;
    let hw_prod = th.mul(tw)?;
    sum.relu()?
        .add(&hw_prod)?
        .add(&tw.mul(td)?)?
        .add(&td.mul(th)?)?
        .add(&hw_prod.mul(td)?)
}

/// `x ⊙ ((alpha + 1/max(|A|, eps)) * A + beta)` with the norm taken per batch item.
pub fn viola_apply(x: &Tensor, attention: &Tensor, params: &ViolaParams) -> Result<Tensor> {
    if x.shape() != attention.shape() {
        return Err(shape_err!(
            "input {:?} and attention {:?} differ",
            x.shape(),
            attention.shape()
        ));
    }
    let (xb, added) = ensure_batched(x)?;
    let (ab, _) = ensure_batched(attention)?;
    let b = xb.shape()[0];
    let coef = ab
        .l2_norm_per_item()?
        .clamp_min(NORM_EPS)?
        .recip()?
        .add_scalar(params.alpha)?
        .reshape(&[b, 1, 1, 1, 1])?;
    let scaled = ab.mul(&coef)?.add_scalar(params.beta)?;
    let out = xb.mul(&scaled)?;
    if added {
        out.squeeze_axis(0)
    } else {
        Ok(out)
    }
}

/// Full module: output has the input's shape.
pub fn viola_forward(x: &Tensor, params: &ViolaParams) -> Result<Tensor> {
    let (xb, added) = ensure_batched(x)?;
    params.validate(xb.shape()[1])?;
    let latents = squeeze_orthogonal(&xb)?;
    let fused = [
        fuse_latent(&latents[0], params)?,
        fuse_latent(&latents[1], params)?,
        fuse_latent(&latents[2], params)?,
    ];
    let gates = viola_gates(&fused, params)?;
    let attention = viola_attention_volume(&gates)?;
    let out = viola_apply(&xb, &attention, params)?;
    if added {
        out.squeeze_axis(0)
    } else {
        Ok(out)
    }
}
