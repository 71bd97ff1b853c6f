use super::TrainConfig;
use crate::error::{config_err, shape_err, Result};
use crate::tensor::{InterpMode, Tensor};

/// Checks `logits [B, K, s...]` against `target [B, s...]` and returns K.
fn check_pair(logits: &Tensor, target: &Tensor) -> Result<usize> {
    let ls = logits.shape();
    let ts = target.shape();
    if ls.len() < 2 || ts.len() + 1 != ls.len() || ls[0] != ts[0] || ls[2..] != ts[1..] {
        return Err(shape_err!("logits {ls:?} do not match target {ts:?} (expected [B, K, s...] vs [B, s...])"));
    }
    let k = ls[1];
    let max_label = if k == 1 { 1 } else { k - 1 };
    if let Some(&bad) = target
        .data()
        .iter()
        .find(|&&v| v < 0.0 || v.fract() != 0.0 || v as usize > max_label)
    {
        return Err(config_err!("target label {bad} is not a class index below {}", max_label + 1));
    }
    Ok(k)
}

/// Constant one-hot encoding `[B, K, s...]` of integer labels `[B, s...]`.
pub fn one_hot(target: &Tensor, classes: usize) -> Result<Tensor> {
    let ts = target.shape();
    if ts.is_empty() {
        return Err(shape_err!("one_hot needs a batch axis"));
    }
    let b = ts[0];
    let inner: usize = ts[1..].iter().product();
    let mut data = vec![0.0; b * classes * inner];
    for (i, &v) in target.data().iter().enumerate() {
        let c = v as usize;
        if c >= classes || v < 0.0 || v.fract() != 0.0 {
            return Err(config_err!("label {v} outside 0..{classes}"));
        }
        let (bi, si) = (i / inner, i % inner);
        data[(bi * classes + c) * inner + si] = 1.0;
    }
    let mut shape = vec![b, classes];
    shape.extend_from_slice(&ts[1..]);
    Tensor::new(&shape, data)
}

/// Nearest-neighbour resize of integer labels `[B, s...]` to `extents`.
pub fn downsample_labels(target: &Tensor, extents: &[usize]) -> Result<Tensor> {
    if target.rank() != extents.len() + 1 {
        return Err(shape_err!(
            "cannot resize labels {:?} to {} spatial extents",
            target.shape(),
            extents.len()
        ));
    }
    let mut t = target.detach();
    for (i, &e) in extents.iter().enumerate() {
        if t.shape()[i + 1] != e {
            t = t.interpolate_axis(i + 1, e, InterpMode::Nearest)?;
        }
    }
    Ok(t)
}

/// Per-class probabilities and matching binary targets. With one output
/// channel the model is binary with a sigmoid; otherwise softmax over
/// classes, keeping the foreground classes `1..K`.
fn foreground(logits: &Tensor, target: &Tensor, k: usize) -> Result<(Tensor, Tensor)> {
    if k == 1 {
        Ok((logits.sigmoid()?, target.unsqueeze(1)?))
    } else {
        let p = logits.softmax(1)?.narrow(1, 1, k - 1)?;
        let t = one_hot(target, k)?.narrow(1, 1, k - 1)?;
        Ok((p, t))
    }
}

/// Soft Dice loss averaged over foreground classes, sums taken over the
/// whole batch.
pub fn dice_loss(logits: &Tensor, target: &Tensor, smooth: f64) -> Result<Tensor> {
    let k = check_pair(logits, target)?;
    let (p, t) = foreground(logits, target, k)?;
    let inter = p.mul(&t)?.sum_keep_axis(1)?;
    let denom = p.sum_keep_axis(1)?.add(&t.sum_keep_axis(1)?)?.add_scalar(smooth)?;
    let dice = inter.mul_scalar(2.0)?.add_scalar(smooth)?.div(&denom)?;
    dice.mean_all()?.neg()?.add_scalar(1.0)
}

/// Mean over voxels of `-alpha * (1 - p_t)^gamma * log(p_t)`.
pub fn focal_loss(logits: &Tensor, target: &Tensor, gamma: f64, alpha: f64) -> Result<Tensor> {
    let k = check_pair(logits, target)?;
    let log_pt = if k == 1 {
        let t = target.unsqueeze(1)?;
        let pos = logits.log_sigmoid()?.mul(&t)?;
        let neg = logits.neg()?.log_sigmoid()?.mul(&t.neg()?.add_scalar(1.0)?)?;
        pos.add(&neg)?
    } else {
        logits.log_softmax(1)?.mul(&one_hot(target, k)?)?.sum_axis(1)?
    };
    let mut term = log_pt.mul_scalar(-alpha)?;
    if gamma != 0.0 {
        let modulator = log_pt.exp()?.neg()?.add_scalar(1.0)?.clamp_min(0.0)?.powf(gamma)?;
        term = term.mul(&modulator)?;
    }
    term.mean_all()
}

/// Weighted sum of Dice plus focal loss over the main and auxiliary
/// outputs. Labels are resized to each head's resolution.
pub fn composite_loss(outputs: &[Tensor], target: &Tensor, cfg: &TrainConfig) -> Result<Tensor> {
    if outputs.len() != cfg.ds_weights.len() {
        return Err(config_err!(
            "{} outputs but {} ds_weights",
            outputs.len(),
            cfg.ds_weights.len()
        ));
    }
    let mut total: Option<Tensor> = None;
    for (out, &w) in outputs.iter().zip(&cfg.ds_weights) {
        if w == 0.0 {
            continue;
        }
        let t = downsample_labels(target, &out.shape()[2..])?;
        let l = dice_loss(out, &t, cfg.dice_smooth)?
            .add(&focal_loss(out, &t, cfg.focal_gamma, cfg.focal_alpha)?)?
            .mul_scalar(w)?;
        total = Some(match total {
            Some(acc) => acc.add(&l)?,
            None => l,
        });
    }
    match total {
        Some(t) => Ok(t),
        None => Tensor::scalar(0.0),
    }
}
