use crate::error::{shape_err, Error, Result};
use crate::tensor::Tensor;
use crate::unet::Network;
use crate::volume::{pad_centered, window_stack, Volume, VolumeKind};

use super::dataset::windows_of;

/// Tile origins along one axis of extent `n >= p`: stride `p*(1-overlap)`
/// (at least 1), with the last tile aligned to the end.
pub fn tile_starts(n: usize, p: usize, overlap: f64) -> Vec<usize> {
    let stride = ((p as f64 * (1.0 - overlap)).floor() as usize).max(1);
    let mut starts = Vec::new();
    let mut s = 0;
    while s + p < n {
        starts.push(s);
        s += stride;
    }
    starts.push(n - p);
    starts
}

/// Class probabilities `[K, p...]` for one `[C, p...]` tile.
fn tile_probabilities(net: &Network, tile: Tensor) -> Result<Tensor> {
    let x = tile.unsqueeze(0)?;
    let logits = net.forward(&x)?.swap_remove(0).squeeze_axis(0)?;
    if logits.shape()[0] == 1 {
        logits.sigmoid()
    } else {
        logits.softmax(0)
    }
}

fn crop(data: &[f64], dims: [usize; 3], at: [usize; 3], size: [usize; 3], out: &mut Vec<f64>) {
    for i in 0..size[0] {
        for j in 0..size[1] {
            let s = ((at[0] + i) * dims[1] + at[1] + j) * dims[2] + at[2];
            out.extend_from_slice(&data[s..s + size[2]]);
        }
    }
}

/// Probabilities `[K, H, W, D]` for an input stack `[C, H, W, D]`. The
/// image is zero-padded to at least the patch size, tiled in row-major
/// window order, and overlapping tiles are averaged with equal weight.
pub fn sliding_window_infer(net: &Network, image: &Tensor, patch: [usize; 3], overlap: f64) -> Result<Tensor> {
    if image.rank() != 4 {
        return Err(Error::Rank {
            expected: "4 (C×H×W×D)".into(),
            got: image.rank(),
        });
    }
    if !(0.0..1.0).contains(&overlap) {
        return Err(Error::Config(format!("overlap {overlap} must lie in [0, 1)")));
    }
    if patch.contains(&0) {
        return Err(shape_err!("patch size {patch:?} must be positive"));
    }
    let net = net.frozen();
    let c = image.shape()[0];
    let dims: [usize; 3] = image.shape()[1..].try_into().expect("rank 4");
    let n: usize = dims.iter().product();
    let mut padded = Vec::new();
    let mut pdims = dims;
    for ch in 0..c {
        let (d, data) = pad_centered(&image.data()[ch * n..(ch + 1) * n], dims, patch, 0.0);
        pdims = d;
        padded.extend(data);
    }
    let pn: usize = pdims.iter().product();
    let tn: usize = patch.iter().product();
    let starts: Vec<Vec<usize>> = (0..3).map(|a| tile_starts(pdims[a], patch[a], overlap)).collect();

    let mut sum: Vec<f64> = Vec::new();
    let mut count = vec![0u32; pn];
    let mut k = 0;
    for &a in &starts[0] {
        for &b in &starts[1] {
            for &g in &starts[2] {
                let at = [a, b, g];
                let mut tile = Vec::with_capacity(c * tn);
                for ch in 0..c {
                    crop(&padded[ch * pn..(ch + 1) * pn], pdims, at, patch, &mut tile);
                }
                let probs = tile_probabilities(&net, Tensor::new(&[c, patch[0], patch[1], patch[2]], tile)?)?;
                if sum.is_empty() {
                    k = probs.shape()[0];
                    sum = vec![0.0; k * pn];
                }
                let pd = probs.data();
                for i in 0..patch[0] {
                    for j in 0..patch[1] {
                        let dst = ((a + i) * pdims[1] + b + j) * pdims[2] + g;
                        let src = (i * patch[1] + j) * patch[2];
                        for cls in 0..k {
                            let s = &mut sum[cls * pn + dst..cls * pn + dst + patch[2]];
                            let t = &pd[cls * tn + src..cls * tn + src + patch[2]];
                            s.iter_mut().zip(t).for_each(|(x, y)| *x += y);
                        }
                        count[dst..dst + patch[2]].iter_mut().for_each(|c| *c += 1);
                    }
                }
            }
        }
    }
    for cls in 0..k {
        for (s, &n) in sum[cls * pn..(cls + 1) * pn].iter_mut().zip(&count) {
            *s /= n as f64;
        }
    }
    let before: [usize; 3] = std::array::from_fn(|a| (pdims[a] - dims[a]) / 2);
    let mut out = Vec::with_capacity(k * n);
    for cls in 0..k {
        crop(&sum[cls * pn..(cls + 1) * pn], pdims, before, dims, &mut out);
    }
    Tensor::new(&[k, dims[0], dims[1], dims[2]], out)
}

/// Foreground probability per voxel: the single sigmoid channel, or one
/// minus the background softmax channel.
pub fn foreground_probability(probs: &Tensor) -> Vec<f64> {
    let k = probs.shape()[0];
    let n = probs.numel() / k;
    if k == 1 {
        probs.data().to_vec()
    } else {
        probs.data()[..n].iter().map(|p| 1.0 - p).collect()
    }
}

/// Foreground where the probability exceeds one half.
pub fn threshold(prob: &Volume) -> Result<Volume> {
    let data = prob.data().iter().map(|&p| if p > 0.5 { 1.0 } else { 0.0 }).collect();
    Volume::new(prob.dims(), prob.spacing(), VolumeKind::LabelInt, data)
}

/// Runs the network over an HU volume; returns the probability and label maps.
pub fn infer_volume(net: &Network, hu: &Volume, overlap: f64) -> Result<(Volume, Volume)> {
    let cfg = net.config();
    let stack = window_stack(hu, &windows_of(cfg)?)?;
    let probs = sliding_window_infer(net, &stack, cfg.patch_size, overlap)?;
    let prob = Volume::new(hu.dims(), hu.spacing(), VolumeKind::ProbFloat, foreground_probability(&probs))?;
    let label = threshold(&prob)?;
    Ok((prob, label))
}

/// Voxel-wise mean of probability maps plus its thresholded label map.
/// Each voxel's values are summed in sorted order so the result does not
/// depend on input order.
pub fn ensemble_average(probs: &[Volume]) -> Result<(Volume, Volume)> {
    let first = probs.first().ok_or_else(|| Error::Volume("ensemble needs at least one input".into()))?;
    for (i, v) in probs.iter().enumerate() {
        if v.dims() != first.dims() {
            return Err(shape_err!("ensemble input {i} has shape {:?}, expected {:?}", v.dims(), first.dims()));
        }
        if v.kind() != VolumeKind::ProbFloat {
            return Err(Error::Volume(format!("ensemble input {i} is not a probability map")));
        }
    }
    let m = probs.len() as f64;
    let mut buf = vec![0.0; probs.len()];
    let data = (0..first.len())
        .map(|i| {
            buf.iter_mut().zip(probs).for_each(|(b, v)| *b = v.data()[i]);
            buf.sort_by(|a, b| a.total_cmp(b));
            buf.iter().sum::<f64>() / m
        })
        .collect();
    let mean = Volume::new(first.dims(), first.spacing(), VolumeKind::ProbFloat, data)?;
    let label = threshold(&mean)?;
    Ok((mean, label))
}
