//! Overlap and surface-distance metrics on binary masks. Distances are in
//! millimetres, measured between surface voxel centres scaled by spacing.

mod edt;
mod report;

pub use edt::squared_distance_to;
pub use report::{aggregate, evaluate_case, write_csv, MetricsOptions, MetricsReport, NA};

use crate::error::{Error, Result};
use crate::volume::{Volume, VolumeKind};

fn mask(v: &Volume) -> Result<Vec<bool>> {
    if v.kind() != VolumeKind::LabelInt {
        return Err(Error::Volume(format!("metrics need label volumes, got {:?}", v.kind())));
    }
    Ok(v.data().iter().map(|&x| x > 0.0).collect())
}

fn check_pair(pred: &Volume, gt: &Volume) -> Result<(Vec<bool>, Vec<bool>)> {
    if pred.dims() != gt.dims() {
        return Err(Error::Shape(format!(
            "prediction {:?} and ground truth {:?} differ in shape",
            pred.dims(),
            gt.dims()
        )));
    }
    let (a, b) = (pred.spacing(), gt.spacing());
    if (0..3).any(|i| (a[i] - b[i]).abs() > 1e-6 * b[i].abs().max(1.0)) {
        return Err(Error::Shape(format!("prediction spacing {a:?} differs from ground truth {b:?}")));
    }
    Ok((mask(pred)?, mask(gt)?))
}

/// `2|P∩G| / (|P|+|G|)`, 1 when both masks are empty.
pub fn dsc(pred: &Volume, gt: &Volume) -> Result<f64> {
    let (p, g) = check_pair(pred, gt)?;
    Ok(dsc_masks(&p, &g))
}

fn dsc_masks(p: &[bool], g: &[bool]) -> f64 {
    let inter = p.iter().zip(g).filter(|(a, b)| **a && **b).count();
    let total = p.iter().filter(|&&x| x).count() + g.iter().filter(|&&x| x).count();
    if total == 0 {
        1.0
    } else {
        2.0 * inter as f64 / total as f64
    }
}

fn surface_mask(m: &[bool], dims: [usize; 3]) -> Vec<bool> {
    let [h, w, d] = dims;
    let idx = |i: usize, j: usize, k: usize| (i * w + j) * d + k;
    let mut out = vec![false; m.len()];
    for i in 0..h {
        for j in 0..w {
            for k in 0..d {
                let at = idx(i, j, k);
                if !m[at] {
                    continue;
                }
                let border = i == 0 || j == 0 || k == 0 || i + 1 == h || j + 1 == w || k + 1 == d;
                out[at] = border
                    || !m[idx(i - 1, j, k)]
                    || !m[idx(i + 1, j, k)]
                    || !m[idx(i, j - 1, k)]
                    || !m[idx(i, j + 1, k)]
                    || !m[idx(i, j, k - 1)]
                    || !m[idx(i, j, k + 1)];
            }
        }
    }
    out
}

/// Foreground voxels with a 6-connected background neighbour or lying on
/// the array border, in row-major order.
pub fn surface_voxels(v: &Volume) -> Result<Vec<[usize; 3]>> {
    let [_, w, d] = v.dims();
    let s = surface_mask(&mask(v)?, v.dims());
    Ok(s
        .iter()
        .enumerate()
        .filter(|(_, &b)| b)
        .map(|(i, _)| [i / (w * d), (i / d) % w, i % d])
        .collect())
}

/// Distances from each surface voxel of `from` to the surface of `to`, in
/// row-major order of `from`'s surface.
fn directed(from: &[bool], to: &[bool], dims: [usize; 3], spacing: [f64; 3]) -> Vec<f64> {
    let sq = squared_distance_to(to, dims, spacing);
    from.iter().zip(&sq).filter(|(&f, _)| f).map(|(_, &d)| d.sqrt()).collect()
}

/// Percentile with linear interpolation between order statistics.
pub fn percentile(values: &[f64], q: f64) -> f64 {
    let mut v = values.to_vec();
    v.sort_by(|a, b| a.total_cmp(b));
    let pos = (v.len() - 1) as f64 * q / 100.0;
    let lo = pos.floor() as usize;
    let hi = pos.ceil() as usize;
    v[lo] + (v[hi] - v[lo]) * (pos - lo as f64)
}

struct Surfaces {
    p_to_g: Vec<f64>,
    g_to_p: Vec<f64>,
}

fn surfaces(pred: &Volume, gt: &Volume) -> Result<Option<Surfaces>> {
    let (p, g) = check_pair(pred, gt)?;
    let dims = gt.dims();
    let sp = surface_mask(&p, dims);
    let sg = surface_mask(&g, dims);
    if !sp.contains(&true) || !sg.contains(&true) {
        return Ok(None);
    }
    Ok(Some(Surfaces {
        p_to_g: directed(&sp, &sg, dims, gt.spacing()),
        g_to_p: directed(&sg, &sp, dims, gt.spacing()),
    }))
}

/// Symmetric surface distance: the larger of the two directed
/// `percentile`s (100 gives the classic Hausdorff distance). `None` when
/// either mask is empty.
pub fn hausdorff(pred: &Volume, gt: &Volume, percentile_q: f64) -> Result<Option<f64>> {
    if !(percentile_q > 0.0 && percentile_q <= 100.0) {
        return Err(Error::Config(format!("percentile {percentile_q} outside (0, 100]")));
    }
    Ok(surfaces(pred, gt)?.map(|s| percentile(&s.p_to_g, percentile_q).max(percentile(&s.g_to_p, percentile_q))))
}

/// Share of both surfaces lying within `tau_mm` of the other. `None` when
/// both masks are empty, 0 when exactly one is.
pub fn nsd(pred: &Volume, gt: &Volume, tau_mm: f64) -> Result<Option<f64>> {
    if !(tau_mm >= 0.0) {
        return Err(Error::Config(format!("tolerance {tau_mm} must be non-negative")));
    }
    let (p, g) = check_pair(pred, gt)?;
    match (p.contains(&true), g.contains(&true)) {
        (false, false) => return Ok(None),
        (true, false) | (false, true) => return Ok(Some(0.0)),
        _ => {}
    }
    let s = surfaces(pred, gt)?.expect("both masks non-empty");
    let within = |d: &[f64]| d.iter().filter(|&&x| x <= tau_mm).count();
    Ok(Some(
        (within(&s.p_to_g) + within(&s.g_to_p)) as f64 / (s.p_to_g.len() + s.g_to_p.len()) as f64,
    ))
}

/// `|V_pred - V_gt| / V_gt` in physical volume. `None` for an empty ground truth.
pub fn rvd(pred: &Volume, gt: &Volume) -> Result<Option<f64>> {
    let (p, g) = check_pair(pred, gt)?;
    let voxel: f64 = gt.spacing().iter().product();
    let vp = p.iter().filter(|&&x| x).count() as f64 * voxel;
    let vg = g.iter().filter(|&&x| x).count() as f64 * voxel;
    if vg == 0.0 {
        return Ok(None);
    }
    Ok(Some((vp - vg).abs() / vg))
}
