//! Generated sphere phantoms for smoke tests and overfitting checks.

use std::fs;
use std::path::Path;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::dataset::{CaseRecord, Manifest, Source};
use crate::error::{Error, Result};
use crate::volume::{save_volume, Volume, VolumeKind};

/// HU of the background and of the bright sphere.
pub const BACKGROUND_HU: f64 = 25.0;
pub const SPHERE_HU: f64 = 75.0;

/// One phantom: a noisy background with a single bright ellipsoid (a
/// sphere in physical units) and its mask.
pub fn sphere_case<R: Rng>(dims: [usize; 3], spacing: [f64; 3], rng: &mut R) -> Result<(Volume, Volume)> {
    let min_extent = (0..3).map(|a| dims[a] as f64 * spacing[a]).fold(f64::INFINITY, f64::min);
    let radius = rng.gen_range(0.2..0.32) * min_extent;
    let centre: [f64; 3] = std::array::from_fn(|a| {
        let ext = dims[a] as f64 * spacing[a];
        let lo = radius.min(ext / 2.0);
        rng.gen_range(lo..=(ext - lo).max(lo))
    });
    let n: usize = dims.iter().product();
    let mut img = Vec::with_capacity(n);
    let mut lab = Vec::with_capacity(n);
    for i in 0..dims[0] {
        for j in 0..dims[1] {
            for k in 0..dims[2] {
                let p = [i, j, k];
                let r2: f64 = (0..3)
                    .map(|a| ((p[a] as f64 + 0.5) * spacing[a] - centre[a]).powi(2))
                    .sum();
                let inside = r2 <= radius * radius;
                let noise: f64 = (0..3).map(|_| rng.gen_range(-5.0..5.0)).sum();
                img.push((if inside { SPHERE_HU } else { BACKGROUND_HU } + noise).round());
                lab.push(if inside { 1.0 } else { 0.0 });
            }
        }
    }
    Ok((
        Volume::new(dims, spacing, VolumeKind::HuInt, img)?,
        Volume::new(dims, spacing, VolumeKind::LabelInt, lab)?,
    ))
}

/// Writes `cases` phantoms plus `manifest.csv` into `dir`.
pub fn write_sphere_dataset(dir: &Path, cases: usize, dims: [usize; 3], spacing: [f64; 3], seed: u64) -> Result<Manifest> {
    fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut records = Vec::new();
    for c in 0..cases {
        let (img, lab) = sphere_case(dims, spacing, &mut rng)?;
        let id = format!("sphere{c:03}");
        let image = format!("{id}_img.nii");
        let label = format!("{id}_lab.nii");
        save_volume(&img, &dir.join(&image))?;
        save_volume(&lab, &dir.join(&label))?;
        records.push(CaseRecord {
            case_id: id,
            image: image.into(),
            label: Some(label.into()),
            source: Source::Labeled,
        });
    }
    let m = Manifest {
        path: dir.join("manifest.csv"),
        cases: records,
    };
    m.save()?;
    Ok(m)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn phantom_has_foreground_and_background() {
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        let (img, lab) = sphere_case([16, 16, 8], [1.0, 1.0, 2.0], &mut rng).unwrap();
        let fg = lab.data().iter().filter(|&&v| v == 1.0).count();
        assert!(fg > 10 && fg < lab.len() / 2, "{fg}");
        let mean_in: f64 = img.data().iter().zip(lab.data()).filter(|(_, &l)| l == 1.0).map(|(v, _)| v).sum::<f64>() / fg as f64;
        assert!((mean_in - SPHERE_HU).abs() < 3.0);
    }
}
