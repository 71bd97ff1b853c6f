use rand::Rng;

use super::{pad_centered, Volume};
use crate::error::{shape_err, Result};
use crate::tensor::Tensor;

/// Fraction of draws centred on a foreground voxel.
pub const FOREGROUND_BIAS: f64 = 0.5;

/// An aligned image/label crop.
#[derive(Debug, Clone)]
pub struct PatchSample {
    /// `[C, ph, pw, pd]`
    pub image: Tensor,
    /// `[ph, pw, pd]`
    pub label: Tensor,
    /// Corner of the crop in padded-volume coordinates.
    pub offset: [usize; 3],
}

/// Draws patches from one case. Volumes smaller than the patch are padded
/// symmetrically once up front: the image with 0 (air after windowing) and
/// the label with background.
#[derive(Debug, Clone)]
pub struct PatchSampler {
    channels: usize,
    dims: [usize; 3],
    image: Vec<f64>,
    label: Vec<f64>,
    foreground: Vec<usize>,
    patch: [usize; 3],
    fg_bias: f64,
}

impl PatchSampler {
    pub fn new(image: &Tensor, label: &Volume, patch: [usize; 3], fg_bias: f64) -> Result<Self> {
        if image.rank() != 4 || image.shape()[1..] != label.dims() {
            return Err(shape_err!(
                "image {:?} does not match label dims {:?} (expected [C, H, W, D])",
                image.shape(),
                label.dims()
            ));
        }
        if patch.contains(&0) {
            return Err(shape_err!("patch size {patch:?} must be positive"));
        }
        let channels = image.shape()[0];
        let src_dims = label.dims();
        let n = label.len();
        let mut padded = Vec::new();
        let mut dims = src_dims;
        for c in 0..channels {
            let (d, data) = pad_centered(&image.data()[c * n..(c + 1) * n], src_dims, patch, 0.0);
            dims = d;
            padded.extend(data);
        }
        let (_, lab) = pad_centered(label.data(), src_dims, patch, 0.0);
        let foreground = lab.iter().enumerate().filter(|(_, &v)| v > 0.0).map(|(i, _)| i).collect();
        Ok(PatchSampler {
            channels,
            dims,
            image: padded,
            label: lab,
            foreground,
            patch,
            fg_bias,
        })
    }

    pub fn has_foreground(&self) -> bool {
        !self.foreground.is_empty()
    }

    pub fn sample<R: Rng>(&self, rng: &mut R) -> Result<PatchSample> {
        let [_, w, d] = self.dims;
        let p = self.patch;
        let offset: [usize; 3] = if self.has_foreground() && rng.gen::<f64>() < self.fg_bias {
            let idx = self.foreground[rng.gen_range(0..self.foreground.len())];
            let centre = [idx / (w * d), (idx / d) % w, idx % d];
            std::array::from_fn(|a| centre[a].saturating_sub(p[a] / 2).min(self.dims[a] - p[a]))
        } else {
            std::array::from_fn(|a| rng.gen_range(0..=self.dims[a] - p[a]))
        };
        Ok(self.crop(offset))
    }

    pub fn crop(&self, offset: [usize; 3]) -> PatchSample {
        let [_, w, d] = self.dims;
        let p = self.patch;
        let vol = self.dims.iter().product::<usize>();
        let n = p.iter().product::<usize>();
        let mut image = Vec::with_capacity(self.channels * n);
        let mut label = Vec::with_capacity(n);
        for c in 0..self.channels {
            for i in 0..p[0] {
                for j in 0..p[1] {
                    let start = c * vol + ((offset[0] + i) * w + offset[1] + j) * d + offset[2];
                    image.extend_from_slice(&self.image[start..start + p[2]]);
                    if c == 0 {
                        label.extend_from_slice(&self.label[start..start + p[2]]);
                    }
                }
            }
        }
        PatchSample {
            image: Tensor::new(&[self.channels, p[0], p[1], p[2]], image).expect("sizes agree"),
            label: Tensor::new(&p, label).expect("sizes agree"),
            offset,
        }
    }
}

/// Single draw; see [`PatchSampler`] for repeated sampling from one case.
pub fn sample_patch<R: Rng>(
    image: &Tensor,
    label: &Volume,
    patch: [usize; 3],
    fg_bias: f64,
    rng: &mut R,
) -> Result<PatchSample> {
    PatchSampler::new(image, label, patch, fg_bias)?.sample(rng)
}
