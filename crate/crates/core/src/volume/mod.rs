//! Volumes on disk and in memory, intensity windowing and patch sampling.

mod nifti;
mod patch;
mod raw;

use std::fs;
use std::path::Path;

pub use patch::{sample_patch, PatchSample, PatchSampler, FOREGROUND_BIAS};

use crate::error::{Error, Result};
use crate::tensor::Tensor;

pub const HU_MIN: f64 = -1024.0;
pub const HU_MAX: f64 = 3071.0;

/// What the voxel values mean, which also fixes the on-disk type.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum VolumeKind {
    /// CT intensities, stored as int16.
    HuInt,
    /// Binary mask, stored as uint8.
    LabelInt,
    /// Probabilities, stored as float32.
    ProbFloat,
}

/// A 3D scalar field in `H x W x D` row-major order (D fastest).
#[derive(Debug, Clone, PartialEq)]
pub struct Volume {
    dims: [usize; 3],
    spacing: [f64; 3],
    kind: VolumeKind,
    data: Vec<f64>,
}

impl Volume {
    /// Validates and normalises the data for `kind`: HU values are clamped
    /// to the scanner range and rounded, probabilities are held at f32
    /// precision, labels must be 0 or 1.
    pub fn new(dims: [usize; 3], spacing: [f64; 3], kind: VolumeKind, mut data: Vec<f64>) -> Result<Self> {
        let n: usize = dims.iter().product();
        if n == 0 {
            return Err(Error::Volume(format!("empty dimensions {dims:?}")));
        }
        if data.len() != n {
            return Err(Error::Volume(format!("{} values for dimensions {dims:?}", data.len())));
        }
        if spacing.iter().any(|&s| !(s > 0.0) || !s.is_finite()) {
            return Err(Error::Volume(format!("spacing {spacing:?} must be positive")));
        }
        match kind {
            VolumeKind::HuInt => {
                if data.iter().any(|v| !v.is_finite()) {
                    return Err(Error::Volume("non-finite intensity".into()));
                }
                data.iter_mut().for_each(|v| *v = v.round().clamp(HU_MIN, HU_MAX));
            }
            VolumeKind::LabelInt => {
                if let Some(v) = data.iter().find(|&&v| v != 0.0 && v != 1.0) {
                    return Err(Error::Volume(format!("label volume contains value {v}")));
                }
            }
            VolumeKind::ProbFloat => {
                if data.iter().any(|v| !v.is_finite()) {
                    return Err(Error::Volume("non-finite probability".into()));
                }
                data.iter_mut().for_each(|v| *v = *v as f32 as f64);
            }
        }
        Ok(Volume { dims, spacing, kind, data })
    }

    pub fn dims(&self) -> [usize; 3] {
        self.dims
    }

    pub fn spacing(&self) -> [f64; 3] {
        self.spacing
    }

    pub fn kind(&self) -> VolumeKind {
        self.kind
    }

    pub fn data(&self) -> &[f64] {
        &self.data
    }

    pub fn into_data(self) -> Vec<f64> {
        self.data
    }

    pub fn len(&self) -> usize {
        self.data.len()
    }

    pub fn is_empty(&self) -> bool {
        self.data.is_empty()
    }

    pub fn index(&self, h: usize, w: usize, d: usize) -> usize {
        (h * self.dims[1] + w) * self.dims[2] + d
    }

    /// Same voxels read as another kind; fails if they do not fit it.
    pub fn with_kind(&self, kind: VolumeKind) -> Result<Volume> {
        Volume::new(self.dims, self.spacing, kind, self.data.clone())
    }

    /// Binary mask from a label volume stored with any integer type:
    /// every non-zero voxel becomes foreground.
    pub fn binarized(&self) -> Result<Volume> {
        let data = self.data.iter().map(|&v| if v != 0.0 { 1.0 } else { 0.0 }).collect();
        Volume::new(self.dims, self.spacing, VolumeKind::LabelInt, data)
    }

    /// Centred zero-padding up to at least `min_dims`; HU volumes pad with
    /// air (-1024), others with 0.
    pub fn pad_symmetric(&self, min_dims: [usize; 3]) -> Volume {
        let fill = if self.kind == VolumeKind::HuInt { HU_MIN } else { 0.0 };
        let (dims, data) = pad_centered(&self.data, self.dims, min_dims, fill);
        Volume {
            dims,
            spacing: self.spacing,
            kind: self.kind,
            data,
        }
    }
}

/// Centred padding of a row-major `dims` array; returns new dims and data.
pub fn pad_centered(data: &[f64], dims: [usize; 3], min_dims: [usize; 3], fill: f64) -> ([usize; 3], Vec<f64>) {
    let out: [usize; 3] = std::array::from_fn(|a| dims[a].max(min_dims[a]));
    if out == dims {
        return (dims, data.to_vec());
    }
    let before: [usize; 3] = std::array::from_fn(|a| (out[a] - dims[a]) / 2);
    let mut res = vec![fill; out.iter().product()];
    for h in 0..dims[0] {
        for w in 0..dims[1] {
            let src = (h * dims[1] + w) * dims[2];
            let dst = ((h + before[0]) * out[1] + w + before[1]) * out[2] + before[2];
            res[dst..dst + dims[2]].copy_from_slice(&data[src..src + dims[2]]);
        }
    }
    (out, res)
}

/// On-disk encodings.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Format {
    Nifti,
    Raw,
}

impl Format {
    /// `.vol` selects the raw text-header format, anything else NIfTI.
    pub fn from_path(path: &Path) -> Format {
        match path.extension().and_then(|e| e.to_str()) {
            Some("vol") => Format::Raw,
            _ => Format::Nifti,
        }
    }
}

/// Reads a volume, detecting the format from its leading bytes.
pub fn load_volume(path: &Path) -> Result<Volume> {
    let bytes = fs::read(path).map_err(|e| Error::io(path, e))?;
    if bytes.starts_with(raw::MAGIC_LINE.as_bytes()) {
        raw::decode(&bytes, path)
    } else {
        nifti::decode(&bytes, path)
    }
}

pub fn save_volume(v: &Volume, path: &Path) -> Result<()> {
    let bytes = match Format::from_path(path) {
        Format::Raw => raw::encode(v),
        Format::Nifti => nifti::encode(v),
    };
    crate::unet::checkpoint::write_atomic(path, &bytes)
}

pub(crate) fn kind_for_dtype(name: &str) -> Option<VolumeKind> {
    match name {
        "int16" => Some(VolumeKind::HuInt),
        "uint8" => Some(VolumeKind::LabelInt),
        "float32" => Some(VolumeKind::ProbFloat),
        _ => None,
    }
}

pub(crate) fn dtype_name(kind: VolumeKind) -> &'static str {
    match kind {
        VolumeKind::HuInt => "int16",
        VolumeKind::LabelInt => "uint8",
        VolumeKind::ProbFloat => "float32",
    }
}

/// Little-endian payload in the given element order.
pub(crate) fn encode_values(kind: VolumeKind, values: impl Iterator<Item = f64>) -> Vec<u8> {
    let mut out = Vec::new();
    for v in values {
        match kind {
            VolumeKind::HuInt => out.extend_from_slice(&(v as i16).to_le_bytes()),
            VolumeKind::LabelInt => out.push(v as u8),
            VolumeKind::ProbFloat => out.extend_from_slice(&(v as f32).to_le_bytes()),
        }
    }
    out
}

pub(crate) fn decode_values(kind: VolumeKind, bytes: &[u8]) -> Vec<f64> {
    match kind {
        VolumeKind::HuInt => bytes
            .chunks_exact(2)
            .map(|c| i16::from_le_bytes([c[0], c[1]]) as f64)
            .collect(),
        VolumeKind::LabelInt => bytes.iter().map(|&b| b as f64).collect(),
        VolumeKind::ProbFloat => bytes
            .chunks_exact(4)
            .map(|c| f32::from_le_bytes([c[0], c[1], c[2], c[3]]) as f64)
            .collect(),
    }
}

pub(crate) fn bytes_per_voxel(kind: VolumeKind) -> usize {
    match kind {
        VolumeKind::HuInt => 2,
        VolumeKind::LabelInt => 1,
        VolumeKind::ProbFloat => 4,
    }
}

/// Intensity window in HU.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct WindowSpec {
    pub low: f64,
    pub high: f64,
}

impl WindowSpec {
    pub fn new(low: f64, high: f64) -> Result<Self> {
        if !(low < high) {
            return Err(Error::Config(format!("window low {low} must be below high {high}")));
        }
        Ok(WindowSpec { low, high })
    }

    pub fn apply(&self, hu: f64) -> f64 {
        (hu.clamp(self.low, self.high) - self.low) / (self.high - self.low)
    }
}

/// Default three-window stack: broad tissue, brain, blood.
pub const DEFAULT_WINDOWS: [WindowSpec; 3] = [
    WindowSpec { low: -200.0, high: 1300.0 },
    WindowSpec { low: 0.0, high: 100.0 },
    WindowSpec { low: -20.0, high: 200.0 },
];

/// Clamps to the window and maps it affinely onto `[0, 1]`.
pub fn hu_window(v: &Volume, w: &WindowSpec) -> Result<Vec<f64>> {
    if v.kind != VolumeKind::HuInt {
        return Err(Error::Volume(format!("windowing needs an HU volume, got {:?}", v.kind)));
    }
    WindowSpec::new(w.low, w.high)?;
    Ok(v.data.iter().map(|&x| w.apply(x)).collect())
}

/// One channel per window: `[len(windows), H, W, D]`.
pub fn window_stack(v: &Volume, windows: &[WindowSpec]) -> Result<Tensor> {
    let mut data = Vec::with_capacity(v.len() * windows.len());
    for w in windows {
        data.extend(hu_window(v, w)?);
    }
    let [h, w, d] = v.dims;
    Tensor::new(&[windows.len(), h, w, d], data)
}
