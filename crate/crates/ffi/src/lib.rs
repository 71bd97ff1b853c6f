//! C interface to viola-core.
//!
//! Every function returns a [`ViolaStatus`]; on failure the message is
//! available from [`viola_last_error`] on the same thread. Objects are
//! opaque handles released with their `_free` function. Panics never
//! cross the boundary.

use std::cell::RefCell;
use std::ffi::{c_char, CStr, CString};
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::path::PathBuf;

use viola_core::metrics::{evaluate_case, MetricsOptions};
use viola_core::optim::{lr_at, TrainConfig};
use viola_core::train::{ensemble_average, infer_volume};
use viola_core::unet::{Checkpoint, Network};
use viola_core::volume::{hu_window, load_volume, save_volume, Volume, VolumeKind, WindowSpec};
use viola_core::Error;

#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ViolaStatus {
    Ok = 0,
    NullPointer = 1,
    InvalidArgument = 2,
    Io = 3,
    MalformedHeader = 4,
    UnsupportedDtype = 5,
    Truncated = 6,
    Shape = 7,
    Config = 8,
    Numeric = 9,
    Dataset = 10,
    Panic = 11,
}

#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ViolaVolumeKind {
    Hu = 0,
    Label = 1,
    Probability = 2,
}

impl From<VolumeKind> for ViolaVolumeKind {
    fn from(k: VolumeKind) -> Self {
        match k {
            VolumeKind::HuInt => ViolaVolumeKind::Hu,
            VolumeKind::LabelInt => ViolaVolumeKind::Label,
            VolumeKind::ProbFloat => ViolaVolumeKind::Probability,
        }
    }
}

impl From<ViolaVolumeKind> for VolumeKind {
    fn from(k: ViolaVolumeKind) -> Self {
        match k {
            ViolaVolumeKind::Hu => VolumeKind::HuInt,
            ViolaVolumeKind::Label => VolumeKind::LabelInt,
            ViolaVolumeKind::Probability => VolumeKind::ProbFloat,
        }
    }
}

/// Per-case scores. A `has_*` flag of false means the metric is undefined
/// for this case (empty mask) and the value field is NaN.
#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ViolaMetrics {
    pub dsc: f64,
    pub hd_mm: f64,
    pub hd95_mm: f64,
    pub nsd: f64,
    pub rvd: f64,
    pub has_hd: bool,
    pub has_hd95: bool,
    pub has_nsd: bool,
    pub has_rvd: bool,
}

/// Opaque volume handle.
pub struct ViolaVolume(Volume);

/// Opaque network handle.
pub struct ViolaModel(Network);

thread_local! {
    static LAST_ERROR: RefCell<CString> = RefCell::new(CString::default());
}

fn set_error(msg: impl Into<String>) {
    let s = CString::new(msg.into().replace('\0', " ")).unwrap_or_default();
    LAST_ERROR.with(|e| *e.borrow_mut() = s);
}

fn status_of(e: &Error) -> ViolaStatus {
    match e {
        Error::Io { .. } => ViolaStatus::Io,
        Error::MalformedHeader { .. } => ViolaStatus::MalformedHeader,
        Error::UnsupportedDtype { .. } => ViolaStatus::UnsupportedDtype,
        Error::Truncated { .. } => ViolaStatus::Truncated,
        Error::Shape(_) | Error::Rank { .. } => ViolaStatus::Shape,
        Error::Config(_) | Error::StepOutOfRange { .. } => ViolaStatus::Config,
        Error::NonFinite { .. } | Error::Autograd(_) => ViolaStatus::Numeric,
        Error::Volume(_) => ViolaStatus::InvalidArgument,
        Error::Dataset(_) => ViolaStatus::Dataset,
    }
}

struct Fail(ViolaStatus, String);

impl From<Error> for Fail {
    fn from(e: Error) -> Self {
        Fail(status_of(&e), e.to_string())
    }
}

fn null(what: &str) -> Fail {
    Fail(ViolaStatus::NullPointer, format!("{what} is null"))
}

fn guard(f: impl FnOnce() -> Result<(), Fail>) -> ViolaStatus {
    match catch_unwind(AssertUnwindSafe(f)) {
        Ok(Ok(())) => {
            set_error("");
            ViolaStatus::Ok
        }
        Ok(Err(Fail(status, msg))) => {
            set_error(msg);
            status
        }
        Err(payload) => {
            let msg = payload
                .downcast_ref::<&str>()
                .map(|s| s.to_string())
                .or_else(|| payload.downcast_ref::<String>().cloned())
                .unwrap_or_else(|| "unknown panic".into());
            set_error(format!("internal panic: {msg}"));
            ViolaStatus::Panic
        }
    }
}

unsafe fn path_arg(p: *const c_char, what: &str) -> Result<PathBuf, Fail> {
    if p.is_null() {
        return Err(null(what));
    }
    let s = CStr::from_ptr(p)
        .to_str()
        .map_err(|_| Fail(ViolaStatus::InvalidArgument, format!("{what} is not UTF-8")))?;
    Ok(PathBuf::from(s))
}

unsafe fn vol<'a>(v: *const ViolaVolume, what: &str) -> Result<&'a Volume, Fail> {
    v.as_ref().map(|v| &v.0).ok_or_else(|| null(what))
}

unsafe fn put<T>(out: *mut *mut T, value: T) -> Result<(), Fail> {
    if out.is_null() {
        return Err(null("output pointer"));
    }
    *out = Box::into_raw(Box::new(value));
    Ok(())
}

/// Message for the last failed call on this thread, empty after a success.
/// The pointer stays valid until the next call on this thread.
#[no_mangle]
pub extern "C" fn viola_last_error() -> *const c_char {
    LAST_ERROR.with(|e| e.borrow().as_ptr())
}

/// Library version as a static NUL-terminated string.
#[no_mangle]
pub extern "C" fn viola_version() -> *const c_char {
    concat!(env!("CARGO_PKG_VERSION"), "\0").as_ptr() as *const c_char
}

/// Reads a NIfTI or raw volume.
///
/// # Safety
/// `path` must be a NUL-terminated string; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn viola_volume_load(path: *const c_char, out: *mut *mut ViolaVolume) -> ViolaStatus {
    guard(|| {
        let p = path_arg(path, "path")?;
        put(out, ViolaVolume(load_volume(&p)?))
    })
}

/// Writes a volume; `.vol` selects the raw format, anything else NIfTI.
///
/// # Safety
/// `v` must come from this library; `path` must be NUL-terminated.
#[no_mangle]
pub unsafe extern "C" fn viola_volume_save(v: *const ViolaVolume, path: *const c_char) -> ViolaStatus {
    guard(|| {
        let p = path_arg(path, "path")?;
        save_volume(vol(v, "volume")?, &p)?;
        Ok(())
    })
}

/// Builds a volume from `dims[0]*dims[1]*dims[2]` values in H, W, D
/// row-major order.
///
/// # Safety
/// `dims` and `spacing` must point to 3 elements, `data` to `len`.
#[no_mangle]
pub unsafe extern "C" fn viola_volume_new(
    dims: *const usize,
    spacing: *const f64,
    kind: ViolaVolumeKind,
    data: *const f64,
    len: usize,
    out: *mut *mut ViolaVolume,
) -> ViolaStatus {
    guard(|| {
        if dims.is_null() || spacing.is_null() || (data.is_null() && len > 0) {
            return Err(null("dims, spacing or data"));
        }
        let d: [usize; 3] = std::slice::from_raw_parts(dims, 3).try_into().unwrap();
        let s: [f64; 3] = std::slice::from_raw_parts(spacing, 3).try_into().unwrap();
        let values = if len == 0 { Vec::new() } else { std::slice::from_raw_parts(data, len).to_vec() };
        put(out, ViolaVolume(Volume::new(d, s, kind.into(), values)?))
    })
}

/// # Safety
/// `v` must come from this library and not be used afterwards. Null is ignored.
#[no_mangle]
pub unsafe extern "C" fn viola_volume_free(v: *mut ViolaVolume) {
    if !v.is_null() {
        drop(Box::from_raw(v));
    }
}

/// # Safety
/// `v` must be valid; `dims` must have room for 3 values.
#[no_mangle]
pub unsafe extern "C" fn viola_volume_dims(v: *const ViolaVolume, dims: *mut usize) -> ViolaStatus {
    guard(|| {
        let v = vol(v, "volume")?;
        if dims.is_null() {
            return Err(null("dims"));
        }
        std::slice::from_raw_parts_mut(dims, 3).copy_from_slice(&v.dims());
        Ok(())
    })
}

/// # Safety
/// `v` must be valid; `spacing` must have room for 3 values.
#[no_mangle]
pub unsafe extern "C" fn viola_volume_spacing(v: *const ViolaVolume, spacing: *mut f64) -> ViolaStatus {
    guard(|| {
        let v = vol(v, "volume")?;
        if spacing.is_null() {
            return Err(null("spacing"));
        }
        std::slice::from_raw_parts_mut(spacing, 3).copy_from_slice(&v.spacing());
        Ok(())
    })
}

/// # Safety
/// `v` must be valid; `kind` writable.
#[no_mangle]
pub unsafe extern "C" fn viola_volume_kind(v: *const ViolaVolume, kind: *mut ViolaVolumeKind) -> ViolaStatus {
    guard(|| {
        let v = vol(v, "volume")?;
        let k = kind.as_mut().ok_or_else(|| null("kind"))?;
        *k = v.kind().into();
        Ok(())
    })
}

/// Copies the voxel values into `out`, which must hold exactly the
/// volume's voxel count.
///
/// # Safety
/// `v` must be valid; `out` must point to `len` writable values.
#[no_mangle]
pub unsafe extern "C" fn viola_volume_data(v: *const ViolaVolume, out: *mut f64, len: usize) -> ViolaStatus {
    guard(|| {
        let v = vol(v, "volume")?;
        if out.is_null() {
            return Err(null("out"));
        }
        if len != v.len() {
            return Err(Fail(
                ViolaStatus::Shape,
                format!("buffer holds {len} values, volume has {}", v.len()),
            ));
        }
        std::slice::from_raw_parts_mut(out, len).copy_from_slice(v.data());
        Ok(())
    })
}

/// Loads a network from a checkpoint file.
///
/// # Safety
/// `path` must be NUL-terminated; `out` writable.
#[no_mangle]
pub unsafe extern "C" fn viola_model_load(path: *const c_char, out: *mut *mut ViolaModel) -> ViolaStatus {
    guard(|| {
        let p = path_arg(path, "path")?;
        put(out, ViolaModel(Checkpoint::load(&p)?.network()?.frozen()))
    })
}

/// # Safety
/// `m` must come from this library and not be used afterwards. Null is ignored.
#[no_mangle]
pub unsafe extern "C" fn viola_model_free(m: *mut ViolaModel) {
    if !m.is_null() {
        drop(Box::from_raw(m));
    }
}

/// Sliding-window segmentation of an HU volume. Either output may be null
/// if not wanted.
///
/// # Safety
/// Handles must be valid; non-null outputs must be writable.
#[no_mangle]
pub unsafe extern "C" fn viola_model_infer(
    m: *const ViolaModel,
    image: *const ViolaVolume,
    overlap: f64,
    out_prob: *mut *mut ViolaVolume,
    out_label: *mut *mut ViolaVolume,
) -> ViolaStatus {
    guard(|| {
        let net = &m.as_ref().ok_or_else(|| null("model"))?.0;
        let (prob, label) = infer_volume(net, vol(image, "image")?, overlap)?;
        if !out_prob.is_null() {
            put(out_prob, ViolaVolume(prob))?;
        }
        if !out_label.is_null() {
            put(out_label, ViolaVolume(label))?;
        }
        Ok(())
    })
}

/// Scores a predicted mask against ground truth.
///
/// # Safety
/// Handles must be valid; `out` writable.
#[no_mangle]
pub unsafe extern "C" fn viola_metrics(
    pred: *const ViolaVolume,
    gt: *const ViolaVolume,
    nsd_tau_mm: f64,
    hd_percentile: f64,
    out: *mut ViolaMetrics,
) -> ViolaStatus {
    guard(|| {
        let opts = MetricsOptions {
            nsd_tau_mm,
            hd_percentile,
        };
        let r = evaluate_case("", vol(pred, "pred")?, vol(gt, "gt")?, &opts)?;
        let o = out.as_mut().ok_or_else(|| null("out"))?;
        let f = |v: Option<f64>| v.unwrap_or(f64::NAN);
        *o = ViolaMetrics {
            dsc: r.dsc,
            hd_mm: f(r.hd_mm),
            hd95_mm: f(r.hd95_mm),
            nsd: f(r.nsd),
            rvd: f(r.rvd),
            has_hd: r.hd_mm.is_some(),
            has_hd95: r.hd95_mm.is_some(),
            has_nsd: r.nsd.is_some(),
            has_rvd: r.rvd.is_some(),
        };
        Ok(())
    })
}

/// Learning rate at `step` for a linear-warmup, cosine-decay schedule.
///
/// # Safety
/// `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn viola_lr_at(
    step: usize,
    base_lr: f64,
    warmup_steps: usize,
    total_steps: usize,
    out: *mut f64,
) -> ViolaStatus {
    guard(|| {
        let cfg = TrainConfig {
            base_lr,
            warmup_steps,
            total_steps,
            ..TrainConfig::default()
        };
        cfg.validate()?;
        let o = out.as_mut().ok_or_else(|| null("out"))?;
        *o = lr_at(step, &cfg)?;
        Ok(())
    })
}

/// Windows an HU volume into `[0, 1]`, writing one value per voxel.
///
/// # Safety
/// `v` must be valid; `out` must point to `len` writable values.
#[no_mangle]
pub unsafe extern "C" fn viola_hu_window(
    v: *const ViolaVolume,
    low: f64,
    high: f64,
    out: *mut f64,
    len: usize,
) -> ViolaStatus {
    guard(|| {
        let v = vol(v, "volume")?;
        if out.is_null() {
            return Err(null("out"));
        }
        if len != v.len() {
            return Err(Fail(
                ViolaStatus::Shape,
                format!("buffer holds {len} values, volume has {}", v.len()),
            ));
        }
        let w = hu_window(v, &WindowSpec::new(low, high)?)?;
        std::slice::from_raw_parts_mut(out, len).copy_from_slice(&w);
        Ok(())
    })
}

/// Voxel-wise mean of `n` probability volumes and its label map at 0.5.
///
/// # Safety
/// `inputs` must point to `n` valid handles; non-null outputs writable.
#[no_mangle]
pub unsafe extern "C" fn viola_ensemble(
    inputs: *const *const ViolaVolume,
    n: usize,
    out_prob: *mut *mut ViolaVolume,
    out_label: *mut *mut ViolaVolume,
) -> ViolaStatus {
    guard(|| {
        if inputs.is_null() && n > 0 {
            return Err(null("inputs"));
        }
        let handles = if n == 0 { &[][..] } else { std::slice::from_raw_parts(inputs, n) };
        let vols = handles
            .iter()
            .map(|&h| vol(h, "input volume").cloned())
            .collect::<Result<Vec<_>, _>>()?;
        let (mean, label) = ensemble_average(&vols)?;
        if !out_prob.is_null() {
            put(out_prob, ViolaVolume(mean))?;
        }
        if !out_label.is_null() {
            put(out_label, ViolaVolume(label))?;
        }
        Ok(())
    })
}
