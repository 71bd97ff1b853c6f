//! Single-file, uncompressed, little-endian NIfTI-1 without extensions.
//! Axis i maps to the volume's H, j to W, k to D; i varies fastest on disk.

use std::path::Path;

use super::{bytes_per_voxel, decode_values, encode_values, Volume, VolumeKind};
use crate::error::{Error, Result};

const HEADER_LEN: usize = 348;
const DATA_OFFSET: usize = 352;

const DT_UINT8: i16 = 2;
const DT_INT16: i16 = 4;
const DT_FLOAT32: i16 = 16;

fn i16_at(b: &[u8], off: usize) -> i16 {
    i16::from_le_bytes([b[off], b[off + 1]])
}

fn i32_at(b: &[u8], off: usize) -> i32 {
    i32::from_le_bytes(b[off..off + 4].try_into().unwrap())
}

fn f32_at(b: &[u8], off: usize) -> f32 {
    f32::from_le_bytes(b[off..off + 4].try_into().unwrap())
}

pub(super) fn decode(bytes: &[u8], path: &Path) -> Result<Volume> {
    let malformed = |reason: &str| Error::MalformedHeader {
        path: path.to_path_buf(),
        reason: reason.to_string(),
    };
    if bytes.starts_with(&[0x1f, 0x8b]) {
        return Err(malformed("gzip-compressed files are not supported"));
    }
    if bytes.len() < HEADER_LEN {
        return Err(Error::Truncated {
            path: path.to_path_buf(),
            expected: HEADER_LEN,
            found: bytes.len(),
        });
    }
    let sizeof_hdr = i32_at(bytes, 0);
    if sizeof_hdr != HEADER_LEN as i32 {
        let reason = if sizeof_hdr.swap_bytes() == HEADER_LEN as i32 {
            "big-endian files are not supported".to_string()
        } else {
            format!("sizeof_hdr is {sizeof_hdr}, expected 348")
        };
        return Err(malformed(&reason));
    }
    match &bytes[344..348] {
        b"n+1\0" => {}
        b"ni1\0" => return Err(malformed("two-file (.hdr/.img) layout is not supported")),
        _ => return Err(malformed("missing n+1 magic")),
    }
    let dim: Vec<i16> = (0..8).map(|i| i16_at(bytes, 40 + 2 * i)).collect();
    let ndim = dim[0];
    if !(1..=7).contains(&ndim) {
        return Err(malformed(&format!("dim[0] = {ndim}")));
    }
    let ndim = ndim as usize;
    if dim[1..=ndim].iter().any(|&d| d < 1) {
        return Err(malformed(&format!("non-positive extent in dim {:?}", &dim[1..=ndim])));
    }
    if ndim > 3 && dim[4..=ndim].iter().any(|&d| d != 1) {
        return Err(malformed("only 3D volumes are supported"));
    }
    let ext = |i: usize| if i <= ndim { dim[i] as usize } else { 1 };
    let dims = [ext(1), ext(2), ext(3)];

    let datatype = i16_at(bytes, 70);
    let kind = match datatype {
        DT_UINT8 => VolumeKind::LabelInt,
        DT_INT16 => VolumeKind::HuInt,
        DT_FLOAT32 => VolumeKind::ProbFloat,
        other => {
            return Err(Error::UnsupportedDtype {
                path: path.to_path_buf(),
                code: other as i64,
            })
        }
    };
    let bitpix = i16_at(bytes, 72);
    if bitpix as usize != 8 * bytes_per_voxel(kind) {
        return Err(malformed(&format!("bitpix {bitpix} does not match datatype {datatype}")));
    }
    let spacing: [f64; 3] = std::array::from_fn(|a| (f32_at(bytes, 80 + 4 * a) as f64).abs());
    if spacing.iter().any(|&s| !(s > 0.0) || !s.is_finite()) {
        return Err(malformed(&format!("pixdim spacing {spacing:?} must be positive")));
    }
    let vox_offset = f32_at(bytes, 108);
    if !(vox_offset >= DATA_OFFSET as f32) || vox_offset.fract() != 0.0 {
        return Err(malformed(&format!("vox_offset {vox_offset}")));
    }
    let offset = vox_offset as usize;
    let n: usize = dims.iter().product();
    let need = offset + n * bytes_per_voxel(kind);
    if bytes.len() < need {
        return Err(Error::Truncated {
            path: path.to_path_buf(),
            expected: need,
            found: bytes.len(),
        });
    }
    let mut disk = decode_values(kind, &bytes[offset..need]);
    let slope = f32_at(bytes, 112) as f64;
    let inter = f32_at(bytes, 116) as f64;
    if slope != 0.0 && slope.is_finite() && inter.is_finite() && (slope, inter) != (1.0, 0.0) {
        disk.iter_mut().for_each(|v| *v = *v * slope + inter);
    }

    let [h, w, d] = dims;
    let mut data = vec![0.0; n];
    for k in 0..d {
        for j in 0..w {
            for i in 0..h {
                data[(i * w + j) * d + k] = disk[(k * w + j) * h + i];
            }
        }
    }
    Volume::new(dims, spacing, kind, data).map_err(|e| match e {
        Error::Volume(reason) => malformed(&reason),
        other => other,
    })
}

pub(super) fn encode(v: &Volume) -> Vec<u8> {
    let mut hdr = vec![0u8; DATA_OFFSET];
    let put_i16 = |b: &mut [u8], off: usize, x: i16| b[off..off + 2].copy_from_slice(&x.to_le_bytes());
    let put_f32 = |b: &mut [u8], off: usize, x: f32| b[off..off + 4].copy_from_slice(&x.to_le_bytes());
    hdr[0..4].copy_from_slice(&(HEADER_LEN as i32).to_le_bytes());
    hdr[38] = b'r';
    let [h, w, d] = v.dims;
    for (i, x) in [3, h, w, d, 1, 1, 1, 1].into_iter().enumerate() {
        put_i16(&mut hdr, 40 + 2 * i, x as i16);
    }
    let (dt, bitpix) = match v.kind {
        VolumeKind::LabelInt => (DT_UINT8, 8),
        VolumeKind::HuInt => (DT_INT16, 16),
        VolumeKind::ProbFloat => (DT_FLOAT32, 32),
    };
    put_i16(&mut hdr, 70, dt);
    put_i16(&mut hdr, 72, bitpix);
    put_f32(&mut hdr, 76, 1.0);
    for a in 0..3 {
        put_f32(&mut hdr, 80 + 4 * a, v.spacing[a] as f32);
    }
    put_f32(&mut hdr, 108, DATA_OFFSET as f32);
    put_f32(&mut hdr, 112, 1.0);
    hdr[123] = 2;
    put_i16(&mut hdr, 254, 1);
    for a in 0..3 {
        put_f32(&mut hdr, 280 + 16 * a + 4 * a, v.spacing[a] as f32);
    }
    hdr[344..348].copy_from_slice(b"n+1\0");

    let data = &v.data;
    let disk = (0..d).flat_map(move |k| (0..w).flat_map(move |j| (0..h).map(move |i| data[(i * w + j) * d + k])));
    hdr.extend(encode_values(v.kind, disk));
    hdr
}
