//! Text header followed by a raw little-endian payload in H, W, D
//! row-major order:
//!
//! ```text
//! VIOLAVOL v1
//! shape: H W D
//! spacing: sx sy sz
//! dtype: int16|uint8|float32
//! ```

use std::path::Path;

use super::{bytes_per_voxel, decode_values, dtype_name, encode_values, kind_for_dtype, Volume};
use crate::error::{Error, Result};

pub(super) const MAGIC_LINE: &str = "VIOLAVOL v1";

pub(super) fn encode(v: &Volume) -> Vec<u8> {
    let [h, w, d] = v.dims;
    let [sx, sy, sz] = v.spacing;
    let mut out = format!(
        "{MAGIC_LINE}\nshape: {h} {w} {d}\nspacing: {sx:?} {sy:?} {sz:?}\ndtype: {}\n",
        dtype_name(v.kind)
    )
    .into_bytes();
    out.extend(encode_values(v.kind, v.data.iter().copied()));
    out
}

pub(super) fn decode(bytes: &[u8], path: &Path) -> Result<Volume> {
    let malformed = |reason: String| Error::MalformedHeader {
        path: path.to_path_buf(),
        reason,
    };
    let mut pos = 0;
    let mut lines = Vec::new();
    for _ in 0..4 {
        let nl = bytes[pos..]
            .iter()
            .position(|&b| b == b'\n')
            .ok_or_else(|| malformed("header ends before four lines".into()))?;
        let line = std::str::from_utf8(&bytes[pos..pos + nl]).map_err(|_| malformed("header is not UTF-8".into()))?;
        lines.push(line.trim_end_matches('\r'));
        pos += nl + 1;
    }
    if lines[0] != MAGIC_LINE {
        return Err(malformed(format!("first line `{}`", lines[0])));
    }
    let field = |line: &str, key: &str| -> Result<Vec<String>> {
        let rest = line
            .strip_prefix(key)
            .and_then(|r| r.strip_prefix(':'))
            .ok_or_else(|| malformed(format!("expected `{key}:` line, got `{line}`")))?;
        Ok(rest.split_whitespace().map(str::to_string).collect())
    };
    let shape = field(lines[1], "shape")?;
    let spacing = field(lines[2], "spacing")?;
    let dtype = field(lines[3], "dtype")?;
    if shape.len() != 3 || spacing.len() != 3 || dtype.len() != 1 {
        return Err(malformed("shape and spacing need three values, dtype one".into()));
    }
    let dims: [usize; 3] = std::array::from_fn(|i| shape[i].parse().unwrap_or(0));
    if dims.contains(&0) {
        return Err(malformed(format!("bad shape {shape:?}")));
    }
    let mut sp = [0.0; 3];
    for (s, t) in sp.iter_mut().zip(&spacing) {
        *s = t.parse().map_err(|_| malformed(format!("bad spacing `{t}`")))?;
    }
    let kind = kind_for_dtype(&dtype[0]).ok_or_else(|| Error::UnsupportedDtype {
        path: path.to_path_buf(),
        code: -1,
    })?;
    let need = dims.iter().product::<usize>() * bytes_per_voxel(kind);
    let payload = &bytes[pos..];
    if payload.len() < need {
        return Err(Error::Truncated {
            path: path.to_path_buf(),
            expected: pos + need,
            found: bytes.len(),
        });
    }
    if payload.len() > need {
        return Err(malformed(format!("{} bytes after payload", payload.len() - need)));
    }
    Volume::new(dims, sp, kind, decode_values(kind, payload)).map_err(|e| match e {
        Error::Volume(r) => malformed(r),
        other => other,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::volume::VolumeKind;

    #[test]
    fn round_trip_all_kinds() {
        for (kind, data) in [
            (VolumeKind::HuInt, vec![-1024.0, 0.0, 40.0, 3071.0]),
            (VolumeKind::LabelInt, vec![0.0, 1.0, 1.0, 0.0]),
            (VolumeKind::ProbFloat, vec![0.1, 0.25, 0.9, 1.0]),
        ] {
            let v = Volume::new([1, 2, 2], [0.5, 0.7, 3.3], kind, data).unwrap();
            let b = encode(&v);
            let back = decode(&b, Path::new("a.vol")).unwrap();
            assert_eq!(back, v);
            assert_eq!(encode(&back), b);
        }
    }

    #[test]
    fn errors() {
        let v = Volume::new([1, 1, 2], [1.0; 3], VolumeKind::HuInt, vec![1.0, 2.0]).unwrap();
        let b = encode(&v);
        let p = Path::new("a.vol");
        assert!(matches!(decode(&b[..b.len() - 1], p), Err(Error::Truncated { .. })));
        let s = String::from_utf8_lossy(&b).replace("int16", "int64");
        assert!(matches!(decode(s.as_bytes(), p), Err(Error::UnsupportedDtype { .. })));
        let s = String::from_utf8_lossy(&b).replace("shape:", "shap:");
        assert!(matches!(decode(s.as_bytes(), p), Err(Error::MalformedHeader { .. })));
    }
}
