//! Binary checkpoint format.
//!
//! Layout, all integers little-endian:
//!
//! ```text
//! "VIOLA1"  u32 version  u64 step
//! u32 config_len  config (UTF-8 TOML)
//! u32 record_count
//! per record: u32 path_len  path  u8 dtype  u32 rank  u64 dims[rank]  data
//! ```
//!
//! dtype 0 is f32, 1 is f64. Optimizer velocity records carry a `velocity/`
//! path prefix.

use std::fs;
use std::io::Write;
use std::path::Path;

use indexmap::IndexMap;

use super::config::NetworkConfig;
use super::model::Network;
use super::params::ParamStore;
use crate::error::{Error, Result};
use crate::tensor::Tensor;

pub const MAGIC: &[u8; 6] = b"VIOLA1";
pub const VERSION: u32 = 1;
pub const VELOCITY_PREFIX: &str = "velocity/";

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum DType {
    F32 = 0,
    F64 = 1,
}

/// One stored tensor.
#[derive(Debug, Clone, PartialEq)]
pub struct Record {
    pub dtype: DType,
    pub shape: Vec<usize>,
    pub data: Vec<f64>,
}

/// Everything needed to resume training or run inference.
#[derive(Debug, Clone, PartialEq)]
pub struct Checkpoint {
    pub step: u64,
    pub config: NetworkConfig,
    pub params: IndexMap<String, Record>,
    pub velocity: IndexMap<String, Record>,
}

impl Checkpoint {
    pub fn from_network(net: &Network, step: u64, velocity: &IndexMap<String, Vec<f64>>) -> Self {
        let params = net
            .params()
            .iter()
            .map(|(k, t)| {
                (
                    k.clone(),
                    Record {
                        dtype: DType::F64,
                        shape: t.shape().to_vec(),
                        data: t.to_vec(),
                    },
                )
            })
            .collect();
        let velocity = velocity
            .iter()
            .map(|(k, v)| {
                let shape = net.params().get(k).map(|t| t.shape().to_vec()).unwrap_or_else(|_| vec![v.len()]);
                (
                    k.clone(),
                    Record {
                        dtype: DType::F64,
                        shape,
                        data: v.clone(),
                    },
                )
            })
            .collect();
        Checkpoint {
            step,
            config: net.config().clone(),
            params,
            velocity,
        }
    }

    /// Rebuilds the network, checking every tensor against the manifest.
    pub fn network(&self) -> Result<Network> {
        let mut loaded = IndexMap::new();
        for (k, r) in &self.params {
            loaded.insert(k.clone(), Tensor::param(&r.shape, r.data.clone())?);
        }
        let store = ParamStore::from_manifest(&self.config, loaded)?;
        Network::from_params(self.config.clone(), store)
    }

    pub fn velocity_map(&self) -> IndexMap<String, Vec<f64>> {
        self.velocity.iter().map(|(k, r)| (k.clone(), r.data.clone())).collect()
    }

    pub fn to_bytes(&self) -> Result<Vec<u8>> {
        let cfg = toml::to_string(&self.config).map_err(|e| Error::Config(format!("serialising config: {e}")))?;
        let mut out = Vec::new();
        out.extend_from_slice(MAGIC);
        out.extend_from_slice(&VERSION.to_le_bytes());
        out.extend_from_slice(&self.step.to_le_bytes());
        out.extend_from_slice(&(cfg.len() as u32).to_le_bytes());
        out.extend_from_slice(cfg.as_bytes());
        let count = self.params.len() + self.velocity.len();
        out.extend_from_slice(&(count as u32).to_le_bytes());
        let velocity = self.velocity.iter().map(|(k, r)| (format!("{VELOCITY_PREFIX}{k}"), r));
        for (path, r) in self.params.iter().map(|(k, r)| (k.clone(), r)).chain(velocity) {
            out.extend_from_slice(&(path.len() as u32).to_le_bytes());
            out.extend_from_slice(path.as_bytes());
            out.push(r.dtype as u8);
            out.extend_from_slice(&(r.shape.len() as u32).to_le_bytes());
            for &d in &r.shape {
                out.extend_from_slice(&(d as u64).to_le_bytes());
            }
            match r.dtype {
                DType::F32 => r.data.iter().for_each(|&v| out.extend_from_slice(&(v as f32).to_le_bytes())),
                DType::F64 => r.data.iter().for_each(|&v| out.extend_from_slice(&v.to_le_bytes())),
            }
        }
        Ok(out)
    }

    pub fn from_bytes(bytes: &[u8], path: &Path) -> Result<Self> {
        let mut r = Reader { bytes, pos: 0, path };
        if r.take(6)? != MAGIC {
            return Err(r.malformed("bad magic"));
        }
        let version = r.u32()?;
        if version != VERSION {
            return Err(r.malformed(&format!("unsupported version {version}")));
        }
        let step = r.u64()?;
        let cfg_len = r.u32()? as usize;
        let cfg_text = std::str::from_utf8(r.take(cfg_len)?).map_err(|_| r.malformed("config is not UTF-8"))?;
        let config: NetworkConfig =
            toml::from_str(cfg_text).map_err(|e| r.malformed(&format!("config: {e}")))?;
        let count = r.u32()? as usize;
        let mut params = IndexMap::new();
        let mut velocity = IndexMap::new();
        for _ in 0..count {
            let plen = r.u32()? as usize;
            let name = std::str::from_utf8(r.take(plen)?)
                .map_err(|_| r.malformed("record path is not UTF-8"))?
                .to_string();
            let dtype = match r.take(1)?[0] {
                0 => DType::F32,
                1 => DType::F64,
                code => {
                    return Err(Error::UnsupportedDtype {
                        path: path.to_path_buf(),
                        code: code as i64,
                    })
                }
            };
            let rank = r.u32()? as usize;
            let shape = (0..rank).map(|_| r.u64().map(|d| d as usize)).collect::<Result<Vec<_>>>()?;
            let n: usize = shape.iter().product();
            let data = match dtype {
                DType::F32 => r
                    .take(n * 4)?
                    .chunks_exact(4)
                    .map(|c| f32::from_le_bytes(c.try_into().unwrap()) as f64)
                    .collect(),
                DType::F64 => r
                    .take(n * 8)?
                    .chunks_exact(8)
                    .map(|c| f64::from_le_bytes(c.try_into().unwrap()))
                    .collect(),
            };
            let rec = Record { dtype, shape, data };
            let dup = match name.strip_prefix(VELOCITY_PREFIX) {
                Some(k) => velocity.insert(k.to_string(), rec).is_some(),
                None => params.insert(name.clone(), rec).is_some(),
            };
            if dup {
                return Err(r.malformed(&format!("duplicate record `{name}`")));
            }
        }
        if r.pos != bytes.len() {
            return Err(r.malformed("trailing bytes after last record"));
        }
        Ok(Checkpoint {
            step,
            config,
            params,
            velocity,
        })
    }

    /// Writes via a temporary file and rename so readers never see a partial file.
    pub fn save(&self, path: &Path) -> Result<()> {
        write_atomic(path, &self.to_bytes()?)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let bytes = fs::read(path).map_err(|e| Error::io(path, e))?;
        Self::from_bytes(&bytes, path)
    }
}

pub(crate) fn write_atomic(path: &Path, bytes: &[u8]) -> Result<()> {
    let dir = path.parent().filter(|p| !p.as_os_str().is_empty()).unwrap_or(Path::new("."));
    let name = path.file_name().map(|n| n.to_string_lossy().into_owned()).unwrap_or_default();
    let tmp = dir.join(format!(".{name}.tmp{}", std::process::id()));
    let mut f = fs::File::create(&tmp).map_err(|e| Error::io(&tmp, e))?;
    f.write_all(bytes).map_err(|e| Error::io(&tmp, e))?;
    f.sync_all().map_err(|e| Error::io(&tmp, e))?;
    drop(f);
    fs::rename(&tmp, path).map_err(|e| Error::io(path, e))
}

struct Reader<'a> {
    bytes: &'a [u8],
    pos: usize,
    path: &'a Path,
}

impl<'a> Reader<'a> {
    fn take(&mut self, n: usize) -> Result<&'a [u8]> {
        let end = self.pos.checked_add(n).filter(|&e| e <= self.bytes.len()).ok_or(Error::Truncated {
            path: self.path.to_path_buf(),
            expected: self.pos.saturating_add(n),
            found: self.bytes.len(),
        })?;
        let s = &self.bytes[self.pos..end];
        self.pos = end;
        Ok(s)
    }

    fn u32(&mut self) -> Result<u32> {
        Ok(u32::from_le_bytes(self.take(4)?.try_into().unwrap()))
    }

    fn u64(&mut self) -> Result<u64> {
        Ok(u64::from_le_bytes(self.take(8)?.try_into().unwrap()))
    }

    fn malformed(&self, reason: &str) -> Error {
        Error::MalformedHeader {
            path: self.path.to_path_buf(),
            reason: reason.to_string(),
        }
    }
}
