//! Versioned binary container of named tensors plus Adam state.
//!
//! Layout (all integers little-endian):
//!
//! ```text
//! magic "SRNASCKP" | version u32 | meta_len u32 | meta (UTF-8 JSON)
//! count u32
//! per entry: name_len u32 | name | dtype u8 | ndim u32 | dims u64* | step u64
//!            | values f64* | first moment f64* | second moment f64*
//! ```
//!
//! A JSON manifest listing the entries is written next to the container with
//! the `.json` extension.

use std::fs;
use std::io::{Read, Write};
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

use super::params::{Param, ParamStore};
use super::tensor::Tensor;

const MAGIC: &[u8; 8] = b"SRNASCKP";
pub const VERSION: u32 = 1;
const DTYPE_F64: u8 = 1;

#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
pub struct ManifestEntry {
    pub name: String,
    pub shape: Vec<usize>,
    pub dtype: String,
    pub step: u64,
}

#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
pub struct Manifest {
    pub format: String,
    pub version: u32,
    #[serde(skip_serializing_if = "Option::is_none", default)]
    pub created_unix: Option<u64>,
    pub meta: serde_json::Value,
    pub entries: Vec<ManifestEntry>,
}

pub fn manifest_path(path: &Path) -> PathBuf {
    path.with_extension("json")
}

/// Writes `store` and `meta` to `path`. With `deterministic` set the manifest
/// carries no timestamp, so repeated runs produce identical bytes.
pub fn save(path: &Path, store: &ParamStore, meta: &serde_json::Value, deterministic: bool) -> Result<()> {
    let mut buf = Vec::new();
    buf.extend_from_slice(MAGIC);
    buf.extend_from_slice(&VERSION.to_le_bytes());
    let meta_bytes = serde_json::to_vec(meta)?;
    buf.extend_from_slice(&(meta_bytes.len() as u32).to_le_bytes());
    buf.extend_from_slice(&meta_bytes);
    buf.extend_from_slice(&(store.len() as u32).to_le_bytes());
    let mut entries = Vec::with_capacity(store.len());
    for p in store.params() {
        buf.extend_from_slice(&(p.name.len() as u32).to_le_bytes());
        buf.extend_from_slice(p.name.as_bytes());
        buf.push(DTYPE_F64);
        buf.extend_from_slice(&(p.value.shape().len() as u32).to_le_bytes());
        for &d in p.value.shape() {
            buf.extend_from_slice(&(d as u64).to_le_bytes());
        }
        buf.extend_from_slice(&p.step.to_le_bytes());
        for series in [p.value.data(), &p.m, &p.v] {
            for v in series {
                buf.extend_from_slice(&v.to_le_bytes());
            }
        }
        entries.push(ManifestEntry {
            name: p.name.clone(),
            shape: p.value.shape().to_vec(),
            dtype: "f64".into(),
            step: p.step,
        });
    }
    if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
        fs::create_dir_all(dir)?;
    }
    fs::File::create(path)?.write_all(&buf)?;

    let created_unix = (!deterministic).then(|| {
        std::time::SystemTime::now()
            .duration_since(std::time::UNIX_EPOCH)
            .map(|d| d.as_secs())
            .unwrap_or(0)
    });
    let manifest = Manifest {
        format: "srnas-checkpoint".into(),
        version: VERSION,
        created_unix,
        meta: meta.clone(),
        entries,
    };
    fs::write(manifest_path(path), serde_json::to_string_pretty(&manifest)?)?;
    Ok(())
}

struct Reader<'a> {
    buf: &'a [u8],
    pos: usize,
}

impl<'a> Reader<'a> {
    fn take(&mut self, n: usize) -> Result<&'a [u8]> {
        if self.pos + n > self.buf.len() {
            return Err(Error::Format("checkpoint truncated".into()));
        }
        let s = &self.buf[self.pos..self.pos + n];
        self.pos += n;
        Ok(s)
    }

    fn u32(&mut self) -> Result<u32> {
        Ok(u32::from_le_bytes(self.take(4)?.try_into().unwrap()))
    }

    fn u64(&mut self) -> Result<u64> {
        Ok(u64::from_le_bytes(self.take(8)?.try_into().unwrap()))
    }

    fn f64s(&mut self, n: usize) -> Result<Vec<f64>> {
        let bytes = self.take(n.checked_mul(8).ok_or_else(|| Error::Format("entry too large".into()))?)?;
        Ok(bytes
            .chunks_exact(8)
            .map(|c| f64::from_le_bytes(c.try_into().unwrap()))
            .collect())
    }
}

/// Reads a container written by [`save`].
pub fn load(path: &Path) -> Result<(ParamStore, serde_json::Value)> {
    let mut buf = Vec::new();
    fs::File::open(path)?.read_to_end(&mut buf)?;
    let mut r = Reader { buf: &buf, pos: 0 };
    if r.take(8)? != MAGIC {
        return Err(Error::Format(format!("{} is not a checkpoint", path.display())));
    }
    let version = r.u32()?;
    if version != VERSION {
        return Err(Error::Format(format!("unsupported checkpoint version {version}")));
    }
    let meta_len = r.u32()? as usize;
    let meta: serde_json::Value = serde_json::from_slice(r.take(meta_len)?)?;
    let count = r.u32()?;
    let mut store = ParamStore::new();
    for _ in 0..count {
        let name_len = r.u32()? as usize;
        let name = String::from_utf8(r.take(name_len)?.to_vec())
            .map_err(|_| Error::Format("parameter name is not UTF-8".into()))?;
        let dtype = r.take(1)?[0];
        if dtype != DTYPE_F64 {
            return Err(Error::Format(format!("unsupported dtype tag {dtype}")));
        }
        let ndim = r.u32()? as usize;
        let shape = (0..ndim).map(|_| r.u64().map(|d| d as usize)).collect::<Result<Vec<_>>>()?;
        let step = r.u64()?;
        let n: usize = shape.iter().product();
        let value = Tensor::new(shape, r.f64s(n)?)?;
        let m = r.f64s(n)?;
        let v = r.f64s(n)?;
        store.insert_param(Param {
            name,
            value,
            m,
            v,
            step,
        })?;
    }
    Ok((store, meta))
}
