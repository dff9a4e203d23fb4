//! Versioned binary checkpoint container.
//!
//! Layout: the magic bytes, a little-endian `u32` format version, a `u64`
//! header length, the JSON header, then every parameter tensor as
//! little-endian `f32` in header order.

use std::io::{Read, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use super::config::ArchConfig;
use super::params::ParamStore;
use super::tensor::Tensor;
use crate::error::{Error, Result};

pub const MAGIC: &[u8; 8] = b"ASCNCKPT";
pub const FORMAT_VERSION: u32 = 1;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TensorEntry {
    pub name: String,
    pub dims: [usize; 4],
}

/// Validation numbers stored with a checkpoint.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct StoredMetrics {
    pub rmse: Option<f64>,
    pub abs_rel: Option<f64>,
    pub delta1: Option<f64>,
    pub delta2: Option<f64>,
    pub delta3: Option<f64>,
    pub miou: Option<f64>,
    pub pixel_accuracy: Option<f64>,
    /// Median over frames of the per-frame AbsRel.
    #[serde(default)]
    pub median_abs_rel: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
struct Header {
    arch: ArchConfig,
    epoch: usize,
    metrics: StoredMetrics,
    fingerprint: String,
    tensors: Vec<TensorEntry>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Checkpoint {
    pub arch: ArchConfig,
    pub params: ParamStore<f32>,
    pub epoch: usize,
    pub metrics: StoredMetrics,
    /// Fingerprint of the configuration that produced the parameters.
    pub fingerprint: String,
}

impl Checkpoint {
    pub fn to_bytes(&self) -> Result<Vec<u8>> {
        let header = Header {
            arch: self.arch.clone(),
            epoch: self.epoch,
            metrics: self.metrics.clone(),
            fingerprint: self.fingerprint.clone(),
            tensors: self
                .params
                .names()
                .iter()
                .zip(self.params.tensors())
                .map(|(n, t)| TensorEntry { name: n.clone(), dims: t.dims() })
                .collect(),
        };
        let json = serde_json::to_vec(&header)?;
        let mut out = Vec::with_capacity(json.len() + 4 * self.params.scalar_count() + 20);
        out.extend_from_slice(MAGIC);
        out.extend_from_slice(&FORMAT_VERSION.to_le_bytes());
        out.extend_from_slice(&(json.len() as u64).to_le_bytes());
        out.extend_from_slice(&json);
        for t in self.params.tensors() {
            for v in t.data() {
                out.extend_from_slice(&v.to_le_bytes());
            }
        }
        Ok(out)
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Self> {
        let bad = |m: &str| Error::Checkpoint(m.to_string());
        if bytes.len() < 20 || &bytes[..8] != MAGIC {
            return Err(bad("not a checkpoint file"));
        }
        let version = u32::from_le_bytes(bytes[8..12].try_into().expect("4 bytes"));
        if version != FORMAT_VERSION {
            return Err(Error::Checkpoint(format!(
                "format version {version} is not supported (expected {FORMAT_VERSION})"
            )));
        }
        let hlen = u64::from_le_bytes(bytes[12..20].try_into().expect("8 bytes")) as usize;
        let body = bytes.get(20..20 + hlen).ok_or_else(|| bad("truncated header"))?;
        let header: Header = serde_json::from_slice(body)?;
        header.arch.validate()?;
        let mut data = &bytes[20 + hlen..];
        let mut entries = Vec::with_capacity(header.tensors.len());
        for e in &header.tensors {
            let len: usize = e.dims.iter().product();
            if data.len() < 4 * len {
                return Err(bad("truncated tensor data"));
            }
            let values = data[..4 * len]
                .chunks_exact(4)
                .map(|c| f32::from_le_bytes(c.try_into().expect("4 bytes")))
                .collect();
            data = &data[4 * len..];
            entries.push((e.name.clone(), Tensor::from_vec(e.dims, values)));
        }
        if !data.is_empty() {
            return Err(bad("trailing bytes after tensor data"));
        }
        let params = ParamStore::from_entries(entries);
        params.check_against(&header.arch)?;
        Ok(Checkpoint {
            arch: header.arch,
            params,
            epoch: header.epoch,
            metrics: header.metrics,
            fingerprint: header.fingerprint,
        })
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        let bytes = self.to_bytes()?;
        let mut f = std::fs::File::create(path)?;
        f.write_all(&bytes)?;
        Ok(())
    }

    pub fn load(path: &Path) -> Result<Self> {
        let mut bytes = Vec::new();
        std::fs::File::open(path)?.read_to_end(&mut bytes)?;
        Self::from_bytes(&bytes)
    }

    /// SHA-256 of the parameter data, independent of metadata.
    pub fn params_hash(&self) -> String {
        let mut h = Sha256::new();
        for (n, t) in self.params.names().iter().zip(self.params.tensors()) {
            h.update(n.as_bytes());
            for v in t.data() {
                h.update(v.to_le_bytes());
            }
        }
        hex::encode(h.finalize())
    }
}
