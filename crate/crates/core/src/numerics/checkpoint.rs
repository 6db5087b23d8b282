use std::path::Path;

use serde::{Deserialize, Serialize};

use super::params::ParamStore;
use super::tensor::Tensor;
use crate::error::{Error, Result};

const MAGIC: &[u8; 8] = b"SMSATCK1";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
struct TensorEntry {
    name: String,
    dtype: String,
    shape: Vec<usize>,
    trainable: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
struct Header {
    kind: String,
    config: serde_json::Value,
    extra: serde_json::Value,
    tensors: Vec<TensorEntry>,
}

/// Model tensors plus the JSON header they were saved with.
#[derive(Debug, Clone, PartialEq)]
pub struct Checkpoint {
    pub kind: String,
    pub config: serde_json::Value,
    /// Free-form state (RNG position, training summary, input normalization).
    pub extra: serde_json::Value,
    pub store: ParamStore,
}

impl Checkpoint {
    /// Layout: magic, u32 LE header length, JSON header, then f64 LE payloads in header order.
    pub fn to_bytes(&self) -> Result<Vec<u8>> {
        let header = Header {
            kind: self.kind.clone(),
            config: self.config.clone(),
            extra: self.extra.clone(),
            tensors: self
                .store
                .iter()
                .map(|p| TensorEntry {
                    name: p.name.clone(),
                    dtype: "f64".into(),
                    shape: p.value.shape.clone(),
                    trainable: p.trainable,
                })
                .collect(),
        };
        let json = serde_json::to_vec(&header).map_err(|e| Error::malformed("checkpoint header", e))?;
        let len = u32::try_from(json.len()).map_err(|_| Error::malformed("checkpoint header", "too large"))?;
        let mut out = Vec::with_capacity(12 + json.len() + 8 * self.store.iter().map(|p| p.value.len()).sum::<usize>());
        out.extend_from_slice(MAGIC);
        out.extend_from_slice(&len.to_le_bytes());
        out.extend_from_slice(&json);
        for p in self.store.iter() {
            for v in &p.value.data {
                out.extend_from_slice(&v.to_le_bytes());
            }
        }
        Ok(out)
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Self> {
        let bad = |m: &str| Error::malformed("checkpoint", m);
        if bytes.len() < 12 || &bytes[..8] != MAGIC {
            return Err(bad("missing magic"));
        }
        let len = u32::from_le_bytes(bytes[8..12].try_into().expect("4 bytes")) as usize;
        let body = bytes.get(12..12 + len).ok_or_else(|| bad("truncated header"))?;
        let header: Header = serde_json::from_slice(body).map_err(|e| Error::malformed("checkpoint header", e))?;
        let mut pos = 12 + len;
        let mut store = ParamStore::new();
        for t in &header.tensors {
            if t.dtype != "f64" {
                return Err(bad("unsupported dtype"));
            }
            let n: usize = t.shape.iter().product();
            let raw = bytes.get(pos..pos + 8 * n).ok_or_else(|| bad("truncated payload"))?;
            let data = raw
                .chunks_exact(8)
                .map(|c| f64::from_le_bytes(c.try_into().expect("8 bytes")))
                .collect();
            pos += 8 * n;
            let value = Tensor::new(&t.shape, data)?;
            if t.trainable {
                store.add(&t.name, value);
            } else {
                store.add_buffer(&t.name, value);
            }
        }
        if pos != bytes.len() {
            return Err(bad("trailing bytes"));
        }
        Ok(Checkpoint {
            kind: header.kind,
            config: header.config,
            extra: header.extra,
            store,
        })
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        std::fs::write(path, self.to_bytes()?).map_err(|e| Error::io(path, e))
    }

    pub fn load(path: &Path) -> Result<Self> {
        let bytes = std::fs::read(path).map_err(|e| Error::io(path, e))?;
        Self::from_bytes(&bytes)
    }

    /// Deserialize the config and check the checkpoint kind.
    pub fn config_as<T: serde::de::DeserializeOwned>(&self, kind: &str) -> Result<T> {
        if self.kind != kind {
            return Err(Error::ConfigMismatch(format!(
                "expected a {kind} checkpoint, found {}",
                self.kind
            )));
        }
        serde_json::from_value(self.config.clone()).map_err(|e| Error::malformed("checkpoint config", e))
    }
}
