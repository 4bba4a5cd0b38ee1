//! Named tensors stored as a JSON manifest plus a contiguous blob of
//! little-endian `f32` values.

use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub const MANIFEST_FILE: &str = "model.json";
pub const BLOB_FILE: &str = "model.bin";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TensorEntry {
    pub name: String,
    pub shape: Vec<usize>,
    /// Byte offset into the blob.
    pub offset: u64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Manifest {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub kind: Option<String>,
    pub tensors: Vec<TensorEntry>,
    pub config: serde_json::Value,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Tensor {
    pub name: String,
    pub shape: Vec<usize>,
    pub data: Vec<f64>,
}

/// Tensors plus the free-form configuration they were produced with.
#[derive(Debug, Clone, PartialEq)]
pub struct TensorSet {
    pub kind: Option<String>,
    pub config: serde_json::Value,
    pub tensors: Vec<Tensor>,
}

impl TensorSet {
    pub fn get(&self, name: &str) -> Result<&Tensor> {
        self.tensors
            .iter()
            .find(|t| t.name == name)
            .ok_or_else(|| Error::format("model", format!("missing tensor `{name}`")))
    }

    /// Manifest JSON and blob bytes.
    pub fn encode(&self) -> Result<(String, Vec<u8>)> {
        let mut blob = Vec::new();
        let mut entries = Vec::with_capacity(self.tensors.len());
        for t in &self.tensors {
            if t.shape.iter().product::<usize>() != t.data.len() {
                return Err(Error::dim(format!(
                    "tensor `{}` has {} values for shape {:?}",
                    t.name,
                    t.data.len(),
                    t.shape
                )));
            }
            entries.push(TensorEntry {
                name: t.name.clone(),
                shape: t.shape.clone(),
                offset: blob.len() as u64,
            });
            for &x in &t.data {
                blob.extend_from_slice(&(x as f32).to_le_bytes());
            }
        }
        let manifest = Manifest {
            kind: self.kind.clone(),
            tensors: entries,
            config: self.config.clone(),
        };
        Ok((serde_json::to_string_pretty(&manifest)? + "\n", blob))
    }

    /// Parses a manifest and blob. Tensors must tile the blob exactly, in order.
    pub fn decode(manifest: &[u8], blob: &[u8]) -> Result<Self> {
        let m: Manifest = serde_json::from_slice(manifest)
            .map_err(|e| Error::format("model manifest", e.to_string()))?;
        let mut tensors = Vec::with_capacity(m.tensors.len());
        let mut cursor: u64 = 0;
        for e in m.tensors {
            if e.offset != cursor {
                return Err(Error::format(
                    "model manifest",
                    format!(
                        "tensor `{}` starts at {} but {} expected",
                        e.name, e.offset, cursor
                    ),
                ));
            }
            if tensors.iter().any(|t: &Tensor| t.name == e.name) {
                return Err(Error::format(
                    "model manifest",
                    format!("duplicate tensor `{}`", e.name),
                ));
            }
            let count = e
                .shape
                .iter()
                .try_fold(1u64, |acc, &d| acc.checked_mul(d as u64))
                .and_then(|c| c.checked_mul(4).map(|bytes| (c, bytes)));
            let (count, bytes) = count.ok_or_else(|| {
                Error::format(
                    "model manifest",
                    format!("tensor `{}` is too large", e.name),
                )
            })?;
            let end = cursor
                .checked_add(bytes)
                .filter(|&end| end <= blob.len() as u64)
                .ok_or_else(|| {
                    Error::format(
                        "model blob",
                        format!("tensor `{}` runs past the end", e.name),
                    )
                })?;
            let mut data = Vec::with_capacity(count as usize);
            for chunk in blob[cursor as usize..end as usize].chunks_exact(4) {
                let x = f32::from_le_bytes(chunk.try_into().unwrap());
                if !x.is_finite() {
                    return Err(Error::format(
                        "model blob",
                        format!("non-finite value in `{}`", e.name),
                    ));
                }
                data.push(x as f64);
            }
            tensors.push(Tensor {
                name: e.name,
                shape: e.shape,
                data,
            });
            cursor = end;
        }
        if cursor != blob.len() as u64 {
            return Err(Error::format(
                "model blob",
                format!("{} trailing bytes", blob.len() as u64 - cursor),
            ));
        }
        Ok(TensorSet {
            kind: m.kind,
            config: m.config,
            tensors,
        })
    }

    pub fn save(&self, dir: impl AsRef<Path>) -> Result<()> {
        let dir = dir.as_ref();
        fs::create_dir_all(dir).map_err(|e| Error::from(e).in_file(dir))?;
        let (manifest, blob) = self.encode()?;
        let mp = dir.join(MANIFEST_FILE);
        fs::write(&mp, manifest).map_err(|e| Error::from(e).in_file(&mp))?;
        let bp = dir.join(BLOB_FILE);
        fs::write(&bp, blob).map_err(|e| Error::from(e).in_file(&bp))
    }

    pub fn load(dir: impl AsRef<Path>) -> Result<Self> {
        let dir = dir.as_ref();
        let mp = dir.join(MANIFEST_FILE);
        let manifest = fs::read(&mp).map_err(|e| Error::from(e).in_file(&mp))?;
        let bp = dir.join(BLOB_FILE);
        let blob = fs::read(&bp).map_err(|e| Error::from(e).in_file(&bp))?;
        Self::decode(&manifest, &blob).map_err(|e| e.in_file(dir))
    }
}
