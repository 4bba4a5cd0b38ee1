//! DRF files: one JSON header line followed by `n * 9` little-endian `f32`s.

use std::fs;
use std::path::Path;

use ndarray::Array2;
use serde::Deserialize;

use super::{DrFeature, FEATURE_DIM};
use crate::error::{Error, Result};

const MAGIC: &str = "DRF1";
const MAX_HEADER: usize = 4096;

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct Header {
    magic: String,
    n: u64,
    d: u64,
    dtype: String,
    #[serde(rename = "ref")]
    reference: String,
}

pub fn encode_drf(feature: &DrFeature) -> Vec<u8> {
    let n = feature.vertex_count();
    let header = format!(
        "{{\"magic\":\"{MAGIC}\",\"n\":{n},\"d\":{FEATURE_DIM},\"dtype\":\"f32\",\"ref\":{}}}\n",
        serde_json::Value::String(feature.reference_id().to_owned())
    );
    let mut out = Vec::with_capacity(header.len() + n * FEATURE_DIM * 4);
    out.extend_from_slice(header.as_bytes());
    for x in feature.values().iter() {
        out.extend_from_slice(&(*x as f32).to_le_bytes());
    }
    out
}

pub fn decode_drf(bytes: &[u8]) -> Result<DrFeature> {
    let nl = bytes
        .iter()
        .take(MAX_HEADER)
        .position(|&b| b == b'\n')
        .ok_or_else(|| Error::format("DRF", "missing header line"))?;
    let header: Header = serde_json::from_slice(&bytes[..nl])
        .map_err(|e| Error::format("DRF", format!("header: {e}")))?;
    if header.magic != MAGIC {
        return Err(Error::format(
            "DRF",
            format!("bad magic `{}`", header.magic),
        ));
    }
    if header.d != FEATURE_DIM as u64 || header.dtype != "f32" {
        return Err(Error::format("DRF", "expected d = 9 and dtype f32"));
    }
    let body = &bytes[nl + 1..];
    let expected = header
        .n
        .checked_mul(FEATURE_DIM as u64 * 4)
        .filter(|&len| len == body.len() as u64)
        .ok_or_else(|| {
            Error::format(
                "DRF",
                format!("body has {} bytes for n = {}", body.len(), header.n),
            )
        })?;
    let n = (expected / (FEATURE_DIM as u64 * 4)) as usize;
    let mut values = Vec::with_capacity(n * FEATURE_DIM);
    for chunk in body.chunks_exact(4) {
        let x = f32::from_le_bytes(chunk.try_into().unwrap());
        if !x.is_finite() {
            return Err(Error::format("DRF", "non-finite value"));
        }
        values.push(x as f64);
    }
    let values = Array2::from_shape_vec((n, FEATURE_DIM), values)
        .map_err(|e| Error::format("DRF", e.to_string()))?;
    DrFeature::new(values, header.reference)
}

pub fn save_drf(feature: &DrFeature, path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    fs::write(path, encode_drf(feature)).map_err(|e| Error::from(e).in_file(path))
}

pub fn load_drf(path: impl AsRef<Path>) -> Result<DrFeature> {
    let path = path.as_ref();
    let bytes = fs::read(path).map_err(|e| Error::from(e).in_file(path))?;
    decode_drf(&bytes).map_err(|e| e.in_file(path))
}
