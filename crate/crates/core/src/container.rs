//! Manifest-plus-raw-arrays file container.
//!
//! A container is a small JSON manifest and one sibling file per array. The
//! manifest names the array files and records their shape, byte length and
//! SHA-256. Array files hold little-endian `f32` values in row-major order.
//!
//! ```text
//! model.json            manifest
//! model.im.f32          raw array "im"
//! model.am.f32          raw array "am"
//! ```

use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::error::{Error, Result};

pub const FORMAT_NAME: &str = "hdcnet-container";
pub const FORMAT_VERSION: u32 = 1;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Manifest {
    pub format: String,
    pub version: u32,
    pub kind: String,
    pub metadata: serde_json::Value,
    pub arrays: Vec<ArrayEntry>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ArrayEntry {
    pub name: String,
    pub file: String,
    pub shape: Vec<usize>,
    pub dtype: String,
    pub bytes: u64,
    pub sha256: String,
}

#[derive(Clone, Debug, PartialEq)]
pub struct Array {
    pub name: String,
    pub shape: Vec<usize>,
    pub data: Vec<f32>,
}

pub fn sha256_hex(bytes: &[u8]) -> String {
    hex::encode(Sha256::digest(bytes))
}

pub(crate) fn f32_bytes(values: &[f32]) -> Vec<u8> {
    let mut out = Vec::with_capacity(values.len() * 4);
    for v in values {
        out.extend_from_slice(&v.to_le_bytes());
    }
    out
}

fn array_path(manifest: &Path, file: &str) -> PathBuf {
    manifest.parent().map(|p| p.join(file)).unwrap_or_else(|| PathBuf::from(file))
}

fn stem(path: &Path) -> String {
    path.file_stem().map(|s| s.to_string_lossy().into_owned()).unwrap_or_else(|| "container".into())
}

/// Writes a manifest at `path` plus one array file per entry of `arrays`.
pub fn write(
    path: &Path,
    kind: &str,
    metadata: serde_json::Value,
    arrays: &[(&str, &[usize], &[f32])],
) -> Result<Manifest> {
    let mut entries = Vec::with_capacity(arrays.len());
    let base = stem(path);
    for &(name, shape, data) in arrays {
        let expected: usize = shape.iter().product();
        if expected != data.len() {
            return Err(Error::InvalidArgument(format!(
                "array {name}: shape {shape:?} does not match {} values",
                data.len()
            )));
        }
        let bytes = f32_bytes(data);
        let file = format!("{base}.{name}.f32");
        let target = array_path(path, &file);
        fs::write(&target, &bytes).map_err(|e| Error::io(&target, e))?;
        entries.push(ArrayEntry {
            name: name.to_string(),
            file,
            shape: shape.to_vec(),
            dtype: "f32le".into(),
            bytes: bytes.len() as u64,
            sha256: sha256_hex(&bytes),
        });
    }
    let manifest = Manifest {
        format: FORMAT_NAME.into(),
        version: FORMAT_VERSION,
        kind: kind.into(),
        metadata,
        arrays: entries,
    };
    let json = serde_json::to_vec_pretty(&manifest).expect("manifest serializes");
    fs::write(path, json).map_err(|e| Error::io(path, e))?;
    Ok(manifest)
}

/// Reads and validates a manifest only. Version and kind are checked before
/// any array is touched.
pub fn read_manifest(path: &Path, kind: &str) -> Result<Manifest> {
    let text = fs::read(path).map_err(|e| Error::io(path, e))?;
    let raw: serde_json::Value = serde_json::from_slice(&text).map_err(|e| Error::Format {
        path: path.into(),
        reason: e.to_string(),
    })?;
    if raw.get("format").and_then(|v| v.as_str()) != Some(FORMAT_NAME) {
        return Err(Error::Format { path: path.into(), reason: "not an hdcnet container".into() });
    }
    let version = raw.get("version").and_then(|v| v.as_u64()).ok_or_else(|| Error::Format {
        path: path.into(),
        reason: "missing version".into(),
    })?;
    if version != u64::from(FORMAT_VERSION) {
        return Err(Error::VersionMismatch {
            path: path.into(),
            found: u32::try_from(version).unwrap_or(u32::MAX),
            supported: FORMAT_VERSION,
        });
    }
    let manifest: Manifest = serde_json::from_value(raw).map_err(|e| Error::Format {
        path: path.into(),
        reason: e.to_string(),
    })?;
    if manifest.kind != kind {
        return Err(Error::Format {
            path: path.into(),
            reason: format!("expected a {kind} container, found {}", manifest.kind),
        });
    }
    Ok(manifest)
}

/// Reads a container, verifying every array against its recorded length and
/// checksum. Nothing is returned unless all arrays verify.
pub fn read(path: &Path, kind: &str) -> Result<(Manifest, Vec<Array>)> {
    let manifest = read_manifest(path, kind)?;
    let mut arrays = Vec::with_capacity(manifest.arrays.len());
    for entry in &manifest.arrays {
        let file = array_path(path, &entry.file);
        let bytes = fs::read(&file).map_err(|e| Error::io(&file, e))?;
        if bytes.len() as u64 != entry.bytes || sha256_hex(&bytes) != entry.sha256 {
            return Err(Error::ChecksumMismatch { path: file });
        }
        let count: usize = entry.shape.iter().product();
        if entry.dtype != "f32le" || count * 4 != bytes.len() {
            return Err(Error::Format {
                path: file,
                reason: format!("array {} does not hold {count} f32 values", entry.name),
            });
        }
        let data = bytes
            .chunks_exact(4)
            .map(|c| f32::from_le_bytes([c[0], c[1], c[2], c[3]]))
            .collect();
        arrays.push(Array { name: entry.name.clone(), shape: entry.shape.clone(), data });
    }
    Ok((manifest, arrays))
}

/// Removes and returns the array called `name`.
pub(crate) fn take_array(path: &Path, arrays: &mut Vec<Array>, name: &str) -> Result<Array> {
    let pos = arrays.iter().position(|a| a.name == name).ok_or_else(|| Error::Format {
        path: path.into(),
        reason: format!("missing array {name}"),
    })?;
    Ok(arrays.swap_remove(pos))
}
