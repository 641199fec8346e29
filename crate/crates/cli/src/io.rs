//! File formats: raw weight blobs, compressed models, image inputs, and
//! prediction CSVs.
//!
//! Raw weights travel as a flat little-endian f32 blob plus a JSON manifest
//! listing each matrix's name and dimensions. The blob holds each layer's
//! row-major weights followed by its bias (when present), in manifest order.
//! Images are one raw little-endian f32 file per input, read from a
//! directory in filename order.

use std::fs;
use std::path::{Path, PathBuf};

use cramnet_core::{deserialize, serialize, CompressedModel, DenseMatrix};
use serde::{Deserialize, Serialize};

use crate::error::CliError;

// ── Weight manifests ─────────────────────────────────────────────────────────

/// One weight matrix in the manifest.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct WeightEntry {
    pub name: String,
    pub rows: usize,
    pub cols: usize,
    #[serde(default)]
    pub bias: bool,
}

/// The manifest: blob path (relative to the manifest file) plus the layer
/// list in blob order.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct WeightsManifest {
    pub blob: String,
    pub layers: Vec<WeightEntry>,
}

/// Reads a manifest and its blob into dense matrices, in manifest order.
pub fn read_weights(manifest_path: &Path) -> Result<(Vec<DenseMatrix>, Vec<String>), CliError> {
    let text = fs::read_to_string(manifest_path).map_err(|e| CliError::file(manifest_path, e))?;
    let manifest: WeightsManifest =
        serde_json::from_str(&text).map_err(|e| CliError::file(manifest_path, e))?;
    let blob_path = sibling(manifest_path, &manifest.blob);
    let blob = fs::read(&blob_path).map_err(|e| CliError::file(&blob_path, e))?;
    let floats = decode_f32_blob(&blob_path, &blob)?;

    let expected: usize = manifest
        .layers
        .iter()
        .map(|l| l.rows * l.cols + if l.bias { l.rows } else { 0 })
        .sum();
    if floats.len() != expected {
        return Err(CliError::file(
            &blob_path,
            format!("blob holds {} floats, manifest expects {expected}", floats.len()),
        ));
    }

    let mut matrices = Vec::with_capacity(manifest.layers.len());
    let mut names = Vec::with_capacity(manifest.layers.len());
    let mut pos = 0;
    for entry in &manifest.layers {
        let n = entry.rows * entry.cols;
        let data = floats[pos..pos + n].to_vec();
        pos += n;
        let mut dense = DenseMatrix::from_vec(entry.rows, entry.cols, data)
            .map_err(|e| CliError::Data(format!("{}: {e}", entry.name)))?;
        if entry.bias {
            let bias = floats[pos..pos + entry.rows].to_vec();
            pos += entry.rows;
            dense = dense
                .with_bias(bias)
                .map_err(|e| CliError::Data(format!("{}: {e}", entry.name)))?;
        }
        matrices.push(dense);
        names.push(entry.name.clone());
    }
    Ok((matrices, names))
}

/// Writes matrices as a blob + manifest pair under `prefix` (producing
/// `<prefix>.bin` and `<prefix>.json`). Returns the manifest path.
pub fn write_weights(
    prefix: &Path,
    matrices: &[DenseMatrix],
    names: &[String],
) -> Result<PathBuf, CliError> {
    let blob_path = prefix.with_extension("bin");
    let manifest_path = prefix.with_extension("json");
    let mut blob = Vec::new();
    let mut layers = Vec::with_capacity(matrices.len());
    for (dense, name) in matrices.iter().zip(names) {
        for &v in dense.data() {
            blob.extend_from_slice(&v.to_le_bytes());
        }
        if let Some(bias) = dense.bias() {
            for &v in bias {
                blob.extend_from_slice(&v.to_le_bytes());
            }
        }
        layers.push(WeightEntry {
            name: name.clone(),
            rows: dense.rows(),
            cols: dense.cols(),
            bias: dense.bias().is_some(),
        });
    }
    let blob_name = blob_path
        .file_name()
        .map(|n| n.to_string_lossy().into_owned())
        .unwrap_or_else(|| "weights.bin".into());
    let manifest = WeightsManifest { blob: blob_name, layers };
    fs::write(&blob_path, blob).map_err(|e| CliError::file(&blob_path, e))?;
    let text = serde_json::to_string_pretty(&manifest)
        .map_err(|e| CliError::Data(format!("manifest: {e}")))?;
    fs::write(&manifest_path, text).map_err(|e| CliError::file(&manifest_path, e))?;
    Ok(manifest_path)
}

/// A path relative to another file's directory.
fn sibling(anchor: &Path, name: &str) -> PathBuf {
    anchor.parent().map_or_else(|| PathBuf::from(name), |dir| dir.join(name))
}

/// Splits a byte buffer into little-endian f32 values.
fn decode_f32_blob(path: &Path, bytes: &[u8]) -> Result<Vec<f32>, CliError> {
    if bytes.len() % 4 != 0 {
        return Err(CliError::file(
            path,
            format!("length {} is not a multiple of 4", bytes.len()),
        ));
    }
    Ok(bytes
        .chunks_exact(4)
        .map(|c| f32::from_le_bytes([c[0], c[1], c[2], c[3]]))
        .collect())
}

// ── Compressed models ────────────────────────────────────────────────────────

/// Reads and validates a compressed model file.
pub fn read_model(path: &Path) -> Result<CompressedModel, CliError> {
    let bytes = fs::read(path).map_err(|e| CliError::file(path, e))?;
    deserialize(&bytes).map_err(|e| CliError::file(path, e))
}

/// Writes a compressed model file. Returns its size in bytes.
pub fn write_model(path: &Path, model: &CompressedModel) -> Result<u64, CliError> {
    let bytes = serialize(model);
    fs::write(path, &bytes).map_err(|e| CliError::file(path, e))?;
    Ok(bytes.len() as u64)
}

// ── Images ───────────────────────────────────────────────────────────────────

/// Loads every regular file in a directory as one raw f32 image, sorted by
/// filename. Each file must hold exactly `features` little-endian floats.
pub fn load_images(dir: &Path, features: usize) -> Result<Vec<(String, Vec<f32>)>, CliError> {
    let entries = fs::read_dir(dir).map_err(|e| CliError::file(dir, e))?;
    let mut paths = Vec::new();
    for entry in entries {
        let entry = entry.map_err(|e| CliError::file(dir, e))?;
        let path = entry.path();
        if path.is_file() {
            paths.push(path);
        }
    }
    paths.sort();
    if paths.is_empty() {
        return Err(CliError::Data(format!("{}: no image files", dir.display())));
    }
    let mut images = Vec::with_capacity(paths.len());
    for path in paths {
        let bytes = fs::read(&path).map_err(|e| CliError::file(&path, e))?;
        let floats = decode_f32_blob(&path, &bytes)?;
        if floats.len() != features {
            return Err(CliError::file(
                &path,
                format!("holds {} floats, network input needs {features}", floats.len()),
            ));
        }
        let name = path
            .file_name()
            .map(|n| n.to_string_lossy().into_owned())
            .unwrap_or_default();
        images.push((name, floats));
    }
    Ok(images)
}

/// Writes one raw f32 image file.
pub fn write_image(path: &Path, values: &[f32]) -> Result<(), CliError> {
    let mut bytes = Vec::with_capacity(values.len() * 4);
    for &v in values {
        bytes.extend_from_slice(&v.to_le_bytes());
    }
    fs::write(path, bytes).map_err(|e| CliError::file(path, e))
}

// ── Predictions ──────────────────────────────────────────────────────────────

/// Writes final-layer outputs as CSV: one row per image, one column per
/// output feature.
pub fn write_outputs_csv(
    path: &Path,
    names: &[String],
    outputs: &[Vec<f32>],
) -> Result<(), CliError> {
    let features = outputs.first().map_or(0, |o| o.len());
    let mut writer = csv::Writer::from_path(path).map_err(|e| CliError::file(path, e))?;
    let mut header = vec!["image".to_string()];
    header.extend((0..features).map(|i| format!("v{i}")));
    writer.write_record(&header).map_err(|e| CliError::file(path, e))?;
    for (name, row) in names.iter().zip(outputs) {
        let mut record = vec![name.clone()];
        record.extend(row.iter().map(|v| format!("{v}")));
        writer.write_record(&record).map_err(|e| CliError::file(path, e))?;
    }
    writer.flush().map_err(|e| CliError::file(path, e))
}
