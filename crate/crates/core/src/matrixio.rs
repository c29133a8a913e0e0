//! Matrix and manifest interchange.
//!
//! Matrices travel in a small binary container: the 4-byte magic `BBSM`, then
//! little-endian `u32` version (= 1), rows and cols, followed by `rows * cols`
//! little-endian `f64` values in row-major order. Headerless comma-separated
//! text is accepted as well for small fixtures.
//!
//! A manifest is a JSON document naming the feature matrices, the response
//! matrix and the sample/unit labels of one dataset. Relative paths are
//! resolved against the manifest's directory.

use std::fs;
use std::path::{Path, PathBuf};

use ndarray::Array2;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::features::{sum_pool, FeatureSpace};
use crate::recording::{check_contiguous, NeuralRecording};

pub const MAGIC: &[u8; 4] = b"BBSM";
pub const VERSION: u32 = 1;
const HEADER_LEN: usize = 16;

pub fn encode_matrix(matrix: &Array2<f64>) -> Result<Vec<u8>> {
    let (rows, cols) = matrix.dim();
    if rows == 0 || cols == 0 {
        return Err(Error::ShapeMismatch(format!(
            "cannot encode an empty {rows}x{cols} matrix"
        )));
    }
    let rows32 = u32::try_from(rows).map_err(|_| Error::InvalidArgument("too many rows".into()))?;
    let cols32 = u32::try_from(cols).map_err(|_| Error::InvalidArgument("too many cols".into()))?;
    let mut out = Vec::with_capacity(HEADER_LEN + rows * cols * 8);
    out.extend_from_slice(MAGIC);
    out.extend_from_slice(&VERSION.to_le_bytes());
    out.extend_from_slice(&rows32.to_le_bytes());
    out.extend_from_slice(&cols32.to_le_bytes());
    // `iter` walks logical row-major order regardless of memory layout.
    for value in matrix.iter() {
        out.extend_from_slice(&value.to_le_bytes());
    }
    Ok(out)
}

pub fn decode_matrix(bytes: &[u8]) -> Result<Array2<f64>> {
    if bytes.len() < HEADER_LEN {
        return Err(Error::Truncated {
            expected: HEADER_LEN,
            found: bytes.len(),
        });
    }
    if &bytes[0..4] != MAGIC {
        return Err(Error::Format(format!(
            "bad magic {:?}, expected \"BBSM\"",
            String::from_utf8_lossy(&bytes[0..4])
        )));
    }
    let word = |at: usize| u32::from_le_bytes(bytes[at..at + 4].try_into().unwrap());
    let version = word(4);
    if version != VERSION {
        return Err(Error::Format(format!("unsupported version {version}")));
    }
    let rows = word(8) as usize;
    let cols = word(12) as usize;
    if rows == 0 || cols == 0 {
        return Err(Error::Format(format!("empty matrix {rows}x{cols}")));
    }
    let expected = rows * cols * 8;
    let payload = &bytes[HEADER_LEN..];
    if payload.len() != expected {
        return Err(Error::Truncated {
            expected,
            found: payload.len(),
        });
    }
    let mut values = Vec::with_capacity(rows * cols);
    for chunk in payload.chunks_exact(8) {
        let value = f64::from_le_bytes(chunk.try_into().unwrap());
        if value.is_nan() {
            return Err(Error::Data(format!(
                "NaN at flat index {} of {rows}x{cols} matrix",
                values.len()
            )));
        }
        values.push(value);
    }
    Ok(Array2::from_shape_vec((rows, cols), values).expect("length checked above"))
}

pub fn save_matrix(path: impl AsRef<Path>, matrix: &Array2<f64>) -> Result<()> {
    let path = path.as_ref();
    let bytes = encode_matrix(matrix)?;
    fs::write(path, bytes).map_err(|e| Error::io(path, e))
}

/// Loads a matrix file. Files ending in `.csv` are parsed as headerless
/// comma-separated text, everything else as the binary container.
pub fn load_matrix(path: impl AsRef<Path>) -> Result<Array2<f64>> {
    let path = path.as_ref();
    if path.extension().is_some_and(|ext| ext.eq_ignore_ascii_case("csv")) {
        let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        return parse_csv(&text);
    }
    let bytes = fs::read(path).map_err(|e| Error::io(path, e))?;
    decode_matrix(&bytes)
}

pub fn parse_csv(text: &str) -> Result<Array2<f64>> {
    let mut values = Vec::new();
    let mut cols = None;
    let mut rows = 0;
    for (line_no, line) in text.lines().enumerate() {
        let line = line.trim();
        if line.is_empty() {
            continue;
        }
        let mut count = 0;
        for field in line.split(',') {
            let value: f64 = field.trim().parse().map_err(|_| {
                Error::Format(format!("line {}: cannot parse {:?}", line_no + 1, field))
            })?;
            if value.is_nan() {
                return Err(Error::Data(format!("line {}: NaN value", line_no + 1)));
            }
            values.push(value);
            count += 1;
        }
        match cols {
            None => cols = Some(count),
            Some(c) if c != count => {
                return Err(Error::Format(format!(
                    "line {}: {count} fields, expected {c}",
                    line_no + 1
                )))
            }
            _ => {}
        }
        rows += 1;
    }
    let cols = cols.ok_or_else(|| Error::Format("empty csv".into()))?;
    Ok(Array2::from_shape_vec((rows, cols), values).expect("row widths checked"))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FeatureEntry {
    pub name: String,
    pub path: String,
    pub band_group: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Manifest {
    pub dataset_name: String,
    pub feature_spaces: Vec<FeatureEntry>,
    pub responses_path: String,
    pub sample_blocks: Vec<i64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub sample_categories: Option<Vec<i64>>,
    pub unit_participants: Vec<i64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub token_map: Option<Vec<usize>>,
}

/// A manifest with every referenced matrix loaded, pooled and validated.
#[derive(Debug, Clone)]
pub struct Dataset {
    pub manifest: Manifest,
    pub features: Vec<FeatureSpace>,
    pub recording: NeuralRecording,
}

impl Dataset {
    pub fn feature(&self, name: &str) -> Option<&FeatureSpace> {
        self.features.iter().find(|f| f.name == name)
    }

    /// Feature spaces belonging to `band_group`, in manifest order.
    pub fn band(&self, band_group: &str) -> Vec<&FeatureSpace> {
        self.features
            .iter()
            .filter(|f| f.band_group == band_group)
            .collect()
    }
}

fn resolve(base: &Path, relative: &str) -> PathBuf {
    let p = Path::new(relative);
    if p.is_absolute() {
        p.to_path_buf()
    } else {
        base.join(p)
    }
}

pub fn read_manifest(path: impl AsRef<Path>) -> Result<Manifest> {
    let path = path.as_ref();
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    Ok(serde_json::from_str(&text)?)
}

pub fn write_manifest(path: impl AsRef<Path>, manifest: &Manifest) -> Result<()> {
    let path = path.as_ref();
    let text = serde_json::to_string_pretty(manifest)?;
    fs::write(path, text + "\n").map_err(|e| Error::io(path, e))
}

/// Reads a manifest and everything it references.
///
/// Feature matrices whose row count equals the token map length are sum-pooled
/// to sample level first; afterwards every feature matrix must have exactly as
/// many rows as the response matrix.
pub fn load_manifest(path: impl AsRef<Path>) -> Result<Dataset> {
    let path = path.as_ref();
    let manifest = read_manifest(path)?;
    let base = path.parent().unwrap_or_else(|| Path::new("."));
    let responses = load_matrix(resolve(base, &manifest.responses_path))?;
    let n_samples = responses.nrows();

    if manifest.sample_blocks.len() != n_samples {
        return Err(Error::RowMismatch {
            what: "sample_blocks".into(),
            expected: n_samples,
            found: manifest.sample_blocks.len(),
        });
    }
    check_contiguous(&manifest.sample_blocks)?;
    if let Some(map) = &manifest.token_map {
        check_token_map(map, n_samples)?;
    }

    let mut features = Vec::with_capacity(manifest.feature_spaces.len());
    for entry in &manifest.feature_spaces {
        let mut data = load_matrix(resolve(base, &entry.path))?;
        if data.nrows() != n_samples {
            match &manifest.token_map {
                Some(map) if map.len() == data.nrows() => data = sum_pool(&data, map)?,
                _ => {
                    return Err(Error::RowMismatch {
                        what: format!("feature space {:?}", entry.name),
                        expected: n_samples,
                        found: data.nrows(),
                    })
                }
            }
        }
        features.push(FeatureSpace::new(&entry.name, data, &entry.band_group)?);
    }

    let recording = NeuralRecording::new(
        responses,
        manifest.unit_participants.clone(),
        manifest.sample_blocks.clone(),
        manifest.sample_categories.clone(),
    )?;
    Ok(Dataset {
        manifest,
        features,
        recording,
    })
}

fn check_token_map(map: &[usize], n_samples: usize) -> Result<()> {
    if map.windows(2).any(|w| w[1] < w[0]) {
        return Err(Error::Data("token_map must be non-decreasing".into()));
    }
    if map.last().is_some_and(|&last| last >= n_samples) {
        return Err(Error::Data(format!(
            "token_map refers to sample {} but there are only {n_samples} samples",
            map.last().unwrap()
        )));
    }
    Ok(())
}
