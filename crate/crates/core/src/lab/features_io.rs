//! Feature files: a fixed binary header followed by `f32` rows, plus a JSON
//! sidecar carrying per-sample labels.
//!
//! | offset | size | field                          |
//! |--------|------|--------------------------------|
//! | 0      | 4    | magic `LRFT`                   |
//! | 4      | 2    | version (u16 LE, currently 1)  |
//! | 6      | 4    | feature_dim (u32 LE)           |
//! | 10     | 8    | count (u64 LE)                 |
//! | 18     | 1    | tap (0 point, 1 feature, 2 encoder) |
//! | 19     | 1    | modality (0 lidar, 1 camera, 2 fused) |
//! | 20     | 4·dim·count | values, f32 LE, row-major |
//!
//! The sidecar lives next to the binary file as `<file>.meta.json`.

use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use super::corrupt::CorruptionSpec;
use super::scene::SceneParams;
use super::{FeatureVector, LabError, Modality, Tap};

pub const FEATURE_MAGIC: &[u8; 4] = b"LRFT";
pub const FEATURE_VERSION: u16 = 1;
const HEADER_LEN: usize = 20;

/// Per-sample metadata stored in the sidecar.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SampleMeta {
    pub sample_id: usize,
    /// `clean` or `<kind>-<severity>`.
    pub label: String,
    pub scene_seed: u64,
    pub scene: SceneParams,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub corruption: Option<CorruptionSpec>,
}

#[derive(Clone, Debug, PartialEq)]
pub struct FeatureFile {
    pub tap: Tap,
    pub modality: Modality,
    pub dim: usize,
    pub rows: Vec<Vec<f64>>,
    pub meta: Vec<SampleMeta>,
}

impl FeatureFile {
    pub fn from_vectors(features: &[FeatureVector], meta: Vec<SampleMeta>) -> Result<Self, LabError> {
        let first = features.first().ok_or_else(|| LabError::InvalidInput("no features".into()))?;
        if features.len() != meta.len() {
            return Err(LabError::InvalidInput(format!("{} features, {} metadata rows", features.len(), meta.len())));
        }
        for f in features {
            if f.tap != first.tap || f.modality != first.modality || f.dim() != first.dim() {
                return Err(LabError::InvalidInput("mixed tap, modality or dimension in one feature file".into()));
            }
        }
        Ok(FeatureFile {
            tap: first.tap,
            modality: first.modality,
            dim: first.dim(),
            rows: features.iter().map(|f| f.to_f32_precision().values).collect(),
            meta,
        })
    }

    pub fn vectors(&self) -> Vec<FeatureVector> {
        self.rows.iter().map(|r| FeatureVector::new(r.clone(), self.tap, self.modality)).collect()
    }

    pub fn to_bytes(&self) -> Vec<u8> {
        let mut out = Vec::with_capacity(HEADER_LEN + 4 * self.dim * self.rows.len());
        out.extend_from_slice(FEATURE_MAGIC);
        out.extend_from_slice(&FEATURE_VERSION.to_le_bytes());
        out.extend_from_slice(&(self.dim as u32).to_le_bytes());
        out.extend_from_slice(&(self.rows.len() as u64).to_le_bytes());
        out.push(self.tap.code());
        out.push(self.modality.code());
        for row in &self.rows {
            for &v in row {
                out.extend_from_slice(&(v as f32).to_le_bytes());
            }
        }
        out
    }

    /// Parses the binary part; metadata is left empty.
    pub fn parse_bytes(bytes: &[u8]) -> Result<Self, LabError> {
        if bytes.len() < HEADER_LEN || &bytes[..4] != FEATURE_MAGIC {
            return Err(LabError::Parse("not a feature file (bad magic)".into()));
        }
        let version = u16::from_le_bytes([bytes[4], bytes[5]]);
        if version != FEATURE_VERSION {
            return Err(LabError::Parse(format!("unsupported feature file version {version}")));
        }
        let dim = u32::from_le_bytes(bytes[6..10].try_into().unwrap()) as usize;
        let count = u64::from_le_bytes(bytes[10..18].try_into().unwrap()) as usize;
        let tap = Tap::from_code(bytes[18]).ok_or_else(|| LabError::Parse(format!("bad tap code {}", bytes[18])))?;
        let modality = Modality::from_code(bytes[19])
            .ok_or_else(|| LabError::Parse(format!("bad modality code {}", bytes[19])))?;
        let expected = dim.checked_mul(count).and_then(|v| v.checked_mul(4)).map(|v| v + HEADER_LEN);
        if expected != Some(bytes.len()) {
            return Err(LabError::Parse(format!(
                "payload length {} does not match dim {dim} x count {count}",
                bytes.len() - HEADER_LEN
            )));
        }
        let rows = bytes[HEADER_LEN..]
            .chunks_exact(4 * dim.max(1))
            .take(count)
            .map(|row| row.chunks_exact(4).map(|c| f32::from_le_bytes(c.try_into().unwrap()) as f64).collect())
            .collect();
        Ok(FeatureFile { tap, modality, dim, rows, meta: Vec::new() })
    }
}

pub fn sidecar_path(path: &Path) -> PathBuf {
    let mut s = path.as_os_str().to_owned();
    s.push(".meta.json");
    PathBuf::from(s)
}

fn io_err(path: &Path, e: impl std::fmt::Display) -> LabError {
    LabError::Io { path: path.display().to_string(), msg: e.to_string() }
}

pub fn write_feature_file(path: &Path, file: &FeatureFile) -> Result<(), LabError> {
    fs::write(path, file.to_bytes()).map_err(|e| io_err(path, e))?;
    let side = sidecar_path(path);
    let json = serde_json::to_string_pretty(&file.meta).map_err(|e| io_err(&side, e))?;
    fs::write(&side, json + "\n").map_err(|e| io_err(&side, e))
}

pub fn read_feature_file(path: &Path) -> Result<FeatureFile, LabError> {
    let bytes = fs::read(path).map_err(|e| io_err(path, e))?;
    let mut file = FeatureFile::parse_bytes(&bytes).map_err(|e| io_err(path, e))?;
    let side = sidecar_path(path);
    let text = fs::read_to_string(&side).map_err(|e| io_err(&side, e))?;
    file.meta = serde_json::from_str(&text).map_err(|e| io_err(&side, e))?;
    if file.meta.len() != file.rows.len() {
        return Err(io_err(&side, format!("{} metadata rows for {} features", file.meta.len(), file.rows.len())));
    }
    Ok(file)
}
