//! Versioned checkpoint files.
//!
//! Layout: the magic bytes `ICETRK\0\x01`, a little-endian `u32` header
//! length, a JSON [`CheckpointHeader`], then every parameter as a
//! little-endian `f64` in layout order.

use std::fs;
use std::io::Write;
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::{Model, ModelConfig, ModelError, ParamGroup};

pub const CHECKPOINT_FORMAT_VERSION: &str = "1.0";
const MAGIC: &[u8; 8] = b"ICETRK\0\x01";

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct CheckpointHeader {
    pub format_version: String,
    pub config: ModelConfig,
    pub seed: u64,
    pub epoch: usize,
    pub n_params: usize,
    pub groups: Vec<ParamGroup>,
    /// Free-form training metadata (validation loss, config hash, ...).
    #[serde(default)]
    pub extra: serde_json::Value,
}

#[derive(Debug, Clone)]
pub struct Checkpoint {
    pub header: CheckpointHeader,
    pub model: Model,
}

fn major(v: &str) -> &str {
    v.split('.').next().unwrap_or(v)
}

pub fn save_checkpoint(
    path: &Path,
    model: &Model,
    seed: u64,
    epoch: usize,
    extra: serde_json::Value,
) -> Result<(), ModelError> {
    let header = CheckpointHeader {
        format_version: CHECKPOINT_FORMAT_VERSION.into(),
        config: model.config().clone(),
        seed,
        epoch,
        n_params: model.n_params(),
        groups: model.param_groups().to_vec(),
        extra,
    };
    let json = serde_json::to_vec(&header).expect("header serialises");
    let mut buf = Vec::with_capacity(16 + json.len() + 8 * model.n_params());
    buf.extend_from_slice(MAGIC);
    buf.extend_from_slice(&(json.len() as u32).to_le_bytes());
    buf.extend_from_slice(&json);
    for v in model.params() {
        buf.extend_from_slice(&v.to_le_bytes());
    }
    let io = |source| ModelError::Io {
        path: path.to_path_buf(),
        source,
    };
    if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
        fs::create_dir_all(dir).map_err(io)?;
    }
    let tmp = path.with_extension("tmp");
    let mut f = fs::File::create(&tmp).map_err(io)?;
    f.write_all(&buf).map_err(io)?;
    f.sync_all().map_err(io)?;
    fs::rename(&tmp, path).map_err(io)
}

pub fn load_checkpoint(path: &Path) -> Result<Checkpoint, ModelError> {
    let bytes = fs::read(path).map_err(|source| ModelError::Io {
        path: path.to_path_buf(),
        source,
    })?;
    let corrupt = |m: &str| ModelError::CorruptCheckpoint {
        path: path.to_path_buf(),
        message: m.into(),
    };
    if bytes.len() < 12 || &bytes[..8] != MAGIC {
        return Err(corrupt("bad magic bytes"));
    }
    let hlen = u32::from_le_bytes(bytes[8..12].try_into().expect("4 bytes")) as usize;
    let body = bytes.get(12..12 + hlen).ok_or_else(|| corrupt("truncated header"))?;
    let value: serde_json::Value = serde_json::from_slice(body).map_err(|e| corrupt(&e.to_string()))?;
    let found = value
        .get("format_version")
        .and_then(|v| v.as_str())
        .unwrap_or("0")
        .to_string();
    if major(&found) != major(CHECKPOINT_FORMAT_VERSION) {
        return Err(ModelError::CheckpointVersionMismatch {
            expected: CHECKPOINT_FORMAT_VERSION.into(),
            found,
        });
    }
    let header: CheckpointHeader = serde_json::from_value(value).map_err(|e| corrupt(&e.to_string()))?;
    let data = &bytes[12 + hlen..];
    if data.len() != 8 * header.n_params {
        return Err(corrupt("parameter block has the wrong length"));
    }
    let params = data
        .chunks_exact(8)
        .map(|c| f64::from_le_bytes(c.try_into().expect("8 bytes")))
        .collect();
    let model = Model::from_parts(header.config.clone(), params)?;
    Ok(Checkpoint { header, model })
}
