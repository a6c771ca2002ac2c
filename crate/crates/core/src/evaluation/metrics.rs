use serde::{Deserialize, Serialize};

use super::{EvalError, RolloutResult};
use crate::geometry::{angular_error, iou};

pub const METRICS_SCHEMA_VERSION: u32 = 1;

/// Errors of one evaluated frame.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FrameErrors {
    pub entry_err: f64,
    pub rot_err: f64,
    pub iou: f64,
}

/// Mean and population standard deviation.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ErrorStats {
    pub mean: f64,
    pub std: f64,
}

impl ErrorStats {
    fn of(values: impl Iterator<Item = f64> + Clone) -> Self {
        let n = values.clone().count() as f64;
        let mean = values.clone().sum::<f64>() / n;
        let var = values.map(|v| (v - mean).powi(2)).sum::<f64>() / n;
        Self {
            mean,
            std: var.max(0.0).sqrt(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SequenceMetrics {
    pub sequence_id: String,
    pub n_frames: usize,
    pub entry_err_mean: f64,
    pub entry_err_std: f64,
    pub rot_err_mean: f64,
    pub rot_err_std: f64,
    pub iou_mean: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricsReport {
    pub schema_version: u32,
    /// Frames pooled into the aggregate statistics.
    pub n_frames: usize,
    pub entry_err_mean: f64,
    pub entry_err_std: f64,
    pub rot_err_mean: f64,
    pub rot_err_std: f64,
    pub iou_mean: f64,
    pub iou_std: f64,
    /// Sorted by sequence id.
    pub per_sequence: Vec<SequenceMetrics>,
    pub throughput_hz: Option<f64>,
    pub config_hash: Option<String>,
}

impl MetricsReport {
    pub fn entry(&self) -> ErrorStats {
        ErrorStats {
            mean: self.entry_err_mean,
            std: self.entry_err_std,
        }
    }

    pub fn rotation(&self) -> ErrorStats {
        ErrorStats {
            mean: self.rot_err_mean,
            std: self.rot_err_std,
        }
    }
}

/// Per-frame errors of every frame with a visible target, in order.
pub fn frame_errors(result: &RolloutResult) -> Vec<FrameErrors> {
    result
        .frames
        .iter()
        .filter_map(|f| {
            f.target.map(|t| FrameErrors {
                entry_err: angular_error(f.prediction.angle.a_entry, t.angle.a_entry),
                rot_err: angular_error(f.prediction.angle.a_rot, t.angle.a_rot),
                iou: iou(&f.prediction.bbox, &t.bbox),
            })
        })
        .collect()
}

/// Pools frame errors over all sequences. Sequences are processed in id
/// order so the result does not depend on the input order.
pub fn metrics(results: &[RolloutResult]) -> Result<MetricsReport, EvalError> {
    let mut sorted: Vec<&RolloutResult> = results.iter().collect();
    sorted.sort_by(|a, b| a.sequence_id.cmp(&b.sequence_id));
    let per_frame: Vec<(&str, Vec<FrameErrors>)> = sorted
        .iter()
        .map(|r| (r.sequence_id.as_str(), frame_errors(r)))
        .collect();
    let pooled: Vec<FrameErrors> = per_frame.iter().flat_map(|(_, e)| e.iter().copied()).collect();
    if pooled.is_empty() {
        return Err(EvalError::EmptyInput);
    }
    let entry = ErrorStats::of(pooled.iter().map(|e| e.entry_err));
    let rot = ErrorStats::of(pooled.iter().map(|e| e.rot_err));
    let ious = ErrorStats::of(pooled.iter().map(|e| e.iou));
    let per_sequence = per_frame
        .iter()
        .filter(|(_, e)| !e.is_empty())
        .map(|(id, e)| {
            let entry = ErrorStats::of(e.iter().map(|x| x.entry_err));
            let rot = ErrorStats::of(e.iter().map(|x| x.rot_err));
            SequenceMetrics {
                sequence_id: id.to_string(),
                n_frames: e.len(),
                entry_err_mean: entry.mean,
                entry_err_std: entry.std,
                rot_err_mean: rot.mean,
                rot_err_std: rot.std,
                iou_mean: ErrorStats::of(e.iter().map(|x| x.iou)).mean,
            }
        })
        .collect();
    Ok(MetricsReport {
        schema_version: METRICS_SCHEMA_VERSION,
        n_frames: pooled.len(),
        entry_err_mean: entry.mean,
        entry_err_std: entry.std,
        rot_err_mean: rot.mean,
        rot_err_std: rot.std,
        iou_mean: ious.mean,
        iou_std: ious.std,
        per_sequence,
        throughput_hz: None,
        config_hash: None,
    })
}
