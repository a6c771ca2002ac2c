//! Autoregressive rollout, metric aggregation, throughput and reports.

mod metrics;
mod report;
mod rollout;
mod throughput;

pub use metrics::{
    frame_errors, metrics, ErrorStats, FrameErrors, MetricsReport, SequenceMetrics, METRICS_SCHEMA_VERSION,
};
pub use report::{
    load_report, overlay, render_overlays, write_report, EvaluationReport, PREDICTION_COLOR, REPORT_FILE,
    REPORT_SCHEMA_VERSION, TARGET_COLOR,
};
pub use rollout::{rollout, rollout_all, Bootstrap, FramePrediction, PriorSource, RolloutResult};
pub use throughput::{throughput, ThroughputReport, MIN_BENCH_ITERS};

use std::collections::HashMap;
use std::path::PathBuf;
use std::sync::Arc;

use ndarray::Array2;
use serde::{Deserialize, Serialize};

use crate::dataset::{normalize_angle, normalize_box, DatasetError, LoadedSequence};
use crate::geometry::{BoundingBox, IncidentAngle};
use crate::imaging::{GrayFrame, ImageIoError};
use crate::model::{decode_angle, encode_angle, Model, ModelError, ModelInput};

#[derive(Debug, thiserror::Error)]
pub enum EvalError {
    #[error("TooShort: sequence {sequence_id} has {len} frames, rollout needs at least {needed}")]
    TooShort {
        sequence_id: String,
        len: usize,
        needed: usize,
    },
    #[error("no evaluable frames")]
    EmptyInput,
    #[error("invalid input: {0}")]
    InvalidInput(String),
    #[error(transparent)]
    Model(#[from] ModelError),
    #[error(transparent)]
    Dataset(#[from] DatasetError),
    #[error(transparent)]
    Image(#[from] ImageIoError),
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("{path}: {message}")]
    Parse { path: PathBuf, message: String },
}

/// Tip state in physical units: normalised box and angles in degrees.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TipState {
    #[serde(rename = "box")]
    pub bbox: BoundingBox,
    pub angle: IncidentAngle,
}

impl TipState {
    /// The state a model output of all zeros decodes to.
    pub fn zeros() -> Self {
        Self {
            bbox: BoundingBox::from_prediction([0.5; 4]),
            angle: IncidentAngle::from_prediction(0.0, 0.0),
        }
    }
}

/// What a predictor sees for one window: the sequence, the frame indices
/// and the prepared frames. No annotations.
pub struct WindowView<'a> {
    pub sequence_id: &'a str,
    pub frame_indices: &'a [u32],
    pub frames: &'a [Arc<Array2<f64>>],
}

/// Anything that maps a window plus a prior state to the current state.
pub trait Predictor: Sync {
    fn window_len(&self) -> usize;

    /// Converts a raw frame into the representation `predict` consumes.
    fn prepare(&self, _frame: &GrayFrame) -> Arc<Array2<f64>> {
        Arc::new(Array2::zeros((0, 0)))
    }

    fn predict(&self, window: &WindowView<'_>, prior: &TipState) -> Result<TipState, EvalError>;
}

impl Predictor for Model {
    fn window_len(&self) -> usize {
        self.config().n_frames
    }

    fn prepare(&self, frame: &GrayFrame) -> Arc<Array2<f64>> {
        self.preprocess(frame)
    }

    fn predict(&self, window: &WindowView<'_>, prior: &TipState) -> Result<TipState, EvalError> {
        let input = ModelInput {
            images: window.frames.to_vec(),
            prior_box: normalize_box(&prior.bbox),
            prior_angle: encode_angle(normalize_angle(&prior.angle), self.config().angle_encoding),
        };
        let out = self.forward(&input)?;
        Ok(state_from_model(&out.bbox, &out.angle))
    }
}

/// Decodes model-unit outputs into a valid state.
pub fn state_from_model(bbox: &[f64; 4], angle: &[f64]) -> TipState {
    let a = decode_angle(angle);
    TipState {
        bbox: crate::dataset::denormalize_box(bbox),
        angle: crate::dataset::denormalize_angle(&a),
    }
}

/// Trivial tracker that returns its prior unchanged.
pub struct PriorCopy {
    pub window_len: usize,
}

impl Predictor for PriorCopy {
    fn window_len(&self) -> usize {
        self.window_len
    }

    fn predict(&self, _window: &WindowView<'_>, prior: &TipState) -> Result<TipState, EvalError> {
        Ok(*prior)
    }
}

/// Test double that looks up the ground truth of each window's last frame.
pub struct Oracle {
    window_len: usize,
    truth: HashMap<(String, u32), TipState>,
}

impl Oracle {
    pub fn new(window_len: usize, sequences: &[LoadedSequence]) -> Self {
        let truth = sequences
            .iter()
            .flat_map(|s| {
                s.annotations.iter().filter_map(|a| {
                    a.bbox.map(|b| {
                        (
                            (s.sequence_id.clone(), a.frame_index),
                            TipState {
                                bbox: b,
                                angle: a.angle,
                            },
                        )
                    })
                })
            })
            .collect();
        Self { window_len, truth }
    }
}

impl Predictor for Oracle {
    fn window_len(&self) -> usize {
        self.window_len
    }

    fn predict(&self, window: &WindowView<'_>, _prior: &TipState) -> Result<TipState, EvalError> {
        let last = *window.frame_indices.last().ok_or(EvalError::EmptyInput)?;
        self.truth
            .get(&(window.sequence_id.to_string(), last))
            .copied()
            .ok_or_else(|| EvalError::InvalidInput(format!("no ground truth for {} frame {last}", window.sequence_id)))
    }
}
