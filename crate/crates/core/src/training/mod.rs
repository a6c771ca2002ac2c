//! Teacher-forced training with validation, checkpointing and logging.

mod optim;
mod samples;
mod trainer;

pub use optim::{clip_grad_norm, Adam, LrSchedule};
pub use samples::{build_samples, TrainingSample};
pub use trainer::{
    batch_loss, fit, train, validate, validate_model, EpochRecord, TrainLog, TrainOutcome, ValidationReport,
    BEST_CHECKPOINT, LAST_CHECKPOINT, TRAIN_LOG_FILE,
};

use std::path::PathBuf;

use serde::{Deserialize, Serialize};

use crate::dataset::DatasetError;
use crate::evaluation::EvalError;
use crate::model::ModelError;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct TrainConfig {
    pub epochs: usize,
    pub batch_size: usize,
    pub lr: f64,
    pub lr_schedule: LrSchedule,
    /// Seeds initialisation, shuffling, dropout and augmentation.
    pub seed: u64,
    /// Keeps the frame encoder at its initial weights.
    pub encoder_frozen: bool,
    /// Periodic checkpoints every this many epochs; 0 disables them.
    pub checkpoint_every: usize,
    /// Stop after this many epochs without a new best validation loss;
    /// 0 disables early stopping.
    pub early_stop_patience: usize,
    /// Global gradient-norm bound; 0 disables clipping.
    pub grad_clip: f64,
    /// Standard deviation of Gaussian noise added to the ground-truth prior
    /// (model units). 0 gives pure teacher forcing. Validation windows get
    /// the same perturbation from a fixed seed.
    pub prior_jitter: f64,
    /// Probability of replacing the ground-truth prior with the model's
    /// own prediction for the previous window.
    pub scheduled_sampling: f64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            epochs: 30,
            batch_size: 6,
            lr: 1e-4,
            lr_schedule: LrSchedule::Constant,
            seed: 0,
            encoder_frozen: false,
            checkpoint_every: 0,
            early_stop_patience: 0,
            grad_clip: 1.0,
            prior_jitter: 0.0,
            scheduled_sampling: 0.0,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<(), TrainingError> {
        let bad = |m: &str| Err(TrainingError::InvalidConfig(m.into()));
        if self.epochs == 0 {
            return bad("epochs must be at least 1");
        }
        if self.batch_size == 0 {
            return bad("batch_size must be at least 1");
        }
        if !(self.lr > 0.0 && self.lr.is_finite()) {
            return bad("lr must be positive");
        }
        if !(self.grad_clip >= 0.0) || !(self.prior_jitter >= 0.0) {
            return bad("grad_clip and prior_jitter must be non-negative");
        }
        if !(0.0..=1.0).contains(&self.scheduled_sampling) {
            return bad("scheduled_sampling must lie in [0, 1]");
        }
        Ok(())
    }
}

#[derive(Debug, thiserror::Error)]
pub enum TrainingError {
    #[error("invalid training configuration: {0}")]
    InvalidConfig(String),
    #[error("non-finite loss at epoch {epoch}, batch {batch}")]
    NonFiniteLoss { epoch: usize, batch: usize },
    #[error("no training windows")]
    NoSamples,
    #[error(transparent)]
    Dataset(#[from] DatasetError),
    #[error(transparent)]
    Model(#[from] ModelError),
    #[error(transparent)]
    Eval(#[from] EvalError),
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
}
