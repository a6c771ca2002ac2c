//! Mapping of library errors onto process exit codes.

use std::fmt;

use icetrack::config::ConfigError;
use icetrack::dataset::DatasetError;
use icetrack::evaluation::EvalError;
use icetrack::imaging::ImageIoError;
use icetrack::model::ModelError;
use icetrack::simulator::SimulationError;
use icetrack::training::TrainingError;

pub const EXIT_IO: u8 = 1;
pub const EXIT_USAGE: u8 = 2;
pub const EXIT_INTEGRITY: u8 = 3;

#[derive(Debug)]
pub struct Failure {
    pub code: u8,
    pub message: String,
}

impl Failure {
    pub fn new(code: u8, message: impl Into<String>) -> Self {
        Self {
            code,
            message: message.into(),
        }
    }

    pub fn io(path: &std::path::Path, err: std::io::Error) -> Self {
        Self::new(EXIT_IO, format!("{}: {err}", path.display()))
    }
}

impl fmt::Display for Failure {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        // Diagnostics stay on one line.
        f.write_str(&self.message.replace('\n', " "))
    }
}

fn dataset_code(e: &DatasetError) -> u8 {
    match e {
        DatasetError::Io { .. } => EXIT_IO,
        DatasetError::TooShort { .. } | DatasetError::InvalidWindow(_) | DatasetError::UnknownSplit(_) => EXIT_USAGE,
        _ => EXIT_INTEGRITY,
    }
}

fn model_code(e: &ModelError) -> u8 {
    match e {
        ModelError::Io { .. } => EXIT_IO,
        ModelError::InvalidConfig(_) | ModelError::ShapeMismatch(_) => EXIT_USAGE,
        ModelError::CheckpointVersionMismatch { .. }
        | ModelError::CorruptCheckpoint { .. }
        | ModelError::NonFiniteParameters(_) => EXIT_INTEGRITY,
        ModelError::NonFiniteLoss => EXIT_IO,
    }
}

fn simulation_code(e: &SimulationError) -> u8 {
    match e {
        SimulationError::SplitOverlap(_) => EXIT_INTEGRITY,
        SimulationError::Io(_) => EXIT_IO,
        SimulationError::Dataset(d) => dataset_code(d),
        _ => EXIT_USAGE,
    }
}

fn eval_code(e: &EvalError) -> u8 {
    match e {
        EvalError::TooShort { .. } | EvalError::InvalidInput(_) | EvalError::EmptyInput => EXIT_USAGE,
        EvalError::Model(m) => model_code(m),
        EvalError::Dataset(d) => dataset_code(d),
        EvalError::Io { .. } | EvalError::Image(_) => EXIT_IO,
        EvalError::Parse { .. } => EXIT_INTEGRITY,
    }
}

macro_rules! failure_from {
    ($t:ty, $code:expr) => {
        impl From<$t> for Failure {
            fn from(e: $t) -> Self {
                let code: fn(&$t) -> u8 = $code;
                Failure::new(code(&e), e.to_string())
            }
        }
    };
}

failure_from!(DatasetError, dataset_code);
failure_from!(ModelError, model_code);
failure_from!(SimulationError, simulation_code);
failure_from!(EvalError, eval_code);
failure_from!(ImageIoError, |_| EXIT_IO);
failure_from!(ConfigError, |e| match e {
    ConfigError::Io { .. } => EXIT_IO,
    ConfigError::Simulation(s) => simulation_code(s),
    _ => EXIT_USAGE,
});
failure_from!(TrainingError, |e| match e {
    TrainingError::InvalidConfig(_) | TrainingError::NoSamples => EXIT_USAGE,
    TrainingError::NonFiniteLoss { .. } | TrainingError::Io { .. } => EXIT_IO,
    TrainingError::Dataset(d) => dataset_code(d),
    TrainingError::Model(m) => model_code(m),
    TrainingError::Eval(v) => eval_code(v),
});
