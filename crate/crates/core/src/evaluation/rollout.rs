use std::sync::Arc;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::{EvalError, Predictor, TipState, WindowView};
use crate::dataset::LoadedSequence;

/// Prior state for the first window of an autoregressive rollout.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Bootstrap {
    /// Ground truth of the frame preceding the first window's last frame.
    GroundTruthFirst,
    /// The state a zero model output decodes to.
    Zeros,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PriorSource {
    /// Bootstrap once, then feed back the predictor's own output.
    Autoregressive(Bootstrap),
    /// Ground truth of the previous frame at every step.
    TeacherForced,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FramePrediction {
    pub frame_index: u32,
    pub prior: TipState,
    pub prediction: TipState,
    /// `None` when the tip is not visible in this frame.
    pub target: Option<TipState>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RolloutResult {
    pub sequence_id: String,
    pub mode: PriorSource,
    pub frames: Vec<FramePrediction>,
}

fn truth(sequence: &LoadedSequence, i: usize) -> Option<TipState> {
    let a = &sequence.annotations[i];
    a.bbox
        .filter(|_| a.visible)
        .map(|bbox| TipState { bbox, angle: a.angle })
}

/// Runs a predictor over every window of a sequence, ending at each frame
/// from `N−1` to the last (0-based).
pub fn rollout<P: Predictor + ?Sized>(
    predictor: &P,
    sequence: &LoadedSequence,
    mode: PriorSource,
) -> Result<RolloutResult, EvalError> {
    let n = predictor.window_len();
    let len = sequence.len();
    if len < n + 1 {
        return Err(EvalError::TooShort {
            sequence_id: sequence.sequence_id.clone(),
            len,
            needed: n + 1,
        });
    }
    if sequence.annotations.len() != len {
        return Err(EvalError::InvalidInput(format!(
            "{}: {} frames but {} annotations",
            sequence.sequence_id,
            len,
            sequence.annotations.len()
        )));
    }
    let prepared: Vec<Arc<_>> = sequence.frames.iter().map(|f| predictor.prepare(f)).collect();
    let indices: Vec<u32> = sequence.annotations.iter().map(|a| a.frame_index).collect();

    let mut frames = Vec::with_capacity(len + 1 - n);
    let mut previous: Option<TipState> = None;
    for end in n - 1..len {
        let prior = match (mode, previous) {
            (PriorSource::TeacherForced, prev) => match (truth(sequence, end - 1), prev) {
                (Some(t), _) => t,
                (None, Some(p)) => p,
                (None, None) => TipState::zeros(),
            },
            (PriorSource::Autoregressive(_), Some(p)) => p,
            (PriorSource::Autoregressive(Bootstrap::Zeros), None) => TipState::zeros(),
            (PriorSource::Autoregressive(Bootstrap::GroundTruthFirst), None) => {
                truth(sequence, end - 1).ok_or_else(|| {
                    EvalError::InvalidInput(format!(
                        "{}: no ground truth at frame {} to bootstrap from",
                        sequence.sequence_id,
                        end - 1
                    ))
                })?
            }
        };
        let window = WindowView {
            sequence_id: &sequence.sequence_id,
            frame_indices: &indices[end + 1 - n..=end],
            frames: &prepared[end + 1 - n..=end],
        };
        let prediction = predictor.predict(&window, &prior)?;
        frames.push(FramePrediction {
            frame_index: indices[end],
            prior,
            prediction,
            target: truth(sequence, end),
        });
        previous = Some(prediction);
    }
    Ok(RolloutResult {
        sequence_id: sequence.sequence_id.clone(),
        mode,
        frames,
    })
}

/// [`rollout`] over many sequences, in parallel, preserving input order.
pub fn rollout_all<P: Predictor + ?Sized>(
    predictor: &P,
    sequences: &[LoadedSequence],
    mode: PriorSource,
) -> Result<Vec<RolloutResult>, EvalError> {
    sequences.par_iter().map(|s| rollout(predictor, s, mode)).collect()
}
