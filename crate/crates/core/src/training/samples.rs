use std::sync::Arc;

use crate::dataset::{normalize_angle, normalize_box, window_ends, DatasetError, LoadedSequence};
use crate::model::{prepare_frame, ModelConfig, ModelInput, Regression};

/// One teacher-forced training window held in memory.
#[derive(Debug, Clone)]
pub struct TrainingSample {
    pub sequence_id: String,
    /// Frame index of the window's last frame.
    pub frame_index: u32,
    pub input: ModelInput,
    pub target: Regression,
    /// Sample whose window ends one frame earlier in the same sequence.
    pub previous: Option<usize>,
}

/// Every all-visible window of every sequence. Frames are resized once and
/// shared between overlapping windows.
pub fn build_samples(sequences: &[LoadedSequence], config: &ModelConfig) -> Result<Vec<TrainingSample>, DatasetError> {
    let n = config.n_frames;
    let encoding = config.angle_encoding;
    let mut out = Vec::new();
    for seq in sequences {
        let visible: Vec<bool> = seq.annotations.iter().map(|a| a.visible && a.bbox.is_some()).collect();
        let ends = window_ends(&visible, n)?;
        let frames: Vec<Arc<_>> = seq
            .frames
            .iter()
            .map(|f| prepare_frame(f, config.encoder.input_size))
            .collect();
        let mut last_end = None;
        for end in ends {
            let prior = &seq.annotations[end - 1];
            let target = &seq.annotations[end];
            let previous = (last_end == Some(end - 1)).then(|| out.len() - 1);
            out.push(TrainingSample {
                sequence_id: seq.sequence_id.clone(),
                frame_index: target.frame_index,
                input: ModelInput {
                    images: frames[end + 1 - n..=end].to_vec(),
                    prior_box: normalize_box(&prior.bbox.expect("visible")),
                    prior_angle: crate::model::encode_angle(normalize_angle(&prior.angle), encoding),
                },
                target: Regression::from_normalized(
                    normalize_box(&target.bbox.expect("visible")),
                    normalize_angle(&target.angle),
                    encoding,
                ),
                previous,
            });
            last_end = Some(end);
        }
    }
    Ok(out)
}
