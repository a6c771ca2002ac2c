use std::path::PathBuf;

use super::format::FrameRecord;
use super::DatasetError;
use crate::geometry::{BoundingBox, IncidentAngle};

/// `n` contiguous frames with the state of the second-to-last frame as prior
/// and the state of the last frame as target.
#[derive(Debug, Clone, PartialEq)]
pub struct SequenceWindow {
    pub sequence_id: String,
    pub frame_indices: Vec<u32>,
    pub image_paths: Vec<PathBuf>,
    pub prior_box: BoundingBox,
    pub prior_angle: IncidentAngle,
    pub target_box: BoundingBox,
    pub target_angle: IncidentAngle,
}

/// Positions (within the sequence) of the last frame of every window of
/// length `n` that contains only visible frames. Stride 1.
pub fn window_ends(visible: &[bool], n: usize) -> Result<Vec<usize>, DatasetError> {
    if n < 2 {
        return Err(DatasetError::InvalidWindow(format!(
            "window length must be at least 2, got {n}"
        )));
    }
    if visible.len() < n {
        return Err(DatasetError::TooShort { len: visible.len(), n });
    }
    let mut ends = Vec::with_capacity(visible.len() + 1 - n);
    let mut run = 0usize;
    for (i, &v) in visible.iter().enumerate() {
        run = if v { run + 1 } else { 0 };
        if run >= n {
            ends.push(i);
        }
    }
    Ok(ends)
}

/// Sliding windows over one sequence's frame records.
pub fn window(sequence: &[FrameRecord], n: usize) -> Result<Vec<SequenceWindow>, DatasetError> {
    if let Some(first) = sequence.first() {
        if let Some(other) = sequence.iter().find(|r| r.sequence_id != first.sequence_id) {
            return Err(DatasetError::InvalidWindow(format!(
                "frames from sequences {} and {} cannot share a window",
                first.sequence_id, other.sequence_id
            )));
        }
    }
    if let Some(pair) = sequence.windows(2).find(|p| p[1].frame_index <= p[0].frame_index) {
        return Err(DatasetError::InvalidWindow(format!(
            "frame indices not increasing in {} at {}",
            pair[1].sequence_id, pair[1].frame_index
        )));
    }
    let visible: Vec<bool> = sequence
        .iter()
        .map(|r| r.annotation.visible && r.annotation.bbox.is_some())
        .collect();
    let ends = window_ends(&visible, n)?;
    Ok(ends
        .into_iter()
        .map(|end| {
            let frames = &sequence[end + 1 - n..=end];
            let prior = &sequence[end - 1].annotation;
            let target = &sequence[end].annotation;
            SequenceWindow {
                sequence_id: sequence[end].sequence_id.clone(),
                frame_indices: frames.iter().map(|r| r.frame_index).collect(),
                image_paths: frames.iter().map(|r| r.image_path.clone()).collect(),
                prior_box: prior.bbox.expect("visible"),
                prior_angle: prior.angle,
                target_box: target.bbox.expect("visible"),
                target_angle: target.angle,
            }
        })
        .collect())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geometry::RigidTransform;
    use crate::simulator::AnnotationRecord;

    fn records(len: usize, invisible: &[usize]) -> Vec<FrameRecord> {
        (0..len)
            .map(|i| {
                let vis = !invisible.contains(&i);
                FrameRecord {
                    sequence_id: "seq".into(),
                    frame_index: i as u32,
                    image_path: PathBuf::from(format!("f{i}.png")),
                    annotation: AnnotationRecord {
                        frame_index: i as u32,
                        bbox: vis.then(|| BoundingBox::new(0.1, 0.1, 0.2 + i as f64 * 0.01, 0.3).unwrap()),
                        angle: IncidentAngle {
                            a_entry: i as f64,
                            a_rot: 0.0,
                        },
                        visible: vis,
                        tip_pose: RigidTransform::identity(),
                    },
                }
            })
            .collect()
    }

    #[test]
    fn window_counts() {
        assert_eq!(window(&records(5, &[]), 5).unwrap().len(), 1);
        assert_eq!(window(&records(12, &[]), 5).unwrap().len(), 8);
        assert_eq!(window(&records(12, &[7]), 5).unwrap().len(), 3);
    }

    #[test]
    fn prior_and_target_come_from_last_two_frames() {
        let w = window(&records(7, &[]), 5).unwrap();
        assert_eq!(w[0].frame_indices, vec![0, 1, 2, 3, 4]);
        assert_eq!(w[0].prior_angle.a_entry, 3.0);
        assert_eq!(w[0].target_angle.a_entry, 4.0);
        assert_eq!(w[2].frame_indices, vec![2, 3, 4, 5, 6]);
    }

    #[test]
    fn errors() {
        assert!(matches!(
            window(&records(4, &[]), 5),
            Err(DatasetError::TooShort { len: 4, n: 5 })
        ));
        assert!(matches!(
            window(&records(4, &[]), 1),
            Err(DatasetError::InvalidWindow(_))
        ));
        let mut mixed = records(6, &[]);
        mixed[3].sequence_id = "other".into();
        assert!(matches!(window(&mixed, 3), Err(DatasetError::InvalidWindow(_))));
        let mut unordered = records(6, &[]);
        unordered[3].frame_index = 1;
        assert!(matches!(window(&unordered, 3), Err(DatasetError::InvalidWindow(_))));
    }

    #[test]
    fn window_ends_matches_enumeration() {
        // Brute force: a window ending at e is kept iff none of its frames is hidden.
        let visible: Vec<bool> = (0..40).map(|i| i % 11 != 3 && i % 17 != 9).collect();
        for n in 2..8 {
            let expect: Vec<usize> = (n - 1..visible.len())
                .filter(|&e| visible[e + 1 - n..=e].iter().all(|&v| v))
                .collect();
            assert_eq!(window_ends(&visible, n).unwrap(), expect);
        }
    }
}
