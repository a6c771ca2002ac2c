use std::collections::HashMap;
use std::path::Path;

use super::format::{load_manifest, read_frame_records, sequence_dir, Manifest};
use super::DatasetError;

/// Read-only consistency check of a dataset directory.
///
/// Checks split counts, pairwise disjointness of sequence IDs and trajectory
/// seeds, train/test background disjointness, file presence, frame ordering
/// and image dimensions. Returns the manifest on success.
pub fn verify_integrity(root: &Path) -> Result<Manifest, DatasetError> {
    let manifest = load_manifest(root)?;

    let mut owner: HashMap<&str, &str> = HashMap::new();
    for split in &manifest.splits {
        if split.count != split.sequence_ids.len() {
            return Err(DatasetError::CountMismatch {
                split: split.name.clone(),
                expected: split.count,
                found: split.sequence_ids.len(),
            });
        }
        for id in &split.sequence_ids {
            if let Some(prev) = owner.insert(id.as_str(), split.name.as_str()) {
                return Err(DatasetError::SplitOverlap(format!(
                    "sequence {id} listed in both {prev} and {}",
                    split.name
                )));
            }
        }
    }
    for (i, a) in manifest.splits.iter().enumerate() {
        for b in &manifest.splits[i + 1..] {
            let lo = a.trajectory_seeds[0].max(b.trajectory_seeds[0]);
            if lo < a.trajectory_seeds[1].min(b.trajectory_seeds[1]) {
                return Err(DatasetError::SplitOverlap(format!(
                    "trajectory seed {lo} in both {} and {}",
                    a.name, b.name
                )));
            }
        }
    }
    if let (Ok(train), Ok(test)) = (manifest.split("train"), manifest.split("test")) {
        if let Some(id) = train.background_ids.iter().find(|id| test.background_ids.contains(id)) {
            return Err(DatasetError::SplitOverlap(format!(
                "background {id} used by both train and test"
            )));
        }
    }

    for split in &manifest.splits {
        for id in &split.sequence_ids {
            let dir = sequence_dir(root, &split.name, id);
            let records = read_frame_records(&dir)?;
            if records.len() != manifest.frames_per_sequence {
                return Err(DatasetError::CountMismatch {
                    split: format!("{}/{id} frames", split.name),
                    expected: manifest.frames_per_sequence,
                    found: records.len(),
                });
            }
            if let Some(pair) = records.windows(2).find(|p| p[1].frame_index <= p[0].frame_index) {
                return Err(DatasetError::InvalidWindow(format!(
                    "frame indices not increasing in {id} at {}",
                    pair[1].frame_index
                )));
            }
            for r in &records {
                if !r.image_path.is_file() {
                    return Err(DatasetError::MissingFile(r.image_path.clone()));
                }
                let (w, h) = image::image_dimensions(&r.image_path).map_err(|e| DatasetError::Parse {
                    path: r.image_path.clone(),
                    message: e.to_string(),
                })?;
                if (w, h) != (manifest.image_width, manifest.image_height) {
                    return Err(DatasetError::ShapeMismatch {
                        path: r.image_path.clone(),
                        expected: (manifest.image_width, manifest.image_height),
                        found: (w, h),
                    });
                }
                if r.annotation.visible != r.annotation.bbox.is_some() {
                    return Err(DatasetError::Parse {
                        path: r.image_path.clone(),
                        message: "visible flag disagrees with box presence".into(),
                    });
                }
            }
        }
    }
    Ok(manifest)
}
