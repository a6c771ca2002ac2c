//! On-disk layout.
//!
//! ```text
//! <root>/manifest.json
//! <root>/<split>/<sequence_id>/sequence.json
//! <root>/<split>/<sequence_id>/annotations.jsonl
//! <root>/<split>/<sequence_id>/frame_0000.png ...
//! ```
//!
//! The manifest's `config_hash` is the SHA-256 (lowercase hex) of the scene
//! config serialised as compact JSON with object keys sorted
//! lexicographically at every level.

use std::fs;
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::{Path, PathBuf};

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use super::DatasetError;
use crate::geometry::RigidTransform;
use crate::imaging::GrayFrame;
use crate::simulator::{AnnotationRecord, MotionProfile, SceneConfig};

pub const FORMAT_VERSION: u32 = 1;
pub const MANIFEST_FILE: &str = "manifest.json";
pub const ANNOTATIONS_FILE: &str = "annotations.jsonl";
pub const SEQUENCE_FILE: &str = "sequence.json";
pub const SPLITS: [&str; 3] = ["train", "val", "test"];

pub fn frame_file_name(frame_index: u32) -> String {
    format!("frame_{frame_index:04}.png")
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SplitManifest {
    pub name: String,
    pub count: usize,
    pub sequence_ids: Vec<String>,
    /// Half-open `[start, end)` range of trajectory seeds.
    pub trajectory_seeds: [u64; 2],
    pub background_ids: Vec<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Manifest {
    pub format_version: u32,
    pub generator: String,
    pub seed: u64,
    pub config_hash: String,
    pub image_width: u32,
    pub image_height: u32,
    pub frames_per_sequence: usize,
    pub config: SceneConfig,
    pub splits: Vec<SplitManifest>,
}

impl Manifest {
    pub fn split(&self, name: &str) -> Result<&SplitManifest, DatasetError> {
        self.splits
            .iter()
            .find(|s| s.name == name)
            .ok_or_else(|| DatasetError::UnknownSplit(name.to_string()))
    }
}

/// Per-sequence generation metadata.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SequenceMeta {
    pub sequence_id: String,
    pub split: String,
    pub trajectory_seed: u64,
    pub background_id: String,
    pub profile: MotionProfile,
    pub e_world_ice: RigidTransform,
}

/// One line of `annotations.jsonl`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
struct AnnotationLine {
    image: String,
    #[serde(flatten)]
    annotation: AnnotationRecord,
}

/// A frame as referenced on disk.
#[derive(Debug, Clone, PartialEq)]
pub struct FrameRecord {
    pub sequence_id: String,
    pub frame_index: u32,
    pub image_path: PathBuf,
    pub annotation: AnnotationRecord,
}

/// A sequence held in memory.
#[derive(Debug, Clone)]
pub struct LoadedSequence {
    pub sequence_id: String,
    pub meta: Option<SequenceMeta>,
    pub frames: Vec<GrayFrame>,
    pub annotations: Vec<AnnotationRecord>,
}

impl LoadedSequence {
    pub fn len(&self) -> usize {
        self.frames.len()
    }

    pub fn is_empty(&self) -> bool {
        self.frames.is_empty()
    }

    pub fn visible(&self) -> Vec<bool> {
        self.annotations.iter().map(|a| a.visible).collect()
    }
}

/// SHA-256 of the canonical JSON form of `value`.
pub fn canonical_hash<T: Serialize>(value: &T) -> String {
    // `Value` objects are BTreeMap-backed, so keys come out sorted.
    let v = serde_json::to_value(value).expect("config serialises");
    let text = serde_json::to_string(&v).expect("value serialises");
    hex::encode(Sha256::digest(text.as_bytes()))
}

pub fn file_hash(path: &Path) -> Result<String, DatasetError> {
    let bytes = fs::read(path).map_err(|e| DatasetError::io(path, e))?;
    Ok(hex::encode(Sha256::digest(&bytes)))
}

pub fn sequence_dir(root: &Path, split: &str, sequence_id: &str) -> PathBuf {
    root.join(split).join(sequence_id)
}

pub fn write_manifest(root: &Path, manifest: &Manifest) -> Result<PathBuf, DatasetError> {
    let path = root.join(MANIFEST_FILE);
    let mut text = serde_json::to_string_pretty(manifest).expect("manifest serialises");
    text.push('\n');
    fs::write(&path, text).map_err(|e| DatasetError::io(&path, e))?;
    Ok(path)
}

pub fn load_manifest(root: &Path) -> Result<Manifest, DatasetError> {
    let path = root.join(MANIFEST_FILE);
    if !path.is_file() {
        return Err(DatasetError::MissingFile(path));
    }
    let text = fs::read_to_string(&path).map_err(|e| DatasetError::io(&path, e))?;
    let manifest: Manifest = serde_json::from_str(&text).map_err(|e| DatasetError::parse(&path, e))?;
    if manifest.format_version != FORMAT_VERSION {
        return Err(DatasetError::UnsupportedVersion(manifest.format_version));
    }
    Ok(manifest)
}

/// Writes frames, annotations and metadata for one sequence.
pub fn write_sequence(
    dir: &Path,
    meta: &SequenceMeta,
    frames: &[(GrayFrame, AnnotationRecord)],
) -> Result<(), DatasetError> {
    fs::create_dir_all(dir).map_err(|e| DatasetError::io(dir, e))?;
    let meta_path = dir.join(SEQUENCE_FILE);
    let mut text = serde_json::to_string_pretty(meta).expect("meta serialises");
    text.push('\n');
    fs::write(&meta_path, text).map_err(|e| DatasetError::io(&meta_path, e))?;

    let ann_path = dir.join(ANNOTATIONS_FILE);
    let file = fs::File::create(&ann_path).map_err(|e| DatasetError::io(&ann_path, e))?;
    let mut out = BufWriter::new(file);
    for (image, annotation) in frames {
        let name = frame_file_name(annotation.frame_index);
        image.save_png(&dir.join(&name))?;
        let line = AnnotationLine {
            image: name,
            annotation: annotation.clone(),
        };
        serde_json::to_writer(&mut out, &line).expect("annotation serialises");
        out.write_all(b"\n").map_err(|e| DatasetError::io(&ann_path, e))?;
    }
    out.flush().map_err(|e| DatasetError::io(&ann_path, e))
}

/// Frame records of the sequence stored in `dir`.
pub fn read_frame_records(dir: &Path) -> Result<Vec<FrameRecord>, DatasetError> {
    let ann_path = dir.join(ANNOTATIONS_FILE);
    if !ann_path.is_file() {
        return Err(DatasetError::MissingFile(ann_path));
    }
    let sequence_id = dir
        .file_name()
        .map(|s| s.to_string_lossy().into_owned())
        .unwrap_or_default();
    let file = fs::File::open(&ann_path).map_err(|e| DatasetError::io(&ann_path, e))?;
    let mut records = Vec::new();
    for line in BufReader::new(file).lines() {
        let line = line.map_err(|e| DatasetError::io(&ann_path, e))?;
        if line.trim().is_empty() {
            continue;
        }
        let parsed: AnnotationLine = serde_json::from_str(&line).map_err(|e| DatasetError::parse(&ann_path, e))?;
        records.push(FrameRecord {
            sequence_id: sequence_id.clone(),
            frame_index: parsed.annotation.frame_index,
            image_path: dir.join(parsed.image),
            annotation: parsed.annotation,
        });
    }
    Ok(records)
}

pub fn read_sequence_meta(dir: &Path) -> Result<Option<SequenceMeta>, DatasetError> {
    let path = dir.join(SEQUENCE_FILE);
    if !path.is_file() {
        return Ok(None);
    }
    let text = fs::read_to_string(&path).map_err(|e| DatasetError::io(&path, e))?;
    serde_json::from_str(&text)
        .map(Some)
        .map_err(|e| DatasetError::parse(&path, e))
}

/// Loads a sequence directory (frames decoded to `[0, 1]`).
pub fn load_sequence_dir(dir: &Path) -> Result<LoadedSequence, DatasetError> {
    let records = read_frame_records(dir)?;
    let meta = read_sequence_meta(dir)?;
    let frames = records
        .iter()
        .map(|r| {
            if !r.image_path.is_file() {
                return Err(DatasetError::MissingFile(r.image_path.clone()));
            }
            Ok(GrayFrame::load_png(&r.image_path)?)
        })
        .collect::<Result<Vec<_>, DatasetError>>()?;
    Ok(LoadedSequence {
        sequence_id: records.first().map(|r| r.sequence_id.clone()).unwrap_or_default(),
        meta,
        frames,
        annotations: records.into_iter().map(|r| r.annotation).collect(),
    })
}

/// Loads every sequence of a split, in manifest order.
pub fn load_split(root: &Path, split: &str) -> Result<Vec<LoadedSequence>, DatasetError> {
    let manifest = load_manifest(root)?;
    let ids = &manifest.split(split)?.sequence_ids;
    ids.par_iter()
        .map(|id| load_sequence_dir(&sequence_dir(root, split, id)))
        .collect()
}
