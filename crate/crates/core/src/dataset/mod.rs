//! Dataset layout, split manifests, windowing and target normalisation.

mod format;
mod integrity;
mod normalize;
mod window;

use std::path::{Path, PathBuf};

pub use format::{
    canonical_hash, file_hash, frame_file_name, load_manifest, load_sequence_dir, load_split, read_frame_records,
    read_sequence_meta, sequence_dir, write_manifest, write_sequence, FrameRecord, LoadedSequence, Manifest,
    SequenceMeta, SplitManifest, ANNOTATIONS_FILE, FORMAT_VERSION, MANIFEST_FILE, SEQUENCE_FILE, SPLITS,
};
pub use integrity::verify_integrity;
pub use normalize::{denormalize, denormalize_angle, denormalize_box, normalize, normalize_angle, normalize_box};
pub use window::{window, window_ends, SequenceWindow};

use crate::imaging::ImageIoError;

#[derive(Debug, thiserror::Error)]
pub enum DatasetError {
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("{path}: {message}")]
    Parse { path: PathBuf, message: String },
    #[error("missing file {0}")]
    MissingFile(PathBuf),
    #[error("split overlap: {0}")]
    SplitOverlap(String),
    #[error("{path}: expected {expected:?} pixels, found {found:?}")]
    ShapeMismatch {
        path: PathBuf,
        expected: (u32, u32),
        found: (u32, u32),
    },
    #[error("{split}: manifest lists {expected}, found {found}")]
    CountMismatch {
        split: String,
        expected: usize,
        found: usize,
    },
    #[error("TooShort: sequence has {len} frames, need at least {n}")]
    TooShort { len: usize, n: usize },
    #[error("invalid window: {0}")]
    InvalidWindow(String),
    #[error("unsupported dataset format version {0}")]
    UnsupportedVersion(u32),
    #[error("unknown split {0}")]
    UnknownSplit(String),
    #[error(transparent)]
    Image(#[from] ImageIoError),
}

impl DatasetError {
    pub(crate) fn io(path: &Path, source: std::io::Error) -> Self {
        Self::Io {
            path: path.to_path_buf(),
            source,
        }
    }

    pub(crate) fn parse(path: &Path, e: impl std::fmt::Display) -> Self {
        Self::Parse {
            path: path.to_path_buf(),
            message: e.to_string(),
        }
    }
}
