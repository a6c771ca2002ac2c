//! Synthetic annotated ICE sequences.
//!
//! A scene fixes the ICE catheter pose, the tip's starting pose and a motion
//! profile. Frames are rendered by compositing a capsule-shaped tip over a
//! speckle (or pooled) background, and every frame is annotated analytically
//! from the tip pose with the functions in [`crate::geometry`].

mod config;
mod generate;
mod motion;
mod render;

use serde::{Deserialize, Serialize};

pub use config::{
    BackgroundMode, BackgroundModel, MotionConfig, MotionKind, MotionProfile, PlacementConfig, SceneConfig, SplitSpec,
    SplitsConfig, TipAppearanceModel, SPEED_BAND_MM_S,
};
pub use generate::{derive_seed, generate_dataset, sequence_id};
pub use motion::{generate_trajectory, sample_scene, Scene};
pub use render::{annotate, render_frame, Background, TipFootprint};

use crate::dataset::DatasetError;
use crate::geometry::{BoundingBox, GeometryError, IncidentAngle, RigidTransform};

/// Ground truth for one frame. `bbox` is present exactly when `visible`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AnnotationRecord {
    pub frame_index: u32,
    #[serde(rename = "box")]
    pub bbox: Option<BoundingBox>,
    pub angle: IncidentAngle,
    pub visible: bool,
    /// `E_ice^tip`.
    pub tip_pose: RigidTransform,
}

#[derive(Debug, thiserror::Error)]
pub enum SimulationError {
    #[error("invalid simulation config: {0}")]
    InvalidConfig(String),
    #[error("SplitOverlap: {0}")]
    SplitOverlap(String),
    #[error("no acceptable scene after {0} attempts; loosen the placement constraints")]
    SceneSampling(usize),
    #[error("I/O error: {0}")]
    Io(String),
    #[error(transparent)]
    Geometry(#[from] GeometryError),
    #[error(transparent)]
    Dataset(#[from] DatasetError),
}
