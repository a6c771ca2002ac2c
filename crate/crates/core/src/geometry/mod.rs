//! Rigid-frame math, fan geometry and the analytic annotation functions.
//!
//! Everything here is a pure function over immutable values.

mod annotation;
mod fan;
mod metrics;
mod transform;

pub use annotation::{
    entry_angle, passing_point, rotation_angle_from_diagonal, rotation_angle_from_heading, wrap_degrees, BoundingBox,
    IncidentAngle, DEGENERATE_EXTENT,
};
pub use fan::{in_fan, world_to_pixel, FanGeometry, PixelPoint, PLANE_TOLERANCE_MM};
pub use metrics::{angular_error, iou};
pub use transform::{compose, invert, orthonormality_error, relative_pose, RigidTransform, ROTATION_TOLERANCE};

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum GeometryError {
    #[error("matrix is not a proper rotation (error {0:.3e})")]
    InvalidRotation(f64),
    #[error("invalid fan geometry: {0}")]
    InvalidFan(String),
    #[error("invalid bounding box {0:?}")]
    InvalidBox([f64; 4]),
    #[error("invalid incident angle (entry {0}, rotation {1})")]
    InvalidAngle(f64, f64),
    #[error("point is {0} mm off the imaging plane")]
    OutOfPlane(f64),
    #[error("heading is parallel to the plane normal; rotation angle undefined")]
    DegenerateProjection,
    #[error("bounding box has collapsed in both dimensions")]
    DegenerateBox,
    #[error("heading hint must be a nonzero finite vector")]
    InvalidHint,
    #[error("tip axis is parallel to and away from the imaging plane")]
    NoIntersection,
}
