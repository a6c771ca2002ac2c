//! Rigid transforms in SE(3).
//!
//! Frames follow the EM-sensor convention: for the ICE catheter, z runs along
//! the shaft, x along the fan centerline and y along the fan-plane normal. A
//! device tip frame has its heading along its own z-axis.

use nalgebra::{Matrix3, Matrix4, Unit, UnitQuaternion, Vector3};
use serde::{Deserialize, Serialize};

use super::GeometryError;

/// Tolerance on `RᵀR − I` and `det R − 1` when validating rotations.
pub const ROTATION_TOLERANCE: f64 = 1e-9;

/// Drift past which a composed rotation is projected back onto SO(3).
const REORTHONORMALIZE_THRESHOLD: f64 = 1e-12;

/// Rotation plus translation (millimetres). `apply(p) = R p + t`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RigidTransform {
    rotation: Matrix3<f64>,
    translation: Vector3<f64>,
}

impl Default for RigidTransform {
    fn default() -> Self {
        Self::identity()
    }
}

impl RigidTransform {
    pub fn identity() -> Self {
        Self {
            rotation: Matrix3::identity(),
            translation: Vector3::zeros(),
        }
    }

    /// Builds a transform, rejecting matrices that are not proper rotations.
    pub fn new(rotation: Matrix3<f64>, translation: Vector3<f64>) -> Result<Self, GeometryError> {
        let err = orthonormality_error(&rotation);
        if !err.is_finite() || err > ROTATION_TOLERANCE || !translation.iter().all(|v| v.is_finite()) {
            return Err(GeometryError::InvalidRotation(err));
        }
        Ok(Self { rotation, translation })
    }

    pub fn from_translation(translation: Vector3<f64>) -> Self {
        Self {
            rotation: Matrix3::identity(),
            translation,
        }
    }

    pub fn from_quaternion(rotation: UnitQuaternion<f64>, translation: Vector3<f64>) -> Self {
        Self {
            rotation: rotation.to_rotation_matrix().into_inner(),
            translation,
        }
    }

    /// Rotation of `angle` radians about `axis`, followed by `translation`.
    pub fn from_axis_angle(axis: &Vector3<f64>, angle: f64, translation: Vector3<f64>) -> Self {
        let q = UnitQuaternion::from_axis_angle(&Unit::new_normalize(*axis), angle);
        Self::from_quaternion(q, translation)
    }

    /// Frame whose z-axis is `heading`, rolled by `roll` radians about it,
    /// with its origin at `origin`.
    pub fn with_heading(heading: &Vector3<f64>, roll: f64, origin: Vector3<f64>) -> Self {
        let z = heading.normalize();
        // Any helper not parallel to z gives a valid completion.
        let helper = if z.x.abs() < 0.9 { Vector3::x() } else { Vector3::y() };
        let x0 = (helper - z * helper.dot(&z)).normalize();
        let y0 = z.cross(&x0);
        let (s, c) = roll.sin_cos();
        let x = x0 * c + y0 * s;
        let y = z.cross(&x);
        Self {
            rotation: Matrix3::from_columns(&[x, y, z]),
            translation: origin,
        }
    }

    pub fn rotation(&self) -> &Matrix3<f64> {
        &self.rotation
    }

    pub fn translation(&self) -> &Vector3<f64> {
        &self.translation
    }

    /// The frame's z-axis expressed in the parent frame.
    pub fn heading(&self) -> Vector3<f64> {
        self.rotation.column(2).into_owned()
    }

    pub fn apply(&self, p: &Vector3<f64>) -> Vector3<f64> {
        self.rotation * p + self.translation
    }

    pub fn apply_vector(&self, v: &Vector3<f64>) -> Vector3<f64> {
        self.rotation * v
    }

    /// `self ∘ other`: applies `other` first, then `self`.
    pub fn compose(&self, other: &RigidTransform) -> RigidTransform {
        let mut rotation = self.rotation * other.rotation;
        if orthonormality_error(&rotation) > REORTHONORMALIZE_THRESHOLD {
            rotation = project_to_so3(&rotation);
        }
        RigidTransform {
            rotation,
            translation: self.rotation * other.translation + self.translation,
        }
    }

    pub fn inverse(&self) -> RigidTransform {
        let rt = self.rotation.transpose();
        RigidTransform {
            rotation: rt,
            translation: -(rt * self.translation),
        }
    }

    pub fn to_homogeneous(&self) -> Matrix4<f64> {
        let mut m = Matrix4::identity();
        m.fixed_view_mut::<3, 3>(0, 0).copy_from(&self.rotation);
        m.fixed_view_mut::<3, 1>(0, 3).copy_from(&self.translation);
        m
    }

    /// Frobenius distance between the homogeneous matrices of two transforms.
    pub fn distance(&self, other: &RigidTransform) -> f64 {
        (self.to_homogeneous() - other.to_homogeneous()).norm()
    }
}

/// `a ∘ b`.
pub fn compose(a: &RigidTransform, b: &RigidTransform) -> RigidTransform {
    a.compose(b)
}

pub fn invert(t: &RigidTransform) -> RigidTransform {
    t.inverse()
}

/// Pose of the tip in the ICE frame from two world-frame sensor poses:
/// `E_ice^tip = (E_world^ice)⁻¹ E_world^tip`.
pub fn relative_pose(e_world_ice: &RigidTransform, e_world_tip: &RigidTransform) -> RigidTransform {
    e_world_ice.inverse().compose(e_world_tip)
}

/// Largest of `‖RᵀR − I‖_F` and `|det R − 1|`.
pub fn orthonormality_error(r: &Matrix3<f64>) -> f64 {
    let ortho = (r.transpose() * r - Matrix3::identity()).norm();
    ortho.max((r.determinant() - 1.0).abs())
}

fn project_to_so3(r: &Matrix3<f64>) -> Matrix3<f64> {
    let svd = r.svd(true, true);
    let (u, v_t) = (svd.u.expect("svd u"), svd.v_t.expect("svd v_t"));
    let mut d = Matrix3::identity();
    if (u * v_t).determinant() < 0.0 {
        d[(2, 2)] = -1.0;
    }
    u * d * v_t
}
