//! Ground-truth annotation: passing point, bounding box and incident angles.

use nalgebra::Vector3;
use serde::{Deserialize, Serialize};

use super::fan::FanGeometry;
use super::transform::RigidTransform;
use super::GeometryError;

/// Normalised-coordinate extent below which a box side counts as collapsed.
pub const DEGENERATE_EXTENT: f64 = 1e-6;

/// Heading in-plane norm below which the rotation angle is undefined.
const MIN_PROJECTED_NORM: f64 = 1e-9;

/// Passing-point box `[x_min, y_min, x_max, y_max]` in normalised image
/// coordinates (fractions of width and height).
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BoundingBox {
    pub x_min: f64,
    pub y_min: f64,
    pub x_max: f64,
    pub y_max: f64,
}

impl BoundingBox {
    pub fn new(x_min: f64, y_min: f64, x_max: f64, y_max: f64) -> Result<Self, GeometryError> {
        let b = Self {
            x_min,
            y_min,
            x_max,
            y_max,
        };
        b.validate()?;
        Ok(b)
    }

    pub fn validate(&self) -> Result<(), GeometryError> {
        let coords = self.to_array();
        if !coords.iter().all(|c| (0.0..=1.0).contains(c)) || self.x_min >= self.x_max || self.y_min >= self.y_max {
            return Err(GeometryError::InvalidBox(coords));
        }
        Ok(())
    }

    /// Box from arbitrary (possibly swapped or out-of-range) corner values, as
    /// produced by a regression head. Coordinates are sorted and clamped, so
    /// the result may have zero area.
    pub fn from_prediction(v: [f64; 4]) -> Self {
        let c = |x: f64| {
            if x.is_finite() {
                x.clamp(0.0, 1.0)
            } else {
                0.0
            }
        };
        let (x0, x1) = (c(v[0]), c(v[2]));
        let (y0, y1) = (c(v[1]), c(v[3]));
        Self {
            x_min: x0.min(x1),
            y_min: y0.min(y1),
            x_max: x0.max(x1),
            y_max: y0.max(y1),
        }
    }

    pub fn to_array(&self) -> [f64; 4] {
        [self.x_min, self.y_min, self.x_max, self.y_max]
    }

    pub fn width(&self) -> f64 {
        self.x_max - self.x_min
    }

    pub fn height(&self) -> f64 {
        self.y_max - self.y_min
    }

    pub fn area(&self) -> f64 {
        self.width().max(0.0) * self.height().max(0.0)
    }

    pub fn center(&self) -> (f64, f64) {
        ((self.x_min + self.x_max) * 0.5, (self.y_min + self.y_max) * 0.5)
    }

    /// Long side over short side, measured in pixels of a `width × height` image.
    pub fn aspect_ratio(&self, width: u32, height: u32) -> f64 {
        let w = self.width() * width as f64;
        let h = self.height() * height as f64;
        w.max(h) / w.min(h)
    }
}

/// Incident angle `[a_entry, a_rot]` in degrees. `a_entry ∈ [−90, 90]` is
/// signed by the side of the plane the heading points toward; `a_rot ∈
/// (−180, 180]` is measured in the image plane from the fan centerline.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct IncidentAngle {
    pub a_entry: f64,
    pub a_rot: f64,
}

impl IncidentAngle {
    pub fn new(a_entry: f64, a_rot: f64) -> Result<Self, GeometryError> {
        if !(-90.0..=90.0).contains(&a_entry) || !(a_rot > -180.0 && a_rot <= 180.0) {
            return Err(GeometryError::InvalidAngle(a_entry, a_rot));
        }
        Ok(Self { a_entry, a_rot })
    }

    /// Clamps the entry angle and wraps the rotation into range.
    pub fn from_prediction(a_entry: f64, a_rot: f64) -> Self {
        let a_entry = if a_entry.is_finite() {
            a_entry.clamp(-90.0, 90.0)
        } else {
            0.0
        };
        let a_rot = if a_rot.is_finite() { wrap_degrees(a_rot) } else { 0.0 };
        Self { a_entry, a_rot }
    }
}

/// Wraps an angle into `(−180, 180]`.
pub fn wrap_degrees(deg: f64) -> f64 {
    let r = deg.rem_euclid(360.0);
    if r > 180.0 {
        r - 360.0
    } else {
        r
    }
}

/// Signed angle between the tip heading and the imaging plane, in degrees.
/// Zero for an in-plane heading, ±90 along the plane normal.
pub fn entry_angle(e_ice_tip: &RigidTransform) -> f64 {
    let h = e_ice_tip.heading().normalize();
    h.y.clamp(-1.0, 1.0).asin().to_degrees()
}

/// In-plane orientation of the projected heading, measured from the fan
/// centerline (x) toward the lateral axis (z).
pub fn rotation_angle_from_heading(e_ice_tip: &RigidTransform) -> Result<f64, GeometryError> {
    rotation_of_vector(&e_ice_tip.heading())
}

pub(crate) fn rotation_of_vector(h: &Vector3<f64>) -> Result<f64, GeometryError> {
    if (h.x * h.x + h.z * h.z).sqrt() <= MIN_PROJECTED_NORM {
        return Err(GeometryError::DegenerateProjection);
    }
    Ok(wrap_degrees(h.z.atan2(h.x).to_degrees()))
}

/// Rotation angle read off a box diagonal.
///
/// `heading_hint` is the in-plane heading `(x, z)` and picks which of the four
/// diagonal directions is meant. `tip_diameter_mm` is subtracted from both box
/// extents first, turning the box of a rendered tip into the box of its axis;
/// pass `0.0` for the raw diagonal. When one side collapses the result is
/// axis-aligned along the other; when both collapse the box carries no
/// orientation.
pub fn rotation_angle_from_diagonal(
    fan: &FanGeometry,
    bbox: &BoundingBox,
    heading_hint: [f64; 2],
    tip_diameter_mm: f64,
) -> Result<f64, GeometryError> {
    let [hint_x, hint_z] = heading_hint;
    if !(hint_x.is_finite() && hint_z.is_finite()) || (hint_x == 0.0 && hint_z == 0.0) {
        return Err(GeometryError::InvalidHint);
    }
    let w_mm = fan.image_width as f64 * fan.mm_per_px;
    let h_mm = fan.image_height as f64 * fan.mm_per_px;
    let extent_u = (bbox.width() * w_mm - tip_diameter_mm).max(0.0);
    let extent_v = (bbox.height() * h_mm - tip_diameter_mm).max(0.0);
    let flat_u = extent_u < DEGENERATE_EXTENT * w_mm;
    let flat_v = extent_v < DEGENERATE_EXTENT * h_mm;
    if flat_u && flat_v {
        return Err(GeometryError::DegenerateBox);
    }
    // Image u follows z, image v follows x.
    let sign = |s: f64| if s < 0.0 { -1.0 } else { 1.0 };
    let du = if flat_u { 0.0 } else { sign(hint_z) * extent_u };
    let dv = if flat_v { 0.0 } else { sign(hint_x) * extent_v };
    Ok(wrap_degrees(du.atan2(dv).to_degrees()))
}

/// Where the line `tip + t·heading` crosses the imaging plane `y = 0`.
///
/// A heading (nearly) parallel to the plane has no usable intersection; if
/// the tip itself is within 0.5 mm of the plane its projection is returned
/// instead.
pub fn passing_point(tip: &Vector3<f64>, heading: &Vector3<f64>) -> Result<Vector3<f64>, GeometryError> {
    const PARALLEL: f64 = 1e-6;
    const NEAR_PLANE_MM: f64 = 0.5;
    if heading.y.abs() > PARALLEL {
        let t = -tip.y / heading.y;
        let mut p = tip + heading * t;
        p.y = 0.0;
        Ok(p)
    } else if tip.y.abs() < NEAR_PLANE_MM {
        Ok(Vector3::new(tip.x, 0.0, tip.z))
    } else {
        Err(GeometryError::NoIntersection)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn frame(h: Vector3<f64>) -> RigidTransform {
        RigidTransform::with_heading(&h, 0.3, Vector3::new(5.0, 1.0, 2.0))
    }

    #[test]
    fn entry_angle_fixtures() {
        assert!(entry_angle(&frame(Vector3::x())).abs() < 1e-12);
        assert!((entry_angle(&frame(Vector3::y())) - 90.0).abs() < 1e-9);
        assert!((entry_angle(&frame(-Vector3::y())) + 90.0).abs() < 1e-9);
        assert!((entry_angle(&frame(Vector3::new(1.0, 1.0, 0.0))) - 45.0).abs() < 1e-9);
    }

    #[test]
    fn rotation_from_heading_fixtures() {
        assert!(rotation_angle_from_heading(&frame(Vector3::x())).unwrap().abs() < 1e-12);
        assert!((rotation_angle_from_heading(&frame(Vector3::z())).unwrap() - 90.0).abs() < 1e-9);
        let r = rotation_angle_from_heading(&frame(Vector3::new(1.0, 0.5, 1.0))).unwrap();
        assert!((r - 45.0).abs() < 1e-9);
        assert_eq!(
            rotation_angle_from_heading(&frame(Vector3::y())),
            Err(GeometryError::DegenerateProjection)
        );
        // Exactly backwards along the centerline wraps to +180, not −180.
        assert_eq!(rotation_of_vector(&Vector3::new(-1.0, 0.0, -0.0)).unwrap(), 180.0);
    }

    #[test]
    fn diagonal_of_square_box() {
        let fan = FanGeometry::default();
        let b = BoundingBox::new(0.2, 0.2, 0.4, 0.4).unwrap();
        // Hint along +u (z) and +v (x).
        let fwd = rotation_angle_from_diagonal(&fan, &b, [1.0, 1.0], 0.0).unwrap();
        assert!((fwd - 45.0).abs() < 1e-9);
        let back = rotation_angle_from_diagonal(&fan, &b, [-1.0, -1.0], 0.0).unwrap();
        assert!((wrap_degrees(back - fwd).abs() - 180.0).abs() < 1e-9);
        let anti = rotation_angle_from_diagonal(&fan, &b, [1.0, -1.0], 0.0).unwrap();
        assert!((anti + 45.0).abs() < 1e-9);
    }

    #[test]
    fn diagonal_degenerate_cases() {
        let fan = FanGeometry::default();
        let line = BoundingBox {
            x_min: 0.3,
            y_min: 0.2,
            x_max: 0.3,
            y_max: 0.5,
        };
        let r = rotation_angle_from_diagonal(&fan, &line, [1.0, 0.2], 0.0).unwrap();
        assert!(r.abs() < 1e-12);
        let r = rotation_angle_from_diagonal(&fan, &line, [-1.0, 0.2], 0.0).unwrap();
        assert_eq!(r, 180.0);
        let point = BoundingBox {
            x_min: 0.3,
            y_min: 0.2,
            x_max: 0.3,
            y_max: 0.2,
        };
        assert_eq!(
            rotation_angle_from_diagonal(&fan, &point, [1.0, 0.0], 0.0),
            Err(GeometryError::DegenerateBox)
        );
        let b = BoundingBox::new(0.2, 0.2, 0.4, 0.4).unwrap();
        assert_eq!(
            rotation_angle_from_diagonal(&fan, &b, [0.0, 0.0], 0.0),
            Err(GeometryError::InvalidHint)
        );
    }

    #[test]
    fn diameter_inset_recovers_axis_orientation() {
        // Axis of 8 mm at 20° from the centerline, 3 mm wide tip.
        let fan = FanGeometry::default();
        let (len, dia, rot) = (8.0f64, 3.0, 20.0f64.to_radians());
        let du = len * rot.sin() + dia;
        let dv = len * rot.cos() + dia;
        let w = fan.image_width as f64 * fan.mm_per_px;
        let h = fan.image_height as f64 * fan.mm_per_px;
        let b = BoundingBox::new(0.3, 0.3, 0.3 + du / w, 0.3 + dv / h).unwrap();
        let hint = [rot.cos(), rot.sin()];
        let r = rotation_angle_from_diagonal(&fan, &b, hint, dia).unwrap();
        assert!((r - 20.0).abs() < 1e-9);
        let raw = rotation_angle_from_diagonal(&fan, &b, hint, 0.0).unwrap();
        assert!((raw - 20.0).abs() > 5.0);
    }

    #[test]
    fn passing_point_fixtures() {
        let p = passing_point(&Vector3::new(10.0, 5.0, 0.0), &-Vector3::y()).unwrap();
        assert!((p - Vector3::new(10.0, 0.0, 0.0)).norm() < 1e-12);
        let p = passing_point(&Vector3::new(10.0, 0.0, 5.0), &Vector3::new(1.0, 1e-9, 0.0)).unwrap();
        assert!((p - Vector3::new(10.0, 0.0, 5.0)).norm() < 1e-12);
        let h = Vector3::new(0.0, -1.0, 1.0).normalize();
        let p = passing_point(&Vector3::new(20.0, 4.0, 0.0), &h).unwrap();
        assert!((p - Vector3::new(20.0, 0.0, 4.0)).norm() < 1e-12);
        assert_eq!(
            passing_point(&Vector3::new(0.0, 3.0, 0.0), &Vector3::x()),
            Err(GeometryError::NoIntersection)
        );
    }

    #[test]
    fn box_and_angle_validation() {
        assert!(BoundingBox::new(0.5, 0.1, 0.4, 0.2).is_err());
        assert!(BoundingBox::new(0.1, 0.1, 1.2, 0.2).is_err());
        assert!(IncidentAngle::new(91.0, 0.0).is_err());
        assert!(IncidentAngle::new(0.0, -180.0).is_err());
        assert!(IncidentAngle::new(-90.0, 180.0).is_ok());
        let b = BoundingBox::from_prediction([0.6, 1.3, 0.2, -0.1]);
        assert_eq!(b.to_array(), [0.2, 0.0, 0.6, 1.0]);
        assert_eq!(
            IncidentAngle::from_prediction(120.0, 190.0),
            IncidentAngle {
                a_entry: 90.0,
                a_rot: -170.0
            }
        );
    }

    #[test]
    fn wrap_range() {
        assert_eq!(wrap_degrees(-180.0), 180.0);
        assert_eq!(wrap_degrees(540.0), 180.0);
        assert!((wrap_degrees(-190.0) - 170.0).abs() < 1e-12);
        assert_eq!(wrap_degrees(0.0), 0.0);
    }
}
