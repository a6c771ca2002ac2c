//! The 2D ultrasound fan and its pixel mapping.
//!
//! The fan lies in the ICE-frame x–z plane with its apex at the origin. Image
//! rows (`v`) run along depth (x) and columns (`u`) run laterally (z), with the
//! apex at the top-centre pixel `(width/2, 0)`.

use nalgebra::Vector3;
use serde::{Deserialize, Serialize};

use super::GeometryError;

/// Points with `|y|` below this are on the imaging plane.
pub const PLANE_TOLERANCE_MM: f64 = 1e-6;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct FanGeometry {
    /// Full opening angle in degrees.
    pub angular_span_deg: f64,
    pub max_depth_mm: f64,
    pub image_width: u32,
    pub image_height: u32,
    pub mm_per_px: f64,
}

impl Default for FanGeometry {
    fn default() -> Self {
        Self {
            angular_span_deg: 90.0,
            max_depth_mm: 100.0,
            image_width: 224,
            image_height: 224,
            mm_per_px: 100.0 / 224.0,
        }
    }
}

/// Real-valued image position. `u` is the column, `v` the row.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PixelPoint {
    pub u: f64,
    pub v: f64,
}

impl FanGeometry {
    /// Fan whose depth exactly fills the image height.
    pub fn new(
        angular_span_deg: f64,
        max_depth_mm: f64,
        image_width: u32,
        image_height: u32,
    ) -> Result<Self, GeometryError> {
        let fan = Self {
            angular_span_deg,
            max_depth_mm,
            image_width,
            image_height,
            mm_per_px: max_depth_mm / image_height as f64,
        };
        fan.validate()?;
        Ok(fan)
    }

    pub fn validate(&self) -> Result<(), GeometryError> {
        let bad = |what: &str| Err(GeometryError::InvalidFan(what.to_string()));
        if !(self.angular_span_deg > 0.0 && self.angular_span_deg < 180.0) {
            return bad("angular_span_deg must lie in (0, 180)");
        }
        if !(self.max_depth_mm > 0.0 && self.max_depth_mm.is_finite()) {
            return bad("max_depth_mm must be positive");
        }
        if !(self.mm_per_px > 0.0 && self.mm_per_px.is_finite()) {
            return bad("mm_per_px must be positive");
        }
        if self.image_width == 0 || self.image_height == 0 {
            return bad("image dimensions must be nonzero");
        }
        Ok(())
    }

    pub fn apex(&self) -> Vector3<f64> {
        Vector3::zeros()
    }

    pub fn centerline(&self) -> Vector3<f64> {
        Vector3::x()
    }

    pub fn plane_normal(&self) -> Vector3<f64> {
        Vector3::y()
    }

    pub fn half_span_rad(&self) -> f64 {
        (self.angular_span_deg * 0.5).to_radians()
    }

    /// Inverse of [`world_to_pixel`]: the in-plane point (mm) under a pixel.
    pub fn pixel_to_plane(&self, p: PixelPoint) -> Vector3<f64> {
        let z = (p.u - self.image_width as f64 * 0.5) * self.mm_per_px;
        let x = p.v * self.mm_per_px;
        Vector3::new(x, 0.0, z)
    }

    /// Row-major mask of pixels whose centres lie inside the fan.
    pub fn pixel_mask(&self) -> Vec<bool> {
        let (w, h) = (self.image_width as usize, self.image_height as usize);
        let mut mask = Vec::with_capacity(w * h);
        for row in 0..h {
            for col in 0..w {
                mask.push(in_fan(
                    self,
                    PixelPoint {
                        u: col as f64 + 0.5,
                        v: row as f64 + 0.5,
                    },
                ));
            }
        }
        mask
    }
}

/// Maps an in-plane ICE-frame point (mm) to image coordinates.
pub fn world_to_pixel(fan: &FanGeometry, p: &Vector3<f64>) -> Result<PixelPoint, GeometryError> {
    if p.y.abs() >= PLANE_TOLERANCE_MM {
        return Err(GeometryError::OutOfPlane(p.y));
    }
    Ok(PixelPoint {
        u: fan.image_width as f64 * 0.5 + p.z / fan.mm_per_px,
        v: p.x / fan.mm_per_px,
    })
}

/// True when the pixel is inside the image, within the fan's angular span and
/// not deeper than `max_depth`.
pub fn in_fan(fan: &FanGeometry, p: PixelPoint) -> bool {
    if !(p.u.is_finite() && p.v.is_finite()) {
        return false;
    }
    if p.u < 0.0 || p.v < 0.0 || p.u > fan.image_width as f64 || p.v > fan.image_height as f64 {
        return false;
    }
    let q = fan.pixel_to_plane(p);
    let depth = (q.x * q.x + q.z * q.z).sqrt();
    if depth > fan.max_depth_mm {
        return false;
    }
    if depth == 0.0 {
        return true;
    }
    q.z.abs().atan2(q.x) <= fan.half_span_rad()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn apex_maps_to_top_centre() {
        let fan = FanGeometry::default();
        let p = world_to_pixel(&fan, &Vector3::zeros()).unwrap();
        assert_eq!(p, PixelPoint { u: 112.0, v: 0.0 });
        assert!(in_fan(&fan, p));
    }

    #[test]
    fn beyond_depth_is_outside() {
        let fan = FanGeometry::default();
        let p = world_to_pixel(&fan, &Vector3::new(fan.max_depth_mm + 1.0, 0.0, 0.0)).unwrap();
        assert!(!in_fan(&fan, p));
    }

    #[test]
    fn polar_angle_bound() {
        let fan = FanGeometry::default();
        let r = 50.0;
        let inside = (45.0f64 - 1.0).to_radians();
        let outside = (45.0f64 + 1.0).to_radians();
        let at = |a: f64| world_to_pixel(&fan, &Vector3::new(r * a.cos(), 0.0, r * a.sin())).unwrap();
        assert!(in_fan(&fan, at(inside)));
        assert!(!in_fan(&fan, at(outside)));
        assert!(!in_fan(&fan, at(-outside)));
    }

    #[test]
    fn out_of_plane_rejected() {
        let fan = FanGeometry::default();
        assert!(matches!(
            world_to_pixel(&fan, &Vector3::new(1.0, 1e-3, 0.0)),
            Err(GeometryError::OutOfPlane(_))
        ));
    }

    #[test]
    fn pixel_round_trip() {
        let fan = FanGeometry::default();
        let q = Vector3::new(31.0, 0.0, -12.5);
        let back = fan.pixel_to_plane(world_to_pixel(&fan, &q).unwrap());
        assert!((back - q).norm() < 1e-12);
    }

    #[test]
    fn invalid_fans_rejected() {
        assert!(FanGeometry::new(180.0, 100.0, 224, 224).is_err());
        assert!(FanGeometry::new(90.0, 0.0, 224, 224).is_err());
        assert!(FanGeometry::new(90.0, 100.0, 0, 224).is_err());
        assert!(FanGeometry::new(90.0, 100.0, 224, 224).is_ok());
    }
}
