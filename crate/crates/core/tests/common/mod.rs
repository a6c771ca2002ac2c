//! Independent rasterisation oracle shared by the integration tests.

#![allow(dead_code)]

use icetrack::geometry::{BoundingBox, FanGeometry, RigidTransform};
use nalgebra::Vector3;

/// The capsule a tip pose leaves in the imaging plane, derived from the pose
/// alone: centre `(x, z)` in mm, unit in-plane axis, axis half length and
/// radius in mm.
pub struct Capsule {
    pub center: [f64; 2],
    pub axis: [f64; 2],
    pub half_length: f64,
    pub radius: f64,
}

impl Capsule {
    pub fn from_pose(e_ice_tip: &RigidTransform, length_mm: f64, diameter_mm: f64) -> Self {
        let t = e_ice_tip.translation();
        let hd = e_ice_tip.rotation() * Vector3::z();
        let s = -t.y / hd.y;
        let in_plane = hd.x.hypot(hd.z);
        Self {
            center: [t.x + s * hd.x, t.z + s * hd.z],
            axis: [hd.x / in_plane, hd.z / in_plane],
            half_length: 0.5 * (length_mm * in_plane - diameter_mm).max(0.0),
            radius: 0.5 * diameter_mm,
        }
    }

    fn contains(&self, x: f64, z: f64) -> bool {
        let (px, pz) = (x - self.center[0], z - self.center[1]);
        let along = (px * self.axis[0] + pz * self.axis[1]).clamp(-self.half_length, self.half_length);
        (px - along * self.axis[0]).hypot(pz - along * self.axis[1]) <= self.radius
    }
}

/// Tight box of the capsule sampled on a grid `factor` times finer than the
/// image pixels. A cell belongs to the mask when its centre lies inside the
/// capsule; the box spans the member cells and is clipped to the image.
pub fn rasterised_box(fan: &FanGeometry, capsule: &Capsule, factor: usize) -> Option<BoundingBox> {
    let (w, h) = (fan.image_width as usize * factor, fan.image_height as usize * factor);
    let cell = fan.mm_per_px / factor as f64;
    let half_width_mm = 0.5 * fan.image_width as f64 * fan.mm_per_px;
    let reach = capsule.half_length + capsule.radius + fan.mm_per_px;
    // Rows follow depth (x), columns follow the lateral axis (z).
    let range = |centre_mm: f64, offset_mm: f64, n: usize| {
        let lo = ((centre_mm + offset_mm - reach) / cell).floor().max(0.0) as usize;
        let hi = (((centre_mm + offset_mm + reach) / cell).ceil().max(0.0) as usize).min(n);
        lo..hi
    };
    let (mut c0, mut r0, mut c1, mut r1) = (usize::MAX, usize::MAX, 0, 0);
    for row in range(capsule.center[0], 0.0, h) {
        let x = (row as f64 + 0.5) * cell;
        for col in range(capsule.center[1], half_width_mm, w) {
            let z = (col as f64 + 0.5) * cell - half_width_mm;
            if capsule.contains(x, z) {
                c0 = c0.min(col);
                r0 = r0.min(row);
                c1 = c1.max(col + 1);
                r1 = r1.max(row + 1);
            }
        }
    }
    (c0 != usize::MAX).then(|| {
        BoundingBox::new(
            c0 as f64 / w as f64,
            r0 as f64 / h as f64,
            c1 as f64 / w as f64,
            r1 as f64 / h as f64,
        )
        .expect("non-empty mask")
    })
}

/// True when the box touches the image border.
pub fn clipped(b: &BoundingBox) -> bool {
    b.x_min <= 0.0 || b.y_min <= 0.0 || b.x_max >= 1.0 || b.y_max >= 1.0
}
