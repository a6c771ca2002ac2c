//! Frame synthesis: speckle or pooled backgrounds with a capsule-shaped tip
//! composited on top.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal, StandardNormal};

use super::config::{BackgroundModel, TipAppearanceModel};
use super::AnnotationRecord;
use crate::geometry::{
    entry_angle, in_fan, passing_point, relative_pose, rotation_angle_from_heading, world_to_pixel, BoundingBox,
    FanGeometry, IncidentAngle, PixelPoint, RigidTransform,
};
use crate::imaging::{gaussian_blur, GrayFrame};

/// In-image footprint of the tip: a capsule centred on the passing point.
///
/// The axis has length `max(L·cos a_entry − d, 0)` and the caps have radius
/// `d/2`, so the footprint spans `L·cos a_entry` along its axis and collapses
/// to a disc of diameter `d` once `L·cos a_entry ≤ d`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TipFootprint {
    pub center: PixelPoint,
    /// Unit axis direction `(du, dv)` in pixel space.
    pub direction: [f64; 2],
    pub half_length_px: f64,
    pub radius_px: f64,
}

impl TipFootprint {
    pub fn from_pose(
        fan: &FanGeometry,
        tip: &TipAppearanceModel,
        e_ice_tip: &RigidTransform,
    ) -> Result<Self, crate::geometry::GeometryError> {
        let heading = e_ice_tip.heading().normalize();
        let crossing = passing_point(e_ice_tip.translation(), &heading)?;
        let center = world_to_pixel(fan, &crossing)?;
        let in_plane = (heading.x * heading.x + heading.z * heading.z).sqrt();
        let direction = if in_plane > 1e-12 {
            [heading.z / in_plane, heading.x / in_plane]
        } else {
            [0.0, 1.0]
        };
        let axis_mm = (tip.length_mm * in_plane - tip.diameter_mm).max(0.0);
        Ok(Self {
            center,
            direction,
            half_length_px: 0.5 * axis_mm / fan.mm_per_px,
            radius_px: 0.5 * tip.diameter_mm / fan.mm_per_px,
        })
    }

    /// Pixel extents `(u_min, v_min, u_max, v_max)` of the capsule.
    pub fn pixel_bounds(&self) -> [f64; 4] {
        let eu = self.half_length_px * self.direction[0].abs() + self.radius_px;
        let ev = self.half_length_px * self.direction[1].abs() + self.radius_px;
        [
            self.center.u - eu,
            self.center.v - ev,
            self.center.u + eu,
            self.center.v + ev,
        ]
    }

    /// Axis-aligned bounds in normalised coordinates, clipped to the image.
    pub fn bounding_box(&self, width: u32, height: u32) -> Option<BoundingBox> {
        let [u0, v0, u1, v1] = self.pixel_bounds();
        let (w, h) = (width as f64, height as f64);
        BoundingBox::new(
            (u0 / w).clamp(0.0, 1.0),
            (v0 / h).clamp(0.0, 1.0),
            (u1 / w).clamp(0.0, 1.0),
            (v1 / h).clamp(0.0, 1.0),
        )
        .ok()
    }

    /// Anti-aliased coverage in `[0, 1]` with a one-pixel edge ramp.
    pub fn coverage(&self, width: usize, height: usize) -> Vec<f32> {
        let mut out = vec![0.0f32; width * height];
        let [u0, v0, u1, v1] = self.pixel_bounds();
        let c0 = (u0 - 1.0).floor().max(0.0) as usize;
        let r0 = (v0 - 1.0).floor().max(0.0) as usize;
        let c1 = ((u1 + 1.0).ceil().max(0.0) as usize).min(width);
        let r1 = ((v1 + 1.0).ceil().max(0.0) as usize).min(height);
        let [du, dv] = self.direction;
        for row in r0..r1 {
            for col in c0..c1 {
                let pu = col as f64 + 0.5 - self.center.u;
                let pv = row as f64 + 0.5 - self.center.v;
                let t = (pu * du + pv * dv).clamp(-self.half_length_px, self.half_length_px);
                let (qu, qv) = (pu - t * du, pv - t * dv);
                let dist = (qu * qu + qv * qv).sqrt() - self.radius_px;
                out[row * width + col] = (0.5 - dist).clamp(0.0, 1.0) as f32;
            }
        }
        out
    }
}

/// Analytic annotation for a tip pose given in the ICE frame.
pub fn annotate(
    fan: &FanGeometry,
    tip: &TipAppearanceModel,
    e_ice_tip: &RigidTransform,
    frame_index: u32,
) -> AnnotationRecord {
    let a_entry = entry_angle(e_ice_tip);
    // Only an exactly perpendicular heading has no rotation; report 0 there.
    let a_rot = rotation_angle_from_heading(e_ice_tip).unwrap_or(0.0);
    let angle = IncidentAngle { a_entry, a_rot };
    let bbox = TipFootprint::from_pose(fan, tip, e_ice_tip)
        .ok()
        .filter(|f| in_fan(fan, f.center))
        .and_then(|f| f.bounding_box(fan.image_width, fan.image_height));
    AnnotationRecord {
        frame_index,
        bbox,
        angle,
        visible: bbox.is_some(),
        tip_pose: *e_ice_tip,
    }
}

/// Per-sequence background: a base image plus per-frame changes.
#[derive(Debug, Clone)]
pub struct Background {
    base: GrayFrame,
    mask: Vec<bool>,
    speckle: Option<Speckle>,
    temporal_noise_std: f64,
}

/// The complex field behind a procedural speckle image.
#[derive(Debug, Clone)]
struct Speckle {
    field: Vec<(f64, f64)>,
    grid: (usize, usize),
    grain: f64,
    mean_intensity: f64,
    contrast: f64,
    decorrelation: f64,
}

impl Speckle {
    fn draw(grid: (usize, usize), rng: &mut impl Rng) -> Vec<(f64, f64)> {
        (0..grid.0 * grid.1)
            .map(|_| (StandardNormal.sample(rng), StandardNormal.sample(rng)))
            .collect()
    }

    /// Squared magnitude of the bilinearly interpolated field, rescaled to
    /// the configured mean and contrast.
    fn image(&self, field: &[(f64, f64)], width: usize, height: usize) -> GrayFrame {
        let gw = self.grid.0;
        let mut speckle = vec![0.0f64; width * height];
        for row in 0..height {
            let gy = row as f64 / self.grain;
            let (y0, fy) = (gy.floor() as usize, gy.fract());
            for col in 0..width {
                let gx = col as f64 / self.grain;
                let (x0, fx) = (gx.floor() as usize, gx.fract());
                let at = |x: usize, y: usize| field[y * gw + x];
                let lerp = |a: (f64, f64), b: (f64, f64), t: f64| (a.0 + (b.0 - a.0) * t, a.1 + (b.1 - a.1) * t);
                let top = lerp(at(x0, y0), at(x0 + 1, y0), fx);
                let bottom = lerp(at(x0, y0 + 1), at(x0 + 1, y0 + 1), fx);
                let (re, im) = lerp(top, bottom, fy);
                speckle[row * width + col] = re * re + im * im;
            }
        }
        let mean = speckle.iter().sum::<f64>() / speckle.len() as f64;
        let mut out = GrayFrame::zeros(width, height);
        for (dst, s) in out.data.iter_mut().zip(&speckle) {
            let v = self.mean_intensity * (1.0 + self.contrast * (s / mean - 1.0));
            *dst = v.clamp(0.0, 1.0) as f32;
        }
        out
    }
}

impl Background {
    /// Fully developed speckle: squared magnitude of a smoothly interpolated
    /// complex Gaussian field, rescaled to the requested mean and contrast.
    pub fn procedural(fan: &FanGeometry, model: &BackgroundModel, seed: u64) -> Self {
        let (w, h) = (fan.image_width as usize, fan.image_height as usize);
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let grain = model.grain_px.max(1e-3);
        let grid = (
            (w as f64 / grain).ceil() as usize + 2,
            (h as f64 / grain).ceil() as usize + 2,
        );
        let speckle = Speckle {
            field: Speckle::draw(grid, &mut rng),
            grid,
            grain,
            mean_intensity: model.mean_intensity,
            contrast: model.contrast,
            decorrelation: model.decorrelation,
        };
        let base = speckle.image(&speckle.field, w, h);
        let mut bg = Self::from_base(fan, base, model);
        bg.speckle = Some(speckle);
        bg
    }

    /// Background from a pooled image, resized to the fan's frame size.
    pub fn from_image(fan: &FanGeometry, image: &GrayFrame, model: &BackgroundModel) -> Self {
        let base = image.resize(fan.image_width as usize, fan.image_height as usize);
        Self::from_base(fan, base, model)
    }

    fn from_base(fan: &FanGeometry, mut base: GrayFrame, model: &BackgroundModel) -> Self {
        let mask = fan.pixel_mask();
        for (v, &m) in base.data.iter_mut().zip(&mask) {
            if !m {
                *v = 0.0;
            }
        }
        Self {
            base,
            mask,
            speckle: None,
            temporal_noise_std: model.temporal_noise_std,
        }
    }

    pub fn base(&self) -> &GrayFrame {
        &self.base
    }

    pub fn mask(&self) -> &[bool] {
        &self.mask
    }

    /// The next frame's background. Procedural speckle mixes a fresh field
    /// into the base field with weight `decorrelation`, keeping the field's
    /// variance, so `0` is static and `1` is independent per frame.
    fn frame(&self, rng: &mut impl Rng) -> GrayFrame {
        let mut out = match &self.speckle {
            Some(s) if s.decorrelation > 0.0 => {
                let fresh = Speckle::draw(s.grid, rng);
                let (keep, mix) = ((1.0 - s.decorrelation).sqrt(), s.decorrelation.sqrt());
                let field: Vec<(f64, f64)> = s
                    .field
                    .iter()
                    .zip(&fresh)
                    .map(|(a, b)| (keep * a.0 + mix * b.0, keep * a.1 + mix * b.1))
                    .collect();
                let mut img = s.image(&field, self.base.width, self.base.height);
                for (v, &m) in img.data.iter_mut().zip(&self.mask) {
                    if !m {
                        *v = 0.0;
                    }
                }
                img
            }
            _ => self.base.clone(),
        };
        if self.temporal_noise_std > 0.0 {
            let noise = Normal::new(0.0, self.temporal_noise_std).expect("finite std");
            for (v, &m) in out.data.iter_mut().zip(&self.mask) {
                if m {
                    *v = (*v as f64 + noise.sample(rng)).clamp(0.0, 1.0) as f32;
                }
            }
        }
        out
    }
}

/// Renders one frame and its analytic annotation.
///
/// The tip coverage is blurred, then alpha-blended over the background at a
/// jittered peak intensity; everything outside the fan is zeroed. Off-fan
/// tips leave the background untouched.
pub fn render_frame(
    fan: &FanGeometry,
    background: &Background,
    tip: &TipAppearanceModel,
    e_world_ice: &RigidTransform,
    e_world_tip: &RigidTransform,
    frame_index: u32,
    rng: &mut impl Rng,
) -> (GrayFrame, AnnotationRecord) {
    let e_ice_tip = relative_pose(e_world_ice, e_world_tip);
    let annotation = annotate(fan, tip, &e_ice_tip, frame_index);
    let mut image = background.frame(rng);
    let jitter: f64 = if tip.intensity_jitter_std > 0.0 {
        Normal::new(0.0, tip.intensity_jitter_std)
            .expect("finite std")
            .sample(rng)
    } else {
        0.0
    };
    if annotation.visible {
        let footprint = TipFootprint::from_pose(fan, tip, &e_ice_tip).expect("visible tip has a footprint");
        let (w, h) = (image.width, image.height);
        let alpha = gaussian_blur(&footprint.coverage(w, h), w, h, tip.blur_sigma_px);
        let intensity = (tip.peak_intensity + jitter).clamp(0.05, 1.0) as f32;
        for ((v, &a), &m) in image.data.iter_mut().zip(&alpha).zip(background.mask()) {
            *v = if m { *v * (1.0 - a) + intensity * a } else { 0.0 };
        }
    }
    (image, annotation)
}
