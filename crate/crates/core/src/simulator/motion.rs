//! Tip trajectories and scene sampling.

use nalgebra::{UnitQuaternion, Vector3};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};

use super::config::{MotionKind, MotionProfile, SceneConfig};
use super::render::annotate;
use super::{AnnotationRecord, SimulationError};
use crate::geometry::{relative_pose, RigidTransform};

/// Fixed part of a sequence: the ICE pose, the tip's starting pose in the ICE
/// frame and the motion profile.
#[derive(Debug, Clone, PartialEq)]
pub struct Scene {
    pub profile: MotionProfile,
    pub e_world_ice: RigidTransform,
    pub initial_tip: RigidTransform,
}

/// World-frame tip poses, one per frame.
///
/// The tip advances `speed / frame_rate` mm per frame along its current
/// heading (forward for insertion, backward for withdrawal, reversing once at
/// a seeded frame for mixed motion) while the heading turns about a seeded
/// axis perpendicular to the initial heading at `heading_drift_deg_s`.
pub fn generate_trajectory(
    profile: &MotionProfile,
    e_world_ice: &RigidTransform,
    initial_tip: &RigidTransform,
) -> Vec<RigidTransform> {
    let mut rng = ChaCha8Rng::seed_from_u64(profile.seed);
    let h0 = initial_tip.heading().normalize();
    let helper = if h0.x.abs() < 0.9 { Vector3::x() } else { Vector3::y() };
    let e1 = (helper - h0 * helper.dot(&h0)).normalize();
    let e2 = h0.cross(&e1);
    let phi = rng.random_range(0.0..std::f64::consts::TAU);
    let axis = nalgebra::Unit::new_normalize(e1 * phi.cos() + e2 * phi.sin());
    let turn = (profile.heading_drift_deg_s / profile.frame_rate_hz).to_radians();
    let drift = RigidTransform::from_quaternion(UnitQuaternion::from_axis_angle(&axis, turn), Vector3::zeros());
    let reversal = match profile.kind {
        MotionKind::Mixed => rng.random_range(2..profile.n_frames.saturating_sub(2).max(3)),
        _ => usize::MAX,
    };
    let step = profile.step_mm();

    let mut pose = *initial_tip;
    let mut out = Vec::with_capacity(profile.n_frames);
    for k in 0..profile.n_frames {
        out.push(e_world_ice.compose(&pose));
        let forward = match profile.kind {
            MotionKind::Insertion => true,
            MotionKind::Withdrawal => false,
            MotionKind::Mixed => k + 1 < reversal,
        };
        let dir = if forward { 1.0 } else { -1.0 };
        let position = pose.translation() + pose.heading() * (dir * step);
        let rotation = drift.rotation() * pose.rotation();
        pose = RigidTransform::new(rotation, position).unwrap_or_else(|_| {
            // Accumulated drift; rebuild from the heading.
            RigidTransform::with_heading(&rotation.column(2).into_owned(), 0.0, position)
        });
    }
    out
}

fn uniform(rng: &mut impl Rng, r: [f64; 2]) -> f64 {
    if r[1] > r[0] {
        rng.random_range(r[0]..=r[1])
    } else {
        r[0]
    }
}

fn random_world_pose(rng: &mut impl Rng) -> RigidTransform {
    let q = UnitQuaternion::from_quaternion(nalgebra::Quaternion::new(
        StandardNormal.sample(rng),
        StandardNormal.sample(rng),
        StandardNormal.sample(rng),
        StandardNormal.sample(rng),
    ));
    let t = Vector3::new(
        rng.random_range(-200.0..200.0),
        rng.random_range(-200.0..200.0),
        rng.random_range(-200.0..200.0),
    );
    RigidTransform::from_quaternion(q, t)
}

/// Draws a scene and its trajectory, resampling until the configured
/// acceptance rules hold on every frame.
pub fn sample_scene(
    config: &SceneConfig,
    rng: &mut impl Rng,
) -> Result<(Scene, Vec<RigidTransform>, Vec<AnnotationRecord>), SimulationError> {
    let fan = &config.fan;
    let (m, p) = (&config.motion, &config.placement);
    for _ in 0..p.max_attempts {
        let profile = MotionProfile {
            kind: m.kinds[rng.random_range(0..m.kinds.len())],
            speed_mm_s: uniform(rng, m.speed_mm_s),
            frame_rate_hz: m.frame_rate_hz,
            n_frames: m.frames_per_sequence,
            heading_drift_deg_s: uniform(rng, m.heading_drift_deg_s),
            seed: rng.random(),
            allow_any_speed: m.allow_any_speed,
        };
        let entry = uniform(rng, p.entry_abs_deg).to_radians() * if rng.random_bool(0.5) { 1.0 } else { -1.0 };
        let rot = uniform(rng, p.rotation_deg).to_radians();
        let depth = uniform(rng, p.depth_fraction) * fan.max_depth_mm;
        let polar = rng.random_range(-1.0..=1.0) * p.lateral_fraction * fan.half_span_rad();
        let crossing = Vector3::new(depth * polar.cos(), 0.0, depth * polar.sin());
        let heading = Vector3::new(entry.cos() * rot.cos(), entry.sin(), entry.cos() * rot.sin());
        let offset = uniform(rng, p.tip_offset_mm);
        let roll = rng.random_range(0.0..std::f64::consts::TAU);
        let initial_tip = RigidTransform::with_heading(&heading, roll, crossing - heading * offset);
        let e_world_ice = random_world_pose(rng);

        let poses = generate_trajectory(&profile, &e_world_ice, &initial_tip);
        let annotations: Vec<_> = poses
            .iter()
            .enumerate()
            .map(|(k, pose)| annotate(fan, &config.tip, &relative_pose(&e_world_ice, pose), k as u32))
            .collect();
        if acceptable(config, &profile, &annotations) {
            let scene = Scene {
                profile,
                e_world_ice,
                initial_tip,
            };
            return Ok((scene, poses, annotations));
        }
    }
    Err(SimulationError::SceneSampling(p.max_attempts))
}

fn acceptable(config: &SceneConfig, profile: &MotionProfile, annotations: &[AnnotationRecord]) -> bool {
    let p = &config.placement;
    let fan = &config.fan;
    let entry_ok = annotations
        .iter()
        .all(|a| (p.entry_limits_deg[0]..=p.entry_limits_deg[1]).contains(&a.angle.a_entry.abs()));
    if !entry_ok {
        return false;
    }
    if p.require_visible && !annotations.iter().all(|a| a.visible) {
        return false;
    }
    if p.enforce_continuity {
        let limit = profile.step_mm() / fan.mm_per_px + 2.0;
        for pair in annotations.windows(2) {
            if let (Some(a), Some(b)) = (pair[0].bbox, pair[1].bbox) {
                if center_shift_px(fan, &a, &b) > limit {
                    return false;
                }
            }
        }
    }
    true
}

pub(crate) fn center_shift_px(
    fan: &crate::geometry::FanGeometry,
    a: &crate::geometry::BoundingBox,
    b: &crate::geometry::BoundingBox,
) -> f64 {
    let (ax, ay) = a.center();
    let (bx, by) = b.center();
    let du = (ax - bx) * fan.image_width as f64;
    let dv = (ay - by) * fan.image_height as f64;
    (du * du + dv * dv).sqrt()
}
