use std::path::PathBuf;

use serde::{Deserialize, Serialize};

use super::SimulationError;
use crate::geometry::FanGeometry;

/// Speeds reported for the recorded motion sequences, mm/s.
pub const SPEED_BAND_MM_S: (f64, f64) = (10.0, 20.0);

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum MotionKind {
    Insertion,
    Withdrawal,
    Mixed,
}

/// Parameters of one sequence's motion.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MotionProfile {
    pub kind: MotionKind,
    pub speed_mm_s: f64,
    pub frame_rate_hz: f64,
    pub n_frames: usize,
    pub heading_drift_deg_s: f64,
    pub seed: u64,
    /// Accept speeds outside the 10–20 mm/s band.
    #[serde(default)]
    pub allow_any_speed: bool,
}

impl MotionProfile {
    pub const MIN_FRAMES: usize = 6;

    pub fn validate(&self) -> Result<(), SimulationError> {
        let bad = |m: String| Err(SimulationError::InvalidConfig(m));
        if !(self.speed_mm_s > 0.0 && self.speed_mm_s.is_finite()) {
            return bad(format!("speed_mm_s must be positive, got {}", self.speed_mm_s));
        }
        if !self.allow_any_speed && !(SPEED_BAND_MM_S.0..=SPEED_BAND_MM_S.1).contains(&self.speed_mm_s) {
            return bad(format!("speed_mm_s {} outside [10, 20]", self.speed_mm_s));
        }
        if !(self.frame_rate_hz > 0.0 && self.frame_rate_hz.is_finite()) {
            return bad("frame_rate_hz must be positive".into());
        }
        if self.n_frames < Self::MIN_FRAMES {
            return bad(format!("n_frames must be at least {}", Self::MIN_FRAMES));
        }
        if !(self.heading_drift_deg_s >= 0.0 && self.heading_drift_deg_s.is_finite()) {
            return bad("heading_drift_deg_s must be non-negative".into());
        }
        Ok(())
    }

    /// Distance travelled between consecutive frames, mm.
    pub fn step_mm(&self) -> f64 {
        self.speed_mm_s / self.frame_rate_hz
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct TipAppearanceModel {
    pub length_mm: f64,
    /// 9 Fr ≈ 3 mm.
    pub diameter_mm: f64,
    pub peak_intensity: f64,
    pub intensity_jitter_std: f64,
    pub blur_sigma_px: f64,
}

impl Default for TipAppearanceModel {
    fn default() -> Self {
        Self {
            length_mm: 10.0,
            diameter_mm: 3.0,
            peak_intensity: 0.95,
            intensity_jitter_std: 0.05,
            blur_sigma_px: 0.7,
        }
    }
}

impl TipAppearanceModel {
    pub fn validate(&self) -> Result<(), SimulationError> {
        if !(self.length_mm > self.diameter_mm && self.diameter_mm > 0.0) {
            return Err(SimulationError::InvalidConfig(
                "tip requires length_mm > diameter_mm > 0".into(),
            ));
        }
        if !(self.peak_intensity > 0.0 && self.peak_intensity <= 1.0) {
            return Err(SimulationError::InvalidConfig(
                "peak_intensity must lie in (0, 1]".into(),
            ));
        }
        if !(self.intensity_jitter_std >= 0.0 && self.blur_sigma_px >= 0.0) {
            return Err(SimulationError::InvalidConfig(
                "intensity_jitter_std and blur_sigma_px must be non-negative".into(),
            ));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum BackgroundMode {
    ProceduralSpeckle,
    ImagePool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct BackgroundModel {
    pub mode: BackgroundMode,
    /// Speckle correlation length, px.
    pub grain_px: f64,
    pub mean_intensity: f64,
    /// Speckle contrast; the clutter knob.
    pub contrast: f64,
    /// Independent per-frame pixel noise.
    pub temporal_noise_std: f64,
    /// Share of the speckle field redrawn each frame: 0 keeps it static,
    /// 1 makes frames independent. Procedural backgrounds only.
    pub decorrelation: f64,
}

impl Default for BackgroundModel {
    fn default() -> Self {
        Self {
            mode: BackgroundMode::ProceduralSpeckle,
            grain_px: 3.0,
            mean_intensity: 0.25,
            contrast: 0.5,
            temporal_noise_std: 0.02,
            decorrelation: 0.0,
        }
    }
}

/// Ranges from which each sequence's motion profile is drawn.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct MotionConfig {
    pub frames_per_sequence: usize,
    pub frame_rate_hz: f64,
    pub speed_mm_s: [f64; 2],
    pub heading_drift_deg_s: [f64; 2],
    pub kinds: Vec<MotionKind>,
    pub allow_any_speed: bool,
}

impl Default for MotionConfig {
    fn default() -> Self {
        Self {
            frames_per_sequence: 24,
            frame_rate_hz: 25.0,
            speed_mm_s: [10.0, 20.0],
            heading_drift_deg_s: [10.0, 40.0],
            kinds: vec![MotionKind::Insertion, MotionKind::Withdrawal, MotionKind::Mixed],
            allow_any_speed: false,
        }
    }
}

/// Where and how the tip starts, and which sequences are acceptable.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct PlacementConfig {
    /// Range of `|a_entry|` at the first frame, degrees.
    pub entry_abs_deg: [f64; 2],
    pub rotation_deg: [f64; 2],
    /// Initial passing-point depth as a fraction of `max_depth_mm`.
    pub depth_fraction: [f64; 2],
    /// Initial passing-point polar angle as a fraction of the half span.
    pub lateral_fraction: f64,
    /// Signed distance from the tip to the plane along the heading, mm.
    pub tip_offset_mm: [f64; 2],
    /// `|a_entry|` must stay within this range on every frame.
    pub entry_limits_deg: [f64; 2],
    /// Resample scenes until every frame's tip is inside the fan.
    pub require_visible: bool,
    /// Resample scenes whose passing point jumps more than
    /// `step / mm_per_px + 2` px between frames.
    pub enforce_continuity: bool,
    pub max_attempts: usize,
}

impl Default for PlacementConfig {
    fn default() -> Self {
        Self {
            entry_abs_deg: [20.0, 65.0],
            rotation_deg: [-150.0, 150.0],
            depth_fraction: [0.3, 0.75],
            lateral_fraction: 0.6,
            tip_offset_mm: [0.0, 15.0],
            entry_limits_deg: [10.0, 80.0],
            require_visible: true,
            enforce_continuity: true,
            max_attempts: 1000,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SplitSpec {
    pub count: usize,
    /// Trajectory seeds used are `trajectory_seed_start .. + count`.
    pub trajectory_seed_start: u64,
    /// Procedural backgrounds use seeds `background_seed_start .. + count`.
    pub background_seed_start: u64,
    /// Directory of background PNGs for `image_pool` mode.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub background_pool: Option<PathBuf>,
}

impl SplitSpec {
    pub fn trajectory_seeds(&self) -> std::ops::Range<u64> {
        self.trajectory_seed_start..self.trajectory_seed_start + self.count as u64
    }

    pub fn background_seeds(&self) -> std::ops::Range<u64> {
        self.background_seed_start..self.background_seed_start + self.count as u64
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SplitsConfig {
    pub train: SplitSpec,
    pub val: SplitSpec,
    pub test: SplitSpec,
}

impl Default for SplitsConfig {
    fn default() -> Self {
        Self::with_counts(200, 16, 24)
    }
}

impl SplitsConfig {
    /// Consecutive, non-overlapping seed blocks for the three splits.
    pub fn with_counts(train: usize, val: usize, test: usize) -> Self {
        let spec = |start: u64, count: usize| SplitSpec {
            count,
            trajectory_seed_start: start,
            background_seed_start: start,
            background_pool: None,
        };
        Self {
            train: spec(0, train),
            val: spec(1_000_000, val),
            test: spec(2_000_000, test),
        }
    }

    pub fn iter(&self) -> impl Iterator<Item = (&'static str, &SplitSpec)> {
        [("train", &self.train), ("val", &self.val), ("test", &self.test)].into_iter()
    }
}

/// Everything needed to generate a dataset.
#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SceneConfig {
    pub fan: FanGeometry,
    pub tip: TipAppearanceModel,
    pub background: BackgroundModel,
    pub motion: MotionConfig,
    pub placement: PlacementConfig,
    pub splits: SplitsConfig,
}

impl SceneConfig {
    /// The CPU-scale benchmark: a 64×64 fan with 0.5 mm pixels, low-contrast
    /// speckle that decorrelates every frame, and enough heading drift that
    /// the passing point keeps moving.
    pub fn desk() -> Self {
        let defaults = Self::default();
        Self {
            fan: FanGeometry {
                angular_span_deg: 90.0,
                max_depth_mm: 32.0,
                image_width: 64,
                image_height: 64,
                mm_per_px: 0.5,
            },
            motion: MotionConfig {
                heading_drift_deg_s: [60.0, 120.0],
                ..defaults.motion
            },
            background: BackgroundModel {
                contrast: 0.2,
                decorrelation: 1.0,
                ..defaults.background
            },
            ..defaults
        }
    }

    pub fn validate(&self) -> Result<(), SimulationError> {
        self.fan.validate()?;
        self.tip.validate()?;
        let bad = |m: &str| Err(SimulationError::InvalidConfig(m.to_string()));
        let m = &self.motion;
        if m.frames_per_sequence < MotionProfile::MIN_FRAMES {
            return bad("motion.frames_per_sequence must be at least 6");
        }
        if m.kinds.is_empty() {
            return bad("motion.kinds must not be empty");
        }
        for (name, r) in [
            ("motion.speed_mm_s", m.speed_mm_s),
            ("motion.heading_drift_deg_s", m.heading_drift_deg_s),
            ("placement.entry_abs_deg", self.placement.entry_abs_deg),
            ("placement.rotation_deg", self.placement.rotation_deg),
            ("placement.depth_fraction", self.placement.depth_fraction),
            ("placement.tip_offset_mm", self.placement.tip_offset_mm),
            ("placement.entry_limits_deg", self.placement.entry_limits_deg),
        ] {
            if !(r[0] <= r[1] && r[0].is_finite() && r[1].is_finite()) {
                return Err(SimulationError::InvalidConfig(format!(
                    "{name} must be an ordered [lo, hi] pair"
                )));
            }
        }
        if !m.allow_any_speed && (m.speed_mm_s[0] < SPEED_BAND_MM_S.0 || m.speed_mm_s[1] > SPEED_BAND_MM_S.1) {
            return bad("motion.speed_mm_s must lie within [10, 20] unless allow_any_speed is set");
        }
        if m.heading_drift_deg_s[0] < 0.0 {
            return bad("motion.heading_drift_deg_s must be non-negative");
        }
        if !(m.frame_rate_hz > 0.0) {
            return bad("motion.frame_rate_hz must be positive");
        }
        let p = &self.placement;
        if p.entry_abs_deg[0] < 0.0 || p.entry_abs_deg[1] >= 90.0 {
            return bad("placement.entry_abs_deg must lie within [0, 90)");
        }
        if p.max_attempts == 0 {
            return bad("placement.max_attempts must be positive");
        }
        for (name, s) in self.splits.iter() {
            if s.count == 0 {
                return Err(SimulationError::InvalidConfig(format!("split {name} is empty")));
            }
        }
        if self.background.grain_px <= 0.0 || self.background.contrast < 0.0 || self.background.temporal_noise_std < 0.0
        {
            return bad("background.grain_px must be positive; contrast and noise non-negative");
        }
        if !(0.0..=1.0).contains(&self.background.decorrelation) {
            return bad("background.decorrelation must lie in [0, 1]");
        }
        self.check_split_overlap()
    }

    /// Trajectory seeds must be pairwise disjoint; background seeds and pools
    /// must not be shared between train and test.
    pub fn check_split_overlap(&self) -> Result<(), SimulationError> {
        let splits: Vec<_> = self.splits.iter().collect();
        for i in 0..splits.len() {
            for j in i + 1..splits.len() {
                let (a, sa) = splits[i];
                let (b, sb) = splits[j];
                if let Some(seed) = first_shared(sa.trajectory_seeds(), sb.trajectory_seeds()) {
                    return Err(SimulationError::SplitOverlap(format!(
                        "trajectory seed {seed} used by both {a} and {b}"
                    )));
                }
            }
        }
        let (train, test) = (&self.splits.train, &self.splits.test);
        match self.background.mode {
            BackgroundMode::ProceduralSpeckle => {
                if let Some(seed) = first_shared(train.background_seeds(), test.background_seeds()) {
                    return Err(SimulationError::SplitOverlap(format!(
                        "background seed {seed} used by both train and test"
                    )));
                }
            }
            BackgroundMode::ImagePool => {
                for (name, s) in self.splits.iter() {
                    if s.background_pool.is_none() {
                        return Err(SimulationError::InvalidConfig(format!(
                            "split {name} needs background_pool in image_pool mode"
                        )));
                    }
                }
                // Content-level disjointness is checked once the pools are read.
            }
        }
        Ok(())
    }
}

fn first_shared(a: std::ops::Range<u64>, b: std::ops::Range<u64>) -> Option<u64> {
    let lo = a.start.max(b.start);
    (lo < a.end.min(b.end)).then_some(lo)
}
