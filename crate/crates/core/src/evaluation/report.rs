use std::fs;
use std::path::{Path, PathBuf};

use image::{Rgb, RgbImage};
use serde::{Deserialize, Serialize};

use super::{EvalError, MetricsReport, PriorSource, RolloutResult, ThroughputReport, TipState};
use crate::dataset::LoadedSequence;
use crate::imaging::{GrayFrame, ImageIoError};

pub const REPORT_SCHEMA_VERSION: u32 = 1;
pub const REPORT_FILE: &str = "report.json";
/// Ground-truth box and heading in overlays.
pub const TARGET_COLOR: [u8; 3] = [31, 119, 180];
/// Predicted box and heading in overlays.
pub const PREDICTION_COLOR: [u8; 3] = [255, 127, 14];

const MIN_OVERLAY_SIDE: usize = 256;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvaluationReport {
    pub schema_version: u32,
    pub dataset_root: Option<PathBuf>,
    pub split: String,
    pub checkpoint: Option<PathBuf>,
    pub mode: PriorSource,
    pub metrics: MetricsReport,
    /// The prior-copy baseline under the same mode, when computed.
    pub baseline: Option<MetricsReport>,
    pub throughput: Option<ThroughputReport>,
    pub rollouts: Vec<RolloutResult>,
}

/// Writes `report.json` and one overlay per sequence (at most
/// `max_overlays`) into `out_dir`. Returns the overlay paths.
pub fn write_report(
    report: &EvaluationReport,
    sequences: &[LoadedSequence],
    out_dir: &Path,
    max_overlays: usize,
) -> Result<Vec<PathBuf>, EvalError> {
    let io = |path: &Path| {
        let path = path.to_path_buf();
        move |source| EvalError::Io { path, source }
    };
    fs::create_dir_all(out_dir).map_err(io(out_dir))?;
    let path = out_dir.join(REPORT_FILE);
    let json = serde_json::to_string_pretty(report).expect("report serialises");
    fs::write(&path, json).map_err(io(&path))?;
    render_overlays(report, sequences, out_dir, max_overlays)
}

pub fn load_report(path: &Path) -> Result<EvaluationReport, EvalError> {
    let text = fs::read_to_string(path).map_err(|source| EvalError::Io {
        path: path.to_path_buf(),
        source,
    })?;
    let report: EvaluationReport = serde_json::from_str(&text).map_err(|e| EvalError::Parse {
        path: path.to_path_buf(),
        message: e.to_string(),
    })?;
    if report.schema_version != REPORT_SCHEMA_VERSION {
        return Err(EvalError::Parse {
            path: path.to_path_buf(),
            message: format!("unsupported report schema {}", report.schema_version),
        });
    }
    Ok(report)
}

/// Draws target and prediction over the last evaluated frame of each
/// rollout whose sequence is in `sequences`.
pub fn render_overlays(
    report: &EvaluationReport,
    sequences: &[LoadedSequence],
    out_dir: &Path,
    max_overlays: usize,
) -> Result<Vec<PathBuf>, EvalError> {
    let mut written = Vec::new();
    for r in report.rollouts.iter().take(max_overlays) {
        let Some(seq) = sequences.iter().find(|s| s.sequence_id == r.sequence_id) else {
            continue;
        };
        let Some(fp) = r.frames.iter().rev().find(|f| f.target.is_some()).or(r.frames.last()) else {
            continue;
        };
        let Some(pos) = seq.annotations.iter().position(|a| a.frame_index == fp.frame_index) else {
            continue;
        };
        let img = overlay(&seq.frames[pos], fp.target.as_ref(), &fp.prediction);
        let path = out_dir.join(format!("overlay_{}.png", r.sequence_id));
        img.save(&path).map_err(|source| {
            EvalError::Image(ImageIoError::Codec {
                path: path.display().to_string(),
                source,
            })
        })?;
        written.push(path);
    }
    Ok(written)
}

/// Upscaled RGB rendering of a frame with box outlines and heading lines.
pub fn overlay(frame: &GrayFrame, target: Option<&TipState>, prediction: &TipState) -> RgbImage {
    let scale = MIN_OVERLAY_SIDE.div_ceil(frame.width.min(frame.height).max(1)).max(1);
    let (w, h) = (frame.width * scale, frame.height * scale);
    let mut img = RgbImage::from_fn(w as u32, h as u32, |x, y| {
        let v = (frame.get(x as usize / scale, y as usize / scale).clamp(0.0, 1.0) * 255.0).round() as u8;
        Rgb([v, v, v])
    });
    if let Some(t) = target {
        draw_state(&mut img, t, TARGET_COLOR);
    }
    draw_state(&mut img, prediction, PREDICTION_COLOR);
    img
}

fn draw_state(img: &mut RgbImage, s: &TipState, color: [u8; 3]) {
    let (w, h) = (img.width() as f64, img.height() as f64);
    let b = &s.bbox;
    let (x0, y0, x1, y1) = (b.x_min * w, b.y_min * h, b.x_max * w, b.y_max * h);
    for (a, c) in [
        ((x0, y0), (x1, y0)),
        ((x1, y0), (x1, y1)),
        ((x1, y1), (x0, y1)),
        ((x0, y1), (x0, y0)),
    ] {
        line(img, a, c, color);
    }
    // Columns follow the lateral axis and rows the depth axis.
    let (cx, cy) = ((x0 + x1) / 2.0, (y0 + y1) / 2.0);
    let len = 0.2 * w.min(h) * s.angle.a_entry.to_radians().cos();
    let r = s.angle.a_rot.to_radians();
    line(img, (cx, cy), (cx + len * r.sin(), cy + len * r.cos()), color);
}

fn line(img: &mut RgbImage, a: (f64, f64), b: (f64, f64), color: [u8; 3]) {
    let steps = (b.0 - a.0).abs().max((b.1 - a.1).abs()).ceil().max(1.0) as usize;
    for i in 0..=steps {
        let t = i as f64 / steps as f64;
        let (x, y) = (a.0 + t * (b.0 - a.0), a.1 + t * (b.1 - a.1));
        for (dx, dy) in [(0, 0), (1, 0), (0, 1)] {
            let (px, py) = (x.round() as i64 + dx, y.round() as i64 + dy);
            if px >= 0 && py >= 0 && (px as u32) < img.width() && (py as u32) < img.height() {
                img.put_pixel(px as u32, py as u32, Rgb(color));
            }
        }
    }
}
