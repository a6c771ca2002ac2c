use std::sync::Arc;
use std::time::Instant;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::EvalError;
use crate::geometry::FanGeometry;
use crate::imaging::GrayFrame;
use crate::model::{Model, ModelInput};

pub const MIN_BENCH_ITERS: usize = 30;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ThroughputReport {
    pub hz: f64,
    pub mean_latency_ms: f64,
    pub p50_ms: f64,
    pub p95_ms: f64,
    pub n_warmup: usize,
    pub n_iters: usize,
    pub total_s: f64,
}

fn percentile(sorted: &[f64], q: f64) -> f64 {
    let rank = ((q * sorted.len() as f64).ceil() as usize).clamp(1, sorted.len());
    sorted[rank - 1]
}

/// Steady-state latency of one tracking step: preprocessing the newest
/// fan-sized frame and a forward pass over the window. Inputs are seeded,
/// and warmup iterations are excluded from the statistics.
pub fn throughput(
    model: &Model,
    fan: &FanGeometry,
    n_warmup: usize,
    n_iters: usize,
) -> Result<ThroughputReport, EvalError> {
    if n_iters < MIN_BENCH_ITERS {
        return Err(EvalError::InvalidInput(format!(
            "n_iters must be at least {MIN_BENCH_ITERS}, got {n_iters}"
        )));
    }
    let n = model.config().n_frames;
    let mut rng = ChaCha8Rng::seed_from_u64(0);
    let raw: Vec<GrayFrame> = (0..n + 1)
        .map(|_| {
            let mut f = GrayFrame::zeros(fan.image_width as usize, fan.image_height as usize);
            f.data.iter_mut().for_each(|v| *v = rng.random_range(0.0..1.0));
            f
        })
        .collect();
    let mut window: Vec<Arc<_>> = raw[..n].iter().map(|f| model.preprocess(f)).collect();
    let prior_angle = vec![0.0; model.config().angle_dim()];

    let mut step = |i: usize| -> Result<f64, EvalError> {
        let start = Instant::now();
        window.rotate_left(1);
        window[n - 1] = model.preprocess(&raw[i % raw.len()]);
        let input = ModelInput {
            images: window.clone(),
            prior_box: [-0.1, -0.1, 0.1, 0.1],
            prior_angle: prior_angle.clone(),
        };
        std::hint::black_box(model.forward(&input)?);
        Ok(start.elapsed().as_secs_f64())
    };
    for i in 0..n_warmup {
        step(i)?;
    }
    let mut latencies = Vec::with_capacity(n_iters);
    let start = Instant::now();
    for i in 0..n_iters {
        latencies.push(step(n_warmup + i)?);
    }
    let total_s = start.elapsed().as_secs_f64();
    let mean = latencies.iter().sum::<f64>() / n_iters as f64;
    latencies.sort_by(f64::total_cmp);
    Ok(ThroughputReport {
        hz: n_iters as f64 / total_s,
        mean_latency_ms: mean * 1e3,
        p50_ms: percentile(&latencies, 0.5) * 1e3,
        p95_ms: percentile(&latencies, 0.95) * 1e3,
        n_warmup,
        n_iters,
        total_s,
    })
}
