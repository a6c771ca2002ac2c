use std::fs;
use std::io::Write;
use std::path::Path;

use icetrack::config::Config;
use icetrack::dataset::{canonical_hash, file_hash, load_sequence_dir, load_split, verify_integrity, MANIFEST_FILE};
use icetrack::evaluation::{
    load_report, metrics, render_overlays, rollout, rollout_all, throughput, write_report, Bootstrap, EvaluationReport,
    Predictor, PriorCopy, PriorSource, REPORT_SCHEMA_VERSION,
};
use icetrack::model::load_checkpoint;
use icetrack::simulator::generate_dataset;
use icetrack::training::train;
use serde_json::json;

use crate::failure::{Failure, EXIT_USAGE};
use crate::{BootstrapArg, Command};

pub fn dispatch(command: Command, mut config: Config, seed: Option<u64>) -> Result<(), Failure> {
    match command {
        Command::Simulate { out } => simulate(&config, seed.unwrap_or(config.seed), &out),
        Command::Verify { data } => verify(&data),
        Command::Train { data, out } => {
            if let Some(s) = seed {
                config.train.seed = s;
            }
            train_cmd(&config, &data, &out)
        }
        Command::Eval {
            checkpoint,
            data,
            split,
            out,
            bootstrap,
            teacher_forced,
            bench,
        } => {
            let split = split.unwrap_or_else(|| config.eval.split.clone());
            let mode = prior_source(&config, bootstrap, teacher_forced);
            eval(&config, &checkpoint, &data, &split, &out, mode, bench)
        }
        Command::Infer {
            checkpoint,
            sequence,
            out,
            bootstrap,
        } => infer(&config, &checkpoint, &sequence, out.as_deref(), bootstrap),
        Command::Bench {
            checkpoint,
            warmup,
            iters,
            runs,
        } => bench(
            &config,
            &checkpoint,
            warmup.unwrap_or(config.eval.bench_warmup),
            iters.unwrap_or(config.eval.bench_iters),
            runs.unwrap_or(config.eval.bench_runs),
        ),
        Command::Plot { report, data, out, max } => plot(&report, data.as_deref(), &out, max),
    }
}

fn prior_source(config: &Config, bootstrap: Option<BootstrapArg>, teacher_forced: bool) -> PriorSource {
    if teacher_forced || config.eval.teacher_forced {
        return PriorSource::TeacherForced;
    }
    PriorSource::Autoregressive(bootstrap_of(config, bootstrap))
}

fn bootstrap_of(config: &Config, arg: Option<BootstrapArg>) -> Bootstrap {
    match arg {
        Some(BootstrapArg::Gt) => Bootstrap::GroundTruthFirst,
        Some(BootstrapArg::Zeros) => Bootstrap::Zeros,
        None => config.eval.bootstrap,
    }
}

fn simulate(config: &Config, seed: u64, out: &Path) -> Result<(), Failure> {
    let manifest = generate_dataset(&config.simulation, seed, out)?;
    let hash = file_hash(&out.join(MANIFEST_FILE))?;
    for s in &manifest.splits {
        println!("{:<5} {} sequences", s.name, s.count);
    }
    println!("config_hash {}", manifest.config_hash);
    println!("manifest_sha256 {hash}");
    Ok(())
}

fn verify(data: &Path) -> Result<(), Failure> {
    let manifest = verify_integrity(data)?;
    let total: usize = manifest.splits.iter().map(|s| s.count).sum();
    println!("ok: {total} sequences, config_hash {}", manifest.config_hash);
    Ok(())
}

fn train_cmd(config: &Config, data: &Path, out: &Path) -> Result<(), Failure> {
    fs::create_dir_all(out).map_err(|e| Failure::io(out, e))?;
    let path = out.join("config.toml");
    fs::write(&path, config.to_toml()).map_err(|e| Failure::io(&path, e))?;
    let outcome = train(data, &config.model, &config.train, Some(out))?;
    let log = &outcome.log;
    println!(
        "best epoch {} loss {:.6} (epoch 0: {:.6})",
        log.best_epoch,
        log.best_loss,
        log.initial_loss()
    );
    println!("checkpoint {}", out.join(icetrack::training::BEST_CHECKPOINT).display());
    Ok(())
}

fn eval(
    config: &Config,
    checkpoint: &Path,
    data: &Path,
    split: &str,
    out: &Path,
    mode: PriorSource,
    bench: bool,
) -> Result<(), Failure> {
    let ck = load_checkpoint(checkpoint)?;
    let model = ck.model;
    let sequences = load_split(data, split)?;
    let rollouts = rollout_all(&model, &sequences, mode)?;
    let mut report_metrics = metrics(&rollouts)?;
    report_metrics.config_hash = Some(canonical_hash(model.config()));
    let baseline_rollouts = rollout_all(
        &PriorCopy {
            window_len: model.window_len(),
        },
        &sequences,
        mode,
    )?;
    let baseline = metrics(&baseline_rollouts)?;
    let bench_report = if bench {
        let r = throughput(
            &model,
            &config.simulation.fan,
            config.eval.bench_warmup,
            config.eval.bench_iters,
        )?;
        report_metrics.throughput_hz = Some(r.hz);
        Some(r)
    } else {
        None
    };
    let report = EvaluationReport {
        schema_version: REPORT_SCHEMA_VERSION,
        dataset_root: Some(data.to_path_buf()),
        split: split.to_string(),
        checkpoint: Some(checkpoint.to_path_buf()),
        mode,
        metrics: report_metrics,
        baseline: Some(baseline),
        throughput: bench_report,
        rollouts,
    };
    let overlays = write_report(&report, &sequences, out, config.eval.max_overlays)?;
    let m = &report.metrics;
    let b = report.baseline.as_ref().expect("set above");
    println!("frames     {}", m.n_frames);
    println!(
        "entry_err  {:.2} ± {:.2} deg (prior copy {:.2})",
        m.entry_err_mean, m.entry_err_std, b.entry_err_mean
    );
    println!(
        "rot_err    {:.2} ± {:.2} deg (prior copy {:.2})",
        m.rot_err_mean, m.rot_err_std, b.rot_err_mean
    );
    println!("iou        {:.3} (prior copy {:.3})", m.iou_mean, b.iou_mean);
    if let Some(hz) = m.throughput_hz {
        println!("throughput {hz:.1} Hz");
    }
    println!("report     {}", out.join(icetrack::evaluation::REPORT_FILE).display());
    println!("overlays   {}", overlays.len());
    Ok(())
}

fn infer(
    config: &Config,
    checkpoint: &Path,
    sequence: &Path,
    out: Option<&Path>,
    bootstrap: Option<BootstrapArg>,
) -> Result<(), Failure> {
    let model = load_checkpoint(checkpoint)?.model;
    let seq = load_sequence_dir(sequence)?;
    let result = rollout(
        &model,
        &seq,
        PriorSource::Autoregressive(bootstrap_of(config, bootstrap)),
    )?;
    let mut text = String::new();
    for f in &result.frames {
        let line = json!({
            "sequence_id": result.sequence_id,
            "frame_index": f.frame_index,
            "box": f.prediction.bbox,
            "angle": f.prediction.angle,
        });
        text.push_str(&line.to_string());
        text.push('\n');
    }
    match out {
        Some(path) => fs::write(path, text).map_err(|e| Failure::io(path, e)),
        None => std::io::stdout()
            .write_all(text.as_bytes())
            .map_err(|e| Failure::io(Path::new("<stdout>"), e)),
    }
}

fn bench(config: &Config, checkpoint: &Path, warmup: usize, iters: usize, runs: usize) -> Result<(), Failure> {
    if runs == 0 {
        return Err(Failure::new(EXIT_USAGE, "--runs must be at least 1"));
    }
    let model = load_checkpoint(checkpoint)?.model;
    let mut rates = Vec::with_capacity(runs);
    for run in 0..runs {
        let r = throughput(&model, &config.simulation.fan, warmup, iters)?;
        println!(
            "run {run}: {:.1} Hz  p50 {:.2} ms  p95 {:.2} ms",
            r.hz, r.p50_ms, r.p95_ms
        );
        rates.push(r.hz);
    }
    let mean = rates.iter().sum::<f64>() / runs as f64;
    let std = (rates.iter().map(|h| (h - mean).powi(2)).sum::<f64>() / runs as f64).sqrt();
    println!("mean {:.1} Hz  cv {:.3}", mean, std / mean);
    Ok(())
}

fn plot(report_path: &Path, data: Option<&Path>, out: &Path, max: Option<usize>) -> Result<(), Failure> {
    let report = load_report(report_path)?;
    let root = data
        .map(Path::to_path_buf)
        .or_else(|| report.dataset_root.clone())
        .ok_or_else(|| Failure::new(EXIT_USAGE, "the report names no dataset; pass --data"))?;
    let sequences = load_split(&root, &report.split)?;
    fs::create_dir_all(out).map_err(|e| Failure::io(out, e))?;
    let written = render_overlays(&report, &sequences, out, max.unwrap_or(report.rollouts.len()))?;
    println!("{} overlays in {}", written.len(), out.display());
    Ok(())
}
