use std::fs::{self, File};
use std::io::Write;
use std::path::Path;
use std::time::Instant;

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::optim::{clip_grad_norm, Adam};
use super::samples::{build_samples, TrainingSample};
use super::{TrainConfig, TrainingError};
use crate::dataset::{canonical_hash, load_split, verify_integrity, LoadedSequence};
use crate::evaluation::{metrics, rollout_all, MetricsReport, PriorSource};
use crate::model::{load_checkpoint, loss, save_checkpoint, GroupKind, Model, ModelConfig, ModelError, ModelInput};
use crate::simulator::derive_seed;

pub const TRAIN_LOG_FILE: &str = "train_log.jsonl";
pub const BEST_CHECKPOINT: &str = "best.ckpt";
pub const LAST_CHECKPOINT: &str = "last.ckpt";

const SHUFFLE_STREAM: u64 = 0x5348;
const SAMPLE_STREAM: u64 = 0x534d;
const VALIDATION_STREAM: u64 = 0x5641;

/// One line of the training log. Epoch 0 is the untrained model.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EpochRecord {
    pub epoch: usize,
    pub train_loss: f64,
    pub val_loss: Option<f64>,
    pub lr: f64,
    pub wall_clock_s: f64,
    pub seed: u64,
    pub config_hash: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainLog {
    pub seed: u64,
    pub config_hash: String,
    pub records: Vec<EpochRecord>,
    pub best_epoch: usize,
    pub best_loss: f64,
    pub stopped_early: bool,
}

impl TrainLog {
    /// Selection loss of a record: validation loss when available.
    fn selection(r: &EpochRecord) -> f64 {
        r.val_loss.unwrap_or(r.train_loss)
    }

    pub fn initial_loss(&self) -> f64 {
        Self::selection(&self.records[0])
    }
}

#[derive(Debug, Clone)]
pub struct TrainOutcome {
    pub best: Model,
    pub last: Model,
    pub log: TrainLog,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ValidationReport {
    pub n_windows: usize,
    pub loss: f64,
    pub metrics: MetricsReport,
}

/// Mean teacher-forced loss over `samples`.
pub fn batch_loss(model: &Model, samples: &[TrainingSample]) -> Result<f64, ModelError> {
    let inputs: Vec<ModelInput> = samples.iter().map(|s| s.input.clone()).collect();
    let preds = model.forward_batch(&inputs)?;
    let mut total = 0.0;
    for (p, s) in preds.iter().zip(samples) {
        total += loss(p, &s.target)?;
    }
    Ok(total / samples.len().max(1) as f64)
}

fn io_err(path: &Path) -> impl FnOnce(std::io::Error) -> TrainingError + '_ {
    move |source| TrainingError::Io {
        path: path.to_path_buf(),
        source,
    }
}

/// The prior a training step sees: ground truth, optionally replaced by the
/// model's previous prediction and perturbed by Gaussian noise.
fn training_input(
    model: &Model,
    samples: &[TrainingSample],
    i: usize,
    config: &TrainConfig,
    rng: &mut ChaCha8Rng,
) -> Result<ModelInput, ModelError> {
    let s = &samples[i];
    let mut input = s.input.clone();
    if config.scheduled_sampling > 0.0 && rng.random_bool(config.scheduled_sampling) {
        if let Some(prev) = s.previous {
            let p = model.forward(&samples[prev].input)?;
            input.prior_box = p.bbox;
            input.prior_angle = p.angle;
        }
    }
    jitter_prior(&mut input, config.prior_jitter, rng);
    Ok(input)
}

fn jitter_prior(input: &mut ModelInput, std: f64, rng: &mut ChaCha8Rng) {
    if std > 0.0 {
        let noise = Normal::new(0.0, std).expect("finite std");
        input.prior_box.iter_mut().for_each(|v| *v += noise.sample(rng));
        input.prior_angle.iter_mut().for_each(|v| *v += noise.sample(rng));
    }
}

/// Validation windows with the training prior perturbation applied once.
/// The noise is fixed across runs and epochs, so losses stay comparable,
/// and it makes the validation loss reward correcting a wrong prior rather
/// than copying a correct one.
fn perturbed_validation(val: &[TrainingSample], std: f64) -> Vec<TrainingSample> {
    val.iter()
        .enumerate()
        .map(|(i, s)| {
            let mut s = s.clone();
            jitter_prior(
                &mut s.input,
                std,
                &mut ChaCha8Rng::seed_from_u64(derive_seed(0, VALIDATION_STREAM, i as u64)),
            );
            s
        })
        .collect()
}

/// Runs the optimisation loop. When `out_dir` is given, the log and
/// checkpoints are written there as training progresses.
pub fn fit(
    mut model: Model,
    train: &[TrainingSample],
    val: &[TrainingSample],
    config: &TrainConfig,
    out_dir: Option<&Path>,
) -> Result<TrainOutcome, TrainingError> {
    config.validate()?;
    if train.is_empty() {
        return Err(TrainingError::NoSamples);
    }
    let config_hash = canonical_hash(&(model.config(), config));
    let mut log_file = match out_dir {
        Some(dir) => {
            fs::create_dir_all(dir).map_err(io_err(dir))?;
            let path = dir.join(TRAIN_LOG_FILE);
            Some((File::create(&path).map_err(io_err(&path))?, path))
        }
        None => None,
    };
    let start = Instant::now();
    let n = model.n_params();
    let mut opt = Adam::new(n);
    let val = perturbed_validation(val, config.prior_jitter);
    let evaluate = |m: &Model| -> Result<Option<f64>, ModelError> {
        if val.is_empty() {
            Ok(None)
        } else {
            batch_loss(m, &val).map(Some)
        }
    };

    let mut records = Vec::with_capacity(config.epochs + 1);
    let mut record = EpochRecord {
        epoch: 0,
        train_loss: batch_loss(&model, train)?,
        val_loss: evaluate(&model)?,
        lr: 0.0,
        wall_clock_s: start.elapsed().as_secs_f64(),
        seed: config.seed,
        config_hash: config_hash.clone(),
    };
    let mut best = model.clone();
    let mut best_epoch = 0;
    let mut best_loss = TrainLog::selection(&record);
    let mut stopped_early = false;

    for epoch in 0..=config.epochs {
        if epoch > 0 {
            let lr = config.lr_schedule.at(config.lr, epoch - 1, config.epochs);
            let mut order: Vec<usize> = (0..train.len()).collect();
            order.shuffle(&mut ChaCha8Rng::seed_from_u64(derive_seed(
                config.seed,
                SHUFFLE_STREAM,
                epoch as u64,
            )));
            let mut total = 0.0;
            for (b, chunk) in order.chunks(config.batch_size).enumerate() {
                let scale = 1.0 / chunk.len() as f64;
                let base = (b * config.batch_size) as u64;
                let parts: Vec<Result<(f64, Vec<f64>), ModelError>> = chunk
                    .par_iter()
                    .enumerate()
                    .map(|(j, &i)| {
                        let seed = derive_seed(config.seed, SAMPLE_STREAM, ((epoch as u64) << 32) | (base + j as u64));
                        let mut rng = ChaCha8Rng::seed_from_u64(seed);
                        let input = training_input(&model, train, i, config, &mut rng)?;
                        let mut g = vec![0.0; n];
                        let l = model.loss_and_grad(&input, &train[i].target, scale, Some(rng.random()), &mut g)?;
                        Ok((l, g))
                    })
                    .collect();
                let mut grad = vec![0.0; n];
                let mut batch = 0.0;
                for part in parts {
                    let (l, g) = part?;
                    batch += l;
                    grad.iter_mut().zip(&g).for_each(|(a, b)| *a += b);
                }
                if !batch.is_finite() || grad.iter().any(|g| !g.is_finite()) {
                    return Err(TrainingError::NonFiniteLoss { epoch, batch: b });
                }
                total += batch;
                if config.encoder_frozen {
                    model.zero_group_grads(GroupKind::Encoder, &mut grad);
                }
                clip_grad_norm(&mut grad, config.grad_clip);
                opt.step(model.params_mut(), &grad, lr);
            }
            record = EpochRecord {
                epoch,
                train_loss: total / train.len() as f64,
                val_loss: evaluate(&model)?,
                lr,
                wall_clock_s: start.elapsed().as_secs_f64(),
                seed: config.seed,
                config_hash: config_hash.clone(),
            };
            if !record.train_loss.is_finite() || record.val_loss.is_some_and(|v| !v.is_finite()) {
                return Err(TrainingError::NonFiniteLoss { epoch, batch: 0 });
            }
        }
        log::info!(
            "epoch {:>3}  train {:.5}  val {}",
            record.epoch,
            record.train_loss,
            record.val_loss.map_or("-".into(), |v| format!("{v:.5}"))
        );
        if let Some((f, path)) = log_file.as_mut() {
            let line = serde_json::to_string(&record).expect("record serialises");
            writeln!(f, "{line}").map_err(io_err(path))?;
            f.flush().map_err(io_err(path))?;
        }
        let sel = TrainLog::selection(&record);
        let extra = serde_json::json!({ "loss": sel, "config_hash": config_hash });
        if epoch > 0 && sel < best_loss {
            best_loss = sel;
            best_epoch = epoch;
            best = model.clone();
            if let Some(dir) = out_dir {
                save_checkpoint(&dir.join(BEST_CHECKPOINT), &model, config.seed, epoch, extra.clone())?;
            }
        }
        if let Some(dir) = out_dir {
            if epoch == 0 {
                save_checkpoint(&dir.join(BEST_CHECKPOINT), &model, config.seed, 0, extra.clone())?;
            }
            if config.checkpoint_every > 0 && epoch > 0 && epoch % config.checkpoint_every == 0 {
                save_checkpoint(
                    &dir.join(format!("epoch_{epoch:04}.ckpt")),
                    &model,
                    config.seed,
                    epoch,
                    extra,
                )?;
            }
        }
        records.push(record.clone());
        if config.early_stop_patience > 0 && epoch - best_epoch >= config.early_stop_patience {
            stopped_early = epoch < config.epochs;
            break;
        }
    }
    if let Some(dir) = out_dir {
        let epoch = records.last().map_or(0, |r| r.epoch);
        save_checkpoint(
            &dir.join(LAST_CHECKPOINT),
            &model,
            config.seed,
            epoch,
            serde_json::Value::Null,
        )?;
    }
    Ok(TrainOutcome {
        best,
        last: model,
        log: TrainLog {
            seed: config.seed,
            config_hash,
            records,
            best_epoch,
            best_loss,
            stopped_early,
        },
    })
}

/// Trains on a dataset directory: checks integrity, builds train and
/// validation windows, and initialises the model from the training seed.
pub fn train(
    root: &Path,
    model_config: &ModelConfig,
    config: &TrainConfig,
    out_dir: Option<&Path>,
) -> Result<TrainOutcome, TrainingError> {
    config.validate()?;
    let mut model_config = model_config.clone();
    model_config.init_seed = config.seed;
    let model = Model::new(model_config.clone())?;
    verify_integrity(root)?;
    let train_set = build_samples(&load_split(root, "train")?, &model_config)?;
    let val_set = build_samples(&load_split(root, "val")?, &model_config)?;
    fit(model, &train_set, &val_set, config, out_dir)
}

/// Teacher-forced loss and metrics of a model on in-memory sequences.
pub fn validate_model(model: &Model, sequences: &[LoadedSequence]) -> Result<ValidationReport, TrainingError> {
    let samples = build_samples(sequences, model.config())?;
    if samples.is_empty() {
        return Err(TrainingError::NoSamples);
    }
    let results = rollout_all(model, sequences, PriorSource::TeacherForced)?;
    Ok(ValidationReport {
        n_windows: samples.len(),
        loss: batch_loss(model, &samples)?,
        metrics: metrics(&results)?,
    })
}

/// [`validate_model`] for a stored checkpoint and a dataset split.
pub fn validate(checkpoint: &Path, root: &Path, split: &str) -> Result<ValidationReport, TrainingError> {
    let ck = load_checkpoint(checkpoint)?;
    let sequences = load_split(root, split)?;
    validate_model(&ck.model, &sequences)
}
