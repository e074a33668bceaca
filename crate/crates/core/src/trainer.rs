//! Stabilization-curriculum training.
//!
//! Stage 0 is ordinary one-step supervised training: random 32-window
//! batches of real data, Adam steps until a validation batch's mean MSE
//! stays under threshold for `patience` consecutive checks. Each later
//! stage k trains on batches mixed 50/50 from real windows and windows
//! whose trailing k entries are the model's own rollout predictions, so
//! the network learns to stay stable on the data it will actually see
//! when iterated. Stages continue from the current weights with a fresh
//! optimizer state; augmented windows are regenerated every batch with
//! the current model.
//!
//! The channel scaler is fit on the training split only, so validation
//! trials never leak into the normalization statistics.

use std::time::Instant;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::mlp::adam::AdamState;
use crate::mlp::grad::{loss_and_gradients_into, GradWorkspace, Gradients, TrainBatch};
use crate::mlp::model::{Activation, ForwardBufs, MlpModel};
use crate::mlp::optimizer_step;
use crate::predictor::{check_model_shape, rollout_many};
use crate::seeds;
use crate::trajectory::{fit_scaler, ChannelMode, DatasetSplit, Side, Trial};

const NS_INIT: u64 = 11;
const NS_TRAIN_SAMPLER: u64 = 13;
const NS_VAL_SAMPLER: u64 = 14;

/// Attempt budget multiplier when prediction-augmented windows diverge
/// during batch assembly and must be redrawn.
const MAX_DRAW_FACTOR: usize = 64;

/// Trials split by dyad into the two sides of training.
#[derive(Clone, Debug)]
pub struct SplitDataset<'a> {
    pub train: Vec<&'a Trial>,
    pub validation: Vec<&'a Trial>,
}

impl<'a> SplitDataset<'a> {
    pub fn new(trials: &'a [Trial], split: &DatasetSplit) -> SplitDataset<'a> {
        let mut out = SplitDataset {
            train: Vec::new(),
            validation: Vec::new(),
        };
        for t in trials {
            match split.side_of(t.dyad_id) {
                Some(Side::Train) => out.train.push(t),
                Some(Side::Validation) => out.validation.push(t),
                None => {}
            }
        }
        out
    }

    pub fn from_parts(train: Vec<&'a Trial>, validation: Vec<&'a Trial>) -> SplitDataset<'a> {
        SplitDataset { train, validation }
    }
}

/// Per-stage stopping parameters. `k` is the number of predicted steps
/// appended to augmented windows in the running stage; the curriculum
/// driver keeps it non-decreasing.
#[derive(Clone, Debug)]
pub struct CurriculumState {
    pub k: usize,
    pub mse_threshold: f64,
    pub patience: usize,
    pub max_steps_per_stage: usize,
    pub batch_rows: usize,
    pub lr: f64,
}

impl CurriculumState {
    fn validate(&self) -> Result<()> {
        if self.batch_rows < 2 {
            return Err(Error::config("batch_rows must be at least 2"));
        }
        if self.patience == 0 || self.max_steps_per_stage == 0 {
            return Err(Error::config("patience and max_steps_per_stage must be positive"));
        }
        if !(self.lr.is_finite() && self.lr > 0.0) {
            return Err(Error::config(format!("invalid learning rate {}", self.lr)));
        }
        if !(self.mse_threshold > 0.0) {
            return Err(Error::config(format!(
                "invalid mse threshold {}",
                self.mse_threshold
            )));
        }
        Ok(())
    }
}

/// Everything a full curriculum run needs. `schedule` lists the stage k
/// values in increasing order starting at 0; the stopping threshold for
/// schedule index i is `mse_threshold · threshold_relax^i`.
#[derive(Clone, Debug, Serialize, Deserialize, PartialEq)]
#[serde(default, deny_unknown_fields)]
pub struct TrainConfig {
    pub hidden: Vec<usize>,
    pub history_len: usize,
    pub channels: ChannelMode,
    pub batch_rows: usize,
    pub lr: f64,
    pub schedule: Vec<usize>,
    pub mse_threshold: f64,
    pub threshold_relax: f64,
    pub patience: usize,
    pub max_steps_per_stage: usize,
}

impl Default for TrainConfig {
    fn default() -> TrainConfig {
        TrainConfig {
            hidden: vec![100, 100, 100],
            history_len: 150,
            channels: ChannelMode::Full,
            batch_rows: 32,
            lr: 1e-3,
            schedule: (0..=50).collect(),
            mse_threshold: 0.05,
            threshold_relax: 1.5,
            patience: 5,
            max_steps_per_stage: 20_000,
        }
    }
}

impl TrainConfig {
    pub fn from_toml(text: &str) -> Result<TrainConfig> {
        let config: TrainConfig =
            toml::from_str(text).map_err(|e| Error::config(format!("training config: {e}")))?;
        config.validate()?;
        Ok(config)
    }

    pub fn read(path: &std::path::Path) -> Result<TrainConfig> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        TrainConfig::from_toml(&text)
    }

    pub fn validate(&self) -> Result<()> {
        if self.history_len < 2 {
            return Err(Error::config("history_len must be at least 2"));
        }
        if self.schedule.is_empty() {
            return Err(Error::config("curriculum schedule is empty"));
        }
        if self.schedule[0] != 0 {
            return Err(Error::config("curriculum schedule must start at k = 0"));
        }
        if !self.schedule.windows(2).all(|w| w[0] < w[1]) {
            return Err(Error::config("curriculum schedule must be strictly increasing"));
        }
        let last = *self.schedule.last().expect("non-empty");
        if last > 50 {
            return Err(Error::config(format!("curriculum stage k = {last} exceeds 50")));
        }
        if last >= self.history_len {
            return Err(Error::config(format!(
                "curriculum stage k = {last} does not fit a {}-sample window",
                self.history_len
            )));
        }
        if !(self.threshold_relax >= 1.0 && self.threshold_relax.is_finite()) {
            return Err(Error::config(format!(
                "invalid threshold_relax {}",
                self.threshold_relax
            )));
        }
        self.state_for(0).validate()
    }

    /// Stopping parameters for the stage at a schedule index.
    fn state_for(&self, index: usize) -> CurriculumState {
        CurriculumState {
            k: self.schedule.get(index).copied().unwrap_or(0),
            mse_threshold: self.mse_threshold * self.threshold_relax.powi(index as i32),
            patience: self.patience,
            max_steps_per_stage: self.max_steps_per_stage,
            batch_rows: self.batch_rows,
            lr: self.lr,
        }
    }

    fn layer_dims(&self) -> Vec<usize> {
        let width = self.channels.width();
        let mut dims = vec![width * self.history_len];
        dims.extend_from_slice(&self.hidden);
        dims.push(width);
        dims
    }
}

/// One stage's outcome, in scaled (per-element mean) MSE units.
#[derive(Clone, Debug, Serialize, Deserialize, PartialEq)]
pub struct StageReport {
    pub k: usize,
    pub steps_run: usize,
    pub val_batches: usize,
    pub mse_threshold: f64,
    pub final_train_mse: f64,
    pub final_val_mse: f64,
    pub converged: bool,
    pub wall_seconds: f64,
}

#[derive(Clone, Debug, Default, Serialize, Deserialize, PartialEq)]
pub struct TrainingReport {
    pub stages: Vec<StageReport>,
    pub total_wall_seconds: f64,
}

impl TrainingReport {
    pub fn to_toml(&self) -> Result<String> {
        toml::to_string_pretty(self)
            .map_err(|e| Error::config(format!("cannot serialize training report: {e}")))
    }

    pub fn from_toml(text: &str) -> Result<TrainingReport> {
        toml::from_str(text).map_err(|e| Error::data(format!("bad training report: {e}")))
    }
}

/// Result of a curriculum run: the last converged model, the stage-0
/// snapshot (fresh runs only), and the per-stage report.
#[derive(Clone, Debug)]
pub struct CurriculumOutcome {
    pub model: MlpModel,
    pub stage0: Option<MlpModel>,
    pub report: TrainingReport,
}

/// Valid (trial, anchor) pairs for windows of `history_len + k + 1` real
/// samples, with cumulative counts for O(log n) uniform sampling.
struct AnchorSet<'a> {
    trials: &'a [&'a Trial],
    cum: Vec<usize>,
}

impl<'a> AnchorSet<'a> {
    fn build(trials: &'a [&'a Trial], history_len: usize, k: usize) -> AnchorSet<'a> {
        let mut cum = Vec::with_capacity(trials.len() + 1);
        let mut total = 0usize;
        cum.push(0);
        for t in trials {
            total += t.len().saturating_sub(history_len + k);
            cum.push(total);
        }
        AnchorSet { trials, cum }
    }

    fn total(&self) -> usize {
        *self.cum.last().expect("cum always has a leading zero")
    }

    fn pick(&self, rng: &mut ChaCha8Rng) -> (usize, usize) {
        let idx = rng.gen_range(0..self.total());
        let trial = self.cum.partition_point(|&c| c <= idx) - 1;
        (trial, idx - self.cum[trial])
    }
}

/// Where one batch row came from; kept alongside the batch so tests can
/// reconstruct rows independently.
#[derive(Clone, Copy, Debug, PartialEq)]
struct RowPlan {
    trial: usize,
    anchor: usize,
    augmented: bool,
}

/// Draw one training batch: real-only rows first, then (for k > 0) an
/// equal count of prediction-augmented rows. An augmented row takes the
/// 150 real samples starting at its anchor, rolls the model k steps, and
/// forms the input from the last 150−k real samples plus those k
/// predictions; the target is the true sample after the window. Diverging
/// rollouts are redrawn, within a bounded attempt budget.
fn assemble_batch(
    model: &MlpModel,
    real: &AnchorSet,
    augmented: Option<&AnchorSet>,
    k: usize,
    rows: usize,
    rng: &mut ChaCha8Rng,
) -> Result<(TrainBatch, Vec<RowPlan>)> {
    let history_len = model.history_len().expect("shape checked by the stage");
    let width = model.channels.width();
    let in_dim = model.in_dim();
    let n_aug = if augmented.is_some() { rows / 2 } else { 0 };
    let n_real = rows - n_aug;

    let mut inputs = vec![0.0; rows * in_dim];
    let mut targets = vec![0.0; rows * width];
    let mut plans = Vec::with_capacity(rows);

    for r in 0..n_real {
        let (ti, a) = real.pick(rng);
        let t = real.trials[ti];
        let row = &mut inputs[r * in_dim..(r + 1) * in_dim];
        for j in 0..history_len {
            model.scaler.scale_into(
                t.samples[a + j],
                model.channels,
                &mut row[j * width..(j + 1) * width],
            );
        }
        model.scaler.scale_into(
            t.samples[a + history_len],
            model.channels,
            &mut targets[r * width..(r + 1) * width],
        );
        plans.push(RowPlan { trial: ti, anchor: a, augmented: false });
    }

    if let Some(aug) = augmented {
        let mut built = 0;
        let mut attempts = 0;
        while built < n_aug {
            let need = n_aug - built;
            attempts += need;
            if attempts > MAX_DRAW_FACTOR * n_aug {
                return Err(Error::numerical(format!(
                    "stage {k}: prediction-augmented windows keep diverging"
                )));
            }
            let picks: Vec<(usize, usize)> = (0..need).map(|_| aug.pick(rng)).collect();
            let histories: Vec<&[crate::trajectory::Sample]> = picks
                .iter()
                .map(|&(ti, a)| &aug.trials[ti].samples[a..a + history_len])
                .collect();
            for (&(ti, a), rolled) in picks.iter().zip(rollout_many(model, &histories, k)?) {
                let Ok(forecast) = rolled else { continue };
                let r = n_real + built;
                let t = aug.trials[ti];
                let row = &mut inputs[r * in_dim..(r + 1) * in_dim];
                for j in 0..history_len - k {
                    model.scaler.scale_into(
                        t.samples[a + k + j],
                        model.channels,
                        &mut row[j * width..(j + 1) * width],
                    );
                }
                for (j, &pred) in forecast.steps.iter().enumerate() {
                    let at = history_len - k + j;
                    model.scaler.scale_into(
                        pred,
                        model.channels,
                        &mut row[at * width..(at + 1) * width],
                    );
                }
                model.scaler.scale_into(
                    t.samples[a + history_len + k],
                    model.channels,
                    &mut targets[r * width..(r + 1) * width],
                );
                plans.push(RowPlan { trial: ti, anchor: a, augmented: true });
                built += 1;
            }
        }
    }

    Ok((TrainBatch { inputs, targets, rows }, plans))
}

/// Forward-only mean-per-element MSE of a batch.
fn batch_mean_mse(model: &MlpModel, batch: &TrainBatch, bufs: &mut ForwardBufs) -> Result<f64> {
    batch.validate(model)?;
    bufs.input_mut()[..batch.inputs.len()].copy_from_slice(&batch.inputs);
    model.forward_batch_into(batch.rows, bufs);
    let preds = bufs.output(batch.rows);
    let mut sum = 0.0;
    for (p, t) in preds.iter().zip(&batch.targets) {
        let r = p - t;
        sum += r * r;
    }
    if !sum.is_finite() {
        return Err(Error::numerical("validation loss is non-finite"));
    }
    Ok(sum / batch.targets.len() as f64)
}

/// Train one curriculum stage in place. After every optimizer step one
/// validation batch is scored; the stage converges when `patience`
/// consecutive scores fall below the threshold, and gives up (reported,
/// not an error) at `max_steps_per_stage`.
pub fn train_stage(
    model: &mut MlpModel,
    data: &SplitDataset,
    k: usize,
    curriculum: &CurriculumState,
    seed: u64,
) -> Result<StageReport> {
    let start = Instant::now();
    curriculum.validate()?;
    let history_len = model
        .history_len()
        .ok_or_else(|| Error::config("model input width is not a whole number of samples"))?;
    check_model_shape(model, history_len)?;
    if k >= history_len {
        return Err(Error::config(format!(
            "stage k = {k} does not fit a {history_len}-sample window"
        )));
    }

    let train_real = AnchorSet::build(&data.train, history_len, 0);
    let val_real = AnchorSet::build(&data.validation, history_len, 0);
    let (train_aug, val_aug) = if k > 0 {
        (
            Some(AnchorSet::build(&data.train, history_len, k)),
            Some(AnchorSet::build(&data.validation, history_len, k)),
        )
    } else {
        (None, None)
    };
    let starved = |set: &Option<AnchorSet>, base: &AnchorSet| {
        base.total() == 0 || set.as_ref().is_some_and(|s| s.total() == 0)
    };
    if starved(&train_aug, &train_real) {
        return Err(Error::data(format!("no training windows for curriculum stage {k}")));
    }
    if starved(&val_aug, &val_real) {
        return Err(Error::data(format!("no validation windows for curriculum stage {k}")));
    }

    let mut train_rng = ChaCha8Rng::seed_from_u64(seeds::mix(seed, &[NS_TRAIN_SAMPLER, k as u64]));
    let mut val_rng = ChaCha8Rng::seed_from_u64(seeds::mix(seed, &[NS_VAL_SAMPLER, k as u64]));
    let mut adam = AdamState::with_lr(model, curriculum.lr);
    let mut ws = GradWorkspace::new(model, curriculum.batch_rows);
    let mut val_bufs = ForwardBufs::new(model, curriculum.batch_rows);
    let mut grads = Gradients::zeros_like(model);

    let mut report = StageReport {
        k,
        steps_run: 0,
        val_batches: 0,
        mse_threshold: curriculum.mse_threshold,
        final_train_mse: f64::NAN,
        final_val_mse: f64::NAN,
        converged: false,
        wall_seconds: 0.0,
    };
    let mut streak = 0;
    for _ in 0..curriculum.max_steps_per_stage {
        let (batch, _) = assemble_batch(
            model,
            &train_real,
            train_aug.as_ref(),
            k,
            curriculum.batch_rows,
            &mut train_rng,
        )?;
        let loss = loss_and_gradients_into(model, &batch, &mut ws, &mut grads)
            .map_err(|e| Error::numerical(format!("stage {k} aborted: {e}")))?;
        optimizer_step(model, &grads, &mut adam)?;
        report.steps_run += 1;
        report.final_train_mse = loss.mean;

        let (vbatch, _) = assemble_batch(
            model,
            &val_real,
            val_aug.as_ref(),
            k,
            curriculum.batch_rows,
            &mut val_rng,
        )?;
        let val_mse = batch_mean_mse(model, &vbatch, &mut val_bufs)
            .map_err(|e| Error::numerical(format!("stage {k} aborted: {e}")))?;
        report.val_batches += 1;
        report.final_val_mse = val_mse;
        streak = if val_mse < curriculum.mse_threshold { streak + 1 } else { 0 };
        if streak >= curriculum.patience {
            report.converged = true;
            break;
        }
    }
    report.wall_seconds = start.elapsed().as_secs_f64();
    Ok(report)
}

/// Full curriculum from a fresh model: fit the scaler on the training
/// split, initialize, then run every scheduled stage. Stops at the first
/// non-converged stage and returns the last converged model (stage-0
/// failure is an error: there is no model to fall back to).
pub fn train_curriculum(
    data: &SplitDataset,
    config: &TrainConfig,
    seed: u64,
) -> Result<CurriculumOutcome> {
    config.validate()?;
    if data.train.is_empty() || data.validation.is_empty() {
        return Err(Error::data("curriculum training needs trials on both split sides"));
    }
    let scaler = fit_scaler(data.train.iter().copied())?;
    let mut model = MlpModel::init(
        &config.layer_dims(),
        Activation::Tanh,
        seeds::mix(seed, &[NS_INIT]),
    )?;
    model.channels = config.channels;
    model.scaler = scaler;
    run_schedule(model, data, config, seed, None)
}

/// Continue a saved model's curriculum: stages with k ≤ the model's
/// recorded trained stage are skipped, and the model's own scaler is kept
/// (refitting would silently reinterpret the trained weights).
pub fn resume_curriculum(
    model: MlpModel,
    data: &SplitDataset,
    config: &TrainConfig,
    seed: u64,
) -> Result<CurriculumOutcome> {
    config.validate()?;
    if data.train.is_empty() || data.validation.is_empty() {
        return Err(Error::data("curriculum training needs trials on both split sides"));
    }
    if model.history_len() != Some(config.history_len) || model.channels != config.channels {
        return Err(Error::config(
            "saved model geometry does not match the training configuration",
        ));
    }
    let done = model.trained_stage;
    run_schedule(model, data, config, seed, Some(done))
}

fn run_schedule(
    mut model: MlpModel,
    data: &SplitDataset,
    config: &TrainConfig,
    seed: u64,
    resume_from: Option<u32>,
) -> Result<CurriculumOutcome> {
    let t0 = Instant::now();
    let fallback = model.clone();
    let mut stages = Vec::new();
    let mut best: Option<MlpModel> = None;
    let mut stage0: Option<MlpModel> = None;

    for (i, &k) in config.schedule.iter().enumerate() {
        if resume_from.is_some_and(|done| k as u32 <= done) {
            continue;
        }
        let st = config.state_for(i);
        let rep = train_stage(&mut model, data, k, &st, seed)?;
        let converged = rep.converged;
        stages.push(rep);
        if converged {
            model.trained_stage = k as u32;
            if k == 0 {
                stage0 = Some(model.clone());
            }
            best = Some(model.clone());
        } else {
            if i == 0 && resume_from.is_none() {
                return Err(Error::numerical("base training failed"));
            }
            break;
        }
    }

    Ok(CurriculumOutcome {
        model: best.unwrap_or(fallback),
        stage0,
        report: TrainingReport {
            stages,
            total_wall_seconds: t0.elapsed().as_secs_f64(),
        },
    })
}
