//! Evaluation harness: MSE-vs-horizon reports on trial corpora,
//! side-by-side comparisons between predictors, anchored forecast
//! overlays for plotting, and a robot-in-the-loop surrogate check.
//!
//! Every stride-1 window of each trial is scored: the predictor sees the
//! window's history and its forecast is compared step by step against
//! the ground truth that actually followed. When measurement noise is
//! requested it corrupts only the history fed to the predictor; errors
//! are always measured against the clean future, so the numbers isolate
//! input robustness from irreducible noise variance. Headline velocity
//! MSE is the mean over windows and over the three velocity channels;
//! acceleration is reported separately because the units differ.

use std::path::Path;

use crate::error::{Error, Result};
use crate::mlp::model::MlpModel;
use crate::poly::{extrapolate, fit_poly, DEFAULT_POLY_DEGREE};
use crate::predictor::{rollout_many, Forecast};
use crate::seeds;
use crate::synth::{simulate_dyad, FollowerImpedance, NoiseSpec, Plan};
use crate::trajectory::{Sample, Trial, CHANNELS, HISTORY_LEN};

/// Longest supported forecast horizon in steps.
pub const MAX_EVAL_HORIZON: usize = 100;
pub const DEFAULT_EVAL_HORIZON: usize = 100;

const NS_EVAL_NOISE: u64 = 21;

/// Dyad label given to trials generated by the robot-in-the-loop check,
/// outside the range any corpus generator produces.
const ROBOT_SIM_DYAD: u32 = 9000;

/// Anything that can forecast a horizon from a fixed-length history.
pub trait Forecaster {
    fn id(&self) -> &str;

    /// History length the forecaster expects, and therefore the window
    /// length the harness slices.
    fn history_len(&self) -> usize {
        HISTORY_LEN
    }

    /// Forecasts each history independently. The outer Result is for
    /// structural problems; a per-window Err marks a forecast that blew
    /// up (excluded from averages and counted as diverged).
    fn forecast_many(
        &self,
        histories: &[&[Sample]],
        horizon: usize,
    ) -> Result<Vec<Result<Forecast>>>;
}

/// Iterated neural-network predictor.
pub struct NnForecaster<'a> {
    model: &'a MlpModel,
    id: String,
}

impl<'a> NnForecaster<'a> {
    pub fn new(model: &'a MlpModel, id: impl Into<String>) -> NnForecaster<'a> {
        NnForecaster { model, id: id.into() }
    }
}

impl Forecaster for NnForecaster<'_> {
    fn id(&self) -> &str {
        &self.id
    }

    fn history_len(&self) -> usize {
        self.model.history_len().unwrap_or(HISTORY_LEN)
    }

    fn forecast_many(
        &self,
        histories: &[&[Sample]],
        horizon: usize,
    ) -> Result<Vec<Result<Forecast>>> {
        rollout_many(self.model, histories, horizon)
    }
}

/// Per-window polynomial extrapolation baseline.
pub struct PolyForecaster {
    pub degree: usize,
    pub sample_rate_hz: f64,
    id: String,
}

impl PolyForecaster {
    pub fn new(degree: usize, sample_rate_hz: f64) -> PolyForecaster {
        PolyForecaster {
            degree,
            sample_rate_hz,
            id: format!("poly-{degree}"),
        }
    }

    pub fn default_degree(sample_rate_hz: f64) -> PolyForecaster {
        PolyForecaster::new(DEFAULT_POLY_DEGREE, sample_rate_hz)
    }
}

impl Forecaster for PolyForecaster {
    fn id(&self) -> &str {
        &self.id
    }

    fn forecast_many(
        &self,
        histories: &[&[Sample]],
        horizon: usize,
    ) -> Result<Vec<Result<Forecast>>> {
        let mut out = Vec::with_capacity(histories.len());
        for h in histories {
            let fitted = fit_poly(h, self.degree)
                .and_then(|fit| extrapolate(&fit, horizon, self.sample_rate_hz));
            match fitted {
                Ok(fc) => out.push(Ok(fc)),
                // A numerically degenerate window is this predictor's
                // version of divergence; anything else is structural.
                Err(e @ Error::Numerical(_)) => out.push(Err(e)),
                Err(e) => return Err(e),
            }
        }
        Ok(out)
    }
}

/// MSE for one step ahead: per channel, plus the velocity headline
/// (mean of the three velocity channels).
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct StepMse {
    pub step: usize,
    pub channels: [f64; CHANNELS],
    pub v_mean: f64,
}

/// MSE-vs-horizon curve for one (predictor, dataset) pair. Diverged
/// windows are excluded from every average and only counted.
#[derive(Clone, Debug, PartialEq)]
pub struct HorizonReport {
    pub predictor_id: String,
    pub dataset_id: String,
    pub horizon: usize,
    pub n_windows: usize,
    pub n_diverged: usize,
    pub per_step: Vec<StepMse>,
}

pub const REPORT_HEADER: &str =
    "predictor,dataset,step,mse_vx,mse_vy,mse_vz,mse_v_mean,mse_ax,mse_ay,mse_az,n_windows";

impl HorizonReport {
    /// One-based step lookup.
    pub fn step(&self, step: usize) -> Option<&StepMse> {
        self.per_step.get(step.checked_sub(1)?)
    }

    /// Mean of the velocity headline over steps 1..=last_step.
    pub fn mean_velocity_mse_through(&self, last_step: usize) -> f64 {
        let upto = last_step.min(self.per_step.len());
        if upto == 0 {
            return f64::NAN;
        }
        self.per_step[..upto].iter().map(|s| s.v_mean).sum::<f64>() / upto as f64
    }

    pub fn to_csv(&self) -> String {
        let mut out = String::from(REPORT_HEADER);
        out.push('\n');
        for s in &self.per_step {
            let c = &s.channels;
            out.push_str(&format!(
                "{},{},{},{},{},{},{},{},{},{},{}\n",
                self.predictor_id,
                self.dataset_id,
                s.step,
                c[0],
                c[1],
                c[2],
                s.v_mean,
                c[3],
                c[4],
                c[5],
                self.n_windows
            ));
        }
        out
    }

    pub fn write_csv(&self, path: &Path) -> Result<()> {
        std::fs::write(path, self.to_csv()).map_err(|e| Error::io(path, e))
    }

    /// Parses a report CSV back. The file format does not carry the
    /// diverged-window count (it lives in run summaries), so it reads
    /// back as zero.
    pub fn from_csv(text: &str) -> Result<HorizonReport> {
        let mut lines = text.lines();
        let header = lines.next().ok_or_else(|| Error::data("empty report file"))?;
        if header.trim() != REPORT_HEADER {
            return Err(Error::data(format!("unrecognized report header `{header}`")));
        }
        let mut report: Option<HorizonReport> = None;
        for (i, line) in lines.enumerate() {
            if line.trim().is_empty() {
                continue;
            }
            let row = i + 2;
            let fields: Vec<&str> = line.split(',').collect();
            if fields.len() != 11 {
                return Err(Error::data(format!("report row {row}: expected 11 fields")));
            }
            let step: usize = fields[2]
                .parse()
                .map_err(|_| Error::data(format!("report row {row}: bad step")))?;
            let mut nums = [0.0f64; 7];
            for (slot, field) in nums.iter_mut().zip(&fields[3..10]) {
                *slot = field
                    .parse()
                    .map_err(|_| Error::data(format!("report row {row}: bad value `{field}`")))?;
            }
            let n_windows: usize = fields[10]
                .parse()
                .map_err(|_| Error::data(format!("report row {row}: bad window count")))?;
            let rec = report.get_or_insert_with(|| HorizonReport {
                predictor_id: fields[0].to_string(),
                dataset_id: fields[1].to_string(),
                horizon: 0,
                n_windows,
                n_diverged: 0,
                per_step: Vec::new(),
            });
            if rec.predictor_id != fields[0] || rec.dataset_id != fields[1] || rec.n_windows != n_windows {
                return Err(Error::data(format!(
                    "report row {row}: inconsistent predictor, dataset, or window count"
                )));
            }
            if step != rec.per_step.len() + 1 {
                return Err(Error::data(format!(
                    "report row {row}: steps must run 1, 2, ... without gaps"
                )));
            }
            rec.per_step.push(StepMse {
                step,
                channels: [nums[0], nums[1], nums[2], nums[4], nums[5], nums[6]],
                v_mean: nums[3],
            });
        }
        let mut rec = report.ok_or_else(|| Error::data("report file has no rows"))?;
        rec.horizon = rec.per_step.len();
        Ok(rec)
    }

    pub fn read_csv(path: &Path) -> Result<HorizonReport> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        HorizonReport::from_csv(&text)
    }
}

fn check_horizon(horizon: usize) -> Result<()> {
    if !(1..=MAX_EVAL_HORIZON).contains(&horizon) {
        return Err(Error::config(format!(
            "horizon must be between 1 and {MAX_EVAL_HORIZON} steps, got {horizon}"
        )));
    }
    Ok(())
}

/// Scores `predictor` on every stride-1 window of every trial.
///
/// With a `noise` spec, each trial is corrupted once (deterministically
/// per trial under the spec's seed) before its windows are sliced, and
/// the targets stay clean.
pub fn evaluate(
    predictor: &dyn Forecaster,
    trials: &[&Trial],
    horizon: usize,
    noise: Option<&NoiseSpec>,
    dataset_id: &str,
) -> Result<HorizonReport> {
    check_horizon(horizon)?;
    let history_len = predictor.history_len();
    if trials.is_empty() {
        return Err(Error::data("no usable windows: the trial list is empty"));
    }

    let mut accum = vec![[0.0f64; CHANNELS]; horizon];
    let mut n_windows = 0usize;
    let mut n_diverged = 0usize;

    for trial in trials {
        let n = trial.len();
        if n < history_len + horizon {
            return Err(Error::data(format!(
                "trial {}/{} has {} samples, too short for a {}-sample history plus {} forecast steps",
                trial.dyad_id, trial.trial_id, n, history_len, horizon
            )));
        }
        let noisy = match noise {
            Some(spec) => Some(
                spec.with_seed(seeds::mix(
                    spec.seed,
                    &[NS_EVAL_NOISE, trial.dyad_id as u64, trial.trial_id as u64],
                ))
                .apply(trial)?,
            ),
            None => None,
        };
        let input: &[Sample] = noisy.as_ref().map_or(&trial.samples, |t| &t.samples);

        let a_max = n - history_len - horizon;
        let histories: Vec<&[Sample]> =
            (0..=a_max).map(|a| &input[a..a + history_len]).collect();
        for (a, rolled) in predictor.forecast_many(&histories, horizon)?.into_iter().enumerate() {
            let Ok(fc) = rolled else {
                n_diverged += 1;
                continue;
            };
            if fc.steps.len() != horizon {
                return Err(Error::numerical(format!(
                    "predictor `{}` returned {} steps for a {horizon}-step request",
                    predictor.id(),
                    fc.steps.len()
                )));
            }
            if fc.steps.iter().any(|s| !s.is_finite()) {
                n_diverged += 1;
                continue;
            }
            for (s, pred) in fc.steps.iter().enumerate() {
                let truth = trial.samples[a + history_len + s].to_array();
                let pred = pred.to_array();
                for c in 0..CHANNELS {
                    let d = pred[c] - truth[c];
                    accum[s][c] += d * d;
                }
            }
            n_windows += 1;
        }
    }

    if n_windows == 0 {
        return Err(Error::numerical(format!(
            "every window diverged: {n_diverged} of {n_diverged} forecasts blew up"
        )));
    }
    let per_step = accum
        .iter()
        .enumerate()
        .map(|(s, sums)| {
            let mut channels = [0.0; CHANNELS];
            for c in 0..CHANNELS {
                channels[c] = sums[c] / n_windows as f64;
            }
            StepMse {
                step: s + 1,
                channels,
                v_mean: (channels[0] + channels[1] + channels[2]) / 3.0,
            }
        })
        .collect();

    Ok(HorizonReport {
        predictor_id: predictor.id().to_string(),
        dataset_id: dataset_id.to_string(),
        horizon,
        n_windows,
        n_diverged,
        per_step,
    })
}

/// Side-by-side table of several reports. Column 0 is the reference:
/// ratios are each report's velocity MSE over the reference's, and the
/// crossover (if any) is the first step at which the reference drops
/// strictly below that report.
#[derive(Clone, Debug, PartialEq)]
pub struct CompareTable {
    pub horizon: usize,
    pub ids: Vec<String>,
    pub rows: Vec<CompareRow>,
    pub crossover: Vec<Option<usize>>,
}

#[derive(Clone, Debug, PartialEq)]
pub struct CompareRow {
    pub step: usize,
    pub v_mean: Vec<f64>,
    pub ratio: Vec<f64>,
}

impl CompareTable {
    pub fn to_csv(&self) -> String {
        let mut header = String::from("step");
        for id in &self.ids {
            header.push_str(&format!(",mse_v_mean_{id}"));
        }
        for id in &self.ids[1..] {
            header.push_str(&format!(",ratio_{}_over_{}", id, self.ids[0]));
        }
        let mut out = header;
        out.push('\n');
        for row in &self.rows {
            out.push_str(&row.step.to_string());
            for v in &row.v_mean {
                out.push_str(&format!(",{v}"));
            }
            for r in &row.ratio[1..] {
                out.push_str(&format!(",{r}"));
            }
            out.push('\n');
        }
        out
    }

    pub fn write_csv(&self, path: &Path) -> Result<()> {
        std::fs::write(path, self.to_csv()).map_err(|e| Error::io(path, e))
    }
}

/// Compares two or more reports step by step. Horizons must match;
/// dataset ids may differ (comparing the same predictor across datasets
/// is one of the two intended uses).
pub fn compare(reports: &[&HorizonReport]) -> Result<CompareTable> {
    if reports.len() < 2 {
        return Err(Error::config("comparison needs at least two reports"));
    }
    let horizon = reports[0].horizon;
    if reports.iter().any(|r| r.horizon != horizon) {
        return Err(Error::config("cannot compare reports with different horizons"));
    }

    let mut rows = Vec::with_capacity(horizon);
    for s in 0..horizon {
        let v_mean: Vec<f64> = reports.iter().map(|r| r.per_step[s].v_mean).collect();
        let base = v_mean[0];
        let ratio = v_mean
            .iter()
            .map(|&v| if v == base { 1.0 } else { v / base })
            .collect();
        rows.push(CompareRow { step: s + 1, v_mean, ratio });
    }
    let crossover = reports
        .iter()
        .enumerate()
        .map(|(i, _)| {
            if i == 0 {
                return None;
            }
            rows.iter()
                .find(|row| row.v_mean[0] < row.v_mean[i])
                .map(|row| row.step)
        })
        .collect();

    Ok(CompareTable {
        horizon,
        ids: reports.iter().map(|r| r.predictor_id.clone()).collect(),
        rows,
        crossover,
    })
}

/// One anchored forecast: `steps[j]` is the prediction for sample index
/// `anchor_index + 1 + j` of the trial.
#[derive(Clone, Debug, PartialEq)]
pub struct OverlaySegment {
    pub segment: usize,
    pub anchor_index: usize,
    pub steps: Vec<Sample>,
}

/// Actual series plus periodically anchored forecasts, ready to plot.
#[derive(Clone, Debug, PartialEq)]
pub struct OverlayTrace {
    pub dyad_id: u32,
    pub trial_id: u32,
    pub sample_rate_hz: f64,
    pub horizon: usize,
    pub actual: Vec<Sample>,
    pub segments: Vec<OverlaySegment>,
}

pub const OVERLAY_HEADER: &str = "trial_id,series,segment,t,vx,vy,vz";

impl OverlayTrace {
    pub fn to_csv(&self) -> String {
        let mut out = String::from(OVERLAY_HEADER);
        out.push('\n');
        let rate = self.sample_rate_hz;
        for (i, s) in self.actual.iter().enumerate() {
            out.push_str(&format!(
                "{},actual,,{},{},{},{}\n",
                self.trial_id,
                i as f64 / rate,
                s.vx,
                s.vy,
                s.vz
            ));
        }
        for seg in &self.segments {
            for (j, s) in seg.steps.iter().enumerate() {
                out.push_str(&format!(
                    "{},forecast,{},{},{},{},{}\n",
                    self.trial_id,
                    seg.segment,
                    (seg.anchor_index + 1 + j) as f64 / rate,
                    s.vx,
                    s.vy,
                    s.vz
                ));
            }
        }
        out
    }

    pub fn write_csv(&self, path: &Path) -> Result<()> {
        std::fs::write(path, self.to_csv()).map_err(|e| Error::io(path, e))
    }
}

/// Forecasts anchored every `anchor_period_s` of trial time, starting at
/// the earliest sample with a full history behind it.
pub fn overlay(
    predictor: &dyn Forecaster,
    trial: &Trial,
    anchor_period_s: f64,
    horizon: usize,
) -> Result<OverlayTrace> {
    check_horizon(horizon)?;
    let rate = trial.sample_rate_hz;
    if !(anchor_period_s.is_finite() && anchor_period_s >= 1.0 / rate) {
        return Err(Error::config(format!(
            "invalid anchor period: {anchor_period_s} s is shorter than one sample at {rate} Hz"
        )));
    }
    let history_len = predictor.history_len();
    let n = trial.len();
    if n < history_len {
        return Err(Error::data(format!(
            "trial {}/{} has {} samples, too short for one anchored forecast",
            trial.dyad_id, trial.trial_id, n
        )));
    }

    let mut anchors = Vec::new();
    for k in 0.. {
        let i = history_len - 1 + (k as f64 * anchor_period_s * rate).round() as usize;
        if i > n - 1 {
            break;
        }
        anchors.push(i);
    }
    let histories: Vec<&[Sample]> = anchors
        .iter()
        .map(|&i| &trial.samples[i + 1 - history_len..i + 1])
        .collect();
    let mut segments = Vec::with_capacity(anchors.len());
    for (k, (anchor, rolled)) in anchors
        .iter()
        .zip(predictor.forecast_many(&histories, horizon)?)
        .enumerate()
    {
        let fc = rolled.map_err(|e| {
            Error::numerical(format!("forecast diverged at overlay anchor {k}: {e}"))
        })?;
        segments.push(OverlaySegment {
            segment: k,
            anchor_index: *anchor,
            steps: fc.steps,
        });
    }

    Ok(OverlayTrace {
        dyad_id: trial.dyad_id,
        trial_id: trial.trial_id,
        sample_rate_hz: rate,
        horizon,
        actual: trial.samples.clone(),
        segments,
    })
}

/// Runs the model against freshly simulated leader-follower trials (the
/// robot stand-in) and reports MSE. Any rollout divergence is an error:
/// this check exists to prove the predictor stays stable when the
/// follower dynamics differ from everything it trained on.
pub fn robot_in_loop_eval(
    model: &MlpModel,
    follower: &FollowerImpedance,
    plans: &[Plan],
    horizon: usize,
    sample_rate_hz: f64,
) -> Result<HorizonReport> {
    if plans.is_empty() {
        return Err(Error::data("robot-in-the-loop check needs at least one plan"));
    }
    let mut trials = Vec::with_capacity(plans.len());
    for (i, plan) in plans.iter().enumerate() {
        let mut t = simulate_dyad(plan, follower, sample_rate_hz)?;
        t.dyad_id = ROBOT_SIM_DYAD;
        t.trial_id = i as u32;
        trials.push(t);
    }
    let refs: Vec<&Trial> = trials.iter().collect();
    let nn = NnForecaster::new(model, "nn");
    let report = evaluate(&nn, &refs, horizon, None, "robot-sim")?;
    if report.n_diverged > 0 {
        return Err(Error::numerical(format!(
            "{} of {} rollouts diverged in the robot-in-the-loop check",
            report.n_diverged,
            report.n_diverged + report.n_windows
        )));
    }
    Ok(report)
}
