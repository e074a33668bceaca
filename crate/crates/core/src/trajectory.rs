//! Data model for sampled object motion.
//!
//! A [`Trial`] is one continuous recording of the six motion channels of a
//! carried object (velocity and acceleration in x, y, z) at a fixed sample
//! rate, nominally 200 Hz. Trials are grouped by the dyad that produced them.
//! This module owns the pieces every other module builds on: per-channel
//! z-score scaling, stride-1 window extraction, and the dyad-level
//! train/validation split.

use std::collections::BTreeSet;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Number of motion channels: vx, vy, vz, ax, ay, az.
pub const CHANNELS: usize = 6;

/// Channel names in storage order.
pub const CHANNEL_NAMES: [&str; CHANNELS] = ["vx", "vy", "vz", "ax", "ay", "az"];

/// Default history length fed to predictors: 150 steps = 0.75 s at 200 Hz.
pub const HISTORY_LEN: usize = 150;

/// Default forecast horizon: 50 steps = 0.25 s at 200 Hz.
pub const DEFAULT_HORIZON: usize = 50;

/// One time step of object motion. Velocities in m/s, accelerations in m/s².
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Sample {
    pub vx: f64,
    pub vy: f64,
    pub vz: f64,
    pub ax: f64,
    pub ay: f64,
    pub az: f64,
}

impl Sample {
    pub const ZERO: Sample = Sample {
        vx: 0.0,
        vy: 0.0,
        vz: 0.0,
        ax: 0.0,
        ay: 0.0,
        az: 0.0,
    };

    pub fn new(vx: f64, vy: f64, vz: f64, ax: f64, ay: f64, az: f64) -> Sample {
        Sample {
            vx,
            vy,
            vz,
            ax,
            ay,
            az,
        }
    }

    pub fn from_array(a: [f64; CHANNELS]) -> Sample {
        Sample::new(a[0], a[1], a[2], a[3], a[4], a[5])
    }

    pub fn to_array(self) -> [f64; CHANNELS] {
        [self.vx, self.vy, self.vz, self.ax, self.ay, self.az]
    }

    pub fn is_finite(self) -> bool {
        self.to_array().iter().all(|v| v.is_finite())
    }
}

/// Which channels a model consumes. The ablation variant drops the
/// acceleration channels entirely (inputs and outputs).
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ChannelMode {
    /// All six channels: velocity and acceleration.
    Full,
    /// Velocity channels only (vx, vy, vz).
    VelocityOnly,
}

impl ChannelMode {
    /// Channels per time step under this mode.
    pub fn width(self) -> usize {
        match self {
            ChannelMode::Full => 6,
            ChannelMode::VelocityOnly => 3,
        }
    }
}

/// One continuous recording of a single dyad performing a single task.
#[derive(Clone, Debug, PartialEq)]
pub struct Trial {
    pub dyad_id: u32,
    pub trial_id: u32,
    pub sample_rate_hz: f64,
    pub samples: Vec<Sample>,
}

impl Trial {
    /// Validates the trial invariants: non-empty, positive rate, all finite.
    pub fn new(
        dyad_id: u32,
        trial_id: u32,
        sample_rate_hz: f64,
        samples: Vec<Sample>,
    ) -> Result<Trial> {
        if samples.is_empty() {
            return Err(Error::data(format!(
                "trial {dyad_id}/{trial_id} has no samples"
            )));
        }
        if !(sample_rate_hz > 0.0) || !sample_rate_hz.is_finite() {
            return Err(Error::data(format!(
                "trial {dyad_id}/{trial_id} has invalid sample rate {sample_rate_hz}"
            )));
        }
        if let Some(i) = samples.iter().position(|s| !s.is_finite()) {
            return Err(Error::data(format!(
                "trial {dyad_id}/{trial_id} has a non-finite value at sample {i}"
            )));
        }
        Ok(Trial {
            dyad_id,
            trial_id,
            sample_rate_hz,
            samples,
        })
    }

    pub fn len(&self) -> usize {
        self.samples.len()
    }

    pub fn is_empty(&self) -> bool {
        self.samples.is_empty()
    }

    pub fn duration_s(&self) -> f64 {
        self.samples.len() as f64 / self.sample_rate_hz
    }
}

/// A history/future pair cut from one trial. Borrowed views: windows are
/// cheap and overlap heavily (stride 1), so no samples are copied.
#[derive(Clone, Copy, Debug)]
pub struct Window<'a> {
    /// Input to a predictor. Length is the requested history length.
    pub history: &'a [Sample],
    /// Ground-truth continuation immediately after the history.
    pub future: &'a [Sample],
}

/// Every stride-1 window of the trial: `len − history_len − future_len + 1`
/// windows in chronological order, or none if the trial is too short.
pub fn make_windows(trial: &Trial, history_len: usize, future_len: usize) -> Vec<Window<'_>> {
    let n = trial.samples.len();
    let span = history_len + future_len;
    if history_len == 0 || n < span {
        return Vec::new();
    }
    (0..=n - span)
        .map(|start| Window {
            history: &trial.samples[start..start + history_len],
            future: &trial.samples[start + history_len..start + span],
        })
        .collect()
}

/// Per-channel z-score parameters. `scale` maps a channel value x to
/// (x − mean)/std; `unscale` inverts it.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ChannelScaler {
    pub mean: [f64; CHANNELS],
    pub std: [f64; CHANNELS],
}

/// Channels with population std below this are treated as constant and pass
/// through centered (std forced to 1).
pub const DEGENERATE_STD: f64 = 1e-9;

impl ChannelScaler {
    /// Scaler that leaves every channel unchanged.
    pub fn identity() -> ChannelScaler {
        ChannelScaler {
            mean: [0.0; CHANNELS],
            std: [1.0; CHANNELS],
        }
    }

    pub fn scale(&self, s: Sample) -> Sample {
        let x = s.to_array();
        let mut z = [0.0; CHANNELS];
        for c in 0..CHANNELS {
            z[c] = (x[c] - self.mean[c]) / self.std[c];
        }
        Sample::from_array(z)
    }

    pub fn unscale(&self, s: Sample) -> Sample {
        let z = s.to_array();
        let mut x = [0.0; CHANNELS];
        for c in 0..CHANNELS {
            x[c] = z[c] * self.std[c] + self.mean[c];
        }
        Sample::from_array(x)
    }

    /// Writes the scaled leading channels of `s` into `out` (length 6 for
    /// [`ChannelMode::Full`], 3 for [`ChannelMode::VelocityOnly`]).
    pub fn scale_into(&self, s: Sample, mode: ChannelMode, out: &mut [f64]) {
        debug_assert_eq!(out.len(), mode.width());
        let x = s.to_array();
        for c in 0..mode.width() {
            out[c] = (x[c] - self.mean[c]) / self.std[c];
        }
    }

    /// Inverse of [`ChannelScaler::scale_into`]. Channels not covered by the
    /// mode come back as zero.
    pub fn unscale_from(&self, z: &[f64], mode: ChannelMode) -> Sample {
        debug_assert_eq!(z.len(), mode.width());
        let mut x = [0.0; CHANNELS];
        for c in 0..mode.width() {
            x[c] = z[c] * self.std[c] + self.mean[c];
        }
        Sample::from_array(x)
    }

    pub fn is_valid(&self) -> bool {
        self.mean.iter().all(|m| m.is_finite())
            && self.std.iter().all(|s| s.is_finite() && *s > 0.0)
    }
}

/// Fits per-channel mean and population standard deviation over all samples
/// of all provided trials pooled together (Welford's online update, one
/// pass). Channels with std below [`DEGENERATE_STD`] get std 1.
pub fn fit_scaler<'a>(trials: impl IntoIterator<Item = &'a Trial>) -> Result<ChannelScaler> {
    let mut count: u64 = 0;
    let mut mean = [0.0; CHANNELS];
    let mut m2 = [0.0; CHANNELS];
    for trial in trials {
        for s in &trial.samples {
            count += 1;
            let x = s.to_array();
            for c in 0..CHANNELS {
                let delta = x[c] - mean[c];
                mean[c] += delta / count as f64;
                m2[c] += delta * (x[c] - mean[c]);
            }
        }
    }
    if count == 0 {
        return Err(Error::data("no samples to fit a scaler on"));
    }
    let mut std = [0.0; CHANNELS];
    for c in 0..CHANNELS {
        let var = m2[c] / count as f64;
        let s = var.max(0.0).sqrt();
        std[c] = if s < DEGENERATE_STD { 1.0 } else { s };
    }
    Ok(ChannelScaler { mean, std })
}

/// Assignment of whole dyads to the training or validation set. Trials of
/// one dyad never straddle the boundary.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct DatasetSplit {
    pub train_dyads: BTreeSet<u32>,
    pub validation_dyads: BTreeSet<u32>,
}

/// Which side of the split to draw from.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Side {
    Train,
    Validation,
}

impl DatasetSplit {
    pub fn side_of(&self, dyad_id: u32) -> Option<Side> {
        if self.train_dyads.contains(&dyad_id) {
            Some(Side::Train)
        } else if self.validation_dyads.contains(&dyad_id) {
            Some(Side::Validation)
        } else {
            None
        }
    }

    /// Borrows the trials belonging to one side, in input order.
    pub fn select<'a>(&self, trials: &'a [Trial], side: Side) -> Vec<&'a Trial> {
        let set = match side {
            Side::Train => &self.train_dyads,
            Side::Validation => &self.validation_dyads,
        };
        trials.iter().filter(|t| set.contains(&t.dyad_id)).collect()
    }
}

/// Randomly assigns whole dyads to train/validation. Set sizes are the
/// nearest achievable to `train_fraction`, clamped so both sides keep at
/// least one dyad. Deterministic for a fixed seed.
pub fn split_by_dyad(trials: &[Trial], train_fraction: f64, seed: u64) -> Result<DatasetSplit> {
    if !(train_fraction > 0.0 && train_fraction < 1.0) {
        return Err(Error::config(format!(
            "train fraction must be in (0, 1), got {train_fraction}"
        )));
    }
    let dyads: BTreeSet<u32> = trials.iter().map(|t| t.dyad_id).collect();
    if dyads.len() < 2 {
        return Err(Error::data(format!(
            "cannot split: need at least 2 dyads, got {}",
            dyads.len()
        )));
    }
    let mut order: Vec<u32> = dyads.iter().copied().collect();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    order.shuffle(&mut rng);
    let n = order.len();
    let n_train = ((train_fraction * n as f64).round() as usize).clamp(1, n - 1);
    let train_dyads: BTreeSet<u32> = order[..n_train].iter().copied().collect();
    let validation_dyads: BTreeSet<u32> = order[n_train..].iter().copied().collect();
    Ok(DatasetSplit {
        train_dyads,
        validation_dyads,
    })
}
