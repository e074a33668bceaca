//! White measurement noise, modeled on what encoder differentiation does to
//! velocity and acceleration estimates on a real end effector.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::trajectory::{Sample, Trial, CHANNELS};

/// Per-channel white Gaussian noise, seeded. The default amplitudes are
/// 0.01 m/s on the velocity channels and 0.1 m/s² on the acceleration
/// channels; there is no measured reference, so both are configurable and
/// everything downstream compares predictors *relative* to each other under
/// the same noise.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct NoiseSpec {
    /// Standard deviation per channel, in channel units, ≥ 0.
    pub std: [f64; CHANNELS],
    pub seed: u64,
}

/// Default velocity-channel noise, m/s.
pub const DEFAULT_VEL_NOISE: f64 = 0.01;
/// Default acceleration-channel noise, m/s².
pub const DEFAULT_ACC_NOISE: f64 = 0.1;

impl NoiseSpec {
    pub fn new(std: [f64; CHANNELS], seed: u64) -> NoiseSpec {
        NoiseSpec { std, seed }
    }

    /// Same std for all velocity channels and all acceleration channels.
    pub fn from_levels(vel_std: f64, acc_std: f64, seed: u64) -> NoiseSpec {
        NoiseSpec {
            std: [vel_std, vel_std, vel_std, acc_std, acc_std, acc_std],
            seed,
        }
    }

    /// The default end-effector-like noise levels.
    pub fn default_levels(seed: u64) -> NoiseSpec {
        NoiseSpec::from_levels(DEFAULT_VEL_NOISE, DEFAULT_ACC_NOISE, seed)
    }

    /// A copy with a different seed (noise per trial derives from one spec).
    pub fn with_seed(&self, seed: u64) -> NoiseSpec {
        NoiseSpec {
            std: self.std,
            seed,
        }
    }

    pub fn is_silent(&self) -> bool {
        self.std.iter().all(|s| *s == 0.0)
    }

    fn validate(&self) -> Result<()> {
        if self.std.iter().any(|s| !s.is_finite() || *s < 0.0) {
            return Err(Error::config(format!(
                "noise stds must be finite and ≥ 0, got {:?}",
                self.std
            )));
        }
        Ok(())
    }

    /// Returns a copy of the trial with noise added. A silent spec returns
    /// the trial unchanged, bit for bit, without touching the generator.
    pub fn apply(&self, trial: &Trial) -> Result<Trial> {
        self.validate()?;
        if self.is_silent() {
            return Ok(trial.clone());
        }
        let mut rng = ChaCha8Rng::seed_from_u64(self.seed);
        let samples = trial
            .samples
            .iter()
            .map(|s| {
                let mut x = s.to_array();
                for c in 0..CHANNELS {
                    if self.std[c] > 0.0 {
                        x[c] += self.std[c] * gauss(&mut rng);
                    }
                }
                Sample::from_array(x)
            })
            .collect();
        Trial::new(trial.dyad_id, trial.trial_id, trial.sample_rate_hz, samples)
    }
}

/// Standard normal draw via Box-Muller. One draw consumes two uniforms;
/// simple and fully determined by the generator stream.
pub fn gauss(rng: &mut impl Rng) -> f64 {
    let u1: f64 = 1.0 - rng.gen::<f64>(); // (0, 1]
    let u2: f64 = rng.gen();
    (-2.0 * u1.ln()).sqrt() * (std::f64::consts::TAU * u2).cos()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn gauss_moments_are_standard_normal() {
        let mut rng = ChaCha8Rng::seed_from_u64(99);
        let n = 200_000;
        let (mut sum, mut sumsq) = (0.0, 0.0);
        for _ in 0..n {
            let g = gauss(&mut rng);
            sum += g;
            sumsq += g * g;
        }
        let mean = sum / n as f64;
        let var = sumsq / n as f64 - mean * mean;
        assert!(mean.abs() < 0.01, "mean {mean}");
        assert!((var - 1.0).abs() < 0.02, "var {var}");
    }

    #[test]
    fn apply_matches_requested_std() {
        let trial = Trial::new(0, 0, 200.0, vec![Sample::ZERO; 50_000]).unwrap();
        let spec = NoiseSpec::from_levels(0.01, 0.1, 5);
        let noisy = spec.apply(&trial).unwrap();
        let mut sumsq = [0.0; CHANNELS];
        for s in &noisy.samples {
            let x = s.to_array();
            for c in 0..CHANNELS {
                sumsq[c] += x[c] * x[c];
            }
        }
        for c in 0..CHANNELS {
            let std = (sumsq[c] / noisy.len() as f64).sqrt();
            let want = spec.std[c];
            assert!(
                (std - want).abs() < 0.02 * want,
                "channel {c}: std {std} vs {want}"
            );
        }
    }

    #[test]
    fn negative_std_is_rejected() {
        let trial = Trial::new(0, 0, 200.0, vec![Sample::ZERO; 4]).unwrap();
        let mut std = [0.0; CHANNELS];
        std[2] = -0.1;
        assert!(NoiseSpec::new(std, 1).apply(&trial).is_err());
    }
}
