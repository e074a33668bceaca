//! Multi-dyad corpus assembly.
//!
//! The default corpus mirrors the shape of the motivating study: 20 dyads,
//! 12 tasks, 3 repetitions each, 720 trials. Every dyad gets its own jitter
//! on task durations, amplitudes, and follower impedance so no two dyads
//! share dynamics, and every repetition gets a smaller jitter on top so no
//! two trials are identical. All randomness derives from one corpus seed.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::seeds;
use crate::trajectory::Trial;

use super::dyad::{simulate_dyad, FollowerImpedance};
use super::noise::NoiseSpec;
use super::plan::{ConstVelPhase, MinJerkSegment, Plan, PlanSegment};

/// Seed-mix namespaces, so per-dyad and per-trial streams never collide.
const NS_DYAD: u64 = 1;
const NS_REP: u64 = 2;
const NS_NOISE: u64 = 3;

/// One named task: a leader plan template shared by all dyads.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TaskSpec {
    pub name: String,
    pub segments: Vec<PlanSegment>,
}

/// Measurement noise baked into the generated corpus (the corpus is what a
/// sensor would have recorded). Kept one decade below the default
/// evaluation-time stress levels so robustness runs measure added noise,
/// not re-measured corpus noise.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct CorpusNoise {
    pub vel_std: f64,
    pub acc_std: f64,
}

impl Default for CorpusNoise {
    fn default() -> Self {
        CorpusNoise {
            vel_std: 0.001,
            acc_std: 0.01,
        }
    }
}

/// Multiplicative jitter ranges (±fraction around 1).
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct JitterSpec {
    /// Per-dyad jitter on task durations.
    pub duration: f64,
    /// Per-dyad jitter on displacement/velocity amplitudes.
    pub amplitude: f64,
    /// Per-dyad jitter on follower mass and damping.
    pub impedance: f64,
    /// Additional per-repetition jitter on durations and amplitudes.
    pub repetition: f64,
}

impl Default for JitterSpec {
    fn default() -> Self {
        JitterSpec {
            duration: 0.20,
            amplitude: 0.20,
            impedance: 0.20,
            repetition: 0.05,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct CorpusConfig {
    pub seed: u64,
    pub dyad_count: u32,
    pub repetitions: u32,
    pub sample_rate_hz: f64,
    pub noise: CorpusNoise,
    pub jitter: JitterSpec,
    /// Nominal follower impedance before per-dyad jitter.
    pub follower: FollowerImpedance,
    /// Task catalog; empty means the built-in default catalog.
    pub tasks: Vec<TaskSpec>,
}

impl Default for CorpusConfig {
    fn default() -> Self {
        CorpusConfig {
            seed: 17,
            dyad_count: 20,
            repetitions: 3,
            sample_rate_hz: 200.0,
            noise: CorpusNoise::default(),
            jitter: JitterSpec::default(),
            follower: FollowerImpedance {
                mass_kg: 10.0,
                damping: 50.0,
                stiffness: 0.0,
            },
            tasks: Vec::new(),
        }
    }
}

impl CorpusConfig {
    pub fn from_toml(text: &str) -> Result<CorpusConfig> {
        toml::from_str(text).map_err(|e| Error::config(format!("corpus config: {e}")))
    }

    pub fn read(path: &std::path::Path) -> Result<CorpusConfig> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        CorpusConfig::from_toml(&text)
    }

    pub fn to_toml(&self) -> String {
        toml::to_string_pretty(self).expect("corpus config serializes")
    }

    /// The tasks this config will generate (explicit list or the default
    /// catalog).
    pub fn effective_tasks(&self) -> Vec<TaskSpec> {
        if self.tasks.is_empty() {
            default_tasks()
        } else {
            self.tasks.clone()
        }
    }
}

fn mj(name_dx: [f64; 3], duration_s: f64) -> PlanSegment {
    PlanSegment::MinJerk(MinJerkSegment {
        displacement: name_dx,
        duration_s,
    })
}

fn cv(v: [f64; 3], duration_s: f64, blend_s: f64) -> PlanSegment {
    PlanSegment::ConstVel(ConstVelPhase {
        velocity: v,
        duration_s,
        blend_s,
    })
}

fn rest(duration_s: f64) -> PlanSegment {
    PlanSegment::Rest { duration_s }
}

/// Twelve desk-scale carrying tasks: reaches, corridors, turns, stop-and-go.
/// Peak leader speeds sit around 1 m/s. Rotations are out of scope, so the
/// variety is all translational.
///
/// Pacing: direction changes happen through a rest of ≥ 0.35 s nominal, a
/// beat or two above the nominal follower time constant (m/b = 0.2 s), so
/// one transient has mostly settled before the next launch. Velocity blends
/// run 0.4 s or longer for the same reason. Packing joins tighter than this
/// makes the recorded motion look like chatter rather than intent.
pub fn default_tasks() -> Vec<TaskSpec> {
    let t = |name: &str, segments: Vec<PlanSegment>| TaskSpec {
        name: name.to_string(),
        segments,
    };
    vec![
        t(
            "lateral-there-and-back",
            vec![
                rest(0.2),
                mj([0.5, 0.0, 0.0], 1.0),
                rest(0.4),
                mj([-0.5, 0.0, 0.0], 1.0),
                rest(0.25),
            ],
        ),
        t(
            "forward-push",
            vec![rest(0.25), mj([0.0, 0.7, 0.0], 1.3), rest(0.45)],
        ),
        t(
            "diagonal-reach",
            vec![rest(0.2), mj([0.4, 0.4, 0.15], 1.1), rest(0.5)],
        ),
        t(
            "lift-and-place",
            vec![
                rest(0.2),
                mj([0.0, 0.0, 0.3], 0.9),
                rest(0.4),
                mj([0.35, 0.0, -0.3], 1.0),
                rest(0.25),
            ],
        ),
        t(
            "l-shape",
            vec![
                rest(0.2),
                mj([0.45, 0.0, 0.0], 1.0),
                rest(0.4),
                mj([0.0, 0.45, 0.0], 1.0),
                rest(0.25),
            ],
        ),
        t(
            "corridor-cruise",
            vec![rest(0.2), cv([0.55, 0.0, 0.0], 1.5, 0.5), rest(0.3)],
        ),
        t(
            "corridor-turn",
            vec![
                rest(0.2),
                cv([0.5, 0.0, 0.0], 1.1, 0.45),
                rest(0.35),
                cv([0.0, 0.5, 0.0], 1.1, 0.45),
                rest(0.25),
            ],
        ),
        t(
            "stop-and-go",
            vec![
                rest(0.2),
                mj([0.35, 0.0, 0.0], 0.9),
                rest(0.45),
                mj([0.35, 0.0, 0.0], 0.9),
                rest(0.25),
            ],
        ),
        t(
            "speed-shift",
            vec![
                rest(0.2),
                cv([0.35, 0.0, 0.0], 1.0, 0.4),
                cv([0.7, 0.0, 0.0], 1.0, 0.5),
                rest(0.3),
            ],
        ),
        t(
            "zigzag",
            vec![
                rest(0.2),
                mj([0.3, 0.2, 0.0], 0.9),
                rest(0.35),
                mj([0.3, -0.2, 0.0], 0.9),
                rest(0.35),
                mj([-0.6, 0.0, 0.0], 1.1),
                rest(0.25),
            ],
        ),
        t(
            "hallway-three-leg",
            vec![
                rest(0.2),
                cv([0.45, 0.0, 0.0], 0.9, 0.4),
                cv([0.45, 0.25, 0.0], 0.8, 0.4),
                cv([0.45, 0.0, 0.0], 0.9, 0.4),
                rest(0.25),
            ],
        ),
        t(
            "retreat-and-correct",
            vec![
                rest(0.2),
                mj([0.0, -0.65, 0.0], 1.3),
                rest(0.4),
                mj([0.0, 0.2, 0.0], 0.7),
                rest(0.25),
            ],
        ),
    ]
}

fn jitter_factor(rng: &mut impl Rng, spread: f64) -> f64 {
    if spread == 0.0 {
        1.0
    } else {
        rng.gen_range(1.0 - spread..=1.0 + spread)
    }
}

/// Scales a plan template: durations by `f_dur`, spatial amplitudes by
/// `f_amp`. Constant-velocity plateaus scale as amplitude/duration so the
/// whole plan stretches coherently.
pub(crate) fn scale_segments(segments: &[PlanSegment], f_dur: f64, f_amp: f64) -> Vec<PlanSegment> {
    segments
        .iter()
        .map(|seg| match *seg {
            PlanSegment::Rest { duration_s } => rest(duration_s * f_dur),
            PlanSegment::MinJerk(MinJerkSegment {
                displacement,
                duration_s,
            }) => mj(displacement.map(|d| d * f_amp), duration_s * f_dur),
            PlanSegment::ConstVel(ConstVelPhase {
                velocity,
                duration_s,
                blend_s,
            }) => cv(
                velocity.map(|v| v * f_amp / f_dur),
                duration_s * f_dur,
                blend_s * f_dur,
            ),
        })
        .collect()
}

/// Follower impedance for one dyad: mass and damping jittered, stiffness
/// scaled by the same spread (zero stays zero).
pub(crate) fn dyad_follower(
    nominal: &FollowerImpedance,
    jitter: &JitterSpec,
    rng: &mut impl Rng,
) -> FollowerImpedance {
    FollowerImpedance {
        mass_kg: nominal.mass_kg * jitter_factor(rng, jitter.impedance),
        damping: nominal.damping * jitter_factor(rng, jitter.impedance),
        stiffness: nominal.stiffness * jitter_factor(rng, jitter.impedance),
    }
}

/// Generates the full corpus. Trial ids are `task_index · repetitions +
/// repetition`, unique within a dyad. Every trial must be long enough for
/// at least one history+horizon window.
pub fn make_corpus(config: &CorpusConfig) -> Result<Vec<Trial>> {
    if config.dyad_count == 0 {
        return Err(Error::config("dyad count must be ≥ 1"));
    }
    if config.repetitions == 0 {
        return Err(Error::config("repetitions must be ≥ 1"));
    }
    let tasks = config.effective_tasks();
    if tasks.is_empty() {
        return Err(Error::config("no tasks configured"));
    }
    let min_len = crate::trajectory::HISTORY_LEN + crate::trajectory::DEFAULT_HORIZON;
    let mut trials = Vec::with_capacity(
        config.dyad_count as usize * tasks.len() * config.repetitions as usize,
    );
    for dyad in 0..config.dyad_count {
        let mut dyad_rng =
            ChaCha8Rng::seed_from_u64(seeds::mix(config.seed, &[NS_DYAD, dyad as u64]));
        let f_dur = jitter_factor(&mut dyad_rng, config.jitter.duration);
        let f_amp = jitter_factor(&mut dyad_rng, config.jitter.amplitude);
        let follower = dyad_follower(&config.follower, &config.jitter, &mut dyad_rng);
        for (task_idx, task) in tasks.iter().enumerate() {
            for rep in 0..config.repetitions {
                let labels = [NS_REP, dyad as u64, task_idx as u64, rep as u64];
                let mut rep_rng = ChaCha8Rng::seed_from_u64(seeds::mix(config.seed, &labels));
                let rf_dur = jitter_factor(&mut rep_rng, config.jitter.repetition);
                let rf_amp = jitter_factor(&mut rep_rng, config.jitter.repetition);
                let segments = scale_segments(&task.segments, f_dur * rf_dur, f_amp * rf_amp);
                let plan = Plan::new(segments)?;
                let trial_id = task_idx as u32 * config.repetitions + rep;
                let object = simulate_dyad(&plan, &follower, config.sample_rate_hz)?;
                let noise = NoiseSpec::from_levels(
                    config.noise.vel_std,
                    config.noise.acc_std,
                    seeds::mix(config.seed, &[NS_NOISE, dyad as u64, task_idx as u64, rep as u64]),
                );
                let mut trial = noise.apply(&object)?;
                trial.dyad_id = dyad;
                trial.trial_id = trial_id;
                if trial.len() < min_len {
                    return Err(Error::data(format!(
                        "trial {dyad}/{trial_id} (task `{}`, rep {rep}) is too short: {} samples, \
                         need ≥ {min_len} for one window",
                        task.name,
                        trial.len()
                    )));
                }
                trials.push(trial);
            }
        }
    }
    Ok(trials)
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::collections::BTreeSet;

    fn small_config() -> CorpusConfig {
        CorpusConfig {
            dyad_count: 3,
            repetitions: 2,
            ..CorpusConfig::default()
        }
    }

    #[test]
    fn default_config_yields_720_trials() {
        let config = CorpusConfig::default();
        let trials = make_corpus(&config).unwrap();
        assert_eq!(trials.len(), 720);
        let ids: BTreeSet<(u32, u32)> = trials.iter().map(|t| (t.dyad_id, t.trial_id)).collect();
        assert_eq!(ids.len(), 720, "trial ids must be unique");
        assert!(trials.iter().all(|t| t.len() >= 250));
    }

    #[test]
    fn corpus_is_deterministic_and_seed_sensitive() {
        let config = small_config();
        let a = make_corpus(&config).unwrap();
        let b = make_corpus(&config).unwrap();
        assert_eq!(a, b);
        let other = CorpusConfig {
            seed: config.seed + 1,
            ..config
        };
        let c = make_corpus(&other).unwrap();
        assert_ne!(a, c);
    }

    #[test]
    fn corpus_file_is_byte_identical_for_fixed_seed() {
        let dir = tempfile::tempdir().unwrap();
        let config = small_config();
        let pa = dir.path().join("a.csv");
        let pb = dir.path().join("b.csv");
        crate::io::write_trials_csv(&pa, &make_corpus(&config).unwrap()).unwrap();
        crate::io::write_trials_csv(&pb, &make_corpus(&config).unwrap()).unwrap();
        assert_eq!(std::fs::read(&pa).unwrap(), std::fs::read(&pb).unwrap());
    }

    #[test]
    fn dyads_differ_from_each_other() {
        let trials = make_corpus(&small_config()).unwrap();
        // Same task and rep, different dyads: different lengths or contents.
        let t0 = trials.iter().find(|t| t.dyad_id == 0 && t.trial_id == 0).unwrap();
        let t1 = trials.iter().find(|t| t.dyad_id == 1 && t.trial_id == 0).unwrap();
        assert!(t0.len() != t1.len() || t0.samples != t1.samples);
    }

    #[test]
    fn repetitions_differ_within_a_dyad() {
        let trials = make_corpus(&small_config()).unwrap();
        let a = trials.iter().find(|t| t.dyad_id == 0 && t.trial_id == 0).unwrap();
        let b = trials.iter().find(|t| t.dyad_id == 0 && t.trial_id == 1).unwrap();
        assert!(a.len() != b.len() || a.samples != b.samples);
    }

    #[test]
    fn peak_speeds_are_desk_scale() {
        let trials = make_corpus(&small_config()).unwrap();
        let peak = trials
            .iter()
            .flat_map(|t| t.samples.iter())
            .map(|s| (s.vx * s.vx + s.vy * s.vy + s.vz * s.vz).sqrt())
            .fold(0.0, f64::max);
        assert!((0.5..1.8).contains(&peak), "corpus peak speed {peak} m/s");
    }

    #[test]
    fn config_round_trips_through_toml() {
        let config = CorpusConfig {
            tasks: default_tasks(),
            ..CorpusConfig::default()
        };
        let text = config.to_toml();
        let back = CorpusConfig::from_toml(&text).unwrap();
        assert_eq!(config, back);
    }

    #[test]
    fn unknown_config_keys_are_rejected() {
        let err = CorpusConfig::from_toml("seed = 1\nbananas = 2\n").unwrap_err();
        assert!(err.to_string().contains("bananas"), "{err}");
    }
}
