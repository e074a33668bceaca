//! Piecewise leader plans: minimum-jerk reaches, constant-velocity phases,
//! and rests, with closed-form position/velocity/acceleration everywhere.
//!
//! A plan always starts at rest. Velocity must be continuous across segment
//! boundaries: minimum-jerk segments and rests begin and end at zero
//! velocity by construction, and a constant-velocity phase absorbs any
//! mismatch with straight-line velocity ramps (constant acceleration) of its
//! configured blend time at its start, and at its end when the next segment
//! (or the end of the plan) requires rest. A mismatch with no blend time to
//! absorb it is a "discontinuous plan" error.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::trajectory::{Sample, Trial};

use super::noise::NoiseSpec;

/// Point-to-point quintic reach: x(τ) = D·(10τ³ − 15τ⁴ + 6τ⁵).
/// Velocity and acceleration are zero at both endpoints.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct MinJerkSegment {
    /// Total displacement in meters.
    pub displacement: [f64; 3],
    /// Segment duration in seconds, > 0.
    pub duration_s: f64,
}

/// Cruise phase: constant velocity over the plateau (acceleration exactly
/// zero there), entered and left through constant-acceleration ramps of
/// `blend_s` seconds when the neighboring velocity differs.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct ConstVelPhase {
    /// Plateau velocity in m/s.
    pub velocity: [f64; 3],
    /// Phase duration in seconds (ramps included), > 0.
    pub duration_s: f64,
    /// Ramp duration in seconds, ≥ 0.
    pub blend_s: f64,
}

/// One element of a leader plan.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum PlanSegment {
    Rest { duration_s: f64 },
    MinJerk(MinJerkSegment),
    ConstVel(ConstVelPhase),
}

impl PlanSegment {
    pub fn duration_s(&self) -> f64 {
        match *self {
            PlanSegment::Rest { duration_s } => duration_s,
            PlanSegment::MinJerk(MinJerkSegment { duration_s, .. }) => duration_s,
            PlanSegment::ConstVel(ConstVelPhase { duration_s, .. }) => duration_s,
        }
    }

    /// True if the segment can only be entered at zero velocity.
    fn demands_rest_entry(&self) -> bool {
        !matches!(self, PlanSegment::ConstVel(_))
    }
}

/// Position, velocity, and acceleration of the plan at one instant.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct PlanState {
    pub pos: [f64; 3],
    pub vel: [f64; 3],
    pub acc: [f64; 3],
}

/// Velocity mismatches below this (m/s, per component) count as continuous.
const VEL_TOL: f64 = 1e-9;

#[derive(Debug)]
enum Compiled {
    Rest,
    MinJerk {
        disp: [f64; 3],
    },
    ConstVel {
        v: [f64; 3],
        v_in: [f64; 3],
        ramp_in_s: f64,
        ramp_out_s: f64,
    },
}

#[derive(Debug)]
struct Slot {
    start_s: f64,
    duration_s: f64,
    pos0: [f64; 3],
    compiled: Compiled,
}

/// A validated leader plan with closed-form evaluation.
#[derive(Debug)]
pub struct Plan {
    slots: Vec<Slot>,
    total_s: f64,
    end_pos: [f64; 3],
    peak_speed: f64,
}

fn norm3(v: [f64; 3]) -> f64 {
    (v[0] * v[0] + v[1] * v[1] + v[2] * v[2]).sqrt()
}

fn close3(a: [f64; 3], b: [f64; 3]) -> bool {
    (0..3).all(|i| (a[i] - b[i]).abs() <= VEL_TOL)
}

impl Plan {
    pub fn new(segments: Vec<PlanSegment>) -> Result<Plan> {
        if segments.is_empty() {
            return Err(Error::config("empty plan"));
        }
        let mut slots = Vec::with_capacity(segments.len());
        let mut t = 0.0;
        let mut pos = [0.0; 3];
        let mut vel = [0.0; 3]; // plans start at rest
        let mut peak: f64 = 0.0;
        for (i, seg) in segments.iter().enumerate() {
            let d = seg.duration_s();
            if !(d > 0.0) || !d.is_finite() {
                return Err(Error::config(format!(
                    "segment {i}: duration must be positive, got {d}"
                )));
            }
            let (compiled, exit_vel, disp) = match *seg {
                PlanSegment::Rest { .. } => {
                    if !close3(vel, [0.0; 3]) {
                        return Err(Error::config(format!(
                            "discontinuous plan: segment {i} (rest) entered at speed {:.3} m/s",
                            norm3(vel)
                        )));
                    }
                    (Compiled::Rest, [0.0; 3], [0.0; 3])
                }
                PlanSegment::MinJerk(MinJerkSegment { displacement, .. }) => {
                    if !close3(vel, [0.0; 3]) {
                        return Err(Error::config(format!(
                            "discontinuous plan: segment {i} (min-jerk) entered at speed {:.3} m/s",
                            norm3(vel)
                        )));
                    }
                    if displacement.iter().any(|x| !x.is_finite()) {
                        return Err(Error::config(format!(
                            "segment {i}: non-finite displacement"
                        )));
                    }
                    peak = peak.max(1.875 * norm3(displacement) / d);
                    (
                        Compiled::MinJerk { disp: displacement },
                        [0.0; 3],
                        displacement,
                    )
                }
                PlanSegment::ConstVel(ConstVelPhase {
                    velocity,
                    blend_s,
                    ..
                }) => {
                    if velocity.iter().any(|x| !x.is_finite()) {
                        return Err(Error::config(format!("segment {i}: non-finite velocity")));
                    }
                    if !(blend_s >= 0.0) || !blend_s.is_finite() {
                        return Err(Error::config(format!(
                            "segment {i}: blend must be ≥ 0, got {blend_s}"
                        )));
                    }
                    let ramp_in_s = if close3(vel, velocity) { 0.0 } else { blend_s };
                    if ramp_in_s == 0.0 && !close3(vel, velocity) {
                        return Err(Error::config(format!(
                            "discontinuous plan: segment {i} (const-vel) entered at a different \
                             velocity with no blend time"
                        )));
                    }
                    let next_demands_rest = segments
                        .get(i + 1)
                        .map(|s| s.demands_rest_entry())
                        .unwrap_or(true); // plans end at rest
                    let ramp_out_s = if next_demands_rest && !close3(velocity, [0.0; 3]) {
                        if blend_s == 0.0 {
                            return Err(Error::config(format!(
                                "discontinuous plan: segment {i} (const-vel) must come to rest \
                                 but has no blend time"
                            )));
                        }
                        blend_s
                    } else {
                        0.0
                    };
                    if ramp_in_s + ramp_out_s > d + 1e-12 {
                        return Err(Error::config(format!(
                            "segment {i}: blends ({:.3} s) do not fit in the phase duration ({d} s)",
                            ramp_in_s + ramp_out_s
                        )));
                    }
                    let plateau_s = d - ramp_in_s - ramp_out_s;
                    let mut disp = [0.0; 3];
                    for c in 0..3 {
                        disp[c] = 0.5 * (vel[c] + velocity[c]) * ramp_in_s
                            + velocity[c] * plateau_s
                            + 0.5 * velocity[c] * ramp_out_s;
                    }
                    peak = peak.max(norm3(velocity)).max(norm3(vel));
                    let exit = if ramp_out_s > 0.0 { [0.0; 3] } else { velocity };
                    (
                        Compiled::ConstVel {
                            v: velocity,
                            v_in: vel,
                            ramp_in_s,
                            ramp_out_s,
                        },
                        exit,
                        disp,
                    )
                }
            };
            slots.push(Slot {
                start_s: t,
                duration_s: d,
                pos0: pos,
                compiled,
            });
            t += d;
            for c in 0..3 {
                pos[c] += disp[c];
            }
            vel = exit_vel;
        }
        Ok(Plan {
            slots,
            total_s: t,
            end_pos: pos,
            peak_speed: peak,
        })
    }

    pub fn duration_s(&self) -> f64 {
        self.total_s
    }

    /// Largest leader speed reached anywhere in the plan.
    pub fn peak_speed(&self) -> f64 {
        self.peak_speed
    }

    /// Evaluates the plan at time `t` seconds. Before the start the plan
    /// rests at the origin; after the end it rests at the final position.
    pub fn eval(&self, t: f64) -> PlanState {
        if t < 0.0 {
            return PlanState {
                pos: self.slots[0].pos0,
                vel: [0.0; 3],
                acc: [0.0; 3],
            };
        }
        if t >= self.total_s {
            return PlanState {
                pos: self.end_pos,
                vel: [0.0; 3],
                acc: [0.0; 3],
            };
        }
        // Segments are half-open [start, start+duration).
        let idx = self.slots.partition_point(|s| s.start_s <= t) - 1;
        let slot = &self.slots[idx];
        let u = t - slot.start_s;
        match &slot.compiled {
            Compiled::Rest => PlanState {
                pos: slot.pos0,
                vel: [0.0; 3],
                acc: [0.0; 3],
            },
            Compiled::MinJerk { disp } => {
                let big_t = slot.duration_s;
                let tau = u / big_t;
                let (t2, t3) = (tau * tau, tau * tau * tau);
                let (t4, t5) = (t3 * tau, t3 * tau * tau);
                let shape_x = 10.0 * t3 - 15.0 * t4 + 6.0 * t5;
                let shape_v = (30.0 * t2 - 60.0 * t3 + 30.0 * t4) / big_t;
                let shape_a = (60.0 * tau - 180.0 * t2 + 120.0 * t3) / (big_t * big_t);
                let mut out = PlanState {
                    pos: [0.0; 3],
                    vel: [0.0; 3],
                    acc: [0.0; 3],
                };
                for c in 0..3 {
                    out.pos[c] = slot.pos0[c] + disp[c] * shape_x;
                    out.vel[c] = disp[c] * shape_v;
                    out.acc[c] = disp[c] * shape_a;
                }
                out
            }
            Compiled::ConstVel {
                v,
                v_in,
                ramp_in_s,
                ramp_out_s,
            } => {
                let mut out = PlanState {
                    pos: [0.0; 3],
                    vel: [0.0; 3],
                    acc: [0.0; 3],
                };
                let plateau_end = slot.duration_s - ramp_out_s;
                for c in 0..3 {
                    // Piecewise: ramp in, plateau, ramp out to rest.
                    let ramp_in_disp = 0.5 * (v_in[c] + v[c]) * ramp_in_s;
                    if u < *ramp_in_s {
                        let a = (v[c] - v_in[c]) / ramp_in_s;
                        out.acc[c] = a;
                        out.vel[c] = v_in[c] + a * u;
                        out.pos[c] = slot.pos0[c] + v_in[c] * u + 0.5 * a * u * u;
                    } else if u < plateau_end {
                        let w = u - ramp_in_s;
                        out.acc[c] = 0.0;
                        out.vel[c] = v[c];
                        out.pos[c] = slot.pos0[c] + ramp_in_disp + v[c] * w;
                    } else {
                        let w = u - plateau_end;
                        let a = -v[c] / ramp_out_s;
                        out.acc[c] = a;
                        out.vel[c] = v[c] + a * w;
                        out.pos[c] = slot.pos0[c]
                            + ramp_in_disp
                            + v[c] * (plateau_end - ramp_in_s)
                            + v[c] * w
                            + 0.5 * a * w * w;
                    }
                }
                out
            }
        }
    }
}

/// Number of half-open samples covering `duration_s` at `rate_hz`.
pub(crate) fn sample_count(duration_s: f64, rate_hz: f64) -> usize {
    ((duration_s * rate_hz) + 1e-9).floor() as usize
}

/// Samples one minimum-jerk segment on the closed interval [0, T], so the
/// zero-velocity/zero-acceleration endpoints are part of the output.
pub fn gen_min_jerk(segment: MinJerkSegment, rate_hz: f64) -> Result<Trial> {
    if !(segment.duration_s > 0.0) {
        return Err(Error::config(format!(
            "min-jerk duration must be positive, got {}",
            segment.duration_s
        )));
    }
    if !(rate_hz > 0.0) || segment.duration_s * rate_hz < 2.0 {
        return Err(Error::config(format!(
            "min-jerk segment needs duration·rate ≥ 2, got {}·{}",
            segment.duration_s, rate_hz
        )));
    }
    let plan = Plan::new(vec![PlanSegment::MinJerk(segment)])?;
    let n = sample_count(segment.duration_s, rate_hz) + 1; // closed interval
    let samples = (0..n)
        .map(|i| {
            let t = (i as f64 / rate_hz).min(segment.duration_s);
            let st = if i + 1 == n {
                // Land exactly on the endpoint so the boundary conditions
                // are exact, not within round-off of the time grid.
                plan_end_state(&plan)
            } else {
                plan.eval(t)
            };
            state_to_sample(st)
        })
        .collect();
    Trial::new(0, 0, rate_hz, samples)
}

fn plan_end_state(plan: &Plan) -> PlanState {
    plan.eval(plan.duration_s())
}

fn state_to_sample(st: PlanState) -> Sample {
    Sample::new(st.vel[0], st.vel[1], st.vel[2], st.acc[0], st.acc[1], st.acc[2])
}

/// Samples a whole plan at `rate_hz` on the half-open interval [0, total),
/// optionally adding white Gaussian measurement noise.
pub fn gen_trial(segments: Vec<PlanSegment>, rate_hz: f64, noise: Option<&NoiseSpec>) -> Result<Trial> {
    let plan = Plan::new(segments)?;
    gen_trial_from_plan(&plan, rate_hz, noise, 0, 0)
}

pub(crate) fn gen_trial_from_plan(
    plan: &Plan,
    rate_hz: f64,
    noise: Option<&NoiseSpec>,
    dyad_id: u32,
    trial_id: u32,
) -> Result<Trial> {
    if !(rate_hz > 0.0) {
        return Err(Error::config(format!("sample rate must be positive, got {rate_hz}")));
    }
    let n = sample_count(plan.duration_s(), rate_hz);
    if n == 0 {
        return Err(Error::config("plan too short to sample"));
    }
    let samples: Vec<Sample> = (0..n)
        .map(|i| state_to_sample(plan.eval(i as f64 / rate_hz)))
        .collect();
    let mut trial = Trial::new(dyad_id, trial_id, rate_hz, samples)?;
    if let Some(spec) = noise {
        trial = spec.apply(&trial)?;
    }
    Ok(trial)
}

#[cfg(test)]
mod tests {
    use super::*;

    const RATE: f64 = 200.0;

    fn mj(dx: f64, duration_s: f64) -> PlanSegment {
        PlanSegment::MinJerk(MinJerkSegment {
            displacement: [dx, 0.0, 0.0],
            duration_s,
        })
    }

    fn rest(duration_s: f64) -> PlanSegment {
        PlanSegment::Rest { duration_s }
    }

    fn cv(vx: f64, duration_s: f64, blend_s: f64) -> PlanSegment {
        PlanSegment::ConstVel(ConstVelPhase {
            velocity: [vx, 0.0, 0.0],
            duration_s,
            blend_s,
        })
    }

    #[test]
    fn min_jerk_peak_velocity_matches_closed_form() {
        // D = 1 m over T = 2 s peaks at 1.875·D/T = 0.9375 m/s at midpoint.
        let trial = gen_min_jerk(
            MinJerkSegment {
                displacement: [1.0, 0.0, 0.0],
                duration_s: 2.0,
            },
            RATE,
        )
        .unwrap();
        assert_eq!(trial.len(), 401);
        let mid = &trial.samples[200]; // t = 1.0 s, tau = 0.5
        assert!((mid.vx - 0.9375).abs() < 1e-12, "peak {}", mid.vx);
        let peak = trial.samples.iter().map(|s| s.vx).fold(f64::MIN, f64::max);
        assert!((peak - 0.9375).abs() < 1e-12);
    }

    #[test]
    fn min_jerk_endpoints_are_at_rest() {
        let trial = gen_min_jerk(
            MinJerkSegment {
                displacement: [0.3, -0.2, 0.1],
                duration_s: 1.3,
            },
            RATE,
        )
        .unwrap();
        for s in [&trial.samples[0], trial.samples.last().unwrap()] {
            for v in s.to_array() {
                assert!(v.abs() < 1e-9, "endpoint not at rest: {v}");
            }
        }
    }

    #[test]
    fn min_jerk_zero_displacement_is_all_zero() {
        let trial = gen_min_jerk(
            MinJerkSegment {
                displacement: [0.0, 0.0, 0.0],
                duration_s: 1.0,
            },
            RATE,
        )
        .unwrap();
        assert!(trial.samples.iter().all(|s| *s == Sample::ZERO));
    }

    #[test]
    fn min_jerk_rejects_degenerate_inputs() {
        let seg = |d| MinJerkSegment {
            displacement: [1.0, 0.0, 0.0],
            duration_s: d,
        };
        assert!(gen_min_jerk(seg(0.0), RATE).is_err());
        assert!(gen_min_jerk(seg(-1.0), RATE).is_err());
        assert!(gen_min_jerk(seg(0.005), RATE).is_err()); // duration·rate = 1
    }

    #[test]
    fn trial_sample_count_is_duration_times_rate() {
        // 1 s rest + 2 s reach + 1 s rest at 200 Hz: 800 samples, half-open.
        let trial = gen_trial(vec![rest(1.0), mj(1.0, 2.0), rest(1.0)], RATE, None).unwrap();
        assert_eq!(trial.len(), 800);
    }

    #[test]
    fn trial_matches_analytic_profile() {
        let trial = gen_trial(vec![rest(1.0), mj(1.0, 2.0), rest(1.0)], RATE, None).unwrap();
        for (i, s) in trial.samples.iter().enumerate() {
            let t = i as f64 / RATE;
            let (want_v, want_a) = if (1.0..3.0).contains(&t) {
                let tau = (t - 1.0) / 2.0;
                (
                    (30.0 * tau.powi(2) - 60.0 * tau.powi(3) + 30.0 * tau.powi(4)) / 2.0,
                    (60.0 * tau - 180.0 * tau.powi(2) + 120.0 * tau.powi(3)) / 4.0,
                )
            } else {
                (0.0, 0.0)
            };
            assert!((s.vx - want_v).abs() < 1e-9, "vx at t={t}");
            assert!((s.ax - want_a).abs() < 1e-9, "ax at t={t}");
            assert_eq!((s.vy, s.vz, s.ay, s.az), (0.0, 0.0, 0.0, 0.0));
        }
    }

    #[test]
    fn const_vel_plateau_has_zero_acceleration() {
        let trial = gen_trial(vec![rest(0.5), cv(0.6, 1.5, 0.3), rest(0.5)], RATE, None).unwrap();
        // Plateau spans t in [0.8, 1.7); acceleration must be exactly zero.
        for (i, s) in trial.samples.iter().enumerate() {
            let t = i as f64 / RATE;
            if (0.85..1.65).contains(&t) {
                assert_eq!(s.ax, 0.0, "t={t}");
                assert!((s.vx - 0.6).abs() < 1e-12, "t={t}");
            }
        }
    }

    #[test]
    fn const_vel_ramps_are_constant_acceleration() {
        let plan = Plan::new(vec![rest(0.5), cv(0.6, 1.5, 0.3), rest(0.5)]).unwrap();
        // Ramp in spans [0.5, 0.8): acceleration 0.6/0.3 = 2 m/s².
        let st = plan.eval(0.65);
        assert!((st.acc[0] - 2.0).abs() < 1e-12);
        assert!((st.vel[0] - 0.3).abs() < 1e-12);
        // Ramp out spans [1.7, 2.0): acceleration −2 m/s².
        let st = plan.eval(1.85);
        assert!((st.acc[0] + 2.0).abs() < 1e-12);
        assert!((st.vel[0] - 0.3).abs() < 1e-12);
    }

    #[test]
    fn velocity_is_continuous_across_boundaries() {
        let plan = Plan::new(vec![
            rest(0.3),
            mj(0.4, 0.8),
            cv(0.5, 1.0, 0.25),
            cv(-0.2, 0.8, 0.2),
            rest(0.3),
        ])
        .unwrap();
        let dt = 1e-7;
        for boundary in [0.3, 1.1, 2.1, 2.9] {
            let before = plan.eval(boundary - dt);
            let after = plan.eval(boundary + dt);
            for c in 0..3 {
                assert!(
                    (before.vel[c] - after.vel[c]).abs() < 1e-5,
                    "velocity jump at t={boundary}"
                );
            }
        }
    }

    #[test]
    fn positions_integrate_velocities() {
        // Central difference of closed-form positions reproduces velocities.
        let plan = Plan::new(vec![
            rest(0.3),
            mj(0.4, 0.8),
            cv(0.5, 1.0, 0.25),
            rest(0.3),
        ])
        .unwrap();
        let h = 1e-5;
        for i in 1..240 {
            let t = i as f64 * 0.01;
            let v_fd = (plan.eval(t + h).pos[0] - plan.eval(t - h).pos[0]) / (2.0 * h);
            let v = plan.eval(t).vel[0];
            // O(h²) except within h of a boundary, where one-sided kinks bite.
            if [0.3, 1.1, 1.35, 1.85, 2.1].iter().all(|b| (t - b).abs() > 2.0 * h) {
                assert!((v_fd - v).abs() < 1e-6, "t={t}: fd {v_fd} vs {v}");
            }
        }
    }

    #[test]
    fn discontinuous_plans_are_rejected() {
        // Const-vel with no blend cannot start from rest.
        let err = Plan::new(vec![rest(0.2), cv(0.5, 1.0, 0.0)]).unwrap_err();
        assert!(err.to_string().contains("discontinuous plan"), "{err}");
        // Const-vel with no blend cannot be followed by a rest.
        let err = Plan::new(vec![cv(0.0, 0.5, 0.0), cv(0.5, 1.0, 0.2), rest(0.2)]);
        assert!(err.is_ok(), "ramp-out through blend is fine");
        // Zero-velocity phase needs no blend at all.
        assert!(Plan::new(vec![cv(0.0, 0.5, 0.0), rest(0.2)]).is_ok());
    }

    #[test]
    fn blends_must_fit_in_the_phase() {
        let err = Plan::new(vec![rest(0.2), cv(0.5, 0.5, 0.3), rest(0.2)]).unwrap_err();
        assert!(err.to_string().contains("do not fit"), "{err}");
    }

    #[test]
    fn noise_zero_matches_noise_free() {
        let segs = vec![rest(0.5), mj(0.5, 1.0), rest(0.5)];
        let clean = gen_trial(segs.clone(), RATE, None).unwrap();
        let spec = NoiseSpec::new([0.0; 6], 123);
        let silent = gen_trial(segs, RATE, Some(&spec)).unwrap();
        assert_eq!(clean.samples, silent.samples);
    }

    #[test]
    fn noise_is_deterministic_per_seed() {
        let segs = vec![rest(0.5), mj(0.5, 1.0), rest(0.5)];
        let spec = NoiseSpec::new([0.01, 0.01, 0.01, 0.1, 0.1, 0.1], 7);
        let a = gen_trial(segs.clone(), RATE, Some(&spec)).unwrap();
        let b = gen_trial(segs.clone(), RATE, Some(&spec)).unwrap();
        assert_eq!(a.samples, b.samples);
        let other = NoiseSpec::new([0.01, 0.01, 0.01, 0.1, 0.1, 0.1], 8);
        let c = gen_trial(segs, RATE, Some(&other)).unwrap();
        assert_ne!(a.samples, c.samples);
    }
}
