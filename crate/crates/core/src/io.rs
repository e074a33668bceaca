//! Trajectory CSV reading and writing.
//!
//! One file holds many trials. Header: `dyad_id,trial_id,t,vx,vy,vz,ax,ay,az`
//! with `t` in seconds, strictly increasing within a trial, rows grouped by
//! `(dyad_id, trial_id)`. Floats are written in Rust's shortest
//! round-trippable form, so write → read → write is lossless and
//! byte-stable.
//!
//! Load policy: structural problems (bad header, unparseable fields,
//! non-monotone time, interleaved trials) are hard errors naming the row.
//! A trial containing a non-finite value is not an error: the whole trial is
//! rejected and reported, mirroring how recordings with dropped samples get
//! excluded from a real corpus.

use std::collections::BTreeSet;
use std::fmt::Write as _;
use std::io::{BufWriter, Write};
use std::path::Path;

use crate::error::{Error, Result};
use crate::trajectory::{Sample, Trial};

pub const TRAJECTORY_HEADER: &str = "dyad_id,trial_id,t,vx,vy,vz,ax,ay,az";

/// A trial dropped at load time, with the first offending row (1-based,
/// counting the header as row 1).
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct RejectedTrial {
    pub dyad_id: u32,
    pub trial_id: u32,
    pub row: usize,
    pub reason: String,
}

/// Result of loading a trajectory CSV: the usable trials plus a record of
/// any rejected ones.
#[derive(Clone, Debug, Default)]
pub struct LoadedTrials {
    pub trials: Vec<Trial>,
    pub rejected: Vec<RejectedTrial>,
}

pub fn write_trials_csv(path: &Path, trials: &[Trial]) -> Result<()> {
    let file = std::fs::File::create(path).map_err(|e| Error::io(path, e))?;
    let mut out = BufWriter::new(file);
    let mut line = String::with_capacity(128);
    writeln!(out, "{TRAJECTORY_HEADER}").map_err(|e| Error::io(path, e))?;
    for trial in trials {
        for (i, s) in trial.samples.iter().enumerate() {
            let t = i as f64 / trial.sample_rate_hz;
            line.clear();
            write!(
                line,
                "{},{},{},{},{},{},{},{},{}",
                trial.dyad_id, trial.trial_id, t, s.vx, s.vy, s.vz, s.ax, s.ay, s.az
            )
            .expect("writing to a String cannot fail");
            writeln!(out, "{line}").map_err(|e| Error::io(path, e))?;
        }
    }
    out.flush().map_err(|e| Error::io(path, e))
}

/// Loads every trial from a trajectory CSV. See the module docs for the
/// error/rejection policy.
pub fn read_trials_csv(path: &Path) -> Result<LoadedTrials> {
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    parse_trials_csv(&text, path)
}

struct PendingTrial {
    dyad_id: u32,
    trial_id: u32,
    first_row: usize,
    times: Vec<f64>,
    samples: Vec<Sample>,
}

fn parse_trials_csv(text: &str, path: &Path) -> Result<LoadedTrials> {
    let mut lines = text.lines().enumerate();
    let header = match lines.next() {
        Some((_, h)) => h.trim_end_matches('\r'),
        None => return Err(Error::data(format!("{}: empty file", path.display()))),
    };
    if header != TRAJECTORY_HEADER {
        return Err(Error::data(format!(
            "{}: row 1: expected header `{TRAJECTORY_HEADER}`, got `{header}`",
            path.display()
        )));
    }

    let mut loaded = LoadedTrials::default();
    let mut seen: BTreeSet<(u32, u32)> = BTreeSet::new();
    let mut pending: Option<PendingTrial> = None;

    let finish = |p: PendingTrial, loaded: &mut LoadedTrials| -> Result<()> {
        finish_trial(p, loaded, path)
    };

    for (idx, raw) in lines {
        let row = idx + 1; // 1-based, header included
        let line = raw.trim_end_matches('\r');
        if line.is_empty() {
            continue;
        }
        let mut fields = [""; 9];
        let mut count = 0;
        for part in line.split(',') {
            if count == 9 {
                count = 10;
                break;
            }
            fields[count] = part;
            count += 1;
        }
        if count != 9 {
            return Err(Error::data(format!(
                "{}: row {row}: expected 9 fields, got {count}",
                path.display()
            )));
        }
        let dyad_id = parse_field::<u32>(fields[0], "dyad_id", row, path)?;
        let trial_id = parse_field::<u32>(fields[1], "trial_id", row, path)?;
        let t = parse_field::<f64>(fields[2], "t", row, path)?;
        let mut vals = [0.0; 6];
        for (c, v) in vals.iter_mut().enumerate() {
            *v = parse_field::<f64>(fields[3 + c], crate::trajectory::CHANNEL_NAMES[c], row, path)?;
        }

        let key = (dyad_id, trial_id);
        let same_trial = pending
            .as_ref()
            .map(|p| (p.dyad_id, p.trial_id) == key)
            .unwrap_or(false);
        if !same_trial {
            if let Some(p) = pending.take() {
                finish(p, &mut loaded)?;
            }
            if !seen.insert(key) {
                return Err(Error::data(format!(
                    "{}: row {row}: trial {dyad_id}/{trial_id} reappears after other trials; \
                     rows must be grouped by (dyad_id, trial_id)",
                    path.display()
                )));
            }
            pending = Some(PendingTrial {
                dyad_id,
                trial_id,
                first_row: row,
                times: Vec::new(),
                samples: Vec::new(),
            });
        }
        let p = pending.as_mut().expect("pending trial was just installed");
        p.times.push(t);
        p.samples.push(Sample::from_array(vals));
    }
    if let Some(p) = pending.take() {
        finish(p, &mut loaded)?;
    }
    Ok(loaded)
}

fn finish_trial(p: PendingTrial, loaded: &mut LoadedTrials, path: &Path) -> Result<()> {
    // Finiteness first: a trial with bad values is rejected wholesale and
    // never reaches the structural checks.
    for (i, s) in p.samples.iter().enumerate() {
        if !p.times[i].is_finite() || !s.is_finite() {
            loaded.rejected.push(RejectedTrial {
                dyad_id: p.dyad_id,
                trial_id: p.trial_id,
                row: p.first_row + i,
                reason: "non-finite value".to_string(),
            });
            return Ok(());
        }
    }
    if p.samples.len() < 2 {
        return Err(Error::data(format!(
            "{}: row {}: trial {}/{} has fewer than 2 rows; sample rate cannot be inferred",
            path.display(),
            p.first_row,
            p.dyad_id,
            p.trial_id
        )));
    }
    for i in 1..p.times.len() {
        if p.times[i] <= p.times[i - 1] {
            return Err(Error::data(format!(
                "{}: row {}: time is not strictly increasing within trial {}/{}",
                path.display(),
                p.first_row + i,
                p.dyad_id,
                p.trial_id
            )));
        }
    }
    let n = p.samples.len();
    let span = p.times[n - 1] - p.times[0];
    let rate = (n - 1) as f64 / span;
    loaded.trials.push(Trial::new(p.dyad_id, p.trial_id, rate, p.samples)?);
    Ok(())
}

fn parse_field<T: std::str::FromStr>(s: &str, name: &str, row: usize, path: &Path) -> Result<T> {
    s.trim().parse::<T>().map_err(|_| {
        Error::data(format!(
            "{}: row {row}: cannot parse {name} from `{s}`",
            path.display()
        ))
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn random_trial(rng: &mut impl Rng, dyad_id: u32, trial_id: u32, n: usize) -> Trial {
        let samples = (0..n)
            .map(|_| {
                Sample::from_array([
                    rng.gen_range(-1.0..1.0),
                    rng.gen_range(-1.0..1.0),
                    rng.gen_range(-1.0..1.0),
                    rng.gen_range(-4.0..4.0),
                    rng.gen_range(-4.0..4.0),
                    rng.gen_range(-4.0..4.0),
                ])
            })
            .collect();
        Trial::new(dyad_id, trial_id, 200.0, samples).unwrap()
    }

    #[test]
    fn round_trip_preserves_samples_exactly() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("trials.csv");
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let trials: Vec<Trial> = (0..3)
            .map(|d| random_trial(&mut rng, d, 7 + d, 40 + d as usize))
            .collect();
        write_trials_csv(&path, &trials).unwrap();
        let loaded = read_trials_csv(&path).unwrap();
        assert!(loaded.rejected.is_empty());
        assert_eq!(loaded.trials.len(), trials.len());
        for (a, b) in loaded.trials.iter().zip(&trials) {
            assert_eq!(a.dyad_id, b.dyad_id);
            assert_eq!(a.trial_id, b.trial_id);
            assert_eq!(a.samples, b.samples);
            assert!((a.sample_rate_hz - 200.0).abs() < 1e-6);
        }
    }

    #[test]
    fn write_is_byte_stable() {
        let dir = tempfile::tempdir().unwrap();
        let a = dir.path().join("a.csv");
        let b = dir.path().join("b.csv");
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let trials = vec![random_trial(&mut rng, 0, 0, 25)];
        write_trials_csv(&a, &trials).unwrap();
        write_trials_csv(&b, &trials).unwrap();
        assert_eq!(std::fs::read(&a).unwrap(), std::fs::read(&b).unwrap());
    }

    #[test]
    fn bad_header_is_an_error() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("bad.csv");
        std::fs::write(&path, "dyad,trial,t,vx,vy,vz,ax,ay,az\n").unwrap();
        let err = read_trials_csv(&path).unwrap_err();
        assert!(err.to_string().contains("header"), "{err}");
    }

    #[test]
    fn unparseable_field_names_the_row() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("bad.csv");
        let text = format!("{TRAJECTORY_HEADER}\n0,0,0.0,1.0,0,0,0,0,0\n0,0,0.005,oops,0,0,0,0,0\n");
        std::fs::write(&path, text).unwrap();
        let err = read_trials_csv(&path).unwrap_err();
        let msg = err.to_string();
        assert!(msg.contains("row 3") && msg.contains("vx"), "{msg}");
    }

    #[test]
    fn non_monotone_time_names_the_row() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("bad.csv");
        let text = format!(
            "{TRAJECTORY_HEADER}\n0,0,0.0,0,0,0,0,0,0\n0,0,0.01,0,0,0,0,0,0\n0,0,0.01,0,0,0,0,0,0\n"
        );
        std::fs::write(&path, text).unwrap();
        let err = read_trials_csv(&path).unwrap_err();
        let msg = err.to_string();
        assert!(msg.contains("row 4") && msg.contains("increasing"), "{msg}");
    }

    #[test]
    fn non_finite_value_rejects_only_that_trial() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("mixed.csv");
        let mut text = format!("{TRAJECTORY_HEADER}\n");
        for i in 0..3 {
            text.push_str(&format!("0,0,{},0.1,0,0,0,0,0\n", i as f64 * 0.005));
        }
        text.push_str("0,1,0.0,0.1,0,0,0,0,0\n");
        text.push_str("0,1,0.005,NaN,0,0,0,0,0\n");
        for i in 0..3 {
            text.push_str(&format!("1,0,{},0.2,0,0,0,0,0\n", i as f64 * 0.005));
        }
        std::fs::write(&path, text).unwrap();
        let loaded = read_trials_csv(&path).unwrap();
        assert_eq!(loaded.trials.len(), 2);
        assert_eq!(loaded.rejected.len(), 1);
        let r = &loaded.rejected[0];
        assert_eq!((r.dyad_id, r.trial_id), (0, 1));
        assert_eq!(r.row, 6);
        assert!(r.reason.contains("non-finite"));
    }

    #[test]
    fn interleaved_trial_rows_are_an_error() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("bad.csv");
        let text = format!(
            "{TRAJECTORY_HEADER}\n\
             0,0,0.0,0,0,0,0,0,0\n0,0,0.005,0,0,0,0,0,0\n\
             0,1,0.0,0,0,0,0,0,0\n0,1,0.005,0,0,0,0,0,0\n\
             0,0,0.01,0,0,0,0,0,0\n"
        );
        std::fs::write(&path, text).unwrap();
        let err = read_trials_csv(&path).unwrap_err();
        let msg = err.to_string();
        assert!(msg.contains("row 6") && msg.contains("grouped"), "{msg}");
    }

    #[test]
    fn header_only_file_loads_empty() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("empty.csv");
        std::fs::write(&path, format!("{TRAJECTORY_HEADER}\n")).unwrap();
        let loaded = read_trials_csv(&path).unwrap();
        assert!(loaded.trials.is_empty());
        assert!(loaded.rejected.is_empty());
    }
}
