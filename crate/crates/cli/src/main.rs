//! `tandem`: command-line front end for the forecasting toolkit.
//!
//! Subcommands cover the full reproduction pipeline: `generate` a
//! synthetic corpus, `train` the curriculum model, `predict` from a
//! recorded history, `evaluate` a predictor into an MSE-vs-horizon
//! report, `compare` two reports, and `run-all` for the entire sequence.
//!
//! Exit codes: 0 success, 2 configuration or usage errors, 3 data
//! errors, 4 numerical failures, 5 model-file errors.

use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand};

use tandem_core::eval::{
    compare, evaluate, overlay, Forecaster, HorizonReport, NnForecaster, PolyForecaster,
};
use tandem_core::io::{read_trials_csv, write_trials_csv, LoadedTrials, TRAJECTORY_HEADER};
use tandem_core::mlp::{load, save};
use tandem_core::pipeline::{run_all, RunAllConfig};
use tandem_core::synth::{make_corpus, CorpusConfig, NoiseSpec};
use tandem_core::trainer::{
    resume_curriculum, train_curriculum, CurriculumOutcome, SplitDataset, TrainConfig,
};
use tandem_core::trajectory::{split_by_dyad, Side, Trial};
use tandem_core::{Error, Result};

#[derive(Parser)]
#[command(
    name = "tandem",
    version,
    about = "Forecast the short-horizon motion of a jointly carried object",
    propagate_version = true
)]
struct Cli {
    /// Cap worker threads. The current pipeline is single-threaded and
    /// deterministic, so this only validates; results never depend on it.
    #[arg(long, global = true, default_value_t = 1)]
    threads: usize,

    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Generate a synthetic dyad corpus as a trajectory CSV.
    Generate(GenerateArgs),
    /// Train the stabilization-curriculum model on a corpus CSV.
    Train(TrainArgs),
    /// Forecast from the trailing history window of a trajectory CSV.
    Predict(PredictArgs),
    /// Score a predictor over a corpus into an MSE-vs-horizon report CSV.
    Evaluate(EvaluateArgs),
    /// Compare two report CSVs step by step.
    Compare(CompareArgs),
    /// Run the complete reproduction pipeline into a directory.
    RunAll(RunAllArgs),
}

#[derive(Args)]
struct GenerateArgs {
    /// Corpus config TOML; defaults cover the standard 20-dyad corpus.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Override the config's base seed.
    #[arg(long)]
    seed: Option<u64>,
    /// Output trajectory CSV path.
    #[arg(long, short)]
    out: PathBuf,
}

#[derive(Args)]
struct TrainArgs {
    /// Input corpus CSV.
    #[arg(long)]
    corpus: PathBuf,
    /// Training config TOML; defaults match the standard setup.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Output model file.
    #[arg(long, short)]
    out: PathBuf,
    /// Training report TOML path (default: next to the model).
    #[arg(long)]
    report: Option<PathBuf>,
    /// Continue the curriculum from this saved model instead of starting
    /// fresh; stages at or below its recorded stage are skipped.
    #[arg(long)]
    resume: Option<PathBuf>,
    /// Fraction of dyads assigned to the training side.
    #[arg(long, default_value_t = 0.75)]
    split_fraction: f64,
    /// Seed for the dyad split.
    #[arg(long, default_value_t = 271)]
    split_seed: u64,
    /// Seed for initialization and batch sampling.
    #[arg(long, default_value_t = 41)]
    seed: u64,
}

#[derive(Args)]
struct PredictArgs {
    /// Trained model file.
    #[arg(long)]
    model: PathBuf,
    /// Trajectory CSV; the forecast starts after the first trial's last
    /// sample.
    #[arg(long)]
    input: PathBuf,
    /// Output forecast CSV.
    #[arg(long, short)]
    out: PathBuf,
    /// Steps to forecast (50 steps = 0.25 s at 200 Hz).
    #[arg(long, default_value_t = 50)]
    horizon: usize,
}

#[derive(Args)]
struct EvaluateArgs {
    /// Input corpus CSV.
    #[arg(long)]
    corpus: PathBuf,
    /// Evaluate this trained model.
    #[arg(long, group = "predictor")]
    model: Option<PathBuf>,
    /// Evaluate the polynomial baseline of this degree instead.
    #[arg(long, group = "predictor")]
    poly_degree: Option<usize>,
    /// Forecast horizon in steps.
    #[arg(long, default_value_t = 100)]
    horizon: usize,
    /// Corpus side to score: train, validation, or all.
    #[arg(long, default_value = "validation")]
    split: String,
    #[arg(long, default_value_t = 0.75)]
    split_fraction: f64,
    #[arg(long, default_value_t = 271)]
    split_seed: u64,
    /// History noise: `default`, or `VEL_STD,ACC_STD,SEED`.
    #[arg(long)]
    noise: Option<String>,
    /// Output report CSV.
    #[arg(long, short)]
    out: PathBuf,
    /// Also write anchored-forecast overlay data for the first scored
    /// trial to this path.
    #[arg(long)]
    overlay: Option<PathBuf>,
    /// Seconds between overlay anchors.
    #[arg(long, default_value_t = 1.0)]
    overlay_period: f64,
}

#[derive(Args)]
struct CompareArgs {
    /// Reference report CSV (ratios and crossover are relative to it).
    a: PathBuf,
    /// Report CSV to compare against the reference.
    b: PathBuf,
    /// Output comparison CSV.
    #[arg(long, short)]
    out: PathBuf,
}

#[derive(Args)]
struct RunAllArgs {
    /// Pipeline config TOML; defaults reproduce the standard corpus.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Output directory for every artifact.
    #[arg(long, short)]
    out: PathBuf,
}

fn main() {
    let cli = Cli::parse();
    if cli.threads == 0 {
        let e = Error::config("--threads must be at least 1");
        eprintln!("error: {e}");
        std::process::exit(e.exit_code());
    }
    if let Err(e) = run(cli.command) {
        eprintln!("error: {e}");
        std::process::exit(e.exit_code());
    }
}

fn run(command: Command) -> Result<()> {
    match command {
        Command::Generate(args) => cmd_generate(args),
        Command::Train(args) => cmd_train(args),
        Command::Predict(args) => cmd_predict(args),
        Command::Evaluate(args) => cmd_evaluate(args),
        Command::Compare(args) => cmd_compare(args),
        Command::RunAll(args) => cmd_run_all(args),
    }
}

/// Reads a corpus CSV, reporting any rejected trials on stderr.
fn load_corpus(path: &Path) -> Result<Vec<Trial>> {
    let LoadedTrials { trials, rejected } = read_trials_csv(path)?;
    for r in &rejected {
        eprintln!(
            "warning: skipped trial {}/{}: {}",
            r.dyad_id, r.trial_id, r.reason
        );
    }
    if trials.is_empty() {
        return Err(Error::data(format!(
            "{} contains no usable trials",
            path.display()
        )));
    }
    Ok(trials)
}

fn cmd_generate(args: GenerateArgs) -> Result<()> {
    let mut config = match &args.config {
        Some(path) => CorpusConfig::read(path)?,
        None => CorpusConfig::default(),
    };
    if let Some(seed) = args.seed {
        config.seed = seed;
    }
    let trials = make_corpus(&config)?;
    write_trials_csv(&args.out, &trials)?;
    let windows: usize = trials
        .iter()
        .map(|t| t.len().saturating_sub(tandem_core::trajectory::HISTORY_LEN))
        .sum();
    println!(
        "wrote {} trials ({} one-step training windows) to {}",
        trials.len(),
        windows,
        args.out.display()
    );
    Ok(())
}

fn cmd_train(args: TrainArgs) -> Result<()> {
    let config = match &args.config {
        Some(path) => TrainConfig::read(path)?,
        None => TrainConfig::default(),
    };
    let trials = load_corpus(&args.corpus)?;
    let split = split_by_dyad(&trials, args.split_fraction, args.split_seed)?;
    let data = SplitDataset::new(&trials, &split);

    let outcome: CurriculumOutcome = match &args.resume {
        Some(path) => {
            let model = load(path)?;
            eprintln!(
                "resuming from {} at recorded stage {}",
                path.display(),
                model.trained_stage
            );
            resume_curriculum(model, &data, &config, args.seed)?
        }
        None => train_curriculum(&data, &config, args.seed)?,
    };

    for stage in &outcome.report.stages {
        eprintln!(
            "stage k = {}: {} steps, train MSE {:.3e}, validation MSE {:.3e}, {}",
            stage.k,
            stage.steps_run,
            stage.final_train_mse,
            stage.final_val_mse,
            if stage.converged { "converged" } else { "did not converge" }
        );
    }
    if outcome.report.stages.is_empty() {
        eprintln!("nothing to do: every scheduled stage is at or below the recorded stage");
    }

    save(&outcome.model, &args.out)?;
    if let Some(stage0) = &outcome.stage0 {
        let path = sibling(&args.out, "-stage0");
        save(stage0, &path)?;
        eprintln!("stage-0 snapshot: {}", path.display());
    }
    let report_path = args
        .report
        .clone()
        .unwrap_or_else(|| sibling(&args.out, "-train-report").with_extension("toml"));
    std::fs::write(&report_path, outcome.report.to_toml()?)
        .map_err(|e| Error::io(&report_path, e))?;
    println!(
        "trained through stage {} -> {} (report: {})",
        outcome.model.trained_stage,
        args.out.display(),
        report_path.display()
    );
    Ok(())
}

/// `model.tmlp` + `-stage0` -> `model-stage0.tmlp`.
fn sibling(path: &Path, suffix: &str) -> PathBuf {
    let stem = path.file_stem().unwrap_or_default().to_string_lossy();
    let mut name = format!("{stem}{suffix}");
    if let Some(ext) = path.extension() {
        name = format!("{name}.{}", ext.to_string_lossy());
    }
    path.with_file_name(name)
}

fn cmd_predict(args: PredictArgs) -> Result<()> {
    let model = load(&args.model)?;
    let history_len = model.history_len().ok_or_else(|| {
        Error::config("model input width is not a whole number of samples")
    })?;
    let trials = load_corpus(&args.input)?;
    let trial = &trials[0];
    if trial.len() < history_len {
        return Err(Error::data(format!(
            "insufficient history: trial {}/{} has {} samples but the model needs {}",
            trial.dyad_id,
            trial.trial_id,
            trial.len(),
            history_len
        )));
    }
    let window = &trial.samples[trial.len() - history_len..];
    let forecast = tandem_core::predictor::rollout(&model, window, args.horizon)?;

    let mut out = String::from(TRAJECTORY_HEADER);
    out.push('\n');
    let rate = trial.sample_rate_hz;
    for (j, s) in forecast.steps.iter().enumerate() {
        let t = (trial.len() + j) as f64 / rate;
        out.push_str(&format!(
            "{},{},{},{},{},{},{},{},{}\n",
            trial.dyad_id, trial.trial_id, t, s.vx, s.vy, s.vz, s.ax, s.ay, s.az
        ));
    }
    std::fs::write(&args.out, out).map_err(|e| Error::io(&args.out, e))?;
    println!(
        "forecast {} steps ({:.3} s) past trial {}/{} -> {}",
        args.horizon,
        args.horizon as f64 / rate,
        trial.dyad_id,
        trial.trial_id,
        args.out.display()
    );
    Ok(())
}

fn parse_noise(arg: &str) -> Result<NoiseSpec> {
    if arg == "default" {
        return Ok(NoiseSpec::default_levels(29));
    }
    let parts: Vec<&str> = arg.split(',').collect();
    if parts.len() != 3 {
        return Err(Error::config(format!(
            "noise must be `default` or `VEL_STD,ACC_STD,SEED`, got `{arg}`"
        )));
    }
    let vel: f64 = parts[0]
        .trim()
        .parse()
        .map_err(|_| Error::config(format!("bad velocity noise std `{}`", parts[0])))?;
    let acc: f64 = parts[1]
        .trim()
        .parse()
        .map_err(|_| Error::config(format!("bad acceleration noise std `{}`", parts[1])))?;
    let seed: u64 = parts[2]
        .trim()
        .parse()
        .map_err(|_| Error::config(format!("bad noise seed `{}`", parts[2])))?;
    Ok(NoiseSpec::from_levels(vel, acc, seed))
}

fn cmd_evaluate(args: EvaluateArgs) -> Result<()> {
    // Argument validation comes before any file IO.
    let noise = args.noise.as_deref().map(parse_noise).transpose()?;
    if args.model.is_some() == args.poly_degree.is_some() {
        return Err(Error::config(
            "pick exactly one predictor: --model PATH or --poly-degree N",
        ));
    }

    let trials = load_corpus(&args.corpus)?;
    let selected: Vec<&Trial> = match args.split.as_str() {
        "all" => trials.iter().collect(),
        "train" | "validation" => {
            let split = split_by_dyad(&trials, args.split_fraction, args.split_seed)?;
            let want = if args.split == "train" { Side::Train } else { Side::Validation };
            trials
                .iter()
                .filter(|t| split.side_of(t.dyad_id) == Some(want))
                .collect()
        }
        other => {
            return Err(Error::config(format!(
                "--split must be train, validation, or all, got `{other}`"
            )))
        }
    };

    let dataset = if noise.is_some() { "noisy" } else { args.split.as_str() };
    let rate = selected
        .first()
        .map(|t| t.sample_rate_hz)
        .ok_or_else(|| Error::data("no trials on the selected split side"))?;

    let loaded_model;
    let nn_forecaster;
    let poly_forecaster;
    let predictor: &dyn Forecaster = match (&args.model, args.poly_degree) {
        (Some(path), None) => {
            loaded_model = load(path)?;
            nn_forecaster = NnForecaster::new(&loaded_model, "nn");
            &nn_forecaster
        }
        _ => {
            let degree = args.poly_degree.expect("validated above");
            poly_forecaster = PolyForecaster::new(degree, rate);
            &poly_forecaster
        }
    };

    let report = evaluate(predictor, &selected, args.horizon, noise.as_ref(), dataset)?;
    report.write_csv(&args.out)?;
    println!(
        "{} on {}: velocity MSE {:.6} (m/s)^2 mean over steps 1..={}, {:.6} at step {} ({} windows, {} diverged) -> {}",
        report.predictor_id,
        report.dataset_id,
        report.mean_velocity_mse_through(report.horizon.min(50)),
        report.horizon.min(50),
        report.per_step.last().map_or(f64::NAN, |s| s.v_mean),
        report.horizon,
        report.n_windows,
        report.n_diverged,
        args.out.display()
    );

    if let Some(path) = &args.overlay {
        let trace = overlay(predictor, selected[0], args.overlay_period, args.horizon.min(50))?;
        trace.write_csv(path)?;
        println!(
            "overlay with {} anchored forecasts on trial {}/{} -> {}",
            trace.segments.len(),
            trace.dyad_id,
            trace.trial_id,
            path.display()
        );
    }
    Ok(())
}

fn cmd_compare(args: CompareArgs) -> Result<()> {
    let a = HorizonReport::read_csv(&args.a)?;
    let b = HorizonReport::read_csv(&args.b)?;
    let table = compare(&[&a, &b])?;
    table.write_csv(&args.out)?;
    match table.crossover[1] {
        Some(step) => println!(
            "{} drops below {} at step {} -> {}",
            table.ids[0],
            table.ids[1],
            step,
            args.out.display()
        ),
        None => println!(
            "{} never drops below {} within {} steps -> {}",
            table.ids[0],
            table.ids[1],
            table.horizon,
            args.out.display()
        ),
    }
    Ok(())
}

fn cmd_run_all(args: RunAllArgs) -> Result<()> {
    let config = match &args.config {
        Some(path) => RunAllConfig::read(path)?,
        None => RunAllConfig::default(),
    };
    let outputs = run_all(&config, &args.out, |line| eprintln!("{line}"))?;
    println!(
        "pipeline complete: validation velocity MSE {:.6} (m/s)^2 over 50 steps; summary in {}",
        outputs.summary.headline.validation_velocity_mse_mean50,
        outputs.out_dir.join("summary.toml").display()
    );
    Ok(())
}
