use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Parser, Subcommand};

use esn_core::data::{self, DataSource, Dataset};
use esn_core::error::{Error, Result};
use esn_core::harness::{self, ExperimentConfig};
use esn_core::metrics::ph_samples_csv;
use esn_core::reservoir::{one_step_pairs, washout_init, EsnModel};

#[derive(Parser)]
#[command(name = "esn", version, about = "Echo state network forecasting of chaotic flows")]
struct Cli {
    /// Experiment configuration (TOML).
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Overrides the configuration seed.
    #[arg(long, global = true)]
    seed: Option<u64>,
    #[arg(long, global = true, default_value = "out")]
    out_dir: PathBuf,
    /// Worker threads for ensembles (default: all cores).
    #[arg(long, global = true)]
    threads: Option<usize>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Integrate the configured system and write `series.csv`.
    Simulate {
        /// Write the noisy, quantised Chua stand-in for circuit recordings
        /// instead.
        #[arg(long)]
        surrogate: bool,
        #[arg(long, default_value_t = 20_000)]
        steps: usize,
    },
    /// Train on the configured data and write `model.json`.
    Train,
    /// Warm up a model on a CSV and run it autonomously.
    Predict {
        #[arg(long)]
        model: PathBuf,
        #[arg(long)]
        warmup: PathBuf,
        #[arg(long)]
        steps: usize,
    },
    /// Prediction horizons of a saved model on a test CSV, as JSON.
    Evaluate {
        #[arg(long)]
        model: PathBuf,
        #[arg(long)]
        data: PathBuf,
    },
    /// Train and write the prediction-horizon ensemble.
    PhDist,
    /// Retrain at every configured noise level.
    NoiseSweep,
    /// Divergence times of perturbed true trajectories.
    Diverge {
        #[arg(long)]
        delta0: Option<f64>,
        #[arg(long)]
        pairs: Option<usize>,
    },
    /// Full experiment: report plus plot-ready CSVs.
    Report,
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}

fn load_config(cli: &Cli) -> Result<ExperimentConfig> {
    let path = cli
        .config
        .as_ref()
        .ok_or_else(|| Error::Config("this command needs --config".into()))?;
    let mut cfg = ExperimentConfig::load(path)?;
    if let Some(seed) = cli.seed {
        cfg.seed = seed;
    }
    Ok(cfg)
}

fn run(cli: Cli) -> Result<()> {
    if let Some(n) = cli.threads {
        rayon::ThreadPoolBuilder::new()
            .num_threads(n)
            .build_global()
            .map_err(|e| Error::Argument(e.to_string()))?;
    }
    fs::create_dir_all(&cli.out_dir)?;
    let out = cli.out_dir.as_path();
    match &cli.command {
        Command::Simulate { surrogate, steps } => {
            let ds = if *surrogate {
                data::experimental_surrogate(*steps, cli.seed.unwrap_or(0))?
            } else {
                let cfg = load_config(&cli)?;
                let spec = cfg
                    .system
                    .ok_or_else(|| Error::Config("simulate needs a [system] section".into()))?;
                Dataset::simulated(&spec)?
            };
            data::save_dataset(&ds, &out.join("series.csv"))?;
            println!("wrote {} samples to {}", ds.series.len(), out.join("series.csv").display());
        }
        Command::Train => {
            let cfg = load_config(&cli)?;
            let p = harness::prepare(&cfg, 0.0)?;
            data::save_model(&p.model, &out.join("model.json"))?;
            println!(
                "trained on {} samples, one-step mse {:.3e}",
                p.train_report.samples, p.train_report.mse
            );
        }
        Command::Predict {
            model,
            warmup,
            steps,
        } => predict(model, warmup, *steps, out)?,
        Command::Evaluate { model, data: path } => {
            let cfg = load_config(&cli)?;
            let model = data::load_model(model)?;
            let test = data::load_csv(path, None)?;
            let dt = test.series.dt();
            let samples = harness::ph_distribution(
                &model,
                &test.series,
                &cfg.thresholds,
                cfg.ensemble_size,
                cfg.seed,
                cfg.reference_mle(),
                cfg.horizon_steps(dt),
            )?;
            let summary = harness::summarise(&cfg.thresholds, &samples);
            harness::write_json(
                &serde_json::json!({ "thresholds": summary, "ph_samples": samples }),
                &out.join("metrics.json"),
            )?;
            print_summary(&summary);
        }
        Command::PhDist => {
            let cfg = load_config(&cli)?;
            let p = harness::prepare(&cfg, 0.0)?;
            let test = &p.test.series;
            let samples = harness::ph_distribution(
                &p.model,
                test,
                &cfg.thresholds,
                cfg.ensemble_size,
                cfg.seed,
                cfg.reference_mle(),
                cfg.horizon_steps(test.dt()),
            )?;
            fs::write(out.join("ph_samples.csv"), ph_samples_csv(&samples))?;
            let summary = harness::summarise(&cfg.thresholds, &samples);
            harness::write_json(&summary, &out.join("ph_summary.json"))?;
            print_summary(&summary);
        }
        Command::NoiseSweep => {
            let cfg = load_config(&cli)?;
            let report = harness::noise_sweep(&cfg)?;
            harness::write_json(&report, &out.join("noise_sweep.json"))?;
            for level in &report.levels {
                print!("sigma {:<6}", level.sigma);
                print_summary(&level.thresholds);
            }
        }
        Command::Diverge { delta0, pairs } => {
            let mut cfg = load_config(&cli)?;
            if let Some(d) = delta0 {
                cfg.divergence.delta0 = *d;
            }
            if let Some(n) = pairs {
                cfg.divergence.n_pairs = *n;
            }
            let report = harness::run_divergence(&cfg)?;
            fs::write(out.join("divergence.csv"), ph_samples_csv(&report.samples))?;
            harness::write_json(&report, &out.join("divergence.json"))?;
            match report.median {
                Some(m) => println!("median divergence time {:.3} ({} never crossed)", m.median, m.never_crossed),
                None => println!("no pair diverged within the horizon"),
            }
        }
        Command::Report => {
            let cfg = load_config(&cli)?;
            let result = harness::run_experiment(&cfg)?;
            harness::write_experiment(&result, out)?;
            print_summary(&result.report.thresholds);
            for f in &result.report.failures {
                eprintln!("stage {} failed: {}", f.stage, f.message);
            }
        }
    }
    Ok(())
}

fn predict(model: &Path, warmup: &Path, steps: usize, out: &Path) -> Result<()> {
    let model: EsnModel = data::load_model(model)?;
    let warm = data::load_csv(warmup, None)?;
    let hp = &model.hp;
    let series = &warm.series;
    if series.len() < 2 {
        return Err(Error::InsufficientData("warmup needs at least two samples".into()));
    }
    let (inputs, _) = one_step_pairs(series, hp.input_dim, hp.input_dim)?;
    let x = washout_init(&model.weights, &inputs, hp.leak, hp.activation)?;
    let u0 = &series.row(series.len() - 1)[..hp.input_dim];
    let pred = model.predict_autonomous(u0, &x, steps, series.dt())?;
    let t_last = series.time(series.len() - 1);
    let pred = esn_core::TimeSeries::new(
        pred.values().to_vec(),
        series.channels()[..hp.output_dim].to_vec(),
        series.dt(),
        t_last + series.dt(),
    )?;
    let ds = Dataset::new(pred, DataSource::Simulated, format!("prediction from {}", warmup.display()))?;
    data::save_dataset(&ds, &out.join("prediction.csv"))?;
    println!("wrote {steps} predicted samples to {}", out.join("prediction.csv").display());
    Ok(())
}

fn print_summary(summary: &[harness::ThresholdSummary]) {
    for t in summary {
        match t.median {
            Some(m) => println!(
                "r = {:<5} median horizon {:.3} Lyapunov times ({} of {} never crossed)",
                t.r, m.median, m.never_crossed, m.count
            ),
            None => println!("r = {:<5} no finite horizon", t.r),
        }
    }
}
