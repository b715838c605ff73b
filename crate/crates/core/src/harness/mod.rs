//! End-to-end experiments: data, split, training, ensemble horizons, long
//! autonomous runs and their attractor statistics, noise sweeps and
//! perturbation studies. Every result is plain data that serialises to JSON
//! and CSV.

pub mod config;
pub mod ensemble;

use std::fs;
use std::ops::ControlFlow;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::data::{self, Dataset};
use crate::error::{Error, Result};
use crate::metrics::{
    self, kde, median_ph, ph_samples_csv, KdeCurve, MedianPh, PhSample, SeriesStatistics,
};
use crate::reservoir::{closed_loop, EsnModel, TrainReport};
use crate::series::TimeSeries;
use crate::systems;

pub use config::{DivergenceConfig, ExperimentConfig, IoMode};
pub use ensemble::{divergence_study, ic_indices, ph_distribution};

/// A trained network together with the data it came from.
#[derive(Debug, Clone)]
pub struct Prepared {
    pub data: Dataset,
    pub train: Dataset,
    pub test: Dataset,
    pub model: EsnModel,
    pub train_report: TrainReport,
}

pub fn load_data(cfg: &ExperimentConfig) -> Result<Dataset> {
    match (&cfg.system, &cfg.dataset) {
        (Some(spec), _) => Dataset::simulated(spec),
        (None, Some(path)) => data::load_csv(path, None),
        (None, None) => Err(Error::Config("no data source".into())),
    }
}

/// Loads data, splits it, optionally corrupts the training part with
/// relative noise, and trains the readout.
pub fn prepare(cfg: &ExperimentConfig, train_noise: f64) -> Result<Prepared> {
    cfg.validate()?;
    let data = load_data(cfg).map_err(|e| e.at_stage("data"))?;
    prepare_from(cfg, data, train_noise)
}

pub fn prepare_from(cfg: &ExperimentConfig, data: Dataset, train_noise: f64) -> Result<Prepared> {
    let (mut train, test) = data::split(&data, cfg.split).map_err(|e| e.at_stage("split"))?;
    if train_noise > 0.0 {
        train.series = systems::add_noise(&train.series, train_noise, noise_seed(cfg.seed))
            .map_err(|e| e.at_stage("noise"))?;
    }
    let hp = cfg.resolved_hp(data.series.dim(), data.series.dt());
    let (model, train_report) = (|| {
        let mut model = EsnModel::new(hp)?;
        let report = model.fit(&train.series)?;
        Ok::<_, Error>((model, report))
    })()
    .map_err(|e| e.at_stage("train"))?;
    Ok(Prepared {
        data,
        train,
        test,
        model,
        train_report,
    })
}

fn noise_seed(seed: u64) -> u64 {
    seed ^ 0x6e6f_6973_6521
}

/// Closed-loop run continuing from the end of the training data, warm
/// started from the last training state.
pub fn long_run(p: &Prepared, n_steps: usize) -> Result<TimeSeries> {
    let hp = &p.model.hp;
    let train = &p.train.series;
    let u0 = &train.row(train.len() - 1)[..hp.input_dim];
    let mut out = Vec::with_capacity(n_steps * hp.output_dim);
    let run = closed_loop(&p.model.weights, hp, u0, &p.train_report.last_state, n_steps, |y| {
        out.extend_from_slice(y);
        ControlFlow::Continue(())
    })?;
    if let Some(steps) = run.diverged_at {
        return Err(Error::Diverged {
            steps,
            bound: hp.divergence_bound,
        });
    }
    let dt = train.dt();
    let channels = train.channels()[..hp.output_dim].to_vec();
    TimeSeries::new(out, channels, dt, train.time(train.len() - 1) + dt)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ThresholdSummary {
    pub r: f64,
    pub median: Option<MedianPh>,
}

pub fn summarise(thresholds: &[f64], samples: &[PhSample]) -> Vec<ThresholdSummary> {
    thresholds
        .iter()
        .map(|&r| {
            let group: Vec<PhSample> = samples.iter().filter(|s| s.r == r).copied().collect();
            ThresholdSummary {
                r,
                median: median_ph(&group).ok(),
            }
        })
        .collect()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StageFailure {
    pub stage: String,
    pub message: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ChannelDensity {
    pub channel: String,
    pub simulation: KdeCurve,
    pub prediction: KdeCurve,
    pub l1: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExperimentReport {
    pub name: String,
    pub seed: u64,
    pub provenance: String,
    pub io_mode: IoMode,
    pub reference_mle: f64,
    pub washout: usize,
    pub train_mse: f64,
    pub horizon_steps: usize,
    pub thresholds: Vec<ThresholdSummary>,
    pub ph_samples: Vec<PhSample>,
    pub simulation_statistics: Option<SeriesStatistics>,
    pub prediction_statistics: Option<SeriesStatistics>,
    pub densities: Vec<ChannelDensity>,
    pub failures: Vec<StageFailure>,
}

/// Report plus the series behind its plots.
#[derive(Debug, Clone)]
pub struct ExperimentOutput {
    pub report: ExperimentReport,
    pub simulation: Option<TimeSeries>,
    pub prediction: Option<TimeSeries>,
    /// Cumulative MSE of the warm-started prediction against the test set.
    pub mse_curve: Option<TimeSeries>,
}

pub fn run_experiment(cfg: &ExperimentConfig) -> Result<ExperimentOutput> {
    let p = prepare(cfg, 0.0)?;
    Ok(evaluate(cfg, &p))
}

/// Everything after training. Failures of individual stages are recorded
/// in the report and the remaining stages still run.
pub fn evaluate(cfg: &ExperimentConfig, p: &Prepared) -> ExperimentOutput {
    let mle = cfg.reference_mle();
    let dt = p.data.series.dt();
    let horizon = cfg.horizon_steps(dt);
    let mut failures = Vec::new();
    let mut fail = |stage: &str, e: Error| {
        failures.push(StageFailure {
            stage: stage.into(),
            message: e.to_string(),
        })
    };

    let ph_samples = ph_distribution(
        &p.model,
        &p.test.series,
        &cfg.thresholds,
        cfg.ensemble_size,
        cfg.seed,
        mle,
        horizon,
    )
    .unwrap_or_else(|e| {
        fail("ph_distribution", e);
        Vec::new()
    });

    let stats_len = cfg
        .statistics
        .length
        .max(cfg.statistics.long_length)
        .min(p.data.series.len());
    let l = p.model.hp.output_dim;
    let simulation = p.data.series.slice(0..stats_len).leading(l).ok();
    let prediction = long_run(p, stats_len).map_err(|e| fail("long_run", e)).ok();

    let mut stats = |s: &Option<TimeSeries>, stage: &str| {
        let s = s.as_ref()?;
        s.select(&[0])
            .and_then(|x| metrics::series_statistics(&x, &cfg.statistics, mle))
            .map_err(|e| fail(stage, e))
            .ok()
    };
    let simulation_statistics = stats(&simulation, "simulation_statistics");
    let prediction_statistics = stats(&prediction, "prediction_statistics");

    let mut densities = Vec::new();
    if let (Some(sim), Some(pred)) = (&simulation, &prediction) {
        for c in 0..l {
            match channel_density(sim, pred, c) {
                Ok(d) => densities.push(d),
                Err(e) => fail("kde", e),
            }
        }
    }

    let mse_curve = warm_mse_curve(p, horizon).map_err(|e| fail("mse_curve", e)).ok();

    ExperimentOutput {
        report: ExperimentReport {
            name: cfg.name.clone(),
            seed: cfg.seed,
            provenance: p.data.provenance.clone(),
            io_mode: cfg.io_mode,
            reference_mle: mle,
            washout: p.model.hp.washout,
            train_mse: p.train_report.mse,
            horizon_steps: horizon,
            thresholds: summarise(&cfg.thresholds, &ph_samples),
            ph_samples,
            simulation_statistics,
            prediction_statistics,
            densities,
            failures,
        },
        simulation,
        prediction,
        mse_curve,
    }
}

fn channel_density(sim: &TimeSeries, pred: &TimeSeries, c: usize) -> Result<ChannelDensity> {
    let a = sim.column(c);
    let b = pred.column(c);
    let grid = kde::common_grid(&a, &b)?;
    let mut simulation = kde::kde_slice(&a, Some(&grid), None)?;
    let mut prediction = kde::kde_slice(&b, Some(&grid), None)?;
    let channel = sim.channels()[c].clone();
    simulation.channel = channel.clone();
    prediction.channel = channel.clone();
    let l1 = kde::l1_distance(&simulation, &prediction)?;
    Ok(ChannelDensity {
        channel,
        simulation,
        prediction,
        l1,
    })
}

fn warm_mse_curve(p: &Prepared, horizon: usize) -> Result<TimeSeries> {
    let n = horizon.min(p.test.series.len());
    let pred = long_run(p, n)?;
    let truth = p.test.series.slice(0..n).leading(p.model.hp.output_dim)?;
    metrics::mse_curve(&truth, &pred)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NoiseLevelResult {
    pub sigma: f64,
    pub train_mse: f64,
    pub thresholds: Vec<ThresholdSummary>,
    pub failure: Option<StageFailure>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NoiseSweepReport {
    pub name: String,
    pub seed: u64,
    pub levels: Vec<NoiseLevelResult>,
}

/// Retrains on noise-corrupted training data for every level and measures
/// horizons against the clean test data.
pub fn noise_sweep(cfg: &ExperimentConfig) -> Result<NoiseSweepReport> {
    cfg.validate()?;
    if cfg.noise_levels.is_empty() {
        return Err(Error::Config("noise_levels is empty".into()));
    }
    let data = load_data(cfg).map_err(|e| e.at_stage("data"))?;
    let mle = cfg.reference_mle();
    let horizon = cfg.horizon_steps(data.series.dt());
    let levels = cfg
        .noise_levels
        .iter()
        .map(|&sigma| {
            let run = prepare_from(cfg, data.clone(), sigma).and_then(|p| {
                let samples = ph_distribution(
                    &p.model,
                    &p.test.series,
                    &cfg.thresholds,
                    cfg.ensemble_size,
                    cfg.seed,
                    mle,
                    horizon,
                )
                .map_err(|e| e.at_stage("ph_distribution"))?;
                Ok((p.train_report.mse, samples))
            });
            match run {
                Ok((train_mse, samples)) => NoiseLevelResult {
                    sigma,
                    train_mse,
                    thresholds: summarise(&cfg.thresholds, &samples),
                    failure: None,
                },
                Err(e) => NoiseLevelResult {
                    sigma,
                    train_mse: f64::NAN,
                    thresholds: Vec::new(),
                    failure: Some(StageFailure {
                        stage: "noise_level".into(),
                        message: e.to_string(),
                    }),
                },
            }
        })
        .collect();
    Ok(NoiseSweepReport {
        name: cfg.name.clone(),
        seed: cfg.seed,
        levels,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DivergenceReport {
    pub name: String,
    pub delta0: f64,
    pub r: f64,
    pub median: Option<MedianPh>,
    pub samples: Vec<PhSample>,
}

pub fn run_divergence(cfg: &ExperimentConfig) -> Result<DivergenceReport> {
    cfg.validate()?;
    let spec = cfg
        .system
        .ok_or_else(|| Error::Config("divergence study needs a simulated system".into()))?;
    let d = cfg.divergence;
    let samples = divergence_study(
        &spec,
        d.delta0,
        d.r,
        d.n_pairs,
        cfg.seed,
        cfg.horizon_steps(spec.dt),
    )?;
    Ok(DivergenceReport {
        name: cfg.name.clone(),
        delta0: d.delta0,
        r: d.r,
        median: median_ph(&samples).ok(),
        samples,
    })
}

pub fn write_json<T: Serialize>(value: &T, path: &Path) -> Result<()> {
    fs::write(path, serde_json::to_string_pretty(value)?)?;
    Ok(())
}

/// `report.json`, `ph_samples.csv`, `kde_<channel>.csv`, the attractor
/// series `simulation.csv` / `prediction.csv` and `mse_curve.csv`.
pub fn write_experiment(out: &ExperimentOutput, dir: &Path) -> Result<()> {
    fs::create_dir_all(dir)?;
    write_json(&out.report, &dir.join("report.json"))?;
    fs::write(dir.join("ph_samples.csv"), ph_samples_csv(&out.report.ph_samples))?;
    for d in &out.report.densities {
        let mut text = String::from("grid,simulation,prediction\n");
        for ((g, a), b) in d
            .simulation
            .grid
            .iter()
            .zip(&d.simulation.density)
            .zip(&d.prediction.density)
        {
            text.push_str(&format!("{g:.16e},{a:.16e},{b:.16e}\n"));
        }
        fs::write(dir.join(format!("kde_{}.csv", d.channel)), text)?;
    }
    if let Some(s) = &out.simulation {
        s.write_csv(&dir.join("simulation.csv"))?;
    }
    if let Some(s) = &out.prediction {
        s.write_csv(&dir.join("prediction.csv"))?;
    }
    if let Some(s) = &out.mse_curve {
        s.write_csv(&dir.join("mse_curve.csv"))?;
    }
    Ok(())
}
