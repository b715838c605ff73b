//! Trajectory-level and attractor-level comparison measures.
//!
//! Trajectory level: the cumulative mean squared error curve, the first
//! time it exceeds a threshold (prediction horizon), and the median of
//! horizons over many initial conditions. Attractor level: maximal
//! Lyapunov exponent, 0-1 test growth rate, sample entropy and kernel
//! density estimates.

pub mod entropy;
pub mod kde;
pub mod lyapunov;
pub mod stats;
pub mod zero_one;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::series::TimeSeries;

pub use entropy::sample_entropy;
pub use kde::{kde, KdeCurve};
pub use lyapunov::{mle_rosenstein, RosensteinParams};
pub use zero_one::{zero_one_test, ZeroOneParams, ZeroOneVariant};

/// One prediction horizon in Lyapunov units. `None` means the error never
/// exceeded the threshold within the compared window.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PhSample {
    pub ic_index: usize,
    pub r: f64,
    pub ph_lyapunov: Option<f64>,
}

impl PhSample {
    pub fn value_or_inf(&self) -> f64 {
        self.ph_lyapunov.unwrap_or(f64::INFINITY)
    }
}

/// Cumulative MSE: `curve[k] = Σ_{t≤k+1} |a(t) - b(t)|² / ((k+1)·d)`.
pub fn mse_curve(target: &TimeSeries, pred: &TimeSeries) -> Result<TimeSeries> {
    check_pair(target, pred)?;
    let curve = cumulative_mse(target.values(), pred.values(), target.dim());
    TimeSeries::new(curve, vec!["mse".into()], target.dt(), target.t0())
}

pub(crate) fn cumulative_mse(a: &[f64], b: &[f64], dim: usize) -> Vec<f64> {
    let mut acc = 0.0;
    a.chunks_exact(dim)
        .zip(b.chunks_exact(dim))
        .enumerate()
        .map(|(k, (ra, rb))| {
            acc += ra.iter().zip(rb).map(|(x, y)| (x - y).powi(2)).sum::<f64>();
            acc / ((k + 1) * dim) as f64
        })
        .collect()
}

fn check_pair(a: &TimeSeries, b: &TimeSeries) -> Result<()> {
    if a.dim() != b.dim() {
        return Err(Error::Dimension {
            what: "compared channels",
            expected: a.dim(),
            got: b.dim(),
        });
    }
    if a.len() != b.len() {
        return Err(Error::Dimension {
            what: "compared lengths",
            expected: a.len(),
            got: b.len(),
        });
    }
    Ok(())
}

/// 1-based index of the first curve value strictly above `r`.
pub fn first_crossing(curve: &[f64], r: f64) -> Option<usize> {
    curve.iter().position(|&v| v > r || v.is_nan()).map(|k| k + 1)
}

/// Steps until the cumulative MSE of a pair first exceeds `r`, reading
/// rows lazily. `b` may be shorter than `a` (a truncated, diverged
/// prediction); missing rows count as an immediate crossing.
pub(crate) fn crossing_steps(a: &[f64], b: &[f64], dim: usize, r: f64) -> Option<usize> {
    let n = a.len() / dim;
    let avail = b.len() / dim;
    let mut acc = 0.0;
    for k in 0..n {
        if k >= avail {
            return Some(k + 1);
        }
        let ra = &a[k * dim..(k + 1) * dim];
        let rb = &b[k * dim..(k + 1) * dim];
        acc += ra.iter().zip(rb).map(|(x, y)| (x - y).powi(2)).sum::<f64>();
        let v = acc / ((k + 1) * dim) as f64;
        if v > r || v.is_nan() {
            return Some(k + 1);
        }
    }
    None
}

fn check_threshold(r: f64) -> Result<()> {
    if r > 0.0 && r.is_finite() {
        Ok(())
    } else {
        Err(Error::Argument(format!("threshold must be positive, got {r}")))
    }
}

/// First time the cumulative MSE exceeds `r`, in Lyapunov units
/// (`steps · dt · mle`).
pub fn prediction_horizon(target: &TimeSeries, pred: &TimeSeries, r: f64, mle: f64) -> Result<PhSample> {
    check_threshold(r)?;
    check_pair(target, pred)?;
    let steps = crossing_steps(target.values(), pred.values(), target.dim(), r);
    Ok(PhSample {
        ic_index: 0,
        r,
        ph_lyapunov: steps.map(|s| s as f64 * target.dt() * mle),
    })
}

/// Same functional as [`prediction_horizon`], applied to two trajectories
/// of the true system.
pub fn divergence_time(a: &TimeSeries, b: &TimeSeries, r: f64, mle: f64) -> Result<Option<f64>> {
    prediction_horizon(a, b, r, mle).map(|s| s.ph_lyapunov)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MedianPh {
    /// Median with never-crossed samples ranked as +inf.
    pub median: f64,
    pub never_crossed: usize,
    pub count: usize,
}

pub fn median_ph(samples: &[PhSample]) -> Result<MedianPh> {
    if samples.is_empty() {
        return Err(Error::InsufficientData("no prediction-horizon samples".into()));
    }
    if samples.iter().all(|s| s.ph_lyapunov.is_none()) {
        return Err(Error::InsufficientData(
            "no sample crossed the threshold".into(),
        ));
    }
    let mut v: Vec<f64> = samples.iter().map(PhSample::value_or_inf).collect();
    v.sort_by(f64::total_cmp);
    let n = v.len();
    let median = if n % 2 == 1 {
        v[n / 2]
    } else {
        let (a, b) = (v[n / 2 - 1], v[n / 2]);
        if b.is_infinite() {
            b
        } else {
            0.5 * (a + b)
        }
    };
    Ok(MedianPh {
        median,
        never_crossed: samples.iter().filter(|s| s.ph_lyapunov.is_none()).count(),
        count: n,
    })
}

/// Long-run statistics of one scalar series.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SeriesStatistics {
    pub mle: f64,
    pub sample_entropy: f64,
    pub k_c: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct StatisticsConfig {
    /// Samples used for the Lyapunov exponent and sample entropy.
    pub length: usize,
    /// Samples of simulation and long autonomous run compared by the 0-1
    /// test and the densities.
    pub long_length: usize,
    pub embed_dim: usize,
    /// Delay in samples; 0 selects the autocorrelation rule.
    pub delay: usize,
    /// Temporal exclusion in samples; 0 selects the mean-frequency rule.
    pub mean_period: usize,
    /// Fit window in Lyapunov times of the reference exponent.
    pub fit_lyapunov_times: f64,
    pub entropy_m: usize,
    pub entropy_r: f64,
    pub zero_one: ZeroOneParams,
}

impl Default for StatisticsConfig {
    fn default() -> Self {
        Self {
            length: 30_000,
            long_length: 100_000,
            embed_dim: 3,
            delay: 0,
            mean_period: 0,
            fit_lyapunov_times: 2.5,
            entropy_m: 2,
            entropy_r: 0.3,
            zero_one: ZeroOneParams::default(),
        }
    }
}

/// MLE and sample entropy over the first `cfg.length` samples of one
/// channel; K_c over the whole series.
pub fn series_statistics(
    series: &TimeSeries,
    cfg: &StatisticsConfig,
    reference_mle: f64,
) -> Result<SeriesStatistics> {
    if series.dim() != 1 {
        return Err(Error::Dimension {
            what: "statistics channel count",
            expected: 1,
            got: series.dim(),
        });
    }
    let len = cfg.length.min(series.len());
    let s = series.slice(0..len);
    let mut ros = RosensteinParams::auto(&s, reference_mle, cfg.fit_lyapunov_times)?;
    ros.embed_dim = cfg.embed_dim;
    if cfg.delay > 0 {
        ros.delay = cfg.delay;
    }
    if cfg.mean_period > 0 {
        ros.mean_period = cfg.mean_period;
    }
    let mle = mle_rosenstein(&s, &ros)?;
    let se = sample_entropy(&s, cfg.entropy_m, cfg.entropy_r)?;
    // The 0-1 test subsamples, so it gets the full series.
    let k_c = zero_one_test(series, &cfg.zero_one)?;
    Ok(SeriesStatistics {
        mle,
        sample_entropy: se,
        k_c,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricsReport {
    pub mle: f64,
    pub sample_entropy: f64,
    pub k_c: f64,
    pub kde: Vec<KdeCurve>,
    pub ph_samples: Vec<PhSample>,
}

/// `ic_index,r,ph_lyapunov` rows; never-crossed samples are written as `inf`.
pub fn ph_samples_csv(samples: &[PhSample]) -> String {
    let mut out = String::from("ic_index,r,ph_lyapunov\n");
    for s in samples {
        let v = s
            .ph_lyapunov
            .map(|v| format!("{v:.16e}"))
            .unwrap_or_else(|| "inf".into());
        out.push_str(&format!("{},{:.16e},{}\n", s.ic_index, s.r, v));
    }
    out
}
