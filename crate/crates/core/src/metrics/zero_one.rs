//! 0-1 test for chaos (Gottwald and Melbourne).
//!
//! For random frequencies `c` the series drives the translation variables
//! `p_c(n) = Σ φ(j) cos(jc)`, `q_c(n) = Σ φ(j) sin(jc)`. Their mean square
//! displacement grows linearly for chaotic input and stays bounded for
//! regular input. The growth rate `K_c` is taken either as the log-log
//! regression slope of the displacement or as its correlation with `n`;
//! the result is the median over frequencies.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use std::f64::consts::PI;

use super::lyapunov::{mean_frequency_period, single_channel};
use super::stats::{correlation, linear_fit, mean, median, std_dev};
use crate::error::{Error, Result};
use crate::series::TimeSeries;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ZeroOneVariant {
    /// Slope of `log M_c(n)` against `log n`.
    #[default]
    Regression,
    /// Correlation of `n` with the oscillation-corrected displacement.
    Correlation,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ZeroOneParams {
    pub n_c: usize,
    pub seed: u64,
    /// Keep every `stride`-th sample. Oversampled flows must be thinned or
    /// the test sees smooth, regular-looking short-time motion. 0 selects
    /// an eighth of the mean-frequency period.
    pub stride: usize,
    pub variant: ZeroOneVariant,
}

impl Default for ZeroOneParams {
    fn default() -> Self {
        Self {
            n_c: 100,
            seed: 0,
            stride: 0,
            variant: ZeroOneVariant::Regression,
        }
    }
}

const MIN_SAMPLES: usize = 100;

pub fn zero_one_test(series: &TimeSeries, p: &ZeroOneParams) -> Result<f64> {
    let x = single_channel(series)?;
    let stride = if p.stride == 0 { auto_stride(x)? } else { p.stride };
    let phi: Vec<f64> = x.iter().step_by(stride).copied().collect();
    zero_one_slice(&phi, p.n_c, p.seed, p.variant)
}

pub fn auto_stride(x: &[f64]) -> Result<usize> {
    let period = mean_frequency_period(x)?;
    Ok(((period as f64 / 8.0).round() as usize).max(1))
}

pub fn zero_one_slice(phi: &[f64], n_c: usize, seed: u64, variant: ZeroOneVariant) -> Result<f64> {
    if n_c == 0 {
        return Err(Error::Argument("need at least one frequency".into()));
    }
    if phi.len() < MIN_SAMPLES {
        return Err(Error::InsufficientData(format!(
            "0-1 test needs at least {MIN_SAMPLES} samples after thinning, got {}",
            phi.len()
        )));
    }
    if !(std_dev(phi) > 0.0) {
        return Err(Error::Degenerate("0-1 test of a constant series"));
    }
    let n = phi.len();
    let ncut = n / 10;
    let window = n - ncut;
    let e_phi = mean(phi);
    let lags: Vec<f64> = (1..=ncut).map(|k| k as f64).collect();
    let log_lags: Vec<f64> = lags.iter().map(|v| v.ln()).collect();

    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut p = vec![0.0; n];
    let mut q = vec![0.0; n];
    let mut msd = vec![0.0; ncut];
    let mut ks = Vec::with_capacity(n_c);
    for _ in 0..n_c {
        let c = rng.random_range(PI / 5.0..4.0 * PI / 5.0);
        let (mut ps, mut qs) = (0.0, 0.0);
        for (j, v) in phi.iter().enumerate() {
            let arg = (j + 1) as f64 * c;
            ps += v * arg.cos();
            qs += v * arg.sin();
            p[j] = ps;
            q[j] = qs;
        }
        for (k, m) in msd.iter_mut().enumerate() {
            let lag = k + 1;
            let s: f64 = (0..window)
                .map(|i| (p[i + lag] - p[i]).powi(2) + (q[i + lag] - q[i]).powi(2))
                .sum();
            *m = s / window as f64;
        }
        let k = match variant {
            ZeroOneVariant::Regression => {
                let floor = msd.iter().copied().fold(f64::INFINITY, f64::min);
                let shift = if floor > 0.0 { 0.0 } else { 1e-12 - floor };
                let logs: Vec<f64> = msd.iter().map(|m| (m + shift).ln()).collect();
                linear_fit(&log_lags, &logs).0
            }
            ZeroOneVariant::Correlation => {
                let d: Vec<f64> = msd
                    .iter()
                    .zip(&lags)
                    .map(|(m, n)| m - e_phi * e_phi * (1.0 - (n * c).cos()) / (1.0 - c.cos()))
                    .collect();
                correlation(&lags, &d)
            }
        };
        if k.is_finite() {
            ks.push(k);
        }
    }
    if ks.is_empty() {
        return Err(Error::NonFinite("0-1 growth rates"));
    }
    Ok(median(&ks))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn constant_series_is_rejected() {
        assert!(matches!(
            zero_one_slice(&[1.0; 500], 10, 0, ZeroOneVariant::Regression),
            Err(Error::Degenerate(_))
        ));
    }

    #[test]
    fn short_series_is_rejected() {
        let x: Vec<f64> = (0..50).map(|i| (i as f64).sin()).collect();
        assert!(zero_one_slice(&x, 10, 0, ZeroOneVariant::Regression).is_err());
    }

    #[test]
    fn deterministic_per_seed() {
        let x: Vec<f64> = (0..1000).map(|i| ((i * 13 % 97) as f64).sin()).collect();
        let a = zero_one_slice(&x, 20, 3, ZeroOneVariant::Correlation).unwrap();
        let b = zero_one_slice(&x, 20, 3, ZeroOneVariant::Correlation).unwrap();
        assert_eq!(a.to_bits(), b.to_bits());
    }
}
