//! Maximal Lyapunov exponent from a scalar series (Rosenstein et al.).
//!
//! The series is delay-embedded, every point is paired with its nearest
//! neighbour outside a temporal exclusion window, and the mean log distance
//! of the pairs is followed forward in time. The exponent is the slope of
//! that divergence curve over the fit window.

use rustfft::{num_complex::Complex, FftPlanner};
use serde::{Deserialize, Serialize};

use super::stats::linear_fit;
use crate::error::{Error, Result};
use crate::series::TimeSeries;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RosensteinParams {
    pub embed_dim: usize,
    /// Embedding delay in samples.
    pub delay: usize,
    /// Neighbours closer in time than this many samples are skipped.
    pub mean_period: usize,
    /// First and one-past-last step of the divergence curve used in the fit.
    pub fit_start: usize,
    pub fit_end: usize,
}

impl RosensteinParams {
    /// Delay from the first 1/e crossing of the autocorrelation, exclusion
    /// from the mean-frequency period, embedding dimension 3 and a fit over
    /// the first `fit_lyapunov_times` of `reference_mle`.
    pub fn auto(series: &TimeSeries, reference_mle: f64, fit_lyapunov_times: f64) -> Result<Self> {
        if !(reference_mle > 0.0 && fit_lyapunov_times > 0.0) {
            return Err(Error::Argument(
                "fit window needs a positive exponent and duration".into(),
            ));
        }
        let x = single_channel(series)?;
        let delay = autocorrelation_delay(x)?;
        let mean_period = mean_frequency_period(x)?;
        let fit_end = (fit_lyapunov_times / (reference_mle * series.dt())).ceil() as usize;
        Ok(Self {
            embed_dim: 3,
            delay,
            mean_period,
            fit_start: 0,
            fit_end: fit_end.max(2),
        })
    }

    fn validate(&self) -> Result<()> {
        if self.embed_dim == 0 || self.delay == 0 {
            return Err(Error::Argument(
                "embedding dimension and delay must be positive".into(),
            ));
        }
        if self.fit_end < self.fit_start + 2 {
            return Err(Error::Argument(format!(
                "fit window {}..{} needs at least two points",
                self.fit_start, self.fit_end
            )));
        }
        Ok(())
    }
}

pub(crate) fn single_channel(series: &TimeSeries) -> Result<&[f64]> {
    if series.dim() != 1 {
        return Err(Error::Dimension {
            what: "scalar series channels",
            expected: 1,
            got: series.dim(),
        });
    }
    Ok(series.values())
}

/// First lag at which the sample autocorrelation drops below 1/e.
pub fn autocorrelation_delay(x: &[f64]) -> Result<usize> {
    let n = x.len();
    let mu = super::stats::mean(x);
    let c: Vec<f64> = x.iter().map(|v| v - mu).collect();
    let c0: f64 = c.iter().map(|v| v * v).sum();
    if !(c0 > 0.0) {
        return Err(Error::Degenerate("constant series has no autocorrelation time"));
    }
    let threshold = (-1.0f64).exp();
    for lag in 1..n / 2 {
        let ck: f64 = c[..n - lag].iter().zip(&c[lag..]).map(|(a, b)| a * b).sum();
        if ck / c0 < threshold {
            return Ok(lag);
        }
    }
    Err(Error::InsufficientData(
        "autocorrelation never falls below 1/e".into(),
    ))
}

/// Inverse of the power-weighted mean frequency of the periodogram, in
/// samples.
pub fn mean_frequency_period(x: &[f64]) -> Result<usize> {
    let n = x.len();
    if n < 4 {
        return Err(Error::InsufficientData("periodogram needs 4 samples".into()));
    }
    let mu = super::stats::mean(x);
    let mut buf: Vec<Complex<f64>> = x.iter().map(|v| Complex::new(v - mu, 0.0)).collect();
    FftPlanner::new().plan_fft_forward(n).process(&mut buf);
    let (mut num, mut den) = (0.0, 0.0);
    for (k, z) in buf.iter().enumerate().take(n / 2 + 1).skip(1) {
        let p = z.norm_sqr();
        num += k as f64 / n as f64 * p;
        den += p;
    }
    if !(den > 0.0) {
        return Err(Error::Degenerate("constant series has no mean period"));
    }
    Ok((den / num).ceil() as usize)
}

struct Embedding<'a> {
    x: &'a [f64],
    dim: usize,
    delay: usize,
    len: usize,
}

impl Embedding<'_> {
    #[inline]
    fn coord(&self, i: usize, k: usize) -> f64 {
        self.x[i + k * self.delay]
    }

    #[inline]
    fn dist2(&self, i: usize, j: usize) -> f64 {
        (0..self.dim).map(|k| (self.coord(i, k) - self.coord(j, k)).powi(2)).sum()
    }
}

/// Mean log distance of nearest-neighbour pairs after `k` steps, for
/// `k = 0..fit_end`.
pub fn divergence_curve(series: &TimeSeries, p: &RosensteinParams) -> Result<Vec<f64>> {
    p.validate()?;
    let x = single_channel(series)?;
    let span = (p.embed_dim - 1) * p.delay;
    if x.len() <= span + p.fit_end + p.mean_period + 1 {
        return Err(Error::InsufficientData(format!(
            "{} samples are too few for embedding span {}, fit window {} and exclusion {}",
            x.len(),
            span,
            p.fit_end,
            p.mean_period
        )));
    }
    // Only points that can be followed through the whole window take part,
    // so the same pairs are averaged at every step. Dropping pairs as they
    // run off the end biases the curve upwards.
    let emb = Embedding {
        x,
        dim: p.embed_dim,
        delay: p.delay,
        len: x.len() - span - (p.fit_end - 1),
    };
    let nn = nearest_neighbours(&emb, p.mean_period);
    if nn.iter().all(Option::is_none) {
        return Err(Error::InsufficientData("no admissible nearest neighbours".into()));
    }
    let mut curve = Vec::with_capacity(p.fit_end);
    for k in 0..p.fit_end {
        let (mut sum, mut count) = (0.0, 0usize);
        for (i, j) in nn.iter().enumerate() {
            let Some(j) = *j else { continue };
            let d2 = emb.dist2(i + k, j + k);
            if d2 > 0.0 {
                sum += 0.5 * d2.ln();
                count += 1;
            }
        }
        if count == 0 {
            return Err(Error::InsufficientData(format!(
                "no neighbour pairs survive {k} steps"
            )));
        }
        curve.push(sum / count as f64);
    }
    Ok(curve)
}

/// Exact nearest neighbour of every embedded point with `|i - j| > exclusion`.
/// Points are scanned in order of their first coordinate, stopping once that
/// coordinate alone is farther than the best match.
fn nearest_neighbours(emb: &Embedding, exclusion: usize) -> Vec<Option<usize>> {
    let mut order: Vec<usize> = (0..emb.len).collect();
    order.sort_by(|&a, &b| emb.coord(a, 0).total_cmp(&emb.coord(b, 0)));
    let mut nn = vec![None; emb.len];
    for (pos, &i) in order.iter().enumerate() {
        let xi = emb.coord(i, 0);
        let mut best = f64::INFINITY;
        let mut arg = None;
        let consider = |j: usize, best: &mut f64, arg: &mut Option<usize>| {
            if i.abs_diff(j) <= exclusion {
                return;
            }
            let d = emb.dist2(i, j);
            if d < *best {
                *best = d;
                *arg = Some(j);
            }
        };
        for &j in &order[pos + 1..] {
            if (emb.coord(j, 0) - xi).powi(2) >= best {
                break;
            }
            consider(j, &mut best, &mut arg);
        }
        for &j in order[..pos].iter().rev() {
            if (emb.coord(j, 0) - xi).powi(2) >= best {
                break;
            }
            consider(j, &mut best, &mut arg);
        }
        nn[i] = arg;
    }
    nn
}

/// Slope of the divergence curve over the fit window, per unit time.
pub fn mle_rosenstein(series: &TimeSeries, p: &RosensteinParams) -> Result<f64> {
    let curve = divergence_curve(series, p)?;
    let dt = series.dt();
    let t: Vec<f64> = (p.fit_start..p.fit_end).map(|k| k as f64 * dt).collect();
    let (slope, _) = linear_fit(&t, &curve[p.fit_start..p.fit_end]);
    if !slope.is_finite() {
        return Err(Error::NonFinite("divergence slope"));
    }
    Ok(slope)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn autocorrelation_of_cosine() {
        // cos has autocorrelation ~cos(w k); 1/e is crossed near acos(1/e)/w
        let w = 2.0 * std::f64::consts::PI / 200.0;
        let x: Vec<f64> = (0..20_000).map(|i| (w * i as f64).cos()).collect();
        let lag = autocorrelation_delay(&x).unwrap();
        let expected = (1.0f64 / std::f64::consts::E).acos() / w;
        assert!((lag as f64 - expected).abs() <= 1.5, "{lag} vs {expected}");
        assert_eq!(mean_frequency_period(&x).unwrap(), 200);
    }

    #[test]
    fn constant_series_is_degenerate() {
        let x = vec![1.0; 100];
        assert!(autocorrelation_delay(&x).is_err());
        assert!(mean_frequency_period(&x).is_err());
    }

    #[test]
    fn neighbour_search_matches_brute_force() {
        let x: Vec<f64> = (0..600).map(|i| ((i * 37 % 101) as f64 * 0.37).sin() + (i as f64 * 0.05).cos()).collect();
        let emb = Embedding {
            x: &x,
            dim: 3,
            delay: 2,
            len: x.len() - 4,
        };
        let nn = nearest_neighbours(&emb, 5);
        for i in 0..emb.len {
            let brute = (0..emb.len)
                .filter(|j| i.abs_diff(*j) > 5)
                .min_by(|&a, &b| emb.dist2(i, a).total_cmp(&emb.dist2(i, b)))
                .unwrap();
            assert_eq!(emb.dist2(i, nn[i].unwrap()), emb.dist2(i, brute));
        }
    }

    #[test]
    fn rejects_short_series_and_bad_window() {
        let s = TimeSeries::univariate((0..50).map(|i| (i as f64).sin()).collect(), "x", 0.1).unwrap();
        let p = RosensteinParams {
            embed_dim: 3,
            delay: 5,
            mean_period: 10,
            fit_start: 0,
            fit_end: 40,
        };
        assert!(mle_rosenstein(&s, &p).is_err());
        let bad = RosensteinParams { fit_end: 1, ..p };
        assert!(mle_rosenstein(&s, &bad).is_err());
    }
}
