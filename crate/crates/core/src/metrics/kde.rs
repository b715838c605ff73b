//! Gaussian kernel density estimates on a fixed grid.

use serde::{Deserialize, Serialize};

use super::lyapunov::single_channel;
use super::stats::{quantile_sorted, std_dev};
use crate::error::{Error, Result};
use crate::series::TimeSeries;

const DEFAULT_POINTS: usize = 512;
const MAX_POINTS: usize = 1 << 16;
/// Grid margin beyond the data range, in bandwidths.
const MARGIN: f64 = 6.0;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct KdeCurve {
    pub channel: String,
    pub bandwidth: f64,
    pub grid: Vec<f64>,
    pub density: Vec<f64>,
}

impl KdeCurve {
    pub fn integral(&self) -> f64 {
        trapezoid(&self.grid, &self.density)
    }

    /// `grid,density` rows.
    pub fn to_csv(&self) -> String {
        let mut out = String::from("grid,density\n");
        for (g, d) in self.grid.iter().zip(&self.density) {
            out.push_str(&format!("{g:.16e},{d:.16e}\n"));
        }
        out
    }
}

pub fn trapezoid(x: &[f64], y: &[f64]) -> f64 {
    x.windows(2)
        .zip(y.windows(2))
        .map(|(xs, ys)| 0.5 * (xs[1] - xs[0]) * (ys[0] + ys[1]))
        .sum()
}

/// Silverman's rule: `0.9 · min(σ, IQR / 1.34) · n^(-1/5)`.
pub fn silverman_bandwidth(x: &[f64]) -> Result<f64> {
    if x.len() < 2 {
        return Err(Error::InsufficientData("bandwidth needs two samples".into()));
    }
    let sigma = std_dev(x);
    let mut sorted = x.to_vec();
    sorted.sort_by(f64::total_cmp);
    let iqr = quantile_sorted(&sorted, 0.75) - quantile_sorted(&sorted, 0.25);
    let spread = if iqr > 0.0 { sigma.min(iqr / 1.34) } else { sigma };
    if !(spread > 0.0) {
        return Err(Error::Degenerate("zero-variance series has no automatic bandwidth"));
    }
    Ok(0.9 * spread * (x.len() as f64).powf(-0.2))
}

/// Evenly spaced grid covering `[lo, hi]` plus a margin of a few bandwidths,
/// fine enough that the trapezoid rule resolves the kernels.
pub fn auto_grid(lo: f64, hi: f64, bandwidth: f64) -> Vec<f64> {
    let a = lo - MARGIN * bandwidth;
    let b = hi + MARGIN * bandwidth;
    let needed = ((b - a) / (0.25 * bandwidth)).ceil() as usize + 1;
    let points = needed.clamp(DEFAULT_POINTS, MAX_POINTS);
    let step = (b - a) / (points - 1) as f64;
    (0..points).map(|i| a + step * i as f64).collect()
}

/// Density of one channel. `grid = None` builds [`auto_grid`] over the data
/// range; `bandwidth = None` uses [`silverman_bandwidth`].
pub fn kde(series: &TimeSeries, grid: Option<&[f64]>, bandwidth: Option<f64>) -> Result<KdeCurve> {
    let x = single_channel(series)?;
    let mut curve = kde_slice(x, grid, bandwidth)?;
    curve.channel = series.channels()[0].clone();
    Ok(curve)
}

pub fn kde_slice(x: &[f64], grid: Option<&[f64]>, bandwidth: Option<f64>) -> Result<KdeCurve> {
    if x.len() < 2 {
        return Err(Error::InsufficientData("density estimate needs two samples".into()));
    }
    let h = match bandwidth {
        Some(h) if h > 0.0 && h.is_finite() => h,
        Some(h) => return Err(Error::Argument(format!("bandwidth must be positive, got {h}"))),
        None => silverman_bandwidth(x)?,
    };
    let grid = match grid {
        Some(g) if g.len() >= 2 => g.to_vec(),
        Some(_) => return Err(Error::Argument("grid needs at least two points".into())),
        None => {
            let (lo, hi) = min_max(x);
            auto_grid(lo, hi, h)
        }
    };
    let norm = 1.0 / (x.len() as f64 * h * (2.0 * std::f64::consts::PI).sqrt());
    let mut sorted = x.to_vec();
    sorted.sort_by(f64::total_cmp);
    let reach = 9.0 * h;
    let density = grid
        .iter()
        .map(|&g| {
            let lo = sorted.partition_point(|v| *v < g - reach);
            let hi = sorted.partition_point(|v| *v <= g + reach);
            sorted[lo..hi]
                .iter()
                .map(|v| (-0.5 * ((g - v) / h).powi(2)).exp())
                .sum::<f64>()
                * norm
        })
        .collect();
    Ok(KdeCurve {
        channel: String::new(),
        bandwidth: h,
        grid,
        density,
    })
}

fn min_max(x: &[f64]) -> (f64, f64) {
    x.iter()
        .fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), v| (lo.min(*v), hi.max(*v)))
}

/// Grid spanning both samples, using the larger of their Silverman bandwidths
/// for the margin.
pub fn common_grid(a: &[f64], b: &[f64]) -> Result<Vec<f64>> {
    let h = silverman_bandwidth(a)?.max(silverman_bandwidth(b)?);
    let (lo_a, hi_a) = min_max(a);
    let (lo_b, hi_b) = min_max(b);
    Ok(auto_grid(lo_a.min(lo_b), hi_a.max(hi_b), h))
}

/// `∫ |f - g|` by the trapezoid rule; both curves must share a grid.
pub fn l1_distance(f: &KdeCurve, g: &KdeCurve) -> Result<f64> {
    if f.grid != g.grid {
        return Err(Error::Argument("densities are on different grids".into()));
    }
    let diff: Vec<f64> = f.density.iter().zip(&g.density).map(|(a, b)| (a - b).abs()).collect();
    Ok(trapezoid(&f.grid, &diff))
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;

    #[test]
    fn two_point_density_by_hand() {
        let c = kde_slice(&[0.0, 2.0], Some(&[0.0, 1.0]), Some(1.0)).unwrap();
        let phi = |z: f64| (-0.5 * z * z).exp() / (2.0 * std::f64::consts::PI).sqrt();
        assert_abs_diff_eq!(c.density[0], 0.5 * (phi(0.0) + phi(2.0)), epsilon = 1e-15);
        assert_abs_diff_eq!(c.density[1], phi(1.0), epsilon = 1e-15);
    }

    #[test]
    fn normalised_on_auto_grid() {
        let x: Vec<f64> = (0..500).map(|i| ((i * 31 % 97) as f64 * 0.1).sin() * 3.0).collect();
        let c = kde_slice(&x, None, None).unwrap();
        assert_abs_diff_eq!(c.integral(), 1.0, epsilon = 1e-3);
        assert!(c.density.iter().all(|d| *d >= 0.0));
    }

    #[test]
    fn silverman_and_degenerate() {
        assert!(matches!(silverman_bandwidth(&[3.0; 10]), Err(Error::Degenerate(_))));
        assert!(kde_slice(&[1.0], None, Some(1.0)).is_err());
        assert!(kde_slice(&[1.0, 2.0], None, Some(0.0)).is_err());
    }

    #[test]
    fn l1_of_identical_curves_is_zero() {
        let c = kde_slice(&[0.0, 1.0, 3.0], None, None).unwrap();
        assert_eq!(l1_distance(&c, &c).unwrap(), 0.0);
        let other = kde_slice(&[0.0, 1.0], Some(&[0.0, 1.0]), Some(1.0)).unwrap();
        assert!(l1_distance(&c, &other).is_err());
    }
}
