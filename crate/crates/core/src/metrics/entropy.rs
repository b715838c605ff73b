//! Sample entropy: `-ln(A / B)`, where `B` counts pairs of length-`m`
//! templates within `r_tol · std` of each other (Chebyshev distance) and `A`
//! counts the pairs that still match when extended by one sample.
//! Self-matches are excluded and both counts use the same `T - m` template
//! start points.

use super::lyapunov::single_channel;
use super::stats::std_dev;
use crate::error::{Error, Result};
use crate::series::TimeSeries;

pub fn sample_entropy(series: &TimeSeries, m_len: usize, r_tol: f64) -> Result<f64> {
    let x = single_channel(series)?;
    sample_entropy_slice(x, m_len, r_tol)
}

pub fn sample_entropy_slice(x: &[f64], m_len: usize, r_tol: f64) -> Result<f64> {
    if m_len == 0 {
        return Err(Error::Argument("template length must be positive".into()));
    }
    if !(r_tol > 0.0 && r_tol.is_finite()) {
        return Err(Error::Argument(format!("tolerance must be positive, got {r_tol}")));
    }
    if x.len() <= m_len + 1 {
        return Err(Error::InsufficientData(format!(
            "sample entropy with m = {m_len} needs more than {} samples",
            m_len + 1
        )));
    }
    let tol = r_tol * std_dev(x);
    let (a, b) = match_counts(x, m_len, tol);
    if a == 0 || b == 0 {
        return Err(Error::UndefinedEntropy("no template matches at the given tolerance"));
    }
    Ok(-(a as f64 / b as f64).ln())
}

/// `(A, B)` pair counts. Templates are visited in order of their first
/// sample so only pairs within `tol` in that coordinate are compared.
fn match_counts(x: &[f64], m: usize, tol: f64) -> (u64, u64) {
    let n = x.len() - m;
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&a, &b| x[a].total_cmp(&x[b]));
    let (mut a, mut b) = (0u64, 0u64);
    for (pos, &i) in order.iter().enumerate() {
        for &j in &order[pos + 1..] {
            if x[j] - x[i] > tol {
                break;
            }
            if (1..m).all(|k| (x[i + k] - x[j + k]).abs() <= tol) {
                b += 1;
                if (x[i + m] - x[j + m]).abs() <= tol {
                    a += 1;
                }
            }
        }
    }
    (a, b)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn brute(x: &[f64], m: usize, tol: f64) -> (u64, u64) {
        let n = x.len() - m;
        let mut a = 0;
        let mut b = 0;
        for i in 0..n {
            for j in i + 1..n {
                if (0..m).all(|k| (x[i + k] - x[j + k]).abs() <= tol) {
                    b += 1;
                    if (x[i + m] - x[j + m]).abs() <= tol {
                        a += 1;
                    }
                }
            }
        }
        (a, b)
    }

    #[test]
    fn pruned_counts_match_brute_force() {
        let x: Vec<f64> = (0..400).map(|i| ((i * 7919 % 211) as f64).sin()).collect();
        for m in 1..4 {
            for tol in [0.05, 0.2, 0.5] {
                assert_eq!(match_counts(&x, m, tol), brute(&x, m, tol));
            }
        }
    }

    #[test]
    fn constant_series_has_zero_entropy() {
        assert_eq!(sample_entropy_slice(&[2.0; 50], 2, 0.2).unwrap(), 0.0);
    }

    #[test]
    fn errors() {
        let x: Vec<f64> = (0..10).map(|i| i as f64 * i as f64).collect();
        assert!(matches!(
            sample_entropy_slice(&x, 2, 0.01),
            Err(Error::UndefinedEntropy(_))
        ));
        assert!(sample_entropy_slice(&x, 2, 0.0).is_err());
        assert!(sample_entropy_slice(&x[..3], 2, 0.2).is_err());
    }
}
