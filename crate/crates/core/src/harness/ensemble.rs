//! Prediction-horizon ensembles over many initial conditions, and the
//! matching divergence times of perturbed true trajectories.

use std::ops::ControlFlow;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::metrics::{crossing_steps, PhSample};
use crate::reservoir::{closed_loop, washout_init, EsnModel, ReservoirState};
use crate::series::TimeSeries;
use crate::systems::{self, SystemSpec};

/// Start indices of `count` evenly strided prediction windows. Each start
/// `s` leaves `washout` true samples before it and `horizon` after it; the
/// seed shifts the whole comb by less than one stride.
pub fn ic_indices(len: usize, washout: usize, horizon: usize, count: usize, seed: u64) -> Result<Vec<usize>> {
    let first = washout;
    let needed = washout + horizon + 1;
    if len < needed || len - needed + 1 < count {
        return Err(Error::InsufficientData(format!(
            "{len} test samples cannot hold {count} distinct windows of washout {washout} and horizon {horizon}"
        )));
    }
    let span = len - needed + 1;
    let stride = span as f64 / count as f64;
    let offset = if stride >= 2.0 {
        ChaCha8Rng::seed_from_u64(seed).random_range(0..stride.floor() as usize)
    } else {
        0
    };
    Ok((0..count)
        .map(|i| first + offset + (i as f64 * stride).floor() as usize)
        .collect())
}

/// Steps to the first exceedance of each threshold, for one initial
/// condition at test index `s`. A diverged prediction counts as crossing
/// every remaining threshold at the step it stopped.
pub fn horizon_steps_at(
    model: &EsnModel,
    test: &TimeSeries,
    s: usize,
    thresholds: &[f64],
    horizon: usize,
) -> Result<Vec<Option<usize>>> {
    let hp = &model.hp;
    let (m, l) = (hp.input_dim, hp.output_dim);
    let x0 = if hp.washout == 0 {
        ReservoirState::zeros(hp.n_nodes)
    } else {
        let warm = test.slice(s - hp.washout..s).leading(m)?;
        washout_init(&model.weights, &warm, hp.leak, hp.activation)?
    };
    let u0 = &test.row(s)[..m];
    let mut crossed: Vec<Option<usize>> = vec![None; thresholds.len()];
    let mut acc = 0.0;
    let mut k = 0usize;
    let run = closed_loop(&model.weights, hp, u0, &x0, horizon, |y| {
        k += 1;
        let truth = &test.row(s + k)[..l];
        acc += y.iter().zip(truth).map(|(a, b)| (a - b).powi(2)).sum::<f64>();
        let v = acc / (k * l) as f64;
        for (c, r) in crossed.iter_mut().zip(thresholds) {
            if c.is_none() && !(v <= *r) {
                *c = Some(k);
            }
        }
        if crossed.iter().all(Option::is_some) {
            ControlFlow::Break(())
        } else {
            ControlFlow::Continue(())
        }
    })?;
    if let Some(done) = run.diverged_at {
        for c in crossed.iter_mut().filter(|c| c.is_none()) {
            *c = Some(done + 1);
        }
    }
    Ok(crossed)
}

/// One sample per (initial condition, threshold), ordered by initial
/// condition and then threshold. Horizons are in Lyapunov units of `mle`.
pub fn ph_distribution(
    model: &EsnModel,
    test: &TimeSeries,
    thresholds: &[f64],
    ensemble_size: usize,
    seed: u64,
    mle: f64,
    horizon: usize,
) -> Result<Vec<PhSample>> {
    if thresholds.iter().any(|r| !(*r > 0.0)) {
        return Err(Error::Argument("thresholds must be positive".into()));
    }
    if test.dim() < model.hp.output_dim {
        return Err(Error::Dimension {
            what: "test channels",
            expected: model.hp.output_dim,
            got: test.dim(),
        });
    }
    let ics = ic_indices(test.len(), model.hp.washout, horizon, ensemble_size, seed)?;
    let unit = test.dt() * mle;
    let per_ic: Vec<Vec<Option<usize>>> = ics
        .par_iter()
        .map(|&s| horizon_steps_at(model, test, s, thresholds, horizon))
        .collect::<Result<_>>()?;
    Ok(per_ic
        .into_iter()
        .enumerate()
        .flat_map(|(i, steps)| {
            steps.into_iter().zip(thresholds).map(move |(st, &r)| PhSample {
                ic_index: i,
                r,
                ph_lyapunov: st.map(|k| k as f64 * unit),
            })
        })
        .collect())
}

/// Divergence times of `n_pairs` perturbed pairs of true trajectories,
/// started from points spaced one Lyapunov time apart along the attractor.
/// Uses the same cumulative-MSE functional as the prediction horizon,
/// compared from the first step after the initial condition.
pub fn divergence_study(
    spec: &SystemSpec,
    delta0: f64,
    r: f64,
    n_pairs: usize,
    seed: u64,
    horizon: usize,
) -> Result<Vec<PhSample>> {
    if !(delta0 > 0.0) {
        return Err(Error::Argument(format!("delta0 must be positive, got {delta0}")));
    }
    if !(r > 0.0) || n_pairs == 0 || horizon == 0 {
        return Err(Error::Argument("need r > 0, n_pairs > 0 and horizon > 0".into()));
    }
    let mle = spec.system.reference_mle();
    let gap = ((1.0 / (mle * spec.dt)).ceil() as usize).max(1);
    let base_spec = SystemSpec {
        n_steps: (n_pairs - 1) * gap + 1,
        ..*spec
    };
    let base = systems::generate(&base_spec)?;
    let pair_spec = SystemSpec {
        n_steps: horizon + 1,
        ..*spec
    };
    let unit = spec.dt * mle;
    (0..n_pairs)
        .into_par_iter()
        .map(|i| {
            let row = base.row(i * gap);
            let ic = [row[0], row[1], row[2]];
            let pair_seed = seed.wrapping_mul(0x9e37_79b9).wrapping_add(i as u64);
            let (a, b) = systems::perturbed_pair(&pair_spec, &ic, delta0, pair_seed)?;
            let steps = crossing_steps(&a.values()[3..], &b.values()[3..], 3, r);
            Ok(PhSample {
                ic_index: i,
                r,
                ph_lyapunov: steps.map(|k| k as f64 * unit),
            })
        })
        .collect()
}
