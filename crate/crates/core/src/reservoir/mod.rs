//! Echo state network: construction, teacher-forced driving, ridge readout
//! and closed-loop prediction with partial-state feedback.
//!
//! The reservoir update is
//!
//! ```text
//! x(t) = (1 - a) x(t-1) + a f(W_in [1; u(t)] + W x(t-1))
//! y(t) = W_out [1; u(t); x(t)]
//! ```
//!
//! with `f = tanh`. In closed loop the first `m` readout components become
//! the next input, so an `m`-input, `l`-output network runs as an
//! autonomous map on the reservoir state.

mod ridge;
pub mod sparse;
pub mod spectral;

use std::ops::ControlFlow;

use rand::seq::index::sample;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::series::TimeSeries;
pub use ridge::{train, train_with_report, TrainReport};
pub use sparse::CsrMatrix;
pub use spectral::{dense_spectral_radius, largest_singular_value, spectral_radius};

const MAX_INIT_ATTEMPTS: usize = 8;
// Below this ratio of spectral radius to Frobenius norm the draw is treated
// as nilpotent: the computed eigenvalues are round-off of size ε^(1/k), and
// rescaling by them gives an arbitrary radius.
const DEGENERATE_RATIO: f64 = 1e-3;
// Largest reservoir for which a stalled power iteration falls back to a
// dense eigendecomposition.
const DENSE_FALLBACK_MAX: usize = 2000;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Activation {
    #[default]
    Tanh,
    /// Linear reservoir; turns the state into a finite VAR sum of inputs.
    Identity,
}

impl Activation {
    #[inline]
    fn apply(self, v: f64) -> f64 {
        match self {
            Activation::Tanh => v.tanh(),
            Activation::Identity => v,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct EsnHyperParams {
    pub n_nodes: usize,
    pub spectral_radius: f64,
    pub leak: f64,
    pub density: f64,
    pub ridge: f64,
    pub input_dim: usize,
    pub output_dim: usize,
    /// Steps used to forget the initial reservoir state, both before
    /// regression in training and before a fresh prediction.
    pub washout: usize,
    pub seed: u64,
    /// Multiplies the input columns of `W_in` after the U(-0.5, 0.5) draw.
    pub input_scaling: f64,
    /// Multiplies the bias column of `W_in` after the draw.
    pub bias_scaling: f64,
    pub activation: Activation,
    /// Closed-loop outputs larger than this in magnitude abort prediction.
    pub divergence_bound: f64,
}

impl Default for EsnHyperParams {
    fn default() -> Self {
        Self {
            n_nodes: 500,
            spectral_radius: 0.9,
            leak: 0.3,
            density: 0.02,
            ridge: 1e-7,
            input_dim: 1,
            output_dim: 3,
            washout: 200,
            seed: 1,
            input_scaling: 1.0,
            bias_scaling: 1.0,
            activation: Activation::Tanh,
            divergence_bound: 1e6,
        }
    }
}

impl EsnHyperParams {
    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(Error::Argument(m));
        if self.n_nodes == 0 {
            return bad("reservoir needs at least one node".into());
        }
        if !(self.leak > 0.0 && self.leak <= 1.0) {
            return bad(format!("leak rate must lie in (0, 1], got {}", self.leak));
        }
        if !(self.spectral_radius > 0.0 && self.spectral_radius.is_finite()) {
            return bad(format!(
                "spectral radius must be positive, got {}",
                self.spectral_radius
            ));
        }
        if !(self.density > 0.0 && self.density <= 1.0) {
            return bad(format!("density must lie in (0, 1], got {}", self.density));
        }
        if !(self.ridge >= 0.0 && self.ridge.is_finite()) {
            return bad(format!("ridge parameter must be >= 0, got {}", self.ridge));
        }
        if self.input_dim == 0 || self.input_dim > self.output_dim {
            return bad(format!(
                "need 1 <= input_dim <= output_dim, got {} and {}",
                self.input_dim, self.output_dim
            ));
        }
        if !(self.input_scaling.is_finite() && self.bias_scaling.is_finite()) {
            return bad("input scalings must be finite".into());
        }
        if !(self.divergence_bound > 0.0) {
            return bad("divergence bound must be positive".into());
        }
        Ok(())
    }

    /// Length of the feature vector `[1; u; x]`.
    pub fn feature_len(&self) -> usize {
        1 + self.input_dim + self.n_nodes
    }

    /// Washout of about two Lyapunov times: `ceil(2 / (mle * dt))`.
    pub fn washout_for(mle: f64, dt: f64) -> usize {
        (2.0 / (mle * dt)).ceil() as usize
    }
}

/// Node activations at one instant.
#[derive(Debug, Clone, PartialEq)]
pub struct ReservoirState(pub Vec<f64>);

impl ReservoirState {
    pub fn zeros(n: usize) -> Self {
        Self(vec![0.0; n])
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.0
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    pub fn distance(&self, other: &Self) -> f64 {
        self.0
            .iter()
            .zip(&other.0)
            .map(|(a, b)| (a - b).powi(2))
            .sum::<f64>()
            .sqrt()
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct EsnWeights {
    /// `N × (1 + m)`, row-major, bias in column 0.
    pub w_in: Vec<f64>,
    pub w: CsrMatrix,
    /// `l × (1 + m + N)`, row-major, absent until trained.
    pub w_out: Option<Vec<f64>>,
}

/// Hyperparameters together with the weights they produced.
#[derive(Debug, Clone, PartialEq)]
pub struct EsnModel {
    pub hp: EsnHyperParams,
    pub weights: EsnWeights,
}

pub fn init_weights(hp: &EsnHyperParams) -> Result<EsnWeights> {
    hp.validate()?;
    let n = hp.n_nodes;
    let cols = 1 + hp.input_dim;
    let mut rng = ChaCha8Rng::seed_from_u64(hp.seed);
    let mut w_in: Vec<f64> = (0..n * cols).map(|_| rng.random_range(-0.5..0.5)).collect();
    for row in w_in.chunks_exact_mut(cols) {
        row[0] *= hp.bias_scaling;
        for v in &mut row[1..] {
            *v *= hp.input_scaling;
        }
    }
    let nnz = ((hp.density * (n * n) as f64).round() as usize).clamp(1, n * n);
    for attempt in 0..MAX_INIT_ATTEMPTS {
        let mut sub = if attempt == 0 {
            ChaCha8Rng::seed_from_u64(hp.seed ^ 0x9e37_79b9_7f4a_7c15)
        } else {
            ChaCha8Rng::seed_from_u64(hp.seed.wrapping_add(attempt as u64).rotate_left(17))
        };
        let positions = sample(&mut sub, n * n, nnz);
        let entries = positions
            .iter()
            .map(|k| (k / n, k % n, sub.random_range(-0.5..0.5)))
            .collect();
        let mut w = CsrMatrix::from_triplets(n, entries)?;
        let rho = match spectral_radius(&w) {
            Err(Error::NoConvergence { .. }) if n <= DENSE_FALLBACK_MAX => {
                dense_spectral_radius(n, &w.to_dense())?
            }
            other => other?,
        };
        if rho > DEGENERATE_RATIO * w.frobenius_norm().max(f64::MIN_POSITIVE) {
            w.scale(hp.spectral_radius / rho);
            return Ok(EsnWeights {
                w_in,
                w,
                w_out: None,
            });
        }
    }
    Err(Error::DegenerateReservoir {
        attempts: MAX_INIT_ATTEMPTS,
    })
}

impl EsnModel {
    pub fn new(hp: EsnHyperParams) -> Result<Self> {
        let weights = init_weights(&hp)?;
        Ok(Self { hp, weights })
    }

    pub fn is_trained(&self) -> bool {
        self.weights.w_out.is_some()
    }

    pub fn n_nodes(&self) -> usize {
        self.hp.n_nodes
    }

    /// One reservoir update.
    pub fn update_state(&self, x: &ReservoirState, u: &[f64]) -> Result<ReservoirState> {
        update_state(x, u, &self.weights, self.hp.leak, self.hp.activation)
    }

    pub fn drive(&self, inputs: &TimeSeries, x0: &ReservoirState) -> Result<Vec<ReservoirState>> {
        drive(&self.weights, inputs, x0, self.hp.leak, self.hp.activation)
    }

    pub fn readout(&self, u: &[f64], x: &ReservoirState) -> Result<Vec<f64>> {
        readout(&self.weights, u, x)
    }

    pub fn washout_init(&self, warmup: &TimeSeries) -> Result<ReservoirState> {
        washout_init(&self.weights, warmup, self.hp.leak, self.hp.activation)
    }

    pub fn predict_autonomous(
        &self,
        u_start: &[f64],
        x_start: &ReservoirState,
        n_steps: usize,
        dt: f64,
    ) -> Result<TimeSeries> {
        predict_autonomous(&self.weights, &self.hp, u_start, x_start, n_steps, dt)
    }

    /// Teacher-forces the network on one-step pairs built from `series`
    /// (`u(t) = p(t-1)` first `m` channels, `y(t) = p(t)` first `l`
    /// channels) and fits the readout.
    pub fn fit(&mut self, series: &TimeSeries) -> Result<TrainReport> {
        let (inputs, targets) = one_step_pairs(series, self.hp.input_dim, self.hp.output_dim)?;
        let (weights, report) = train_with_report(&self.weights, &inputs, &targets, &self.hp)?;
        self.weights = weights;
        Ok(report)
    }
}

/// Input/target pairs for one-step-ahead training.
pub fn one_step_pairs(
    series: &TimeSeries,
    input_dim: usize,
    output_dim: usize,
) -> Result<(TimeSeries, TimeSeries)> {
    if series.len() < 2 {
        return Err(Error::InsufficientData(
            "training needs at least two samples".into(),
        ));
    }
    if output_dim > series.dim() {
        return Err(Error::Dimension {
            what: "training channels",
            expected: output_dim,
            got: series.dim(),
        });
    }
    let t = series.len();
    let inputs = series.slice(0..t - 1).leading(input_dim)?;
    let targets = series.slice(1..t).leading(output_dim)?;
    Ok((inputs, targets))
}

#[inline]
pub(crate) fn update_in_place(
    w: &EsnWeights,
    leak: f64,
    activation: Activation,
    u: &[f64],
    x: &mut [f64],
    scratch: &mut [f64],
) {
    let cols = 1 + u.len();
    w.w.mul_vec_into(x, scratch);
    for (i, (xi, pre)) in x.iter_mut().zip(scratch.iter()).enumerate() {
        let row = &w.w_in[i * cols..(i + 1) * cols];
        let mut drive = pre + row[0];
        for (wij, uj) in row[1..].iter().zip(u) {
            drive += wij * uj;
        }
        *xi = (1.0 - leak) * *xi + leak * activation.apply(drive);
    }
}

fn check_input(w: &EsnWeights, x: &[f64], u: &[f64]) -> Result<()> {
    let n = w.w.dim();
    if x.len() != n {
        return Err(Error::Dimension {
            what: "reservoir state",
            expected: n,
            got: x.len(),
        });
    }
    let cols = w.w_in.len() / n.max(1);
    if u.len() + 1 != cols {
        return Err(Error::Dimension {
            what: "input vector",
            expected: cols - 1,
            got: u.len(),
        });
    }
    Ok(())
}

pub fn update_state(
    x: &ReservoirState,
    u: &[f64],
    w: &EsnWeights,
    leak: f64,
    activation: Activation,
) -> Result<ReservoirState> {
    check_input(w, &x.0, u)?;
    let mut next = x.0.clone();
    let mut scratch = vec![0.0; next.len()];
    update_in_place(w, leak, activation, u, &mut next, &mut scratch);
    Ok(ReservoirState(next))
}

pub fn drive(
    w: &EsnWeights,
    inputs: &TimeSeries,
    x0: &ReservoirState,
    leak: f64,
    activation: Activation,
) -> Result<Vec<ReservoirState>> {
    if inputs.is_empty() {
        return Err(Error::InsufficientData("drive needs at least one input".into()));
    }
    check_input(w, &x0.0, inputs.row(0))?;
    let mut x = x0.0.clone();
    let mut scratch = vec![0.0; x.len()];
    let mut out = Vec::with_capacity(inputs.len());
    for u in inputs.rows() {
        update_in_place(w, leak, activation, u, &mut x, &mut scratch);
        out.push(ReservoirState(x.clone()));
    }
    Ok(out)
}

/// Final state after driving from zero through `warmup`.
pub fn washout_init(
    w: &EsnWeights,
    warmup: &TimeSeries,
    leak: f64,
    activation: Activation,
) -> Result<ReservoirState> {
    if warmup.is_empty() {
        return Err(Error::InsufficientData("washout needs at least one input".into()));
    }
    let n = w.w.dim();
    check_input(w, &vec![0.0; n], warmup.row(0))?;
    let mut x = vec![0.0; n];
    let mut scratch = vec![0.0; n];
    for u in warmup.rows() {
        update_in_place(w, leak, activation, u, &mut x, &mut scratch);
    }
    Ok(ReservoirState(x))
}

#[inline]
pub(crate) fn readout_into(w_out: &[f64], u: &[f64], x: &[f64], y: &mut [f64]) {
    let f = 1 + u.len() + x.len();
    for (j, yj) in y.iter_mut().enumerate() {
        let row = &w_out[j * f..(j + 1) * f];
        let mut acc = row[0];
        for (a, b) in row[1..=u.len()].iter().zip(u) {
            acc += a * b;
        }
        for (a, b) in row[1 + u.len()..].iter().zip(x) {
            acc += a * b;
        }
        *yj = acc;
    }
}

pub fn readout(w: &EsnWeights, u: &[f64], x: &ReservoirState) -> Result<Vec<f64>> {
    let w_out = w.w_out.as_ref().ok_or(Error::Untrained)?;
    check_input(w, &x.0, u)?;
    let f = 1 + u.len() + x.len();
    let l = w_out.len() / f;
    let mut y = vec![0.0; l];
    readout_into(w_out, u, &x.0, &mut y);
    Ok(y)
}

/// Closed-loop run. Each step updates the state with the current input,
/// reads out `l` values and feeds their first `m` back as the next input.
/// Row `k` of the result predicts the system `k + 1` steps after the
/// sample whose first `m` components are `u_start`.
pub fn predict_autonomous(
    w: &EsnWeights,
    hp: &EsnHyperParams,
    u_start: &[f64],
    x_start: &ReservoirState,
    n_steps: usize,
    dt: f64,
) -> Result<TimeSeries> {
    let mut out = Vec::new();
    let l = closed_loop(w, hp, u_start, x_start, n_steps, |y| {
        out.extend_from_slice(y);
        ControlFlow::Continue(())
    })?;
    if let Some(steps) = l.diverged_at {
        return Err(Error::Diverged {
            steps,
            bound: hp.divergence_bound,
        });
    }
    let channels = (0..l.output_dim).map(|i| format!("y{i}")).collect();
    TimeSeries::new(out, channels, dt, dt)
}

pub(crate) struct ClosedLoopRun {
    pub output_dim: usize,
    pub diverged_at: Option<usize>,
}

/// Runs the closed loop, handing each readout to `emit`, which may stop the
/// run. Also stops (and reports the number of completed steps) once an
/// output leaves the divergence bound; the offending output is not emitted.
pub(crate) fn closed_loop<F: FnMut(&[f64]) -> ControlFlow<()>>(
    w: &EsnWeights,
    hp: &EsnHyperParams,
    u_start: &[f64],
    x_start: &ReservoirState,
    n_steps: usize,
    mut emit: F,
) -> Result<ClosedLoopRun> {
    let w_out = w.w_out.as_ref().ok_or(Error::Untrained)?;
    check_input(w, &x_start.0, u_start)?;
    let m = u_start.len();
    let f = 1 + m + x_start.len();
    let l = w_out.len() / f;
    let mut u = u_start.to_vec();
    let mut x = x_start.0.clone();
    let mut scratch = vec![0.0; x.len()];
    let mut y = vec![0.0; l];
    for step in 0..n_steps {
        update_in_place(w, hp.leak, hp.activation, &u, &mut x, &mut scratch);
        readout_into(w_out, &u, &x, &mut y);
        if y.iter().any(|v| !(v.abs() <= hp.divergence_bound)) {
            return Ok(ClosedLoopRun {
                output_dim: l,
                diverged_at: Some(step),
            });
        }
        if emit(&y).is_break() {
            break;
        }
        u.copy_from_slice(&y[..m]);
    }
    Ok(ClosedLoopRun {
        output_dim: l,
        diverged_at: None,
    })
}
