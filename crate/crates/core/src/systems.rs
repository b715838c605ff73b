//! Lorenz 63 and dimensionless Chua vector fields, their integration, and
//! the clean / noisy / perturbed trajectories built from them.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::series::TimeSeries;

pub type State3 = [f64; 3];

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum System {
    Lorenz63 {
        #[serde(default = "defaults::sigma")]
        sigma: f64,
        #[serde(default = "defaults::rho")]
        rho: f64,
        #[serde(default = "defaults::beta")]
        beta: f64,
    },
    ChuaOde {
        #[serde(default = "defaults::alpha")]
        alpha: f64,
        #[serde(default = "defaults::chua_beta")]
        beta: f64,
        #[serde(default = "defaults::gamma")]
        gamma: f64,
        /// Slope of the inner segment (|x| < 1) of the diode characteristic.
        #[serde(default = "defaults::m0")]
        m0: f64,
        /// Slope of the outer segments.
        #[serde(default = "defaults::m1")]
        m1: f64,
    },
}

mod defaults {
    pub fn sigma() -> f64 {
        10.0
    }
    pub fn rho() -> f64 {
        28.0
    }
    pub fn beta() -> f64 {
        8.0 / 3.0
    }
    pub fn alpha() -> f64 {
        10.0
    }
    pub fn chua_beta() -> f64 {
        9.77
    }
    pub fn gamma() -> f64 {
        0.58
    }
    // The slope magnitudes are 0.735 and 1.301; the steeper one sits on the
    // inner segment. With the assignment reversed the flow is unbounded.
    pub fn m0() -> f64 {
        -1.301
    }
    pub fn m1() -> f64 {
        -0.735
    }
}

impl System {
    pub fn lorenz() -> Self {
        System::Lorenz63 {
            sigma: defaults::sigma(),
            rho: defaults::rho(),
            beta: defaults::beta(),
        }
    }

    pub fn chua() -> Self {
        System::ChuaOde {
            alpha: defaults::alpha(),
            beta: defaults::chua_beta(),
            gamma: defaults::gamma(),
            m0: defaults::m0(),
            m1: defaults::m1(),
        }
    }

    pub fn name(&self) -> &'static str {
        match self {
            System::Lorenz63 { .. } => "lorenz63",
            System::ChuaOde { .. } => "chua_ode",
        }
    }

    pub fn rhs(&self, s: &State3) -> Result<State3> {
        match *self {
            System::Lorenz63 { sigma, rho, beta } => lorenz_rhs(s, sigma, rho, beta),
            System::ChuaOde {
                alpha,
                beta,
                gamma,
                m0,
                m1,
            } => chua_rhs(s, alpha, beta, gamma, m0, m1),
        }
    }

    fn rhs_unchecked(&self, s: &State3) -> State3 {
        match *self {
            System::Lorenz63 { sigma, rho, beta } => lorenz_field(s, sigma, rho, beta),
            System::ChuaOde {
                alpha,
                beta,
                gamma,
                m0,
                m1,
            } => chua_field(s, alpha, beta, gamma, m0, m1),
        }
    }

    /// Reference maximal Lyapunov exponent used to express times in
    /// Lyapunov units (1/time).
    pub fn reference_mle(&self) -> f64 {
        match self {
            System::Lorenz63 { .. } => 0.974,
            System::ChuaOde { .. } => 0.105,
        }
    }

    pub fn default_ic(&self) -> State3 {
        match self {
            System::Lorenz63 { .. } => [1.0, 1.0, 1.0],
            System::ChuaOde { .. } => [0.1, 0.0, 0.0],
        }
    }

    pub fn default_dt(&self) -> f64 {
        match self {
            System::Lorenz63 { .. } => 0.01,
            System::ChuaOde { .. } => 0.05,
        }
    }

    pub fn default_len(&self) -> usize {
        match self {
            System::Lorenz63 { .. } => 100_000,
            System::ChuaOde { .. } => 75_000,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SystemSpec {
    #[serde(flatten)]
    pub system: System,
    /// Output sampling step (dimensionless time).
    pub dt: f64,
    pub n_steps: usize,
    #[serde(default = "default_rtol")]
    pub rtol: f64,
    #[serde(default = "default_atol")]
    pub atol: f64,
    /// Time discarded before recording in [`generate`]. Negative means ten
    /// Lyapunov times of the reference exponent.
    #[serde(default = "default_transient")]
    pub transient: f64,
}

fn default_rtol() -> f64 {
    1e-9
}
fn default_atol() -> f64 {
    1e-11
}
fn default_transient() -> f64 {
    -1.0
}

impl SystemSpec {
    pub fn new(system: System, dt: f64, n_steps: usize) -> Self {
        Self {
            system,
            dt,
            n_steps,
            rtol: default_rtol(),
            atol: default_atol(),
            transient: default_transient(),
        }
    }

    /// Full-length defaults: Lorenz at dt = 0.01 for 100 000 samples, Chua at
    /// dt = 0.05 for 75 000 samples.
    pub fn standard(system: System) -> Self {
        Self::new(system, system.default_dt(), system.default_len())
    }

    pub fn transient_time(&self) -> f64 {
        if self.transient < 0.0 {
            10.0 / self.system.reference_mle()
        } else {
            self.transient
        }
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.dt > 0.0 && self.dt.is_finite()) {
            return Err(Error::Argument(format!("dt must be positive, got {}", self.dt)));
        }
        if self.n_steps == 0 {
            return Err(Error::Argument("n_steps must be at least 1".into()));
        }
        if !(self.rtol > 0.0 && self.atol > 0.0) {
            return Err(Error::Argument("integration tolerances must be positive".into()));
        }
        Ok(())
    }
}

fn check_state(s: &State3) -> Result<()> {
    if s.iter().all(|v| v.is_finite()) {
        Ok(())
    } else {
        Err(Error::NonFinite("state vector"))
    }
}

#[inline]
fn lorenz_field(s: &State3, sigma: f64, rho: f64, beta: f64) -> State3 {
    let [x, y, z] = *s;
    [sigma * (y - x), x * (rho - z) - y, x * y - beta * z]
}

#[inline]
fn chua_field(s: &State3, alpha: f64, beta: f64, gamma: f64, m0: f64, m1: f64) -> State3 {
    let [x, y, z] = *s;
    let phi = m1 * x + 0.5 * (m0 - m1) * ((x + 1.0).abs() - (x - 1.0).abs());
    [alpha * (y - x - phi), x - y + z, -beta * y - gamma * z]
}

pub fn lorenz_rhs(s: &State3, sigma: f64, rho: f64, beta: f64) -> Result<State3> {
    check_state(s)?;
    Ok(lorenz_field(s, sigma, rho, beta))
}

/// Piecewise-linear Chua diode characteristic: slope `m0` for |x| < 1 and
/// `m1` outside, continuous at the breakpoints ±1.
pub fn chua_phi(x: f64, m0: f64, m1: f64) -> Result<f64> {
    if !x.is_finite() {
        return Err(Error::NonFinite("chua_phi argument"));
    }
    Ok(m1 * x + 0.5 * (m0 - m1) * ((x + 1.0).abs() - (x - 1.0).abs()))
}

pub fn chua_rhs(s: &State3, alpha: f64, beta: f64, gamma: f64, m0: f64, m1: f64) -> Result<State3> {
    check_state(s)?;
    Ok(chua_field(s, alpha, beta, gamma, m0, m1))
}

// Dormand-Prince 5(4) tableau. The fields are autonomous, so the nodes
// c_i are not needed.
const A21: f64 = 1.0 / 5.0;
const A31: f64 = 3.0 / 40.0;
const A32: f64 = 9.0 / 40.0;
const A41: f64 = 44.0 / 45.0;
const A42: f64 = -56.0 / 15.0;
const A43: f64 = 32.0 / 9.0;
const A51: f64 = 19372.0 / 6561.0;
const A52: f64 = -25360.0 / 2187.0;
const A53: f64 = 64448.0 / 6561.0;
const A54: f64 = -212.0 / 729.0;
const A61: f64 = 9017.0 / 3168.0;
const A62: f64 = -355.0 / 33.0;
const A63: f64 = 46732.0 / 5247.0;
const A64: f64 = 49.0 / 176.0;
const A65: f64 = -5103.0 / 18656.0;
const B1: f64 = 35.0 / 384.0;
const B3: f64 = 500.0 / 1113.0;
const B4: f64 = 125.0 / 192.0;
const B5: f64 = -2187.0 / 6784.0;
const B6: f64 = 11.0 / 84.0;
// b - b* (fifth minus fourth order weights)
const E1: f64 = 71.0 / 57600.0;
const E3: f64 = -71.0 / 16695.0;
const E4: f64 = 71.0 / 1920.0;
const E5: f64 = -17253.0 / 339200.0;
const E6: f64 = 22.0 / 525.0;
const E7: f64 = -1.0 / 40.0;

fn axpy(y: &State3, h: f64, terms: &[(f64, &State3)]) -> State3 {
    let mut out = *y;
    for (c, k) in terms {
        for i in 0..3 {
            out[i] += h * c * k[i];
        }
    }
    out
}

/// Adaptive embedded Runge-Kutta 4(5) integrator with first-same-as-last
/// reuse. Steps are clipped so that every output time is hit exactly.
struct Dopri<'a> {
    system: &'a System,
    rtol: f64,
    atol: f64,
    h: f64,
    t: f64,
    y: State3,
    k1: State3,
}

impl<'a> Dopri<'a> {
    fn new(system: &'a System, y: State3, rtol: f64, atol: f64, h0: f64) -> Self {
        let k1 = system.rhs_unchecked(&y);
        Self {
            system,
            rtol,
            atol,
            h: h0,
            t: 0.0,
            y,
            k1,
        }
    }

    fn advance_to(&mut self, t_end: f64) -> Result<()> {
        let f = |s: &State3| self.system.rhs_unchecked(s);
        while self.t < t_end {
            let remaining = t_end - self.t;
            let clipped = self.h >= remaining;
            let h = if clipped { remaining } else { self.h };
            if h < 1e-14 * self.t.abs().max(1.0) {
                return Err(Error::Integration {
                    t_last: self.t,
                    reason: "step size underflow".into(),
                });
            }
            let y = &self.y;
            let k1 = self.k1;
            let k2 = f(&axpy(y, h, &[(A21, &k1)]));
            let k3 = f(&axpy(y, h, &[(A31, &k1), (A32, &k2)]));
            let k4 = f(&axpy(y, h, &[(A41, &k1), (A42, &k2), (A43, &k3)]));
            let k5 = f(&axpy(y, h, &[(A51, &k1), (A52, &k2), (A53, &k3), (A54, &k4)]));
            let k6 = f(&axpy(
                y,
                h,
                &[(A61, &k1), (A62, &k2), (A63, &k3), (A64, &k4), (A65, &k5)],
            ));
            let y_new = axpy(y, h, &[(B1, &k1), (B3, &k3), (B4, &k4), (B5, &k5), (B6, &k6)]);
            let k7 = f(&y_new);
            let mut err = 0.0;
            for i in 0..3 {
                let e = h
                    * (E1 * k1[i] + E3 * k3[i] + E4 * k4[i] + E5 * k5[i] + E6 * k6[i] + E7 * k7[i]);
                let scale = self.atol + self.rtol * y[i].abs().max(y_new[i].abs());
                err += (e / scale).powi(2);
            }
            let err = (err / 3.0).sqrt();
            if !err.is_finite() || y_new.iter().any(|v| !v.is_finite()) {
                self.h = h * 0.2;
                if self.h < 1e-14 * self.t.abs().max(1.0) {
                    return Err(Error::Integration {
                        t_last: self.t,
                        reason: "solution became non-finite".into(),
                    });
                }
                continue;
            }
            let factor = if err == 0.0 {
                5.0
            } else {
                (0.9 * err.powf(-0.2)).clamp(0.2, 5.0)
            };
            if err <= 1.0 {
                self.t = if clipped { t_end } else { self.t + h };
                self.y = y_new;
                self.k1 = k7;
                // Clipping to hit an output time should not shrink the step
                // carried forward.
                self.h = if clipped { self.h.max(h * factor) } else { h * factor };
            } else {
                self.h = h * factor.min(1.0);
            }
        }
        Ok(())
    }
}

fn labels() -> Vec<String> {
    vec!["x".into(), "y".into(), "z".into()]
}

/// Trajectory of `spec.n_steps` samples spaced `spec.dt`, starting with `ic`
/// at t = 0.
pub fn integrate(spec: &SystemSpec, ic: &State3) -> Result<TimeSeries> {
    spec.validate()?;
    check_state(ic)?;
    let mut values = Vec::with_capacity(spec.n_steps * 3);
    values.extend_from_slice(ic);
    let mut solver = Dopri::new(&spec.system, *ic, spec.rtol, spec.atol, spec.dt.min(1e-3));
    for i in 1..spec.n_steps {
        solver.advance_to(i as f64 * spec.dt)?;
        values.extend_from_slice(&solver.y);
    }
    TimeSeries::new(values, labels(), spec.dt, 0.0)
}

/// State reached from `ic` after time `duration`.
pub fn flow(spec: &SystemSpec, ic: &State3, duration: f64) -> Result<State3> {
    check_state(ic)?;
    let mut solver = Dopri::new(&spec.system, *ic, spec.rtol, spec.atol, spec.dt.min(1e-3));
    solver.advance_to(duration)?;
    Ok(solver.y)
}

/// Attractor dataset: default initial condition, transient discarded.
pub fn generate(spec: &SystemSpec) -> Result<TimeSeries> {
    let start = flow(spec, &spec.system.default_ic(), spec.transient_time())?;
    integrate(spec, &start)
}

/// Adds i.i.d. Gaussian noise whose standard deviation is `sigma_rel` times
/// each channel's sample standard deviation.
pub fn add_noise(series: &TimeSeries, sigma_rel: f64, seed: u64) -> Result<TimeSeries> {
    if !(sigma_rel >= 0.0) || !sigma_rel.is_finite() {
        return Err(Error::Argument(format!(
            "noise level must be non-negative, got {sigma_rel}"
        )));
    }
    if sigma_rel == 0.0 {
        return Ok(series.clone());
    }
    let scale: Vec<f64> = series.channel_std().iter().map(|s| s * sigma_rel).collect();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let dim = series.dim();
    let values = series
        .values()
        .iter()
        .enumerate()
        .map(|(i, v)| {
            let z: f64 = StandardNormal.sample(&mut rng);
            v + scale[i % dim] * z
        })
        .collect();
    TimeSeries::new(values, series.channels().to_vec(), series.dt(), series.t0())
}

/// Uniformly distributed unit vector in R^3.
pub fn random_unit_vector<R: rand::Rng>(rng: &mut R) -> State3 {
    loop {
        let v: State3 = [
            StandardNormal.sample(rng),
            StandardNormal.sample(rng),
            StandardNormal.sample(rng),
        ];
        let n = (v[0] * v[0] + v[1] * v[1] + v[2] * v[2]).sqrt();
        if n > 1e-12 {
            return [v[0] / n, v[1] / n, v[2] / n];
        }
    }
}

/// Reference trajectory from `ic` and a second one started at distance
/// `delta0` in a uniformly random direction.
pub fn perturbed_pair(
    spec: &SystemSpec,
    ic: &State3,
    delta0: f64,
    seed: u64,
) -> Result<(TimeSeries, TimeSeries)> {
    if !(delta0 >= 0.0) || !delta0.is_finite() {
        return Err(Error::Argument(format!("delta0 must be non-negative, got {delta0}")));
    }
    let ic2 = perturbed_point(ic, delta0, seed);
    Ok((integrate(spec, ic)?, integrate(spec, &ic2)?))
}

pub fn perturbed_point(ic: &State3, delta0: f64, seed: u64) -> State3 {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let v = random_unit_vector(&mut rng);
    [ic[0] + delta0 * v[0], ic[1] + delta0 * v[1], ic[2] + delta0 * v[2]]
}
