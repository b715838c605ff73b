//! Dominant-eigenvalue modulus by block power iteration.
//!
//! A single power vector does not settle when the dominant eigenvalue of a
//! real matrix is a complex pair, which is the common case for random
//! reservoirs. Iterating a small orthonormal block and taking Ritz values
//! of the projected matrix handles real and complex dominant pairs alike.

use nalgebra::DMatrix;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::sparse::CsrMatrix;
use crate::error::{Error, Result};

pub const DEFAULT_TOL: f64 = 1e-8;
pub const DEFAULT_MAX_ITER: usize = 10_000;
const BLOCK: usize = 8;
// The estimate has to stay within tolerance for this many iterations in a
// row before it is accepted; a single small change is not enough when the
// subspace converges slowly.
const SETTLE: usize = 25;

pub trait LinearOperator {
    fn dim(&self) -> usize;
    fn apply(&self, x: &[f64], y: &mut [f64]);
}

impl LinearOperator for CsrMatrix {
    fn dim(&self) -> usize {
        CsrMatrix::dim(self)
    }
    fn apply(&self, x: &[f64], y: &mut [f64]) {
        self.mul_vec_into(x, y)
    }
}

impl LinearOperator for DMatrix<f64> {
    fn dim(&self) -> usize {
        self.nrows()
    }
    fn apply(&self, x: &[f64], y: &mut [f64]) {
        for (i, yi) in y.iter_mut().enumerate() {
            *yi = self.row(i).iter().zip(x).map(|(a, b)| a * b).sum();
        }
    }
}

struct Gram<'a>(&'a CsrMatrix);

impl LinearOperator for Gram<'_> {
    fn dim(&self) -> usize {
        self.0.dim()
    }
    fn apply(&self, x: &[f64], y: &mut [f64]) {
        let ax = self.0.mul_vec(x);
        self.0.mul_transpose_vec_into(&ax, y);
    }
}

/// Largest singular value, an upper bound on the spectral radius. Its being
/// below one is the sufficient echo-state condition; diagnostic only.
pub fn largest_singular_value(w: &CsrMatrix) -> Result<f64> {
    spectral_radius(&Gram(w)).map(f64::sqrt)
}

pub fn spectral_radius<A: LinearOperator>(a: &A) -> Result<f64> {
    spectral_radius_with(a, DEFAULT_TOL, DEFAULT_MAX_ITER)
}

pub fn spectral_radius_with<A: LinearOperator>(a: &A, tol: f64, max_iter: usize) -> Result<f64> {
    let n = a.dim();
    if n == 0 {
        return Err(Error::Argument("empty matrix".into()));
    }
    let k = BLOCK.min(n);
    let mut rng = ChaCha8Rng::seed_from_u64(0x5eed_0f_b10c);
    let start = DMatrix::from_fn(n, k, |_, _| rng.random_range(-1.0..1.0));
    let mut q = start.qr().q();
    let mut z = DMatrix::<f64>::zeros(n, k);
    let mut best = f64::NAN;
    let mut settled = 0;
    for _ in 0..max_iter {
        for j in 0..k {
            let col: Vec<f64> = q.column(j).iter().copied().collect();
            let mut out = vec![0.0; n];
            a.apply(&col, &mut out);
            z.column_mut(j).copy_from_slice(&out);
        }
        if z.iter().all(|v| *v == 0.0) {
            return Ok(0.0);
        }
        let h = q.transpose() * &z;
        let Some(est) = eigen_modulus(h) else {
            return Err(Error::NoConvergence {
                iterations: max_iter,
                best,
            });
        };
        if !est.is_finite() {
            return Err(Error::NonFinite("power iteration"));
        }
        if (est - best).abs() <= tol * est.max(f64::MIN_POSITIVE) {
            settled += 1;
            if settled >= SETTLE {
                return Ok(est);
            }
        } else {
            settled = 0;
        }
        best = est;
        let qr = z.clone().qr();
        q = qr.q();
    }
    Err(Error::NoConvergence {
        iterations: max_iter,
        best,
    })
}

/// Spectral radius from a full eigendecomposition of a row-major `n × n`
/// matrix. Cubic in `n`; used when the iteration does not settle.
pub fn dense_spectral_radius(n: usize, row_major: &[f64]) -> Result<f64> {
    if n == 0 || row_major.len() != n * n {
        return Err(Error::Argument(format!(
            "expected {n}x{n} entries, got {}",
            row_major.len()
        )));
    }
    match eigen_modulus(DMatrix::from_row_slice(n, n, row_major)) {
        Some(rho) if rho.is_finite() => Ok(rho),
        Some(_) => Err(Error::NonFinite("eigenvalues")),
        None => Err(Error::NoConvergence {
            iterations: SCHUR_MAX_ITER,
            best: f64::NAN,
        }),
    }
}

const SCHUR_MAX_ITER: usize = 10_000;

// `complex_eigenvalues` runs the Schur iteration without a cap, and the
// iteration stalls on multiples of the identity.
fn eigen_modulus(m: DMatrix<f64>) -> Option<f64> {
    let n = m.nrows();
    let scale = m.amax();
    if (0..n).all(|i| (0..i).all(|j| m[(i, j)].abs() <= 64.0 * f64::EPSILON * scale)) {
        return Some((0..n).map(|i| m[(i, i)].abs()).fold(0.0, f64::max));
    }
    let schur = m.try_schur(f64::EPSILON, SCHUR_MAX_ITER)?;
    Some(
        schur
            .complex_eigenvalues()
            .iter()
            .map(|z| z.norm())
            .fold(0.0f64, f64::max),
    )
}
