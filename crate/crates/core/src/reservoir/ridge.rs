//! Ridge-regression readout: `W_out = Y Xᵀ (X Xᵀ + βI)⁻¹`, computed as a
//! Cholesky solve of the regularised normal equations. Reservoir states are
//! streamed into the Gram matrix in blocks, so the state matrix is never
//! held in memory.

use nalgebra::DMatrix;

use super::{update_in_place, EsnHyperParams, EsnWeights, ReservoirState};
use crate::error::{Error, Result};
use crate::series::TimeSeries;

const BLOCK_ROWS: usize = 1024;

#[derive(Debug, Clone, PartialEq)]
pub struct TrainReport {
    /// Mean squared one-step error per output channel over the fitted
    /// samples.
    pub mse: f64,
    /// Samples used in the regression (after the washout).
    pub samples: usize,
    /// Reservoir state after the last training input.
    pub last_state: ReservoirState,
}

pub fn train(
    w: &EsnWeights,
    inputs: &TimeSeries,
    targets: &TimeSeries,
    hp: &EsnHyperParams,
) -> Result<EsnWeights> {
    train_with_report(w, inputs, targets, hp).map(|(w, _)| w)
}

pub fn train_with_report(
    w: &EsnWeights,
    inputs: &TimeSeries,
    targets: &TimeSeries,
    hp: &EsnHyperParams,
) -> Result<(EsnWeights, TrainReport)> {
    hp.validate()?;
    if inputs.len() != targets.len() {
        return Err(Error::Dimension {
            what: "training targets",
            expected: inputs.len(),
            got: targets.len(),
        });
    }
    if inputs.dim() != hp.input_dim {
        return Err(Error::Dimension {
            what: "training inputs",
            expected: hp.input_dim,
            got: inputs.dim(),
        });
    }
    if targets.dim() != hp.output_dim {
        return Err(Error::Dimension {
            what: "training target channels",
            expected: hp.output_dim,
            got: targets.dim(),
        });
    }
    if inputs.len() <= hp.washout {
        return Err(Error::InsufficientData(format!(
            "{} training samples do not exceed the washout of {}",
            inputs.len(),
            hp.washout
        )));
    }
    let n = w.w.dim();
    let m = hp.input_dim;
    let l = hp.output_dim;
    let f = 1 + m + n;

    let mut gram = DMatrix::<f64>::zeros(f, f);
    let mut cross = DMatrix::<f64>::zeros(f, l);
    let mut block = DMatrix::<f64>::zeros(f, BLOCK_ROWS);
    let mut filled = 0usize;
    let mut x = vec![0.0; n];
    let mut scratch = vec![0.0; n];

    for (t, (u, y)) in inputs.rows().zip(targets.rows()).enumerate() {
        update_in_place(w, hp.leak, hp.activation, u, &mut x, &mut scratch);
        if t < hp.washout {
            continue;
        }
        let mut col = block.column_mut(filled);
        col[0] = 1.0;
        for (k, v) in u.iter().enumerate() {
            col[1 + k] = *v;
        }
        for (k, v) in x.iter().enumerate() {
            col[1 + m + k] = *v;
        }
        for j in 0..l {
            let yj = y[j];
            let mut cj = cross.column_mut(j);
            for k in 0..f {
                cj[k] += col[k] * yj;
            }
        }
        filled += 1;
        if filled == BLOCK_ROWS {
            flush(&block, filled, &mut gram);
            filled = 0;
        }
    }
    if filled > 0 {
        flush(&block, filled, &mut gram);
    }
    for i in 0..f {
        gram[(i, i)] += hp.ridge;
    }
    let chol = gram.cholesky().ok_or(Error::SingularRidge)?;
    let solution = chol.solve(&cross);
    if solution.iter().any(|v| !v.is_finite()) {
        return Err(Error::SingularRidge);
    }
    let mut w_out = vec![0.0; l * f];
    for j in 0..l {
        for k in 0..f {
            w_out[j * f + k] = solution[(k, j)];
        }
    }
    let trained = EsnWeights {
        w_in: w.w_in.clone(),
        w: w.w.clone(),
        w_out: Some(w_out),
    };
    let (mse, samples) = fitted_mse(&trained, inputs, targets, hp)?;
    Ok((
        trained,
        TrainReport {
            mse,
            samples,
            last_state: ReservoirState(x),
        },
    ))
}

fn flush(block: &DMatrix<f64>, cols: usize, gram: &mut DMatrix<f64>) {
    let view = block.columns(0, cols);
    gram.gemm(1.0, &view, &view.transpose(), 1.0);
}

/// Teacher-forced one-step error of a trained readout on the samples that
/// follow the washout.
pub(crate) fn fitted_mse(
    w: &EsnWeights,
    inputs: &TimeSeries,
    targets: &TimeSeries,
    hp: &EsnHyperParams,
) -> Result<(f64, usize)> {
    let w_out = w.w_out.as_ref().ok_or(Error::Untrained)?;
    let n = w.w.dim();
    let l = targets.dim();
    let mut x = vec![0.0; n];
    let mut scratch = vec![0.0; n];
    let mut yhat = vec![0.0; l];
    let mut sse = 0.0;
    let mut count = 0usize;
    for (t, (u, y)) in inputs.rows().zip(targets.rows()).enumerate() {
        update_in_place(w, hp.leak, hp.activation, u, &mut x, &mut scratch);
        if t < hp.washout {
            continue;
        }
        super::readout_into(w_out, u, &x, &mut yhat);
        sse += y.iter().zip(&yhat).map(|(a, b)| (a - b).powi(2)).sum::<f64>();
        count += 1;
    }
    Ok((sse / (count * l) as f64, count))
}
