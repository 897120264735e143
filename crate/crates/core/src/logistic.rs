//! Z-scoring and L2-regularized binary logistic regression.

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::optim::{minimize, LbfgsOptions};

/// Per-column standardization with train-set statistics (population std).
/// Columns with zero variance keep std 1 so they map to 0.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Scaler {
    pub mean: Vec<f64>,
    pub std: Vec<f64>,
}

impl Scaler {
    pub fn fit(x: &DMatrix<f64>) -> Self {
        let n = x.nrows().max(1) as f64;
        let mut mean = Vec::with_capacity(x.ncols());
        let mut std = Vec::with_capacity(x.ncols());
        for col in x.column_iter() {
            let m = col.sum() / n;
            let var = col.iter().map(|v| (v - m) * (v - m)).sum::<f64>() / n;
            let s = var.sqrt();
            mean.push(m);
            std.push(if s > 1e-12 * m.abs().max(1.0) { s } else { 1.0 });
        }
        Self { mean, std }
    }

    pub fn transform(&self, x: &DMatrix<f64>) -> DMatrix<f64> {
        DMatrix::from_fn(x.nrows(), x.ncols(), |r, c| {
            (x[(r, c)] - self.mean[c]) / self.std[c]
        })
    }

    pub fn transform_row(&self, row: &[f64]) -> Vec<f64> {
        row.iter()
            .zip(self.mean.iter().zip(&self.std))
            .map(|(v, (m, s))| (v - m) / s)
            .collect()
    }
}

#[derive(Debug, Clone, Copy)]
pub struct LogisticOptions {
    /// Inverse regularization strength.
    pub c: f64,
    pub max_iter: usize,
    pub grad_tol: f64,
}

impl Default for LogisticOptions {
    fn default() -> Self {
        Self {
            c: 1.0,
            max_iter: 1000,
            grad_tol: 1e-4,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LogisticModel {
    pub w: Vec<f64>,
    pub b: f64,
    pub iterations: usize,
    pub converged: bool,
}

#[inline]
pub fn sigmoid(z: f64) -> f64 {
    if z >= 0.0 {
        1.0 / (1.0 + (-z).exp())
    } else {
        let e = z.exp();
        e / (1.0 + e)
    }
}

/// `ln(1 + e^z)` without overflow.
#[inline]
pub fn softplus(z: f64) -> f64 {
    z.max(0.0) + (-z.abs()).exp().ln_1p()
}

impl LogisticModel {
    pub fn decision(&self, x: &[f64]) -> f64 {
        self.w.iter().zip(x).map(|(w, v)| w * v).sum::<f64>() + self.b
    }

    pub fn predict_proba(&self, x: &[f64]) -> f64 {
        sigmoid(self.decision(x))
    }
}

/// Minimizes `||w||^2 / (2C) + sum_i ln(1 + exp(-y_i (w.x_i + b)))` with
/// `y_i` in {-1, +1}; the intercept is not penalized.
pub fn fit_logistic(x: &DMatrix<f64>, y: &[bool], opts: LogisticOptions) -> Result<LogisticModel> {
    if x.nrows() != y.len() {
        return Err(Error::Shape(format!("{} rows but {} labels", x.nrows(), y.len())));
    }
    let n_pos = y.iter().filter(|&&v| v).count();
    if n_pos == 0 || n_pos == y.len() {
        return Err(Error::DegenerateLabels(format!(
            "{n_pos} positives out of {}",
            y.len()
        )));
    }
    let d = x.ncols();
    let signs = DVector::from_iterator(y.len(), y.iter().map(|&v| if v { 1.0 } else { -1.0 }));
    let inv_c = 1.0 / opts.c;
    let xt = x.transpose();
    let fg = |theta: &[f64], grad: &mut [f64]| -> f64 {
        let w = DVector::from_column_slice(&theta[..d]);
        let b = theta[d];
        let z = x * &w;
        let mut f = 0.5 * inv_c * w.norm_squared();
        // coef_i = -y_i * sigmoid(-m_i)
        let mut coef = DVector::zeros(z.len());
        for i in 0..z.len() {
            let m = signs[i] * (z[i] + b);
            f += softplus(-m);
            coef[i] = -signs[i] * sigmoid(-m);
        }
        let gw = &xt * &coef + &w * inv_c;
        grad[..d].copy_from_slice(gw.as_slice());
        grad[d] = coef.sum();
        f
    };
    let res = minimize(
        vec![0.0; d + 1],
        fg,
        LbfgsOptions {
            max_iter: opts.max_iter,
            grad_tol: opts.grad_tol,
            memory: 10,
        },
    );
    Ok(LogisticModel {
        w: res.x[..d].to_vec(),
        b: res.x[d],
        iterations: res.iterations,
        converged: res.converged,
    })
}
