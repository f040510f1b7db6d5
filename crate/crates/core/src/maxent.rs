//! Fitting MaxEnt multipliers to target motif expectation values.
//!
//! With `P(s) = psi(s)^2 ∝ exp(2 sum_{s'} lambda_{s'} m_{s'}(s))` and
//! `theta = 2 lambda`, the dual objective
//! `F(theta) = ln sum_s exp(theta . m(s)) - theta . t`
//! is convex with gradient `E_P[m] - t` and Hessian `Cov_P(m)`.
//! Linear relations among the counts (for example `m_00 + m_01 = N/2` at
//! K = 2) make the Hessian singular, so Newton steps use its pseudo-inverse.

use nalgebra::{DMatrix, DVector};

use crate::ansatz::{log_sum_exp, MaxEntParams};
use crate::motif::{motif_count, motif_vector};
use crate::spinchain::Basis;
use crate::{Error, Result};

/// Stopping rules for [`fit_maxent_with`].
#[derive(Clone, Debug)]
pub struct MaxEntOptions {
    /// Maximum Newton iterations.
    pub max_iter: usize,
    /// Target on the max-norm residual `|E_P[m] - t|` (count convention).
    pub tolerance: f64,
}

impl Default for MaxEntOptions {
    fn default() -> Self {
        Self { max_iter: 50, tolerance: 1e-8 }
    }
}

/// Result of a fit, with convergence diagnostics.
#[derive(Clone, Debug)]
pub struct MaxEntFit {
    pub params: MaxEntParams,
    pub iterations: usize,
    /// Max-norm residual of the fitted expectations.
    pub residual: f64,
    /// Model expectations `E_P[m]` on the support, count convention.
    pub expectations: Vec<f64>,
}

struct Moments {
    objective: f64,
    mean: DVector<f64>,
    probabilities: Vec<f64>,
}

fn moments(features: &DMatrix<f64>, theta: &DVector<f64>, targets: &DVector<f64>) -> Moments {
    let exps: Vec<f64> = (0..features.nrows()).map(|r| features.row(r).dot(&theta.transpose())).collect();
    let lse = log_sum_exp(&exps);
    let probabilities: Vec<f64> = exps.iter().map(|e| (e - lse).exp()).collect();
    let mut mean = DVector::zeros(features.ncols());
    for (r, &p) in probabilities.iter().enumerate() {
        mean.axpy(p, &features.row(r).transpose(), 1.0);
    }
    Moments { objective: lse - theta.dot(targets), mean, probabilities }
}

fn covariance(features: &DMatrix<f64>, m: &Moments) -> DMatrix<f64> {
    let d = features.ncols();
    let mut cov = DMatrix::zeros(d, d);
    for (r, &p) in m.probabilities.iter().enumerate() {
        let centered = features.row(r).transpose() - &m.mean;
        cov.ger(p, &centered, &centered, 1.0);
    }
    cov
}

fn pseudo_inverse_solve(a: DMatrix<f64>, rhs: &DVector<f64>) -> DVector<f64> {
    let eig = a.symmetric_eigen();
    let scale = eig.eigenvalues.iter().fold(0.0f64, |m, x| m.max(x.abs()));
    let cutoff = 1e-12 * scale.max(f64::MIN_POSITIVE);
    let projected = eig.eigenvectors.transpose() * rhs;
    let mut scaled = projected;
    for (i, x) in scaled.iter_mut().enumerate() {
        let l = eig.eigenvalues[i];
        *x = if l > cutoff { *x / l } else { 0.0 };
    }
    &eig.eigenvectors * scaled
}

/// Fits multipliers on `support` so the model reproduces `targets`
/// (count convention, `N x probability`) with default options.
pub fn fit_maxent(basis: &Basis, k: usize, support: &[usize], targets: &[f64]) -> Result<MaxEntFit> {
    fit_maxent_with(basis, k, support, targets, &MaxEntOptions::default())
}

pub fn fit_maxent_with(
    basis: &Basis,
    k: usize,
    support: &[usize],
    targets: &[f64],
    options: &MaxEntOptions,
) -> Result<MaxEntFit> {
    if support.len() != targets.len() {
        return Err(Error::DimensionMismatch { expected: support.len(), actual: targets.len() });
    }
    if support.is_empty() {
        return Err(Error::InvalidArgument("empty MaxEnt support".into()));
    }
    let rows = motif_count(k, basis.m());
    if let Some(&bad) = support.iter().find(|&&i| i >= rows) {
        return Err(Error::InvalidArgument(format!("motif index {bad} out of range")));
    }
    let counts: Vec<Vec<u32>> = basis.iter().map(|s| motif_vector(s, k)).collect::<Result<_>>()?;
    let features = DMatrix::from_fn(basis.len(), support.len(), |r, c| counts[r][support[c]] as f64);
    let t = DVector::from_column_slice(targets);

    let mut theta = DVector::zeros(support.len());
    let mut current = moments(&features, &theta, &t);
    let mut residual = (&current.mean - &t).amax();
    let mut iterations = 0;
    while !(residual < options.tolerance) && iterations < options.max_iter {
        iterations += 1;
        let grad = &current.mean - &t;
        let step = pseudo_inverse_solve(covariance(&features, &current), &grad);
        let mut alpha = 1.0;
        loop {
            let trial_theta = &theta - alpha * &step;
            let trial = moments(&features, &trial_theta, &t);
            let trial_residual = (&trial.mean - &t).amax();
            let finite = trial.objective.is_finite() && trial_residual.is_finite();
            let slack = 1e-12 * current.objective.abs().max(1.0);
            if finite && trial.objective <= current.objective + slack {
                theta = trial_theta;
                current = trial;
                residual = trial_residual;
                break;
            }
            if alpha < 1e-10 {
                break;
            }
            alpha *= 0.5;
        }
    }
    if !(residual < options.tolerance) {
        return Err(Error::MaxEntNotConverged { iterations, residual });
    }

    let lambdas: Vec<f64> = theta.iter().map(|x| 0.5 * x).collect();
    let mut params = MaxEntParams::new(k, basis.m(), support.to_vec(), lambdas, 0.0)?;
    params.normalize(counts.iter().map(Vec::as_slice));
    Ok(MaxEntFit { params, iterations, residual, expectations: current.mean.iter().copied().collect() })
}

/// Collapses multipliers on all four K = 2 motifs (`00, 01, 10, 11`) onto the
/// independent pair `(00, 01)`, using `m_00 = m_11` and `m_01 = m_10` on
/// the zero-magnetization sector.
pub fn reduce_pair_multipliers(full: [f64; 4]) -> [f64; 2] {
    [full[0] + full[3], full[1] + full[2]]
}
