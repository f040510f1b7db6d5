//! CNN, CPS and MaxEnt wavefunctions in the shared form
//! `ln psi(s) = sum_{s'} C_{s'} m_{s'}(s)`.
//!
//! One-hot layout: the filter `w` is a `K x M` matrix stored row-major, and
//! the window starting at site `i` contributes
//! `sum_{j<K} w[j][label(s_{i+j})] + b` (indices mod N).

use serde::{Deserialize, Serialize};

use crate::motif::{motif_count, Motif};
use crate::spinchain::SpinConfig;
use crate::{Error, Result};

/// Pointwise nonlinearity applied to each window.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum Activation {
    Relu,
    Linear,
}

impl Activation {
    #[inline]
    pub fn apply(self, x: f64) -> f64 {
        match self {
            Activation::Relu => x.max(0.0),
            Activation::Linear => x,
        }
    }

    /// Derivative with the convention `relu'(0) = 0`.
    #[inline]
    pub fn derivative(self, x: f64) -> f64 {
        match self {
            Activation::Relu => {
                if x > 0.0 {
                    1.0
                } else {
                    0.0
                }
            }
            Activation::Linear => 1.0,
        }
    }
}

/// Single-filter, single-layer CNN: filter `w` (K x M), bias `b`, output weight `v`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CnnParams {
    k: usize,
    m: usize,
    w: Vec<f64>,
    pub b: f64,
    pub v: f64,
}

impl CnnParams {
    pub fn new(k: usize, m: usize, w: Vec<f64>, b: f64, v: f64) -> Result<Self> {
        if k == 0 || m < 2 {
            return Err(Error::InvalidArgument(format!("need K >= 1 and M >= 2, got K = {k}, M = {m}")));
        }
        if w.len() != k * m {
            return Err(Error::DimensionMismatch { expected: k * m, actual: w.len() });
        }
        if !(b.is_finite() && v.is_finite() && w.iter().all(|x| x.is_finite())) {
            return Err(Error::InvalidArgument("CNN parameters must be finite".into()));
        }
        Ok(Self { k, m, w, b, v })
    }

    pub fn zeros(k: usize, m: usize) -> Self {
        Self { k, m, w: vec![0.0; k * m], b: 0.0, v: 0.0 }
    }

    pub fn k(&self) -> usize {
        self.k
    }

    pub fn m(&self) -> usize {
        self.m
    }

    /// Row-major filter, `w[j * M + label]`.
    pub fn w(&self) -> &[f64] {
        &self.w
    }

    pub fn w_mut(&mut self) -> &mut [f64] {
        &mut self.w
    }

    #[inline]
    pub fn weight(&self, offset: usize, label: u8) -> f64 {
        self.w[offset * self.m + label as usize]
    }

    /// Number of trainable scalars, `K * M + 2`.
    pub fn num_params(&self) -> usize {
        self.w.len() + 2
    }

    /// Preactivation `w . s' + b` of a motif.
    pub fn motif_preactivation(&self, motif: &Motif) -> f64 {
        motif
            .symbols()
            .iter()
            .enumerate()
            .map(|(j, &l)| self.weight(j, l))
            .sum::<f64>()
            + self.b
    }

    /// Preactivation of the cyclic window starting at `start`.
    #[inline]
    pub fn window_preactivation(&self, sites: &[u8], start: usize) -> f64 {
        let n = sites.len();
        let mut acc = self.b;
        for j in 0..self.k {
            acc += self.weight(j, sites[(start + j) % n]);
        }
        acc
    }

    /// Applies `self -= step * grad`.
    pub fn descend(&mut self, grad: &CnnGradient, step: f64) {
        self.v -= step * grad.v;
        self.b -= step * grad.b;
        for (w, g) in self.w.iter_mut().zip(&grad.w) {
            *w -= step * g;
        }
    }

    /// Filter with the bias spread over its rows, `w + b / K`.
    pub fn effective_filter(&self) -> Vec<f64> {
        let shift = self.b / self.k as f64;
        self.w.iter().map(|w| w + shift).collect()
    }
}

/// Serialized form of a parameter checkpoint.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[allow(non_snake_case)]
pub struct CnnCheckpoint {
    pub N: usize,
    pub M: usize,
    pub K: usize,
    pub v: f64,
    pub b: f64,
    /// Row-major `K x M` filter.
    pub w: Vec<f64>,
}

impl CnnCheckpoint {
    pub fn from_params(n: usize, p: &CnnParams) -> Self {
        Self { N: n, M: p.m, K: p.k, v: p.v, b: p.b, w: p.w.clone() }
    }

    pub fn into_params(self) -> Result<CnnParams> {
        CnnParams::new(self.K, self.M, self.w, self.b, self.v)
    }
}

fn check_params_match(p: &CnnParams, s: &SpinConfig) -> Result<()> {
    if p.m != s.species() {
        return Err(Error::DimensionMismatch { expected: p.m, actual: s.species() });
    }
    if p.k > s.len() {
        return Err(Error::InvalidArgument(format!("kernel K = {} exceeds N = {}", p.k, s.len())));
    }
    Ok(())
}

/// `v * sum_i sigma(w . s_{i:i+K-1} + b)` over all N cyclic windows.
pub fn cnn_logpsi(p: &CnnParams, s: &SpinConfig) -> f64 {
    cnn_logpsi_with(p, s.sites(), Activation::Relu)
}

pub fn cnn_logpsi_with(p: &CnnParams, sites: &[u8], activation: Activation) -> f64 {
    let total: f64 = (0..sites.len())
        .map(|i| activation.apply(p.window_preactivation(sites, i)))
        .sum();
    p.v * total
}

/// Checked variant of [`cnn_logpsi`] that validates the configuration against `p`.
pub fn try_cnn_logpsi(p: &CnnParams, s: &SpinConfig) -> Result<f64> {
    check_params_match(p, s)?;
    Ok(cnn_logpsi(p, s))
}

/// Per-motif coefficients `v * sigma(w . s' + b)` in motif index order.
pub fn cnn_motif_coefficients(p: &CnnParams) -> Vec<f64> {
    (0..motif_count(p.k, p.m))
        .map(|i| p.v * Activation::Relu.apply(p.motif_preactivation(&Motif::from_index(i, p.k, p.m))))
        .collect()
}

/// `sum_{s'} v * sigma(w . s' + b) * m_{s'}(s)`.
pub fn cnn_logpsi_motif_form(p: &CnnParams, counts: &[u32]) -> Result<f64> {
    let expected = motif_count(p.k, p.m);
    if counts.len() != expected {
        return Err(Error::DimensionMismatch { expected, actual: counts.len() });
    }
    Ok(cnn_motif_coefficients(p)
        .iter()
        .zip(counts)
        .map(|(c, &m)| c * m as f64)
        .sum())
}

/// Correlator product state: one log-coefficient per motif.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CpsParams {
    pub k: usize,
    pub m: usize,
    pub coefficients: Vec<f64>,
}

impl CpsParams {
    pub fn new(k: usize, m: usize, coefficients: Vec<f64>) -> Result<Self> {
        let expected = motif_count(k, m);
        if coefficients.len() != expected {
            return Err(Error::DimensionMismatch { expected, actual: coefficients.len() });
        }
        Ok(Self { k, m, coefficients })
    }

    /// The CPS that reproduces a CNN exactly.
    pub fn from_cnn(p: &CnnParams) -> Self {
        Self { k: p.k, m: p.m, coefficients: cnn_motif_coefficients(p) }
    }
}

/// `sum_{s'} C_{s'} m_{s'}(s)`.
pub fn cps_logpsi(c: &CpsParams, counts: &[u32]) -> Result<f64> {
    if counts.len() != c.coefficients.len() {
        return Err(Error::DimensionMismatch { expected: c.coefficients.len(), actual: counts.len() });
    }
    Ok(c.coefficients.iter().zip(counts).map(|(c, &m)| c * m as f64).sum())
}

/// MaxEnt multipliers on a support set of motifs plus the log-normalizer.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MaxEntParams {
    pub k: usize,
    pub m: usize,
    /// Motif indices carrying a multiplier.
    pub support: Vec<usize>,
    pub lambdas: Vec<f64>,
    pub ln_z: f64,
}

impl MaxEntParams {
    pub fn new(k: usize, m: usize, support: Vec<usize>, lambdas: Vec<f64>, ln_z: f64) -> Result<Self> {
        if support.len() != lambdas.len() {
            return Err(Error::DimensionMismatch { expected: support.len(), actual: lambdas.len() });
        }
        let rows = motif_count(k, m);
        if let Some(&bad) = support.iter().find(|&&i| i >= rows) {
            return Err(Error::InvalidArgument(format!("motif index {bad} out of range")));
        }
        Ok(Self { k, m, support, lambdas, ln_z })
    }

    /// Unnormalized exponent `sum lambda_{s'} m_{s'}(s)`.
    pub fn exponent(&self, counts: &[u32]) -> f64 {
        self.support
            .iter()
            .zip(&self.lambdas)
            .map(|(&i, l)| l * counts[i] as f64)
            .sum()
    }

    /// Sets `ln Z` so that `sum_s psi(s)^2 = 1` over the given motif vectors.
    pub fn normalize<'a>(&mut self, all_counts: impl IntoIterator<Item = &'a [u32]>) {
        let exps: Vec<f64> = all_counts.into_iter().map(|c| 2.0 * self.exponent(c)).collect();
        self.ln_z = 0.5 * log_sum_exp(&exps);
    }

    /// Coefficients over all motifs, zero off the support.
    pub fn as_cps(&self) -> CpsParams {
        let mut coefficients = vec![0.0; motif_count(self.k, self.m)];
        for (&i, &l) in self.support.iter().zip(&self.lambdas) {
            coefficients[i] = l;
        }
        CpsParams { k: self.k, m: self.m, coefficients }
    }
}

/// `sum_{support} lambda_{s'} m_{s'}(s) - ln Z`.
pub fn maxent_logpsi(p: &MaxEntParams, counts: &[u32]) -> Result<f64> {
    let expected = motif_count(p.k, p.m);
    if counts.len() != expected {
        return Err(Error::DimensionMismatch { expected, actual: counts.len() });
    }
    Ok(p.exponent(counts) - p.ln_z)
}

pub(crate) fn log_sum_exp(values: &[f64]) -> f64 {
    let max = values.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    if !max.is_finite() {
        return max;
    }
    max + values.iter().map(|x| (x - max).exp()).sum::<f64>().ln()
}

/// `grandsum(w) + 2b` for a K x 2 filter.
pub fn grandsum(p: &CnnParams) -> Result<f64> {
    if p.m != 2 {
        return Err(Error::RequiresTwoSpecies(p.m));
    }
    Ok(p.w.iter().sum::<f64>() + 2.0 * p.b)
}

/// Shifts every filter entry by `-c / (2K)`, `c = grandsum(w) + 2b`,
/// leaving `b` and `v` untouched.
pub fn project_grandsum(p: &CnnParams) -> Result<CnnParams> {
    let c = grandsum(p)?;
    let shift = c / (2 * p.k) as f64;
    let mut out = p.clone();
    for w in &mut out.w {
        *w -= shift;
    }
    Ok(out)
}

/// Gradient of `ln psi` (or of an energy) with respect to `(v, w, b)`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CnnGradient {
    pub v: f64,
    pub w: Vec<f64>,
    pub b: f64,
}

impl CnnGradient {
    pub fn zeros(p: &CnnParams) -> Self {
        Self { v: 0.0, w: vec![0.0; p.w.len()], b: 0.0 }
    }

    /// Flattened as `[v, b, w...]`.
    pub fn to_vec(&self) -> Vec<f64> {
        let mut out = Vec::with_capacity(self.w.len() + 2);
        out.push(self.v);
        out.push(self.b);
        out.extend_from_slice(&self.w);
        out
    }

    pub fn from_slice(flat: &[f64]) -> Self {
        Self { v: flat[0], b: flat[1], w: flat[2..].to_vec() }
    }

    pub fn dot(&self, other: &CnnGradient) -> f64 {
        self.v * other.v
            + self.b * other.b
            + self.w.iter().zip(&other.w).map(|(a, b)| a * b).sum::<f64>()
    }

    pub fn norm_max(&self) -> f64 {
        self.to_vec().iter().fold(0.0f64, |m, x| m.max(x.abs()))
    }
}

/// Log-derivatives `O = d ln psi / d theta` at `s` (ReLU, `relu'(0) = 0`).
pub fn logpsi_gradient(p: &CnnParams, s: &SpinConfig) -> CnnGradient {
    logpsi_gradient_sites(p, s.sites())
}

pub(crate) fn logpsi_gradient_sites(p: &CnnParams, sites: &[u8]) -> CnnGradient {
    let n = sites.len();
    let mut grad = CnnGradient::zeros(p);
    for i in 0..n {
        let pre = p.window_preactivation(sites, i);
        grad.v += Activation::Relu.apply(pre);
        if pre > 0.0 {
            grad.b += p.v;
            for j in 0..p.k {
                grad.w[j * p.m + sites[(i + j) % n] as usize] += p.v;
            }
        }
    }
    grad
}

/// `N * v * grandsum(w + b/K) / M`, the output of the network with a linear
/// activation, which is the same for every zero-magnetization input.
pub fn linear_activation_constancy_check(p: &CnnParams, n: usize) -> f64 {
    let gs: f64 = p.effective_filter().iter().sum();
    n as f64 * p.v * gs / p.m as f64
}
