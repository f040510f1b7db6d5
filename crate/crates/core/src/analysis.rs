//! Error metrics, motif classes and features, and ordinary least squares.

use nalgebra::{DMatrix, DVector};
use serde::Serialize;

use crate::exact::GroundStateSolution;
use crate::motif::{motif_count, reversed_index, Motif};
use crate::spinchain::label_permutations;
use crate::{Error, Result};

/// Motifs grouped by equal MEV, ordered by descending MEV.
#[derive(Clone, Debug, Serialize)]
pub struct MotifClassTable {
    pub k: usize,
    pub m: usize,
    /// Motif indices per class, ascending within a class.
    pub classes: Vec<Vec<usize>>,
    /// Mean MEV of each class.
    pub values: Vec<f64>,
}

impl MotifClassTable {
    pub fn len(&self) -> usize {
        self.classes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.classes.is_empty()
    }

    pub fn class_of(&self, motif: usize) -> Option<usize> {
        self.classes.iter().position(|c| c.contains(&motif))
    }

    pub fn representative(&self, class: usize) -> usize {
        self.classes[class][0]
    }
}

/// Tolerance for grouping equal MEVs.
pub const MEV_CLASS_TOL: f64 = 1e-9;

/// Groups motifs whose MEVs agree within [`MEV_CLASS_TOL`] of the class's
/// largest member, scanning in descending order.
pub fn mev_class_ordering(truth: &[f64], k: usize, m: usize) -> Result<MotifClassTable> {
    let expected = motif_count(k, m);
    if truth.len() != expected {
        return Err(Error::DimensionMismatch { expected, actual: truth.len() });
    }
    let mut order: Vec<usize> = (0..truth.len()).collect();
    order.sort_by(|&a, &b| truth[b].total_cmp(&truth[a]).then(a.cmp(&b)));
    let mut classes: Vec<Vec<usize>> = Vec::new();
    let mut head = f64::NAN;
    for idx in order {
        match classes.last_mut() {
            Some(class) if (head - truth[idx]).abs() < MEV_CLASS_TOL => class.push(idx),
            _ => {
                head = truth[idx];
                classes.push(vec![idx]);
            }
        }
    }
    for c in &mut classes {
        c.sort_unstable();
    }
    let values = classes
        .iter()
        .map(|c| c.iter().map(|&i| truth[i]).sum::<f64>() / c.len() as f64)
        .collect();
    Ok(MotifClassTable { k, m, classes, values })
}

/// Orbits of motifs under label permutations and reversal about the window
/// center, in order of their smallest member.
pub fn symmetry_motif_classes(k: usize, m: usize) -> Vec<Vec<usize>> {
    let count = motif_count(k, m);
    let perms = label_permutations(m);
    let mut class_of = vec![usize::MAX; count];
    let mut classes = Vec::new();
    for start in 0..count {
        if class_of[start] != usize::MAX {
            continue;
        }
        let id = classes.len();
        let base = Motif::from_index(start, k, m);
        let mut members = Vec::new();
        for perm in &perms {
            let relabeled: Vec<u8> = base.symbols().iter().map(|&l| perm[l as usize]).collect();
            let idx = Motif::new(relabeled, m).expect("labels stay in range").index();
            for image in [idx, reversed_index(idx, k, m)] {
                if class_of[image] == usize::MAX {
                    class_of[image] = id;
                    members.push(image);
                }
            }
        }
        members.sort_unstable();
        classes.push(members);
    }
    classes
}

/// Energy and per-class MEV errors of a trained model.
#[derive(Clone, Debug, Serialize)]
pub struct ErrorReport {
    /// `E_hat - E0`.
    pub delta_e: f64,
    /// `(E_hat - E0) / gap`.
    pub relative_delta_e: f64,
    pub gap: f64,
    /// Mean relative MEV error over the motifs of each class, classes in
    /// descending order of the true MEV.
    pub class_errors: Vec<f64>,
}

/// Compares a model's energy and MEVs (probability convention, all `M^K`
/// motifs) against the exact solution. The gap is the `(Emax - E0) / size`
/// estimate.
pub fn error_report(
    energy: f64,
    gs: &GroundStateSolution,
    model_mev: &[f64],
    truth_mev: &[f64],
    k: usize,
) -> Result<ErrorReport> {
    if model_mev.len() != truth_mev.len() {
        return Err(Error::DimensionMismatch { expected: truth_mev.len(), actual: model_mev.len() });
    }
    let classes = mev_class_ordering(truth_mev, k, gs.m())?;
    let gap = gs.gap_estimate();
    let delta_e = energy - gs.e0;
    let mut class_errors = Vec::with_capacity(classes.len());
    for (c, members) in classes.classes.iter().enumerate() {
        let mut acc = 0.0;
        for &i in members {
            if truth_mev[i] == 0.0 {
                return Err(Error::ZeroTruth(c));
            }
            acc += (model_mev[i] - truth_mev[i]) / truth_mev[i];
        }
        class_errors.push(acc / members.len() as f64);
    }
    Ok(ErrorReport { delta_e, relative_delta_e: delta_e / gap, gap, class_errors })
}

/// Physical features of a two-label motif.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
pub struct MotifFeatures {
    /// Adjacent equal pairs inside the window (not wrapping).
    pub n_like: usize,
    /// Hamming distance to the nearer alternating motif.
    pub d_neel: usize,
}

pub fn motif_features(motif: &Motif) -> Result<MotifFeatures> {
    if motif.species() != 2 {
        return Err(Error::RequiresTwoSpecies(motif.species()));
    }
    let s = motif.symbols();
    let n_like = s.windows(2).filter(|w| w[0] == w[1]).count();
    let d0 = s.iter().enumerate().filter(|&(i, &l)| l as usize != i % 2).count();
    Ok(MotifFeatures { n_like, d_neel: d0.min(s.len() - d0) })
}

/// Least-squares fit with its diagnostics.
#[derive(Clone, Debug, Serialize)]
pub struct RegressionResult {
    pub names: Vec<String>,
    pub coefficients: Vec<f64>,
    pub std_errors: Vec<f64>,
    pub t_values: Vec<f64>,
    pub stars: Vec<&'static str>,
    pub r_squared: f64,
    pub observations: usize,
    /// Largest over smallest singular value of the design matrix.
    pub condition_number: f64,
}

impl RegressionResult {
    pub fn coefficient(&self, name: &str) -> Option<f64> {
        self.names.iter().position(|n| n == name).map(|i| self.coefficients[i])
    }

    /// Text table with one row per coefficient: name, estimate, standard error, stars.
    pub fn to_table(&self) -> String {
        let width = self.names.iter().map(String::len).max().unwrap_or(0).max(9);
        let mut out = String::new();
        for i in 0..self.names.len() {
            out.push_str(&format!(
                "{:<width$}  {:>12.6} ({:.6}){}\n",
                self.names[i], self.coefficients[i], self.std_errors[i], self.stars[i]
            ));
        }
        out.push_str(&format!("{:<width$}  {:>12}\n", "N", self.observations));
        out.push_str(&format!("{:<width$}  {:>12.4}\n", "R2", self.r_squared));
        out.push_str(&format!("{:<width$}  {:>12.4}\n", "Cond. No.", self.condition_number));
        out
    }
}

/// Two-sided normal critical values at 95%, 99% and 99.9%.
const Z_THRESHOLDS: [(f64, &str); 3] = [(3.290527, "***"), (2.575829, "**"), (1.959964, "*")];

pub fn significance_stars(t: f64) -> &'static str {
    Z_THRESHOLDS.iter().find(|(z, _)| t.abs() >= *z).map(|(_, s)| *s).unwrap_or("")
}

/// Ordinary least squares of `y` on the rows of `design` (the caller adds
/// any intercept column). Solved through the SVD of the design matrix.
pub fn ols_regress(names: &[&str], design: &[Vec<f64>], y: &[f64]) -> Result<RegressionResult> {
    let n = design.len();
    if n != y.len() {
        return Err(Error::DimensionMismatch { expected: n, actual: y.len() });
    }
    let p = names.len();
    if p == 0 || n <= p {
        return Err(Error::InvalidArgument(format!("need more rows than columns, got {n} x {p}")));
    }
    if let Some(row) = design.iter().find(|r| r.len() != p) {
        return Err(Error::DimensionMismatch { expected: p, actual: row.len() });
    }
    if design.iter().flatten().chain(y).any(|v| !v.is_finite()) {
        return Err(Error::InvalidArgument("design and targets must be finite".into()));
    }
    let x = DMatrix::from_fn(n, p, |r, c| design[r][c]);
    let yv = DVector::from_column_slice(y);
    let svd = x.clone().svd(true, true);
    let smax = svd.singular_values.max();
    let smin = svd.singular_values.min();
    let condition_number = if smin > 0.0 { smax / smin } else { f64::INFINITY };
    if !(smin > smax * 1e-12) {
        return Err(Error::RankDeficient { condition_number });
    }
    let u = svd.u.as_ref().expect("requested U");
    let vt = svd.v_t.as_ref().expect("requested V^T");
    let uty = u.transpose() * &yv;
    let scaled = DVector::from_fn(p, |i, _| uty[i] / svd.singular_values[i]);
    let beta = vt.transpose() * scaled;
    let resid = &yv - &x * &beta;
    let rss = resid.norm_squared();
    let mean = y.iter().sum::<f64>() / n as f64;
    let tss: f64 = y.iter().map(|v| (v - mean).powi(2)).sum();
    let r_squared = if tss > 0.0 { (1.0 - rss / tss).clamp(0.0, 1.0) } else { 1.0 };
    let sigma2 = rss / (n - p) as f64;
    // (X^T X)^{-1} = V diag(1/s^2) V^T
    let std_errors: Vec<f64> = (0..p)
        .map(|j| {
            let var: f64 = (0..p).map(|i| vt[(i, j)].powi(2) / svd.singular_values[i].powi(2)).sum();
            (sigma2 * var).sqrt()
        })
        .collect();
    let coefficients: Vec<f64> = beta.iter().copied().collect();
    let t_values: Vec<f64> = coefficients.iter().zip(&std_errors).map(|(b, s)| if *s > 0.0 { b / s } else { f64::INFINITY * b.signum() }).collect();
    let stars = t_values.iter().map(|&t| significance_stars(t)).collect();
    Ok(RegressionResult {
        names: names.iter().map(|s| s.to_string()).collect(),
        coefficients,
        std_errors,
        t_values,
        stars,
        r_squared,
        observations: n,
        condition_number,
    })
}

/// Design rows `[1, d_neel, n_like, d_neel * n_like]` for every two-label motif of size `K`.
pub fn feature_design(k: usize) -> Vec<Vec<f64>> {
    (0..motif_count(k, 2))
        .map(|i| {
            let f = motif_features(&Motif::from_index(i, k, 2)).expect("two labels");
            let (d, l) = (f.d_neel as f64, f.n_like as f64);
            vec![1.0, d, l, d * l]
        })
        .collect()
}

pub const FEATURE_NAMES: [&str; 4] = ["Intercept", "d_Neel", "n_like", "d_Neel*n_like"];

/// Threshold at or above which an observation's `delta_E` marks it an outlier.
pub const OUTLIER_THRESHOLD: f64 = 6.0;

#[derive(Clone, Debug)]
pub struct Filtered<T> {
    pub kept: Vec<T>,
    pub removed: usize,
}

/// Drops observations with `delta_E >= 6`.
pub fn outlier_filter<T: Clone>(observations: &[T], delta_e: impl Fn(&T) -> f64) -> Filtered<T> {
    let kept: Vec<T> = observations.iter().filter(|o| delta_e(o) < OUTLIER_THRESHOLD).cloned().collect();
    Filtered { removed: observations.len() - kept.len(), kept }
}
