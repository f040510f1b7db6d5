//! Restarted Lanczos iteration with full reorthogonalization for the lowest
//! eigenpair of a real symmetric operator.

use nalgebra::{DMatrix, SymmetricEigen};

#[derive(Clone, Debug)]
pub struct LanczosOptions {
    /// Krylov dimension per restart cycle.
    pub krylov_dim: usize,
    pub max_restarts: usize,
    /// Stop when `||A x - theta x|| < tolerance` for the unit Ritz vector `x`.
    pub tolerance: f64,
}

impl Default for LanczosOptions {
    fn default() -> Self {
        Self { krylov_dim: 60, max_restarts: 200, tolerance: 1e-11 }
    }
}

#[derive(Clone, Debug)]
pub struct Eigenpair {
    pub value: f64,
    pub vector: Vec<f64>,
    pub residual: f64,
    pub restarts: usize,
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

fn norm(a: &[f64]) -> f64 {
    dot(a, a).sqrt()
}

fn axpy(alpha: f64, x: &[f64], y: &mut [f64]) {
    for (yi, xi) in y.iter_mut().zip(x) {
        *yi += alpha * xi;
    }
}

fn orthogonalize(v: &mut [f64], against: &[Vec<f64>]) {
    // two passes of classical Gram-Schmidt
    for _ in 0..2 {
        for q in against {
            let c = dot(q, v);
            axpy(-c, q, v);
        }
    }
}

/// Lowest eigenpair of the operator `apply(x, y): y = A x` on `dim`-vectors,
/// restricted to the orthogonal complement of `deflate` (orthonormal vectors).
pub fn lowest_eigenpair<F>(
    dim: usize,
    apply: F,
    start: &[f64],
    deflate: &[Vec<f64>],
    options: &LanczosOptions,
) -> Eigenpair
where
    F: Fn(&[f64], &mut [f64]),
{
    let mut x = start.to_vec();
    orthogonalize(&mut x, deflate);
    let nx = norm(&x);
    for xi in &mut x {
        *xi /= nx;
    }
    let krylov = options.krylov_dim.min(dim - deflate.len()).max(1);
    let mut best = Eigenpair { value: f64::NAN, vector: x.clone(), residual: f64::INFINITY, restarts: 0 };
    let mut w = vec![0.0; dim];

    for restart in 0..=options.max_restarts {
        let mut basis: Vec<Vec<f64>> = Vec::with_capacity(krylov);
        let mut alpha = Vec::with_capacity(krylov);
        let mut beta: Vec<f64> = Vec::with_capacity(krylov);
        basis.push(x.clone());
        for j in 0..krylov {
            apply(&basis[j], &mut w);
            orthogonalize(&mut w, deflate);
            let a = dot(&basis[j], &w);
            alpha.push(a);
            orthogonalize(&mut w, &basis);
            let b = norm(&w);
            if j + 1 == krylov || b < 1e-14 {
                break;
            }
            beta.push(b);
            basis.push(w.iter().map(|x| x / b).collect());
        }
        let m = alpha.len();
        let mut t = DMatrix::zeros(m, m);
        for i in 0..m {
            t[(i, i)] = alpha[i];
            if i + 1 < m {
                t[(i, i + 1)] = beta[i];
                t[(i + 1, i)] = beta[i];
            }
        }
        let eig = SymmetricEigen::new(t);
        let idx = eig
            .eigenvalues
            .iter()
            .enumerate()
            .min_by(|a, b| a.1.total_cmp(b.1))
            .map(|(i, _)| i)
            .expect("nonempty Krylov space");
        let y = eig.eigenvectors.column(idx);
        let mut ritz = vec![0.0; dim];
        for (c, q) in y.iter().zip(&basis) {
            axpy(*c, q, &mut ritz);
        }
        orthogonalize(&mut ritz, deflate);
        let nr = norm(&ritz);
        for r in &mut ritz {
            *r /= nr;
        }
        apply(&ritz, &mut w);
        orthogonalize(&mut w, deflate);
        let rq = dot(&ritz, &w);
        axpy(-rq, &ritz, &mut w);
        let residual = norm(&w);
        best = Eigenpair { value: rq, vector: ritz.clone(), residual, restarts: restart };
        if residual < options.tolerance {
            break;
        }
        x = ritz;
    }
    best
}
