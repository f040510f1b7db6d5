//! Independent oracles shared by the integration tests. Nothing here calls
//! into the library's basis, Hamiltonian or symmetry code.
#![allow(dead_code)]

use nalgebra::{DMatrix, SymmetricEigen};

/// Two-label states of `n` sites with `n/2` ones, as bit strings with site 0
/// in the most significant position, ascending (= lexicographic order).
pub fn bit_basis(n: usize) -> Vec<u32> {
    (0u32..1 << n).filter(|c| c.count_ones() as usize == n / 2).collect()
}

pub fn bits_to_sites(code: u32, n: usize) -> Vec<u8> {
    (0..n).map(|i| ((code >> (n - 1 - i)) & 1) as u8).collect()
}

pub fn sites_to_bits(sites: &[u8]) -> u32 {
    sites.iter().fold(0, |acc, &s| (acc << 1) | s as u32)
}

/// Dense `sum_i P_{i,i+1}` on the periodic chain; with `gauge`, conjugated by
/// `(-1)^(ones on even sites)`.
pub fn dense_hamiltonian(n: usize, gauge: bool) -> DMatrix<f64> {
    let states = bit_basis(n);
    let index = |c: u32| states.binary_search(&c).unwrap();
    let sign = |c: u32| {
        let ones = (0..n).step_by(2).filter(|&i| (c >> (n - 1 - i)) & 1 == 1).count();
        if ones % 2 == 0 { 1.0 } else { -1.0 }
    };
    let mut h = DMatrix::zeros(states.len(), states.len());
    for (col, &c) in states.iter().enumerate() {
        for i in 0..n {
            let j = (i + 1) % n;
            let (bi, bj) = (n - 1 - i, n - 1 - j);
            let (a, b) = ((c >> bi) & 1, (c >> bj) & 1);
            if a == b {
                h[(col, col)] += 1.0;
            } else {
                let t = c ^ (1 << bi) ^ (1 << bj);
                let amp = if gauge { sign(c) * sign(t) } else { 1.0 };
                h[(index(t), col)] += amp;
            }
        }
    }
    h
}

/// Lowest eigenvalue and its eigenvector from a dense decomposition.
pub fn dense_ground(n: usize, gauge: bool) -> (f64, Vec<f64>) {
    let eig = SymmetricEigen::new(dense_hamiltonian(n, gauge));
    let (i, e0) = eig
        .eigenvalues
        .iter()
        .copied()
        .enumerate()
        .min_by(|a, b| a.1.total_cmp(&b.1))
        .unwrap();
    (e0, eig.eigenvectors.column(i).iter().copied().collect())
}

fn permutations(m: usize) -> Vec<Vec<u8>> {
    if m == 0 {
        return vec![vec![]];
    }
    let mut out = Vec::new();
    for p in permutations(m - 1) {
        for pos in 0..=p.len() {
            let mut q = p.clone();
            q.insert(pos, (m - 1) as u8);
            out.push(q);
        }
    }
    out
}

/// Every image of `sites` under translations, reversal and label permutations.
pub fn orbit(sites: &[u8], m: usize) -> Vec<Vec<u8>> {
    let n = sites.len();
    let mut out = Vec::new();
    for perm in permutations(m) {
        let relabeled: Vec<u8> = sites.iter().map(|&s| perm[s as usize]).collect();
        for reflect in [false, true] {
            let base: Vec<u8> = if reflect { relabeled.iter().rev().copied().collect() } else { relabeled.clone() };
            for shift in 0..n {
                out.push((0..n).map(|i| base[(i + shift) % n]).collect());
            }
        }
    }
    out.sort();
    out.dedup();
    out
}

/// Lexicographically smallest orbit member.
pub fn canonical(sites: &[u8], m: usize) -> Vec<u8> {
    orbit(sites, m).into_iter().next().unwrap()
}

/// Number of orbits among two-label balanced states of `n` sites.
pub fn orbit_count(n: usize) -> usize {
    let mut seen: Vec<Vec<u8>> = bit_basis(n).iter().map(|&c| canonical(&bits_to_sites(c, n), 2)).collect();
    seen.sort();
    seen.dedup();
    seen.len()
}

/// Cyclic window counts by direct scan, keyed by the window's label string.
pub fn window_counts(sites: &[u8], k: usize) -> std::collections::BTreeMap<Vec<u8>, u32> {
    let n = sites.len();
    let mut counts = std::collections::BTreeMap::new();
    for i in 0..n {
        let w: Vec<u8> = (0..k).map(|j| sites[(i + j) % n]).collect();
        *counts.entry(w).or_insert(0) += 1;
    }
    counts
}

/// Numerical rank from singular values above `1e-8` of the largest.
pub fn svd_rank(rows: &[Vec<f64>]) -> usize {
    let m = DMatrix::from_fn(rows.len(), rows[0].len(), |r, c| rows[r][c]);
    let sv = m.singular_values();
    let max = sv.max();
    sv.iter().filter(|&&s| s > 1e-8 * max).count()
}

/// OLS coefficients and standard errors from the normal equations.
pub fn normal_equations(x: &[Vec<f64>], y: &[f64]) -> (Vec<f64>, Vec<f64>) {
    let n = x.len();
    let p = x[0].len();
    let xm = DMatrix::from_fn(n, p, |r, c| x[r][c]);
    let ym = nalgebra::DVector::from_column_slice(y);
    let xtx_inv = (xm.transpose() * &xm).try_inverse().unwrap();
    let beta = &xtx_inv * xm.transpose() * &ym;
    let resid = &ym - &xm * &beta;
    let s2 = resid.norm_squared() / (n - p) as f64;
    let se = (0..p).map(|i| (s2 * xtx_inv[(i, i)]).sqrt()).collect();
    (beta.iter().copied().collect(), se)
}
