//! Cyclic K-motif counting and the motif count matrix.
//!
//! Motifs are indexed lexicographically: the motif with symbols
//! `(a_0, ..., a_{K-1})` has index `sum_j a_j * M^(K-1-j)`.

use num_bigint::BigInt;
use num_rational::BigRational;
use serde::Serialize;

use crate::rank;
use crate::spinchain::{
    partition_classes, related_by_symmetry, Basis, EquivalenceClassPartition, SpinConfig,
};
use crate::{Error, Result};

/// Upper bound on `M^K * |basis|` entries held by a count matrix.
pub const DEFAULT_MATRIX_CAP: usize = 1 << 28;

/// A K-substring of species labels.
#[derive(Clone, Debug, PartialEq, Eq, Hash)]
pub struct Motif {
    symbols: Vec<u8>,
    species: usize,
}

impl Motif {
    pub fn new(symbols: Vec<u8>, species: usize) -> Result<Self> {
        if symbols.is_empty() {
            return Err(Error::InvalidArgument("a motif needs K >= 1".into()));
        }
        if let Some(&bad) = symbols.iter().find(|&&s| s as usize >= species) {
            return Err(Error::InvalidArgument(format!("label {bad} out of range for M = {species}")));
        }
        Ok(Self { symbols, species })
    }

    pub fn from_index(index: usize, k: usize, species: usize) -> Self {
        let mut symbols = vec![0u8; k];
        let mut x = index;
        for slot in symbols.iter_mut().rev() {
            *slot = (x % species) as u8;
            x /= species;
        }
        Self { symbols, species }
    }

    pub fn index(&self) -> usize {
        self.symbols
            .iter()
            .fold(0usize, |acc, &s| acc * self.species + s as usize)
    }

    pub fn symbols(&self) -> &[u8] {
        &self.symbols
    }

    pub fn k(&self) -> usize {
        self.symbols.len()
    }

    pub fn species(&self) -> usize {
        self.species
    }

    /// Label string such as "0101".
    pub fn label(&self) -> String {
        self.symbols.iter().map(|s| char::from(b'0' + s)).collect()
    }
}

/// Number of motifs, `M^K`.
pub fn motif_count(k: usize, m: usize) -> usize {
    m.pow(k as u32)
}

pub fn motif_label(index: usize, k: usize, m: usize) -> String {
    Motif::from_index(index, k, m).label()
}

/// Index of the label-swapped motif (M = 2).
pub fn conjugate_index(index: usize, k: usize) -> usize {
    index ^ ((1usize << k) - 1)
}

/// Index of the motif read right to left (reflection about the window center).
pub fn reversed_index(index: usize, k: usize, m: usize) -> usize {
    let motif = Motif::from_index(index, k, m);
    let mut symbols = motif.symbols;
    symbols.reverse();
    Motif { symbols, species: m }.index()
}

/// Motif index of the cyclic window of length `k` starting at `start`.
pub(crate) fn window_index(sites: &[u8], start: usize, k: usize, m: usize) -> usize {
    let n = sites.len();
    (0..k).fold(0usize, |acc, j| acc * m + sites[(start + j) % n] as usize)
}

/// Occurrence counts of every motif over the `N` cyclic windows of `s`.
pub fn motif_vector(s: &SpinConfig, k: usize) -> Result<Vec<u32>> {
    let n = s.len();
    if k == 0 || k > n {
        return Err(Error::InvalidArgument(format!("kernel size K = {k} must lie in 1..={n}")));
    }
    let m = s.species();
    let mut counts = vec![0u32; motif_count(k, m)];
    for start in 0..n {
        counts[window_index(s.sites(), start, k, m)] += 1;
    }
    Ok(counts)
}

/// Motif-by-state occurrence counts. Rows follow motif order, columns follow
/// basis order.
#[derive(Clone, Debug, Serialize)]
pub struct MotifCountMatrix {
    n: usize,
    m: usize,
    k: usize,
    rows: usize,
    cols: usize,
    entries: Vec<u32>,
}

impl MotifCountMatrix {
    pub fn n(&self) -> usize {
        self.n
    }

    pub fn m(&self) -> usize {
        self.m
    }

    pub fn k(&self) -> usize {
        self.k
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    pub fn entry(&self, motif: usize, state: usize) -> u32 {
        self.entries[motif * self.cols + state]
    }

    pub fn row(&self, motif: usize) -> &[u32] {
        &self.entries[motif * self.cols..(motif + 1) * self.cols]
    }

    pub fn column(&self, state: usize) -> Vec<u32> {
        (0..self.rows).map(|r| self.entry(r, state)).collect()
    }

    /// Rows as signed integers, optionally restricted to a subset of motifs.
    pub fn integer_rows(&self, subset: Option<&[usize]>) -> Vec<Vec<i64>> {
        let pick = |r: usize| self.row(r).iter().map(|&x| x as i64).collect();
        match subset {
            Some(rows) => rows.iter().map(|&r| pick(r)).collect(),
            None => (0..self.rows).map(pick).collect(),
        }
    }
}

pub fn motif_count_matrix(basis: &Basis, k: usize) -> Result<MotifCountMatrix> {
    motif_count_matrix_with_cap(basis, k, DEFAULT_MATRIX_CAP)
}

pub fn motif_count_matrix_with_cap(basis: &Basis, k: usize, cap: usize) -> Result<MotifCountMatrix> {
    let (n, m) = (basis.n(), basis.m());
    if k == 0 || k > n {
        return Err(Error::InvalidArgument(format!("kernel size K = {k} must lie in 1..={n}")));
    }
    let rows = motif_count(k, m);
    let cols = basis.len();
    if rows.saturating_mul(cols) > cap {
        return Err(Error::InvalidArgument(format!(
            "motif count matrix {rows} x {cols} exceeds the cap of {cap} entries"
        )));
    }
    let mut entries = vec![0u32; rows * cols];
    for (j, state) in basis.iter().enumerate() {
        for start in 0..n {
            entries[window_index(state.sites(), start, k, m) * cols + j] += 1;
        }
    }
    Ok(MotifCountMatrix { n, m, k, rows, cols, entries })
}

/// Exact rank of the count matrix over the rationals.
pub fn integer_rank(matrix: &MotifCountMatrix) -> usize {
    rank::integer_rank(&matrix.integer_rows(None))
}

/// Rank table and the smallest kernel size whose rank reaches the orbit count.
#[derive(Clone, Debug, Serialize)]
pub struct CriticalKernel {
    pub n: usize,
    pub m: usize,
    pub class_count: usize,
    /// `(K, rank)` for every scanned K, ascending.
    pub ranks: Vec<(usize, usize)>,
    pub k_star: usize,
}

pub fn critical_kernel_size(n: usize, m: usize) -> Result<CriticalKernel> {
    let basis = Basis::enumerate(n, m)?;
    let partition = partition_classes(&basis);
    critical_kernel_size_for(&basis, &partition)
}

pub fn critical_kernel_size_for(
    basis: &Basis,
    partition: &EquivalenceClassPartition,
) -> Result<CriticalKernel> {
    let class_count = partition.len();
    let mut ranks = Vec::new();
    for k in 1..=basis.n() {
        let r = integer_rank(&motif_count_matrix(basis, k)?);
        ranks.push((k, r));
        if r >= class_count {
            return Ok(CriticalKernel {
                n: basis.n(),
                m: basis.m(),
                class_count,
                ranks,
                k_star: k,
            });
        }
    }
    // At K = N the columns separate translation orbits, so this is unreachable.
    Err(Error::InvalidArgument(format!(
        "no kernel size reaches {class_count} classes at N = {}",
        basis.n()
    )))
}

/// Two zero-magnetization strings `A x A y A z` and `A y A x A z` with equal
/// K-motif vectors that are not related by any symmetry.
///
/// `A` is the alternating string `0 1 2 ... ` of length `K - 1`; the
/// separators are the lexicographically first choice (by lengths, then by
/// content) that restores equal label counts and yields unrelated strings.
pub fn ambiguous_pair(n: usize, m: usize, k: usize) -> Result<(SpinConfig, SpinConfig)> {
    if m < 2 || !n.is_multiple_of(m) {
        return Err(Error::InvalidSize(format!("M = {m} must divide N = {n}")));
    }
    if k == 0 || 3 * k >= n {
        return Err(Error::InvalidArgument(format!("need 1 <= K < N/3, got K = {k}, N = {n}")));
    }
    let a: Vec<u8> = (0..k - 1).map(|i| (i % m) as u8).collect();
    let rest = n - 3 * a.len();
    let per = n / m;
    let mut used = vec![0usize; m];
    for &l in &a {
        used[l as usize] += 3;
    }
    if used.iter().any(|&c| c > per) {
        return Err(Error::InvalidArgument("prefix A already exceeds the label budget".into()));
    }
    let needed: Vec<usize> = used.iter().map(|&c| per - c).collect();

    for lx in 1..rest - 1 {
        for ly in 1..rest - lx {
            let mut found = None;
            for_each_filling(rest, m, &needed, &mut |sep| {
                let (x, tail) = sep.split_at(lx);
                let (y, z) = tail.split_at(ly);
                if x == y {
                    return false;
                }
                let first = assemble(&a, x, y, z, m);
                let second = assemble(&a, y, x, z, m);
                if !related_by_symmetry(&first, &second) {
                    found = Some((first, second));
                    return true;
                }
                false
            });
            if let Some(pair) = found {
                debug_assert_eq!(motif_vector(&pair.0, k).ok(), motif_vector(&pair.1, k).ok());
                return Ok(pair);
            }
        }
    }
    Err(Error::InvalidArgument(format!("no ambiguous pair exists for N = {n}, M = {m}, K = {k}")))
}

fn assemble(a: &[u8], x: &[u8], y: &[u8], z: &[u8], m: usize) -> SpinConfig {
    let sites = [a, x, a, y, a, z].concat();
    SpinConfig::from_raw(sites, m)
}

/// Visits every string of length `len` with exactly `needed[l]` copies of
/// label `l`, in lexicographic order, until `visit` returns true.
fn for_each_filling(len: usize, m: usize, needed: &[usize], visit: &mut dyn FnMut(&[u8]) -> bool) {
    fn rec(
        buf: &mut Vec<u8>,
        len: usize,
        m: usize,
        left: &mut [usize],
        visit: &mut dyn FnMut(&[u8]) -> bool,
    ) -> bool {
        if buf.len() == len {
            return visit(buf);
        }
        for l in 0..m {
            if left[l] == 0 {
                continue;
            }
            left[l] -= 1;
            buf.push(l as u8);
            let stop = rec(buf, len, m, left, visit);
            buf.pop();
            left[l] += 1;
            if stop {
                return true;
            }
        }
        false
    }
    if needed.iter().sum::<usize>() != len {
        return;
    }
    let mut left = needed.to_vec();
    rec(&mut Vec::with_capacity(len), len, m, &mut left, visit);
}

/// One motif per conjugate pair: the one starting with label 0 (M = 2).
pub fn independent_operator_set(k: usize, m: usize) -> Result<Vec<usize>> {
    if m != 2 {
        return Err(Error::RequiresTwoSpecies(m));
    }
    if k == 0 {
        return Err(Error::InvalidArgument("kernel size must be at least 1".into()));
    }
    Ok((0..1usize << (k - 1)).collect())
}

/// Exact mean count of `motif` over the members of an orbit.
pub fn class_averaged_counts(
    basis: &Basis,
    class: &[usize],
    motif: usize,
    k: usize,
) -> Result<BigRational> {
    if class.is_empty() {
        return Err(Error::InvalidArgument("empty equivalence class".into()));
    }
    let mut total = 0i64;
    for &idx in class {
        total += motif_vector(basis.get(idx), k)?[motif] as i64;
    }
    Ok(BigRational::new(BigInt::from(total), BigInt::from(class.len())))
}

#[cfg(test)]
mod tests {
    use super::*;
    use num_traits::ToPrimitive;

    fn cfg(text: &str) -> SpinConfig {
        SpinConfig::parse(text, 2).unwrap()
    }

    #[test]
    fn neel_pairs() {
        let v = motif_vector(&cfg("↑↓↑↓"), 2).unwrap();
        assert_eq!(v, vec![0, 2, 2, 0]);
    }

    #[test]
    fn sliding_window_oracle() {
        let s = cfg("↑↑↓↓↑↓");
        let v = motif_vector(&s, 3).unwrap();
        let sites = s.sites();
        let mut brute = vec![0u32; 8];
        for i in 0..6 {
            let w = [sites[i], sites[(i + 1) % 6], sites[(i + 2) % 6]];
            brute[(w[0] as usize) * 4 + (w[1] as usize) * 2 + w[2] as usize] += 1;
        }
        assert_eq!(v, brute);
        assert_eq!(v.iter().sum::<u32>(), 6);
    }

    #[test]
    fn motif_vector_rejects_bad_k() {
        assert!(motif_vector(&cfg("↑↓"), 0).is_err());
        assert!(motif_vector(&cfg("↑↓"), 3).is_err());
    }

    #[test]
    fn count_matrix_shape_and_columns() {
        let basis = Basis::enumerate(8, 2).unwrap();
        let c = motif_count_matrix(&basis, 4).unwrap();
        assert_eq!((c.rows(), c.cols()), (16, 70));
        for j in 0..c.cols() {
            assert_eq!(c.column(j).iter().sum::<u32>(), 8);
            assert_eq!(c.column(j), motif_vector(basis.get(j), 4).unwrap());
        }
        for r in 0..16 {
            let a: u32 = c.row(r).iter().sum();
            let b: u32 = c.row(conjugate_index(r, 4)).iter().sum();
            assert_eq!(a, b);
        }
    }

    #[test]
    fn rank_of_single_site_motifs() {
        let basis = Basis::enumerate(8, 2).unwrap();
        assert_eq!(integer_rank(&motif_count_matrix(&basis, 1).unwrap()), 1);
    }

    #[test]
    fn labels_and_indices() {
        assert_eq!(motif_label(5, 4, 2), "0101");
        assert_eq!(Motif::new(vec![0, 1, 0, 1], 2).unwrap().index(), 5);
        assert_eq!(conjugate_index(5, 4), 10);
        assert_eq!(reversed_index(0b0011, 4, 2), 0b1100);
        assert!(Motif::new(vec![], 2).is_err());
        assert!(Motif::new(vec![0, 3], 2).is_err());
    }

    #[test]
    fn independent_sets() {
        let k2: Vec<String> = independent_operator_set(2, 2)
            .unwrap()
            .iter()
            .map(|&i| motif_label(i, 2, 2))
            .collect();
        assert_eq!(k2, vec!["00", "01"]);
        assert_eq!(independent_operator_set(1, 2).unwrap(), vec![0]);
        assert!(independent_operator_set(2, 3).is_err());
    }

    #[test]
    fn class_average_neel() {
        let basis = Basis::enumerate(4, 2).unwrap();
        let neel: Vec<usize> = [cfg("↑↓↑↓"), cfg("↓↑↓↑")]
            .iter()
            .map(|s| basis.index_of(s).unwrap())
            .collect();
        let avg = class_averaged_counts(&basis, &neel, 0b01, 2).unwrap();
        assert_eq!(avg.to_f64().unwrap(), 2.0);
        assert!(class_averaged_counts(&basis, &[], 0, 2).is_err());
    }

    #[test]
    fn ambiguous_pair_rejects_large_k() {
        assert!(ambiguous_pair(12, 2, 4).is_err());
        assert!(ambiguous_pair(9, 2, 2).is_err());
    }
}
