//! Zero-magnetization basis, symmetry operations and orbit partitions.
//!
//! A configuration of `N` sites holds each of the `M` species labels exactly
//! `N / M` times. All matrices in the crate index states by their position
//! in the lexicographically ordered [`Basis`].

use std::fmt;

use num_bigint::BigUint;
use num_rational::BigRational;
use num_traits::{One, ToPrimitive};
use serde::{Deserialize, Serialize};

use crate::{Error, Result};

/// Default cap on the number of enumerated basis states.
pub const DEFAULT_BASIS_CAP: usize = 20_000_000;

/// One basis state: `sites[i]` is the species label at site `i`.
#[derive(Clone, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct SpinConfig {
    sites: Vec<u8>,
    species: usize,
}

impl SpinConfig {
    /// Builds a configuration, checking that every label in `0..species`
    /// occurs exactly `N / species` times.
    pub fn new(sites: Vec<u8>, species: usize) -> Result<Self> {
        validate_size(sites.len(), species)?;
        let mut counts = vec![0usize; species];
        for &label in &sites {
            let label = label as usize;
            if label >= species {
                return Err(Error::InvalidConfig(format!(
                    "label {label} out of range for M = {species}"
                )));
            }
            counts[label] += 1;
        }
        let per = sites.len() / species;
        if counts.iter().any(|&c| c != per) {
            return Err(Error::InvalidConfig(format!(
                "label counts {counts:?} are not all equal to {per}"
            )));
        }
        Ok(Self { sites, species })
    }

    /// Parses a string of decimal digits ("0110") or arrows ("↑↓↓↑").
    pub fn parse(text: &str, species: usize) -> Result<Self> {
        let sites = text
            .chars()
            .map(|c| match c {
                '↑' => Ok(0),
                '↓' => Ok(1),
                d if d.is_ascii_digit() => Ok(d as u8 - b'0'),
                other => Err(Error::InvalidConfig(format!("unexpected character {other:?}"))),
            })
            .collect::<Result<Vec<u8>>>()?;
        Self::new(sites, species)
    }

    pub(crate) fn from_raw(sites: Vec<u8>, species: usize) -> Self {
        Self { sites, species }
    }

    pub fn sites(&self) -> &[u8] {
        &self.sites
    }

    pub fn len(&self) -> usize {
        self.sites.len()
    }

    pub fn is_empty(&self) -> bool {
        self.sites.is_empty()
    }

    pub fn species(&self) -> usize {
        self.species
    }

    /// Base-M code with site 0 most significant, so code order equals
    /// lexicographic order.
    pub fn code(&self) -> u64 {
        encode(&self.sites, self.species)
    }

    /// Copy with sites `i` and `j` exchanged.
    pub fn swapped(&self, i: usize, j: usize) -> Self {
        let mut sites = self.sites.clone();
        sites.swap(i, j);
        Self::from_raw(sites, self.species)
    }
}

impl fmt::Display for SpinConfig {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        for &s in &self.sites {
            write!(f, "{s}")?;
        }
        Ok(())
    }
}

pub(crate) fn encode(sites: &[u8], species: usize) -> u64 {
    sites
        .iter()
        .fold(0u64, |acc, &s| acc * species as u64 + s as u64)
}

fn validate_size(n: usize, m: usize) -> Result<()> {
    if m < 2 {
        return Err(Error::InvalidSize(format!("need M >= 2, got M = {m}")));
    }
    if n < m {
        return Err(Error::InvalidSize(format!("need N >= M, got N = {n}, M = {m}")));
    }
    if !n.is_multiple_of(m) {
        return Err(Error::InvalidSize(format!("M = {m} does not divide N = {n}")));
    }
    Ok(())
}

/// multinomial(N; N/M, ..., N/M) as an exact integer.
pub fn basis_size(n: usize, m: usize) -> Result<BigUint> {
    validate_size(n, m)?;
    let per = n / m;
    let mut total = factorial(n);
    let denom = factorial(per);
    for _ in 0..m {
        total /= &denom;
    }
    Ok(total)
}

fn factorial(n: usize) -> BigUint {
    (1..=n).fold(BigUint::one(), |acc, k| acc * BigUint::from(k))
}

/// The ordered zero-magnetization basis for `N` sites and `M` species.
#[derive(Clone, Debug)]
pub struct Basis {
    n: usize,
    m: usize,
    states: Vec<SpinConfig>,
    codes: Vec<u64>,
}

impl Basis {
    pub fn enumerate(n: usize, m: usize) -> Result<Self> {
        Self::enumerate_with_cap(n, m, DEFAULT_BASIS_CAP)
    }

    /// Enumerates the basis in lexicographic order, rejecting sizes above `cap`.
    pub fn enumerate_with_cap(n: usize, m: usize, cap: usize) -> Result<Self> {
        let size = basis_size(n, m)?;
        let requested = size.to_f64().unwrap_or(f64::INFINITY);
        if size > BigUint::from(cap) {
            return Err(Error::BasisTooLarge { requested, cap });
        }
        if (m as f64).powi(n as i32) >= u64::MAX as f64 {
            return Err(Error::InvalidSize(format!("M^N does not fit a 64-bit code (N = {n})")));
        }
        let per = n / m;
        let mut current: Vec<u8> = (0..m as u8).flat_map(|l| std::iter::repeat_n(l, per)).collect();
        let expected = size.to_usize().unwrap_or(0);
        let mut states = Vec::with_capacity(expected);
        let mut codes = Vec::with_capacity(expected);
        loop {
            codes.push(encode(&current, m));
            states.push(SpinConfig::from_raw(current.clone(), m));
            if !next_permutation(&mut current) {
                break;
            }
        }
        Ok(Self { n, m, states, codes })
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn m(&self) -> usize {
        self.m
    }

    pub fn len(&self) -> usize {
        self.states.len()
    }

    pub fn is_empty(&self) -> bool {
        self.states.is_empty()
    }

    pub fn states(&self) -> &[SpinConfig] {
        &self.states
    }

    pub fn get(&self, index: usize) -> &SpinConfig {
        &self.states[index]
    }

    pub fn iter(&self) -> std::slice::Iter<'_, SpinConfig> {
        self.states.iter()
    }

    pub fn index_of(&self, s: &SpinConfig) -> Option<usize> {
        self.index_of_sites(s.sites())
    }

    pub fn index_of_sites(&self, sites: &[u8]) -> Option<usize> {
        if sites.len() != self.n {
            return None;
        }
        self.codes.binary_search(&encode(sites, self.m)).ok()
    }
}

/// Lexicographic next permutation of a multiset; false once the last one is reached.
fn next_permutation(v: &mut [u8]) -> bool {
    if v.len() < 2 {
        return false;
    }
    let mut i = v.len() - 1;
    while i > 0 && v[i - 1] >= v[i] {
        i -= 1;
    }
    if i == 0 {
        return false;
    }
    let mut j = v.len() - 1;
    while v[j] <= v[i - 1] {
        j -= 1;
    }
    v.swap(i - 1, j);
    v[i..].reverse();
    true
}

/// A generator of the chain's symmetry group.
#[derive(Clone, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum SymmetryOp {
    /// `(T_k s)_i = s_{(i + k) mod N}`.
    Translate(usize),
    /// Maps site `i` to `(2p - i) mod N`.
    Reflect(usize),
    /// Replaces label `l` by `perm[l]`.
    Relabel(Vec<u8>),
}

impl SymmetryOp {
    /// The label swap 0 <-> 1 for M = 2.
    pub fn swap_labels() -> Self {
        SymmetryOp::Relabel(vec![1, 0])
    }

    pub fn apply(&self, s: &SpinConfig) -> SpinConfig {
        let n = s.len();
        let src = s.sites();
        let sites = match self {
            SymmetryOp::Translate(k) => (0..n).map(|i| src[(i + k) % n]).collect(),
            SymmetryOp::Reflect(p) => {
                let twice = (2 * p) % n;
                (0..n).map(|j| src[(twice + n - j) % n]).collect()
            }
            SymmetryOp::Relabel(perm) => src.iter().map(|&l| perm[l as usize]).collect(),
        };
        SpinConfig::from_raw(sites, s.species())
    }

    pub fn inverse(&self, n: usize) -> SymmetryOp {
        match self {
            SymmetryOp::Translate(k) => SymmetryOp::Translate((n - k % n) % n),
            SymmetryOp::Reflect(p) => SymmetryOp::Reflect(*p),
            SymmetryOp::Relabel(perm) => {
                let mut inv = vec![0u8; perm.len()];
                for (from, &to) in perm.iter().enumerate() {
                    inv[to as usize] = from as u8;
                }
                SymmetryOp::Relabel(inv)
            }
        }
    }
}

/// A finite product of generators, applied left to right.
#[derive(Clone, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct SymmetryWord(pub Vec<SymmetryOp>);

impl SymmetryWord {
    pub fn apply(&self, s: &SpinConfig) -> SpinConfig {
        self.0.iter().fold(s.clone(), |acc, g| g.apply(&acc))
    }

    pub fn inverse(&self, n: usize) -> SymmetryWord {
        SymmetryWord(self.0.iter().rev().map(|g| g.inverse(n)).collect())
    }
}

/// All permutations of `0..m` in lexicographic order.
pub fn label_permutations(m: usize) -> Vec<Vec<u8>> {
    let mut perm: Vec<u8> = (0..m as u8).collect();
    let mut out = vec![perm.clone()];
    while next_permutation(&mut perm) {
        out.push(perm.clone());
    }
    out
}

/// Every image of `s` under the group generated by translations, reflections
/// and relabelings (with repetitions when `s` has a nontrivial stabilizer).
pub fn group_images(s: &SpinConfig) -> Vec<SpinConfig> {
    let n = s.len();
    let src = s.sites();
    let perms = label_permutations(s.species());
    let mut out = Vec::with_capacity(2 * n * perms.len());
    for shift in 0..n {
        for reflect in [false, true] {
            let base: Vec<u8> = (0..n)
                .map(|i| if reflect { src[(shift + n - i) % n] } else { src[(shift + i) % n] })
                .collect();
            for perm in &perms {
                let sites = base.iter().map(|&l| perm[l as usize]).collect();
                out.push(SpinConfig::from_raw(sites, s.species()));
            }
        }
    }
    out
}

/// Lexicographically smallest member of the orbit of `s`.
pub fn canonical_representative(s: &SpinConfig) -> SpinConfig {
    group_images(s)
        .into_iter()
        .min()
        .expect("orbit of a configuration is never empty")
}

/// True when `t = g s` for some group element `g`.
pub fn related_by_symmetry(s: &SpinConfig, t: &SpinConfig) -> bool {
    s.len() == t.len() && group_images(s).iter().any(|img| img == t)
}

/// Orbit partition of a basis. Classes are listed in order of their
/// representative, which is the lexicographically smallest member.
#[derive(Clone, Debug)]
pub struct EquivalenceClassPartition {
    class_of: Vec<usize>,
    classes: Vec<Vec<usize>>,
}

impl EquivalenceClassPartition {
    pub fn len(&self) -> usize {
        self.classes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.classes.is_empty()
    }

    /// Basis indices of each class, ascending.
    pub fn classes(&self) -> &[Vec<usize>] {
        &self.classes
    }

    pub fn class_of(&self, state_index: usize) -> usize {
        self.class_of[state_index]
    }

    pub fn representative(&self, class: usize) -> usize {
        self.classes[class][0]
    }

    pub fn sizes(&self) -> Vec<usize> {
        self.classes.iter().map(Vec::len).collect()
    }
}

pub fn partition_classes(basis: &Basis) -> EquivalenceClassPartition {
    const UNASSIGNED: usize = usize::MAX;
    let mut class_of = vec![UNASSIGNED; basis.len()];
    let mut classes = Vec::new();
    for (idx, state) in basis.iter().enumerate() {
        if class_of[idx] != UNASSIGNED {
            continue;
        }
        // States are visited in ascending order, so `idx` is the orbit minimum.
        let id = classes.len();
        let mut members = Vec::new();
        for image in group_images(state) {
            let j = basis
                .index_of(&image)
                .expect("symmetry images stay in the zero-magnetization basis");
            if class_of[j] == UNASSIGNED {
                class_of[j] = id;
                members.push(j);
            }
        }
        members.sort_unstable();
        classes.push(members);
    }
    EquivalenceClassPartition { class_of, classes }
}

/// `N! / (2N * M! * ((N/M)!)^M)`, the orbit count if every orbit had the
/// full group order.
pub fn class_count_lower_bound(n: usize, m: usize) -> Result<BigRational> {
    let states = basis_size(n, m)?;
    let group_order = BigUint::from(2 * n) * factorial(m);
    Ok(BigRational::new(states.into(), group_order.into()))
}

/// Marshall sign `(-1)^(number of label-1 sites at even indices)`.
pub fn marshall_sign(s: &SpinConfig) -> Result<f64> {
    if s.species() != 2 {
        return Err(Error::RequiresTwoSpecies(s.species()));
    }
    Ok(marshall_sign_unchecked(s.sites()))
}

pub(crate) fn marshall_sign_unchecked(sites: &[u8]) -> f64 {
    let downs = sites.iter().step_by(2).filter(|&&l| l == 1).count();
    if downs % 2 == 0 {
        1.0
    } else {
        -1.0
    }
}
