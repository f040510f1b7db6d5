//! Exact diagonalization of `H = sum_i P_{i,i+1}` on the periodic chain,
//! reduced density matrices, entanglement spectra, and the thermal
//! entanglement-Hamiltonian model.

use nalgebra::{DMatrix, DVector, SymmetricEigen};
use serde::Serialize;

use crate::lanczos::{lowest_eigenpair, LanczosOptions};
use crate::motif::{motif_count, window_index};
use crate::spinchain::{marshall_sign_unchecked, Basis, EquivalenceClassPartition, SpinConfig};
use crate::{Error, Result};

/// Largest basis handled by the dense eigensolver under [`SolverChoice::Auto`].
pub const DENSE_CAP: usize = 1000;

/// Largest `M^K` for which a reduced density matrix is built.
pub const RDM_CAP: usize = 1 << 12;

/// Energies closer than this count as degenerate.
pub const DEGENERACY_TOL: f64 = 1e-10;

/// Sparse exchange Hamiltonian over an enumerated basis.
#[derive(Clone, Debug)]
pub struct ExchangeHamiltonian {
    n: usize,
    m: usize,
    gauge: bool,
    diagonal: Vec<f64>,
    row_ptr: Vec<usize>,
    cols: Vec<usize>,
    vals: Vec<f64>,
}

/// Image of `s` under `H`: pairs `(state, amplitude)` with repeated targets merged.
pub fn hamiltonian_action(s: &SpinConfig, gauge: bool) -> Result<Vec<(SpinConfig, f64)>> {
    if gauge && s.species() != 2 {
        return Err(Error::RequiresTwoSpecies(s.species()));
    }
    let n = s.len();
    let sign_s = if gauge { marshall_sign_unchecked(s.sites()) } else { 1.0 };
    let mut diag = 0.0;
    let mut out: Vec<(SpinConfig, f64)> = Vec::new();
    for i in 0..n {
        let j = (i + 1) % n;
        if s.sites()[i] == s.sites()[j] {
            diag += 1.0;
            continue;
        }
        let t = s.swapped(i, j);
        let amp = if gauge { sign_s * marshall_sign_unchecked(t.sites()) } else { 1.0 };
        match out.iter_mut().find(|(u, _)| *u == t) {
            Some(entry) => entry.1 += amp,
            None => out.push((t, amp)),
        }
    }
    if diag != 0.0 {
        out.insert(0, (s.clone(), diag));
    }
    Ok(out)
}

impl ExchangeHamiltonian {
    /// Builds `H` in CSR form. `gauge` applies the Marshall sign transform (M = 2 only).
    pub fn new(basis: &Basis, gauge: bool) -> Result<Self> {
        if gauge && basis.m() != 2 {
            return Err(Error::RequiresTwoSpecies(basis.m()));
        }
        let n = basis.n();
        let mut diagonal = Vec::with_capacity(basis.len());
        let mut row_ptr = Vec::with_capacity(basis.len() + 1);
        let mut cols = Vec::new();
        let mut vals = Vec::new();
        row_ptr.push(0);
        let mut buf = vec![0u8; n];
        for s in basis.iter() {
            let sites = s.sites();
            let sign_s = if gauge { marshall_sign_unchecked(sites) } else { 1.0 };
            let mut diag = 0.0;
            let row_start = cols.len();
            for i in 0..n {
                let j = (i + 1) % n;
                if sites[i] == sites[j] {
                    diag += 1.0;
                    continue;
                }
                buf.copy_from_slice(sites);
                buf.swap(i, j);
                let col = basis.index_of_sites(&buf).expect("swaps stay in the basis");
                let amp = if gauge { sign_s * marshall_sign_unchecked(&buf) } else { 1.0 };
                match cols[row_start..].iter().position(|&c| c == col) {
                    Some(p) => vals[row_start + p] += amp,
                    None => {
                        cols.push(col);
                        vals.push(amp);
                    }
                }
            }
            diagonal.push(diag);
            row_ptr.push(cols.len());
        }
        Ok(Self { n, m: basis.m(), gauge, diagonal, row_ptr, cols, vals })
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn m(&self) -> usize {
        self.m
    }

    pub fn gauge(&self) -> bool {
        self.gauge
    }

    pub fn dim(&self) -> usize {
        self.diagonal.len()
    }

    /// `y = H x`.
    pub fn apply(&self, x: &[f64], y: &mut [f64]) {
        for (row, yi) in y.iter_mut().enumerate() {
            let mut acc = self.diagonal[row] * x[row];
            for p in self.row_ptr[row]..self.row_ptr[row + 1] {
                acc += self.vals[p] * x[self.cols[p]];
            }
            *yi = acc;
        }
    }

    pub fn element(&self, row: usize, col: usize) -> f64 {
        let mut value = if row == col { self.diagonal[row] } else { 0.0 };
        for p in self.row_ptr[row]..self.row_ptr[row + 1] {
            if self.cols[p] == col {
                value += self.vals[p];
            }
        }
        value
    }

    pub fn to_dense(&self) -> DMatrix<f64> {
        let d = self.dim();
        let mut h = DMatrix::zeros(d, d);
        for row in 0..d {
            h[(row, row)] = self.diagonal[row];
            for p in self.row_ptr[row]..self.row_ptr[row + 1] {
                h[(row, self.cols[p])] += self.vals[p];
            }
        }
        h
    }

    /// `||H x - e x||`.
    pub fn residual(&self, x: &[f64], e: f64) -> f64 {
        let mut y = vec![0.0; x.len()];
        self.apply(x, &mut y);
        y.iter().zip(x).map(|(a, b)| (a - e * b).powi(2)).sum::<f64>().sqrt()
    }

    /// `<x|H|x> / <x|x>`.
    pub fn rayleigh_quotient(&self, x: &[f64]) -> f64 {
        let mut y = vec![0.0; x.len()];
        self.apply(x, &mut y);
        let num: f64 = y.iter().zip(x).map(|(a, b)| a * b).sum();
        let den: f64 = x.iter().map(|a| a * a).sum();
        num / den
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
pub enum SolverChoice {
    /// Dense up to [`DENSE_CAP`] states, Lanczos beyond.
    Auto,
    Dense,
    Lanczos,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
pub enum SolverKind {
    Dense,
    Lanczos,
}

#[derive(Clone, Debug)]
pub struct GroundStateOptions {
    pub solver: SolverChoice,
    pub dense_cap: usize,
    pub basis_cap: usize,
    pub lanczos: LanczosOptions,
}

impl Default for GroundStateOptions {
    fn default() -> Self {
        Self {
            solver: SolverChoice::Auto,
            dense_cap: DENSE_CAP,
            basis_cap: crate::spinchain::DEFAULT_BASIS_CAP,
            lanczos: LanczosOptions::default(),
        }
    }
}

/// Lowest eigenpair of `H` together with the top of the spectrum.
#[derive(Clone, Debug)]
pub struct GroundStateSolution {
    pub e0: f64,
    /// Lowest energy above `e0` in the sector, used for the degeneracy check.
    pub e1: f64,
    pub emax: f64,
    /// Unit-norm amplitudes over the basis, sign fixed so they sum to a positive value.
    pub amplitudes: Vec<f64>,
    pub gauge: bool,
    pub solver: SolverKind,
    /// `||H psi - E0 psi||`.
    pub residual: f64,
    pub basis: Basis,
}

impl GroundStateSolution {
    pub fn n(&self) -> usize {
        self.basis.n()
    }

    pub fn m(&self) -> usize {
        self.basis.m()
    }

    /// `(Emax - E0) / basis size`.
    pub fn gap_estimate(&self) -> f64 {
        gap_estimate(self.e0, self.emax, self.basis.len())
    }

    /// Amplitudes squared.
    pub fn probabilities(&self) -> Vec<f64> {
        self.amplitudes.iter().map(|a| a * a).collect()
    }
}

/// `(Emax - E0) / basis_size`.
pub fn gap_estimate(e0: f64, emax: f64, basis_size: usize) -> f64 {
    (emax - e0) / basis_size as f64
}

pub fn ground_state(n: usize, m: usize, gauge: bool) -> Result<GroundStateSolution> {
    ground_state_with(n, m, gauge, &GroundStateOptions::default())
}

pub fn ground_state_with(n: usize, m: usize, gauge: bool, options: &GroundStateOptions) -> Result<GroundStateSolution> {
    let basis = Basis::enumerate_with_cap(n, m, options.basis_cap)?;
    let h = ExchangeHamiltonian::new(&basis, gauge)?;
    let dense = match options.solver {
        SolverChoice::Dense => true,
        SolverChoice::Lanczos => false,
        SolverChoice::Auto => basis.len() <= options.dense_cap,
    };
    let dim = basis.len();
    let (e0, e1, emax, mut amplitudes, solver) = if dense || dim < 3 {
        let eig = SymmetricEigen::new(h.to_dense());
        let mut order: Vec<usize> = (0..dim).collect();
        order.sort_by(|&a, &b| eig.eigenvalues[a].total_cmp(&eig.eigenvalues[b]));
        let e0 = eig.eigenvalues[order[0]];
        let e1 = if dim > 1 { eig.eigenvalues[order[1]] } else { f64::INFINITY };
        let emax = eig.eigenvalues[order[dim - 1]];
        let v: Vec<f64> = eig.eigenvectors.column(order[0]).iter().copied().collect();
        (e0, e1, emax, v, SolverKind::Dense)
    } else {
        // deterministic start with weight on every basis state
        let start: Vec<f64> = (0..dim).map(|i| 1.0 + 0.5 * ((i as f64) * 0.618_033_988_7).fract()).collect();
        let apply = |x: &[f64], y: &mut [f64]| h.apply(x, y);
        let ground = lowest_eigenpair(dim, apply, &start, &[], &options.lanczos);
        if !(ground.residual < options.lanczos.tolerance * 10.0) {
            return Err(Error::SolverNotConverged { residual: ground.residual });
        }
        let coarse = LanczosOptions { tolerance: 1e-8, ..options.lanczos.clone() };
        let excited = lowest_eigenpair(dim, apply, &start, std::slice::from_ref(&ground.vector), &coarse);
        let negated = |x: &[f64], y: &mut [f64]| {
            h.apply(x, y);
            y.iter_mut().for_each(|v| *v = -*v);
        };
        let top = lowest_eigenpair(dim, negated, &start, &[], &coarse);
        (ground.value, excited.value, -top.value, ground.vector, SolverKind::Lanczos)
    };
    if e1 - e0 < DEGENERACY_TOL {
        return Err(Error::DegenerateGroundState { gap: e1 - e0 });
    }
    let norm = amplitudes.iter().map(|a| a * a).sum::<f64>().sqrt();
    let sign = if amplitudes.iter().sum::<f64>() < 0.0 { -1.0 } else { 1.0 };
    amplitudes.iter_mut().for_each(|a| *a *= sign / norm);
    let residual = h.residual(&amplitudes, e0);
    Ok(GroundStateSolution { e0, e1, emax, amplitudes, gauge, solver, residual, basis })
}

/// `rho_K` on sites `0..K` over the full `M^K` product space.
#[derive(Clone, Debug)]
pub struct ReducedDensityMatrix {
    pub k: usize,
    pub m: usize,
    pub rho: DMatrix<f64>,
}

impl ReducedDensityMatrix {
    pub fn trace(&self) -> f64 {
        self.rho.trace()
    }

    pub fn diagonal(&self) -> Vec<f64> {
        self.rho.diagonal().iter().copied().collect()
    }
}

fn check_window(gs: &GroundStateSolution, k: usize) -> Result<()> {
    if k == 0 || k > gs.n() {
        return Err(Error::InvalidArgument(format!("window K = {k} must lie in 1..={}", gs.n())));
    }
    let rows = (gs.m() as f64).powi(k as i32);
    if rows > RDM_CAP as f64 {
        return Err(Error::BasisTooLarge { requested: rows, cap: RDM_CAP });
    }
    Ok(())
}

/// Traces out sites `K..N`: `rho[a][b] = sum_env psi(a env) psi(b env)`.
pub fn reduced_density_matrix(gs: &GroundStateSolution, k: usize) -> Result<ReducedDensityMatrix> {
    check_window(gs, k)?;
    let m = gs.m();
    let n = gs.n();
    let d = motif_count(k, m);
    let mut groups: std::collections::BTreeMap<u64, Vec<(usize, f64)>> = Default::default();
    for (s, &a) in gs.basis.iter().zip(&gs.amplitudes) {
        let window = window_index(s.sites(), 0, k, m);
        let env = crate::spinchain::encode(&s.sites()[k..n], m);
        groups.entry(env).or_default().push((window, a));
    }
    let mut rho = DMatrix::zeros(d, d);
    for members in groups.values() {
        for &(x, ax) in members {
            for &(y, ay) in members {
                rho[(x, y)] += ax * ay;
            }
        }
    }
    Ok(ReducedDensityMatrix { k, m, rho })
}

/// Motif expectation values over all `M^K` motifs.
#[derive(Clone, Debug, Serialize)]
pub struct MevTable {
    pub n: usize,
    pub m: usize,
    pub k: usize,
    /// Diagonal of `rho_K`, summing to one.
    pub probabilities: Vec<f64>,
}

impl MevTable {
    /// Count convention, `N x probability`.
    pub fn counts(&self) -> Vec<f64> {
        self.probabilities.iter().map(|p| p * self.n as f64).collect()
    }
}

/// Window marginals `Pr(s_{0..K} = s')` under `psi^2`, the diagonal of `rho_K`.
pub fn exact_mev(gs: &GroundStateSolution, k: usize) -> Result<MevTable> {
    if k == 0 || k > gs.n() {
        return Err(Error::InvalidArgument(format!("window K = {k} must lie in 1..={}", gs.n())));
    }
    let m = gs.m();
    let mut probabilities = vec![0.0; motif_count(k, m)];
    for (s, &a) in gs.basis.iter().zip(&gs.amplitudes) {
        probabilities[window_index(s.sites(), 0, k, m)] += a * a;
    }
    Ok(MevTable { n: gs.n(), m, k, probabilities })
}

/// `epsilon_alpha = -ln lambda_alpha` for eigenvalues above `1e-30`, ascending.
pub fn entanglement_spectrum(rho: &ReducedDensityMatrix) -> Vec<f64> {
    let eig = SymmetricEigen::new(rho.rho.clone());
    let mut eps: Vec<f64> = eig.eigenvalues.iter().filter(|&&l| l > 1e-30).map(|l| -l.ln()).collect();
    eps.sort_by(f64::total_cmp);
    eps
}

/// Smallest number of the largest weights whose sum reaches `fraction` of the total.
pub fn truncation_size(weights: &[f64], fraction: f64) -> Result<usize> {
    if !(fraction > 0.0 && fraction <= 1.0) {
        return Err(Error::InvalidArgument(format!("fraction {fraction} outside (0, 1]")));
    }
    if weights.iter().any(|&w| w < 0.0 || !w.is_finite()) {
        return Err(Error::InvalidArgument("weights must be finite and nonnegative".into()));
    }
    let mut sorted = weights.to_vec();
    sorted.sort_by(|a, b| b.total_cmp(a));
    let total: f64 = sorted.iter().sum();
    let goal = fraction * total;
    let mut acc = 0.0;
    for (i, w) in sorted.iter().enumerate() {
        acc += w;
        if acc >= goal {
            return Ok(i + 1);
        }
    }
    Ok(sorted.len())
}

/// Truncation size for the Boltzmann weights `exp(-epsilon)` of a spectrum.
pub fn spectrum_truncation_size(spectrum: &[f64], fraction: f64) -> Result<usize> {
    let weights: Vec<f64> = spectrum.iter().map(|e| (-e).exp()).collect();
    truncation_size(&weights, fraction)
}

/// `H_K = sum_{i=1}^{K-1} i (K - i) / K * P_{i,i+1}` on the open `M^K` product space.
pub fn entanglement_hamiltonian(k: usize, m: usize) -> Result<DMatrix<f64>> {
    if k == 0 || m < 2 {
        return Err(Error::InvalidArgument(format!("need K >= 1 and M >= 2, got K = {k}, M = {m}")));
    }
    let d = motif_count(k, m);
    if d > RDM_CAP {
        return Err(Error::BasisTooLarge { requested: d as f64, cap: RDM_CAP });
    }
    let mut h = DMatrix::zeros(d, d);
    let mut digits = vec![0u8; k];
    for col in 0..d {
        let mut x = col;
        for j in (0..k).rev() {
            digits[j] = (x % m) as u8;
            x /= m;
        }
        for bond in 1..k {
            let weight = (bond * (k - bond)) as f64 / k as f64;
            let (a, b) = (bond - 1, bond);
            digits.swap(a, b);
            let row = digits.iter().fold(0usize, |acc, &l| acc * m + l as usize);
            digits.swap(a, b);
            h[(row, col)] += weight;
        }
    }
    Ok(h)
}

/// Thermal model `exp(-beta H_K) / Z`.
#[derive(Clone, Debug)]
pub struct EntanglementModel {
    pub k: usize,
    pub m: usize,
    pub beta: f64,
    pub hamiltonian: DMatrix<f64>,
    eigen: SymmetricEigen<f64, nalgebra::Dyn>,
}

impl EntanglementModel {
    pub fn new(k: usize, m: usize, beta: f64) -> Result<Self> {
        if !(beta > 0.0 && beta.is_finite()) {
            return Err(Error::InvalidArgument(format!("inverse temperature must be positive, got {beta}")));
        }
        let hamiltonian = entanglement_hamiltonian(k, m)?;
        let eigen = SymmetricEigen::new(hamiltonian.clone());
        Ok(Self { k, m, beta, hamiltonian, eigen })
    }

    fn boltzmann(&self, beta: f64) -> DVector<f64> {
        let emin = self.eigen.eigenvalues.min();
        let mut w = self.eigen.eigenvalues.map(|e| (-beta * (e - emin)).exp());
        let z = w.sum();
        w /= z;
        w
    }

    /// `exp(-beta H_K) / Z`.
    pub fn density_matrix(&self) -> DMatrix<f64> {
        let w = self.boltzmann(self.beta);
        let v = &self.eigen.eigenvectors;
        v * DMatrix::from_diagonal(&w) * v.transpose()
    }

    /// Diagonal of the thermal state.
    pub fn diagonal(&self) -> Vec<f64> {
        thermal_diagonal(&self.eigen, self.boltzmann(self.beta))
    }

    /// Entanglement spectrum of the thermal state, `beta * (E - E_min) + ln Z`.
    pub fn spectrum(&self) -> Vec<f64> {
        let mut eps: Vec<f64> = self.boltzmann(self.beta).iter().filter(|&&l| l > 1e-30).map(|l| -l.ln()).collect();
        eps.sort_by(f64::total_cmp);
        eps
    }
}

fn thermal_diagonal(eigen: &SymmetricEigen<f64, nalgebra::Dyn>, weights: DVector<f64>) -> Vec<f64> {
    let v = &eigen.eigenvectors;
    (0..v.nrows())
        .map(|r| (0..v.ncols()).map(|c| weights[c] * v[(r, c)] * v[(r, c)]).sum())
        .collect()
}

/// Diagonal of `exp(-beta H_K) / Z` over all `M^K` motifs.
pub fn cft_mev(k: usize, m: usize, beta: f64) -> Result<Vec<f64>> {
    Ok(EntanglementModel::new(k, m, beta)?.diagonal())
}

/// Sum of squared differences between `cft_mev(K, M, beta)` and `reference`.
pub fn beta_objective(k: usize, m: usize, reference: &[f64], beta: f64) -> Result<f64> {
    let model = cft_mev(k, m, beta)?;
    if model.len() != reference.len() {
        return Err(Error::DimensionMismatch { expected: model.len(), actual: reference.len() });
    }
    Ok(model.iter().zip(reference).map(|(a, b)| (a - b).powi(2)).sum())
}

pub const BETA_BRACKET: (f64, f64) = (1e-2, 1e2);

/// Least-squares fit of `beta` to reference MEVs (probability convention) by
/// golden-section search on `ln beta` over [`BETA_BRACKET`].
pub fn calibrate_beta(k: usize, m: usize, reference: &[f64]) -> Result<f64> {
    let expected = motif_count(k, m);
    if reference.len() != expected {
        return Err(Error::DimensionMismatch { expected, actual: reference.len() });
    }
    let hamiltonian = entanglement_hamiltonian(k, m)?;
    let eigen = SymmetricEigen::new(hamiltonian);
    let emin = eigen.eigenvalues.min();
    let objective = |ln_beta: f64| {
        let beta = ln_beta.exp();
        let mut w = eigen.eigenvalues.map(|e| (-beta * (e - emin)).exp());
        let z = w.sum();
        w /= z;
        thermal_diagonal(&eigen, w)
            .iter()
            .zip(reference)
            .map(|(a, b)| (a - b).powi(2))
            .sum::<f64>()
    };
    let (lo, hi) = (BETA_BRACKET.0.ln(), BETA_BRACKET.1.ln());
    let ends = [objective(lo), objective(hi), objective(0.5 * (lo + hi))];
    let spread = ends.iter().fold(f64::NEG_INFINITY, |a, &b| a.max(b)) - ends.iter().fold(f64::INFINITY, |a, &b| a.min(b));
    if spread <= 1e-300 {
        return Err(Error::FlatObjective);
    }
    let ratio = (5f64.sqrt() - 1.0) / 2.0;
    let (mut a, mut b) = (lo, hi);
    let mut c = b - ratio * (b - a);
    let mut d = a + ratio * (b - a);
    let (mut fc, mut fd) = (objective(c), objective(d));
    while b - a > 1e-12 {
        if fc < fd {
            b = d;
            d = c;
            fd = fc;
            c = b - ratio * (b - a);
            fc = objective(c);
        } else {
            a = c;
            c = d;
            fc = fd;
            d = a + ratio * (b - a);
            fd = objective(d);
        }
    }
    Ok((0.5 * (a + b)).exp())
}

/// Total `psi^2` weight of each class, sorted descending.
pub fn class_mass_curve(gs: &GroundStateSolution, partition: &EquivalenceClassPartition) -> Vec<f64> {
    let mut masses: Vec<f64> = partition
        .classes()
        .iter()
        .map(|c| c.iter().map(|&i| gs.amplitudes[i].powi(2)).sum())
        .collect();
    masses.sort_by(|a, b| b.total_cmp(a));
    masses
}

/// Number of heaviest classes whose cumulative mass reaches `threshold`.
pub fn cumulative_class_mass(
    gs: &GroundStateSolution,
    partition: &EquivalenceClassPartition,
    threshold: f64,
) -> Result<usize> {
    truncation_size(&class_mass_curve(gs, partition), threshold)
}
