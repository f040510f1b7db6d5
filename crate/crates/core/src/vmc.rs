//! Metropolis sampling in the zero-magnetization sector, local-energy and
//! gradient estimators, and the Original / SymForce training loops.
//!
//! For M = 2 the local energy uses the Marshall-gauged Hamiltonian, in which
//! every off-diagonal element is `-1`, so a positive ansatz can represent the
//! ground state. For M > 2 the ungauged Hamiltonian is used instead.

use rand::seq::SliceRandom;
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::ansatz::{grandsum, logpsi_gradient_sites, project_grandsum, CnnGradient, CnnParams};
use crate::rng::substream;
use crate::spinchain::{Basis, SpinConfig};
use crate::{Error, Result};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Proposal {
    /// Swap two sites carrying different labels, chosen uniformly.
    AnyPair,
    /// Swap the two ends of a uniformly chosen bond.
    Adjacent,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct SamplerConfig {
    pub n_samples: usize,
    /// Proposals discarded before the first sample; `None` means `10 N`.
    pub burn_in: Option<usize>,
    /// Proposals between kept samples; `None` means `N`.
    pub thinning: Option<usize>,
    pub proposal: Proposal,
    pub seed: u64,
}

impl Default for SamplerConfig {
    fn default() -> Self {
        Self { n_samples: 1000, burn_in: None, thinning: None, proposal: Proposal::AnyPair, seed: 0 }
    }
}

impl SamplerConfig {
    fn validate(&self) -> Result<()> {
        if self.n_samples == 0 {
            return Err(Error::InvalidArgument("n_samples must be at least 1".into()));
        }
        if self.thinning == Some(0) {
            return Err(Error::InvalidArgument("thinning stride must be at least 1".into()));
        }
        Ok(())
    }
}

/// Samples from one Markov chain.
#[derive(Clone, Debug)]
pub struct Chain {
    pub samples: Vec<SpinConfig>,
    /// Accepted fraction of all proposals, burn-in included.
    pub acceptance: f64,
}

/// Change in `ln psi` when sites `i` and `j` are swapped; `sites` is restored.
fn swap_delta(p: &CnnParams, sites: &mut [u8], i: usize, j: usize, starts: &mut Vec<usize>) -> f64 {
    let n = sites.len();
    let k = p.k();
    starts.clear();
    if k >= n {
        starts.extend(0..n);
    } else {
        for d in 0..k {
            starts.push((i + n - d) % n);
            starts.push((j + n - d) % n);
        }
        starts.sort_unstable();
        starts.dedup();
    }
    let before: f64 = starts.iter().map(|&t| p.window_preactivation(sites, t).max(0.0)).sum();
    sites.swap(i, j);
    let after: f64 = starts.iter().map(|&t| p.window_preactivation(sites, t).max(0.0)).sum();
    sites.swap(i, j);
    p.v * (after - before)
}

fn local_energy_sites(p: &CnnParams, sites: &mut [u8], starts: &mut Vec<usize>) -> f64 {
    let n = sites.len();
    // nearest-neighbour swaps flip the Marshall sign for M = 2
    let offdiag = if p.m() == 2 { -1.0 } else { 1.0 };
    let mut e = 0.0;
    for i in 0..n {
        let j = (i + 1) % n;
        if sites[i] == sites[j] {
            e += 1.0;
        } else {
            e += offdiag * swap_delta(p, sites, i, j, starts).exp();
        }
    }
    e
}

fn check_compatible(p: &CnnParams, n: usize, m: usize) -> Result<()> {
    if p.m() != m {
        return Err(Error::DimensionMismatch { expected: p.m(), actual: m });
    }
    if p.k() > n {
        return Err(Error::InvalidArgument(format!("kernel K = {} exceeds N = {n}", p.k())));
    }
    Ok(())
}

/// `E_loc(s) = n_like(s) - sum_{unlike bonds} psi(swap s) / psi(s)` (Marshall gauge),
/// with ratios formed from log differences.
pub fn local_energy(p: &CnnParams, s: &SpinConfig) -> Result<f64> {
    check_compatible(p, s.len(), s.species())?;
    let mut sites = s.sites().to_vec();
    Ok(local_energy_sites(p, &mut sites, &mut Vec::new()))
}

struct Walker {
    sites: Vec<u8>,
    starts: Vec<usize>,
    accepted: usize,
    proposed: usize,
}

impl Walker {
    fn random<R: Rng>(n: usize, m: usize, rng: &mut R) -> Self {
        let per = n / m;
        let mut sites: Vec<u8> = (0..m as u8).flat_map(|l| std::iter::repeat_n(l, per)).collect();
        sites.shuffle(rng);
        Self { sites, starts: Vec::new(), accepted: 0, proposed: 0 }
    }

    fn step<R: Rng>(&mut self, p: &CnnParams, proposal: Proposal, rng: &mut R) {
        let n = self.sites.len();
        self.proposed += 1;
        let (i, j) = match proposal {
            Proposal::AnyPair => {
                // every label has N - N/M sites with a different label, so this is symmetric
                let i = rng.gen_range(0..n);
                let others = n - n / p.m();
                let mut r = rng.gen_range(0..others);
                let mut j = 0;
                for (t, &l) in self.sites.iter().enumerate() {
                    if l != self.sites[i] {
                        if r == 0 {
                            j = t;
                            break;
                        }
                        r -= 1;
                    }
                }
                (i, j)
            }
            Proposal::Adjacent => {
                let i = rng.gen_range(0..n);
                let j = (i + 1) % n;
                if self.sites[i] == self.sites[j] {
                    return;
                }
                (i, j)
            }
        };
        let delta = swap_delta(p, &mut self.sites, i, j, &mut self.starts);
        let log_ratio = 2.0 * delta;
        if log_ratio >= 0.0 || rng.gen::<f64>() < log_ratio.exp() {
            self.sites.swap(i, j);
            self.accepted += 1;
        }
    }

    fn acceptance(&self) -> f64 {
        if self.proposed == 0 {
            0.0
        } else {
            self.accepted as f64 / self.proposed as f64
        }
    }
}

fn run_chain<R: Rng>(p: &CnnParams, walker: &mut Walker, cfg: &SamplerConfig, rng: &mut R) -> Vec<SpinConfig> {
    let n = walker.sites.len();
    let burn_in = cfg.burn_in.unwrap_or(10 * n);
    let stride = cfg.thinning.unwrap_or(n);
    for _ in 0..burn_in {
        walker.step(p, cfg.proposal, rng);
    }
    let mut samples = Vec::with_capacity(cfg.n_samples);
    for _ in 0..cfg.n_samples {
        for _ in 0..stride {
            walker.step(p, cfg.proposal, rng);
        }
        samples.push(SpinConfig::from_raw(walker.sites.clone(), p.m()));
    }
    samples
}

/// Draws `cfg.n_samples` states from `psi^2` on an `N`-site chain, starting
/// from a random valid configuration.
pub fn metropolis_chain(p: &CnnParams, n: usize, cfg: &SamplerConfig) -> Result<Chain> {
    let mut rng = substream(cfg.seed, "sampler");
    metropolis_chain_with_rng(p, n, cfg, &mut rng)
}

pub fn metropolis_chain_with_rng<R: Rng>(p: &CnnParams, n: usize, cfg: &SamplerConfig, rng: &mut R) -> Result<Chain> {
    cfg.validate()?;
    crate::spinchain::basis_size(n, p.m())?;
    check_compatible(p, n, p.m())?;
    let mut walker = Walker::random(n, p.m(), rng);
    let samples = run_chain(p, &mut walker, cfg, rng);
    Ok(Chain { samples, acceptance: walker.acceptance() })
}

/// Standard error of the mean by blocking: the largest estimate over block
/// sizes `1, 2, 4, ...` that still leave at least 32 blocks.
pub fn blocking_stderr(values: &[f64]) -> f64 {
    let mut data = values.to_vec();
    let mut best = 0.0f64;
    while data.len() >= 32 {
        let n = data.len() as f64;
        let mean = data.iter().sum::<f64>() / n;
        let var = data.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (n - 1.0);
        best = best.max((var / n).sqrt());
        data = data.chunks_exact(2).map(|c| 0.5 * (c[0] + c[1])).collect();
    }
    if best == 0.0 && values.len() >= 2 {
        let n = values.len() as f64;
        let mean = values.iter().sum::<f64>() / n;
        let var = values.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (n - 1.0);
        best = (var / n).sqrt();
    }
    best
}

/// Energy and gradient estimated from samples.
#[derive(Clone, Debug)]
pub struct GradientEstimate {
    pub energy: f64,
    pub stderr: f64,
    pub gradient: CnnGradient,
}

/// Sample mean of the local energy and its blocking standard error.
pub fn estimate_energy(p: &CnnParams, samples: &[SpinConfig]) -> Result<(f64, f64)> {
    if samples.is_empty() {
        return Err(Error::InvalidArgument("no samples".into()));
    }
    let energies = samples.iter().map(|s| local_energy(p, s)).collect::<Result<Vec<_>>>()?;
    let mean = energies.iter().sum::<f64>() / energies.len() as f64;
    Ok((mean, blocking_stderr(&energies)))
}

/// `g = 2 [mean(E_loc O) - mean(E_loc) mean(O)]` with `O = d ln psi / d theta`.
pub fn energy_gradient(p: &CnnParams, samples: &[SpinConfig]) -> Result<GradientEstimate> {
    let weights = vec![1.0; samples.len()];
    let mut est = energy_gradient_weighted(p, samples, &weights)?;
    let energies = samples.iter().map(|s| local_energy(p, s)).collect::<Result<Vec<_>>>()?;
    est.stderr = blocking_stderr(&energies);
    Ok(est)
}

/// Weighted form of [`energy_gradient`]; weights need not be normalized.
/// The reported standard error ignores autocorrelation.
pub fn energy_gradient_weighted(p: &CnnParams, samples: &[SpinConfig], weights: &[f64]) -> Result<GradientEstimate> {
    if samples.len() < 2 {
        return Err(Error::InvalidArgument(format!("need at least 2 samples, got {}", samples.len())));
    }
    if weights.len() != samples.len() {
        return Err(Error::DimensionMismatch { expected: samples.len(), actual: weights.len() });
    }
    let first = &samples[0];
    check_compatible(p, first.len(), first.species())?;
    let total: f64 = weights.iter().sum();
    let mut starts = Vec::new();
    let mut buf = first.sites().to_vec();
    let mut e_mean = 0.0;
    let mut e_sq = 0.0;
    let dim = p.num_params();
    let mut o_mean = vec![0.0; dim];
    let mut eo_mean = vec![0.0; dim];
    for (s, &w) in samples.iter().zip(weights) {
        let w = w / total;
        buf.copy_from_slice(s.sites());
        let e = local_energy_sites(p, &mut buf, &mut starts);
        let o = logpsi_gradient_sites(p, s.sites()).to_vec();
        e_mean += w * e;
        e_sq += w * e * e;
        for d in 0..dim {
            o_mean[d] += w * o[d];
            eo_mean[d] += w * e * o[d];
        }
    }
    let grad: Vec<f64> = (0..dim).map(|d| 2.0 * (eo_mean[d] - e_mean * o_mean[d])).collect();
    let n_eff = total * total / weights.iter().map(|w| w * w).sum::<f64>();
    let var = (e_sq - e_mean * e_mean).max(0.0);
    Ok(GradientEstimate { energy: e_mean, stderr: (var / n_eff).sqrt(), gradient: CnnGradient::from_slice(&grad) })
}

/// `ln psi` over the whole basis.
pub fn logpsi_table(p: &CnnParams, basis: &Basis) -> Vec<f64> {
    basis.iter().map(|s| crate::ansatz::cnn_logpsi(p, s)).collect()
}

fn normalized_weights(logpsi: &[f64]) -> Vec<f64> {
    let max = logpsi.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let w: Vec<f64> = logpsi.iter().map(|l| (2.0 * (l - max)).exp()).collect();
    let z: f64 = w.iter().sum();
    w.into_iter().map(|x| x / z).collect()
}

/// Window-0 marginals of `psi^2` over all `M^K` motifs, by full-basis summation.
pub fn model_mev(p: &CnnParams, basis: &Basis, k: usize) -> Result<Vec<f64>> {
    check_compatible(p, basis.n(), basis.m())?;
    if k == 0 || k > basis.n() {
        return Err(Error::InvalidArgument(format!("window K = {k} must lie in 1..={}", basis.n())));
    }
    let weights = normalized_weights(&logpsi_table(p, basis));
    let mut out = vec![0.0; crate::motif::motif_count(k, basis.m())];
    for (s, w) in basis.iter().zip(weights) {
        out[crate::motif::window_index(s.sites(), 0, k, basis.m())] += w;
    }
    Ok(out)
}

/// Exact variational energy `<psi|H|psi> / <psi|psi>` by full-basis summation.
pub fn exact_energy(p: &CnnParams, basis: &Basis) -> Result<f64> {
    Ok(exact_energy_gradient(p, basis)?.0)
}

/// Exact energy and its gradient, summing over the basis with weights `psi^2`.
pub fn exact_energy_gradient(p: &CnnParams, basis: &Basis) -> Result<(f64, CnnGradient)> {
    check_compatible(p, basis.n(), basis.m())?;
    let weights = normalized_weights(&logpsi_table(p, basis));
    let mut starts = Vec::new();
    let dim = p.num_params();
    let mut e_mean = 0.0;
    let mut o_mean = vec![0.0; dim];
    let mut eo_mean = vec![0.0; dim];
    let mut buf = vec![0u8; basis.n()];
    for (s, &w) in basis.iter().zip(&weights) {
        buf.copy_from_slice(s.sites());
        let e = local_energy_sites(p, &mut buf, &mut starts);
        let o = logpsi_gradient_sites(p, s.sites()).to_vec();
        e_mean += w * e;
        for d in 0..dim {
            o_mean[d] += w * o[d];
            eo_mean[d] += w * e * o[d];
        }
    }
    let grad: Vec<f64> = (0..dim).map(|d| 2.0 * (eo_mean[d] - e_mean * o_mean[d])).collect();
    Ok((e_mean, CnnGradient::from_slice(&grad)))
}

/// Largest change of the gradient-flow direction between symmetry-related states.
#[derive(Clone, Copy, Debug, Serialize)]
pub struct InvariantDeviation {
    /// Over pairs `(s, T s)`.
    pub translation: f64,
    /// Over pairs `(s, L s)`.
    pub relabel: f64,
}

/// For the exact gradient `g`, the flow moves `ln psi(s)` along `-O(s) . g`.
/// Returns the largest difference of that rate between `s` and its image
/// under a unit translation and under the label swap.
pub fn invariant_dynamics_check(p: &CnnParams, basis: &Basis) -> Result<InvariantDeviation> {
    if basis.m() != 2 {
        return Err(Error::RequiresTwoSpecies(basis.m()));
    }
    let (_, g) = exact_energy_gradient(p, basis)?;
    let rate = |sites: &[u8]| -logpsi_gradient_sites(p, sites).dot(&g);
    let rates: Vec<f64> = basis.iter().map(|s| rate(s.sites())).collect();
    let mut dev = InvariantDeviation { translation: 0.0, relabel: 0.0 };
    let t = crate::spinchain::SymmetryOp::Translate(1);
    let l = crate::spinchain::SymmetryOp::swap_labels();
    for (idx, s) in basis.iter().enumerate() {
        let ts = basis.index_of(&t.apply(s)).expect("translation stays in the basis");
        let ls = basis.index_of(&l.apply(s)).expect("relabeling stays in the basis");
        dev.translation = dev.translation.max((rates[idx] - rates[ts]).abs());
        dev.relabel = dev.relabel.max((rates[idx] - rates[ls]).abs());
    }
    Ok(dev)
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Algorithm {
    Original,
    SymForceInit,
    SymForceTraj,
}

impl std::str::FromStr for Algorithm {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().replace(['_', ' '], "-").as_str() {
            "original" => Ok(Algorithm::Original),
            "symforce-init" => Ok(Algorithm::SymForceInit),
            "symforce-traj" => Ok(Algorithm::SymForceTraj),
            other => Err(Error::InvalidArgument(format!("unknown algorithm '{other}'"))),
        }
    }
}

#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum InitScheme {
    /// `w, b ~ U[-0.1, 0.1]`, `v ~ U[0.5, 1.5]`.
    Uniform,
    /// All parameters zero.
    Zeros,
    Given(CnnParams),
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct TrainConfig {
    pub algorithm: Algorithm,
    pub k: usize,
    pub m: usize,
    pub eta: f64,
    pub n_opt: usize,
    pub max_iter: usize,
    pub seed: u64,
    pub init: InitScheme,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            algorithm: Algorithm::SymForceTraj,
            k: 4,
            m: 2,
            eta: 1e-3,
            n_opt: 10,
            max_iter: 500,
            seed: 0,
            init: InitScheme::Uniform,
        }
    }
}

impl TrainConfig {
    fn validate(&self) -> Result<()> {
        if !(self.eta > 0.0 && self.eta.is_finite()) {
            return Err(Error::InvalidArgument(format!("learning rate must be positive, got {}", self.eta)));
        }
        if self.n_opt == 0 {
            return Err(Error::InvalidArgument("n_opt must be at least 1".into()));
        }
        if self.k == 0 {
            return Err(Error::InvalidArgument("kernel size must be at least 1".into()));
        }
        if self.algorithm != Algorithm::Original && self.m != 2 {
            return Err(Error::RequiresTwoSpecies(self.m));
        }
        Ok(())
    }
}

/// One training iteration, recorded before its parameter updates.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct IterationRecord {
    /// 1-based.
    pub iteration: usize,
    pub energy: f64,
    pub stderr: f64,
    /// `grandsum(w) + 2b` of the parameters that produced the samples (M = 2).
    pub grandsum: Option<f64>,
    pub acceptance: f64,
    pub params: CnnParams,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct TrainingTrajectory {
    pub n: usize,
    pub config: TrainConfig,
    pub initial_params: CnnParams,
    pub records: Vec<IterationRecord>,
    pub final_params: CnnParams,
}

impl TrainingTrajectory {
    pub fn energies(&self) -> Vec<f64> {
        self.records.iter().map(|r| r.energy).collect()
    }

    /// Energy estimate of the last recorded iteration.
    pub fn final_energy(&self) -> Option<f64> {
        self.records.last().map(|r| r.energy)
    }

    pub fn convergence_iteration(&self) -> usize {
        convergence_iteration(&self.energies(), self.config.max_iter)
    }
}

fn initial_params<R: Rng>(cfg: &TrainConfig, rng: &mut R) -> Result<CnnParams> {
    let p = match &cfg.init {
        InitScheme::Uniform => {
            let w = (0..cfg.k * cfg.m).map(|_| rng.gen_range(-0.1..=0.1)).collect();
            let b = rng.gen_range(-0.1..=0.1);
            let v = rng.gen_range(0.5..=1.5);
            CnnParams::new(cfg.k, cfg.m, w, b, v)?
        }
        InitScheme::Zeros => CnnParams::zeros(cfg.k, cfg.m),
        InitScheme::Given(p) => {
            if p.k() != cfg.k || p.m() != cfg.m {
                return Err(Error::InvalidArgument("initial parameters do not match K and M".into()));
            }
            p.clone()
        }
    };
    Ok(match cfg.algorithm {
        Algorithm::Original => p,
        Algorithm::SymForceInit | Algorithm::SymForceTraj => project_grandsum(&p)?,
    })
}

/// Trains on an `N`-site chain. Each iteration draws one batch under the
/// current parameters, records its energy, then takes `n_opt` descent steps
/// on that batch, reweighting by `psi_new^2 / psi_old^2` after the first.
pub fn train(n: usize, cfg: &TrainConfig, sampler: &SamplerConfig) -> Result<TrainingTrajectory> {
    cfg.validate()?;
    sampler.validate()?;
    crate::spinchain::basis_size(n, cfg.m)?;
    if cfg.k > n {
        return Err(Error::InvalidArgument(format!("kernel K = {} exceeds N = {n}", cfg.k)));
    }
    let mut init_rng = substream(cfg.seed, "init");
    let mut sample_rng = substream(cfg.seed, "sampler");
    let mut params = initial_params(cfg, &mut init_rng)?;
    let mut traj = TrainingTrajectory {
        n,
        config: cfg.clone(),
        initial_params: params.clone(),
        records: Vec::with_capacity(cfg.max_iter),
        final_params: params.clone(),
    };
    let mut walker = Walker::random(n, cfg.m, &mut sample_rng);
    let mut starts = Vec::new();
    let mut buf = vec![0u8; n];
    for iteration in 1..=cfg.max_iter {
        let (accepted, proposed) = (walker.accepted, walker.proposed);
        let samples = run_chain(&params, &mut walker, sampler, &mut sample_rng);
        let acceptance = (walker.accepted - accepted) as f64 / (walker.proposed - proposed).max(1) as f64;
        let sampled_logpsi: Vec<f64> = samples.iter().map(|s| crate::ansatz::cnn_logpsi(&params, s)).collect();
        let energies: Vec<f64> = samples
            .iter()
            .map(|s| {
                buf.copy_from_slice(s.sites());
                local_energy_sites(&params, &mut buf, &mut starts)
            })
            .collect();
        let energy = energies.iter().sum::<f64>() / energies.len() as f64;
        let stderr = blocking_stderr(&energies);
        let gs = if cfg.m == 2 { Some(grandsum(&params)?) } else { None };
        traj.records.push(IterationRecord { iteration, energy, stderr, grandsum: gs, acceptance, params: params.clone() });
        if !energy.is_finite() || energy.abs() > 1e3 * n as f64 {
            traj.final_params = params;
            return Err(Error::Diverged { iteration, energy, trajectory: Box::new(traj) });
        }
        if samples.len() < 2 {
            continue;
        }
        for step in 0..cfg.n_opt {
            let weights: Vec<f64> = if step == 0 {
                vec![1.0; samples.len()]
            } else {
                let shift: Vec<f64> = samples
                    .iter()
                    .zip(&sampled_logpsi)
                    .map(|(s, old)| 2.0 * (crate::ansatz::cnn_logpsi(&params, s) - old))
                    .collect();
                let max = shift.iter().copied().fold(f64::NEG_INFINITY, f64::max);
                shift.iter().map(|x| (x - max).exp()).collect()
            };
            let est = energy_gradient_weighted(&params, &samples, &weights)?;
            params.descend(&est.gradient, cfg.eta);
            if cfg.algorithm == Algorithm::SymForceTraj {
                params = project_grandsum(&params)?;
            }
            if !params.w().iter().chain([&params.b, &params.v]).all(|x| x.is_finite()) {
                traj.final_params = params;
                return Err(Error::Diverged { iteration, energy: f64::NAN, trajectory: Box::new(traj) });
            }
        }
    }
    traj.final_params = params;
    Ok(traj)
}

/// Rolling-average window used by [`convergence_iteration`].
pub const ROLLING_WINDOW: usize = 10;
/// Lag between compared rolling averages.
pub const CONVERGENCE_LAG: usize = 5;
pub const CONVERGENCE_TOL: f64 = 1e-4;

/// First 1-based iteration `t` whose rolling average differs from the one
/// `CONVERGENCE_LAG` iterations earlier by less than `CONVERGENCE_TOL`
/// relative; `max_iter` when no such iteration exists.
pub fn convergence_iteration(energies: &[f64], max_iter: usize) -> usize {
    let w = ROLLING_WINDOW;
    if energies.len() < w + CONVERGENCE_LAG {
        return max_iter;
    }
    // rolling[t - w] is the mean of energies[t - w .. t], i.e. iterations t-w+1 ..= t
    let mut rolling = Vec::with_capacity(energies.len() + 1 - w);
    let mut acc: f64 = energies[..w].iter().sum();
    rolling.push(acc / w as f64);
    for t in w..energies.len() {
        acc += energies[t] - energies[t - w];
        rolling.push(acc / w as f64);
    }
    for idx in CONVERGENCE_LAG..rolling.len() {
        let now = rolling[idx];
        let before = rolling[idx - CONVERGENCE_LAG];
        let diff = (now - before).abs();
        let converged = if before == 0.0 { diff == 0.0 } else { diff / before.abs() < CONVERGENCE_TOL };
        if converged {
            return idx + w;
        }
    }
    max_iter
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::exact::ExchangeHamiltonian;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn random_params(rng: &mut ChaCha8Rng, k: usize) -> CnnParams {
        let w = (0..2 * k).map(|_| rng.gen_range(-1.0..1.0)).collect();
        CnnParams::new(k, 2, w, rng.gen_range(-1.0..1.0), rng.gen_range(0.5..1.5)).unwrap()
    }

    #[test]
    fn constant_wavefunction_local_energy() {
        let p = CnnParams::zeros(2, 2);
        let neel = SpinConfig::parse("0101", 2).unwrap();
        assert_eq!(local_energy(&p, &neel).unwrap(), -4.0);
        let domain = SpinConfig::parse("0011", 2).unwrap();
        assert_eq!(local_energy(&p, &domain).unwrap(), 0.0);
    }

    #[test]
    fn swap_delta_matches_full_evaluation() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        for k in [1, 3, 5, 10] {
            let p = random_params(&mut rng, k);
            let s = SpinConfig::parse("0110100110", 2).unwrap();
            let mut sites = s.sites().to_vec();
            for i in 0..10 {
                for j in 0..10 {
                    let fast = swap_delta(&p, &mut sites, i, j, &mut Vec::new());
                    let slow = crate::ansatz::cnn_logpsi(&p, &s.swapped(i, j)) - crate::ansatz::cnn_logpsi(&p, &s);
                    assert!((fast - slow).abs() < 1e-12);
                }
            }
            assert_eq!(sites, s.sites());
        }
    }

    #[test]
    fn local_energy_mean_is_rayleigh_quotient() {
        let basis = Basis::enumerate(8, 2).unwrap();
        let h = ExchangeHamiltonian::new(&basis, true).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(12);
        let p = random_params(&mut rng, 3);
        let psi: Vec<f64> = logpsi_table(&p, &basis).iter().map(|l| l.exp()).collect();
        let rq = h.rayleigh_quotient(&psi);
        let e = exact_energy(&p, &basis).unwrap();
        assert!((e - rq).abs() < 1e-10);
    }

    #[test]
    fn constant_local_energy_gives_zero_gradient() {
        // constant psi on N = 2: E_loc = -2 on both states
        let p = CnnParams::zeros(1, 2);
        let samples = vec![SpinConfig::parse("01", 2).unwrap(), SpinConfig::parse("10", 2).unwrap()];
        let est = energy_gradient(&p, &samples).unwrap();
        assert_eq!(est.energy, -2.0);
        assert!(est.gradient.to_vec().iter().all(|&g| g == 0.0));
        assert!(energy_gradient(&p, &samples[..1]).is_err());
    }

    #[test]
    fn chain_stays_in_sector() {
        let mut rng = ChaCha8Rng::seed_from_u64(13);
        let p = random_params(&mut rng, 3);
        for proposal in [Proposal::AnyPair, Proposal::Adjacent] {
            let cfg = SamplerConfig { n_samples: 200, proposal, seed: 3, ..Default::default() };
            let chain = metropolis_chain(&p, 10, &cfg).unwrap();
            assert_eq!(chain.samples.len(), 200);
            for s in &chain.samples {
                assert_eq!(s.sites().iter().filter(|&&l| l == 1).count(), 5);
            }
            assert!(chain.acceptance > 0.0);
        }
    }

    #[test]
    fn convergence_examples() {
        assert_eq!(convergence_iteration(&[1.0; 40], 500), 15);
        let swings: Vec<f64> = (0..500).map(|i| if i % 2 == 0 { 1.0 } else { -3.0 } * (1.0 + i as f64)).collect();
        assert_eq!(convergence_iteration(&swings, 500), 500);
        assert_eq!(convergence_iteration(&[1.0; 5], 500), 500);
    }

    #[test]
    fn zero_init_is_stationary() {
        let cfg = TrainConfig { algorithm: Algorithm::Original, k: 2, eta: 0.1, n_opt: 2, max_iter: 3, init: InitScheme::Zeros, ..Default::default() };
        let sampler = SamplerConfig { n_samples: 50, ..Default::default() };
        let traj = train(6, &cfg, &sampler).unwrap();
        assert_eq!(traj.final_params, CnnParams::zeros(2, 2));
    }

    #[test]
    fn algorithm_names() {
        assert_eq!("SymForce-Traj".parse::<Algorithm>().unwrap(), Algorithm::SymForceTraj);
        assert_eq!("original".parse::<Algorithm>().unwrap(), Algorithm::Original);
        assert!("adam".parse::<Algorithm>().is_err());
    }
}
