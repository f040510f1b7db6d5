use std::path::{Path, PathBuf};
use std::sync::atomic::{AtomicUsize, Ordering};
use std::sync::Mutex;

use clap::Args;
use num_rational::BigRational;
use num_traits::ToPrimitive;
use rand::RngCore;
use serde::{Deserialize, Serialize};
use serde_json::{json, Value};

use spinmotif::analysis::{
    error_report, mev_class_ordering, motif_features, ols_regress, outlier_filter, FEATURE_NAMES,
};
use spinmotif::ansatz::CnnCheckpoint;
use spinmotif::exact::{
    calibrate_beta, class_mass_curve, entanglement_spectrum, exact_mev, ground_state, reduced_density_matrix,
    spectrum_truncation_size, EntanglementModel, GroundStateSolution, RDM_CAP,
};
use spinmotif::motif::{integer_rank, motif_count, motif_count_matrix_with_cap, motif_label, Motif, DEFAULT_MATRIX_CAP};
use spinmotif::rng::substream;
use spinmotif::spinchain::{class_count_lower_bound, partition_classes, Basis};
use spinmotif::vmc::{
    exact_energy, model_mev, train as train_chain, Algorithm, InitScheme, Proposal, SamplerConfig, TrainConfig,
    TrainingTrajectory,
};
use spinmotif::Error;

use crate::error::{CliError, CliResult};
use crate::run::{num, Run};

type Out<'a> = Option<&'a Path>;

fn invalid(message: impl Into<String>) -> CliError {
    CliError::Config(message.into())
}

#[derive(Args, Debug, Clone, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct BasisParams {
    /// Number of sites.
    #[arg(long)]
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub n: Option<usize>,
    /// Number of spin species.
    #[arg(long)]
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub m: Option<usize>,
}

pub fn basis(mut p: BasisParams, seed: u64, out: Out) -> CliResult<Value> {
    let n = *p.n.get_or_insert(8);
    let m = *p.m.get_or_insert(2);
    let basis = Basis::enumerate(n, m)?;
    let partition = partition_classes(&basis);
    let bound = class_count_lower_bound(n, m)?;
    let mut run = Run::open("basis", seed, &p, out)?;
    let rows: Vec<Vec<String>> = basis
        .iter()
        .enumerate()
        .map(|(i, s)| vec![i.to_string(), s.to_string(), partition.class_of(i).to_string()])
        .collect();
    run.write_csv("basis.csv", &["index", "state", "class"], &rows)?;
    let rows: Vec<Vec<String>> = partition
        .classes()
        .iter()
        .enumerate()
        .map(|(c, members)| vec![c.to_string(), basis.get(partition.representative(c)).to_string(), members.len().to_string()])
        .collect();
    run.write_csv("classes.csv", &["class", "representative", "size"], &rows)?;
    run.write_json(
        "summary.json",
        &json!({
            "n": n,
            "m": m,
            "states": basis.len(),
            "classes": partition.len(),
            "lower_bound": bound.to_string(),
            "lower_bound_value": bound.to_f64(),
            "bound_holds": BigRational::from_integer(partition.len().into()) >= bound,
        }),
    )?;
    run.finish()
}

#[derive(Args, Debug, Clone, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct MotifRankParams {
    #[arg(long)]
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub n: Option<usize>,
    #[arg(long)]
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub m: Option<usize>,
    /// Smallest reported kernel size.
    #[arg(long)]
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub k_min: Option<usize>,
    /// Largest reported kernel size (default N).
    #[arg(long)]
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub k_max: Option<usize>,
    /// Largest motif count matrix, in entries.
    #[arg(long)]
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub matrix_cap: Option<usize>,
}

pub fn motif_rank(mut p: MotifRankParams, seed: u64, out: Out) -> CliResult<Value> {
    let n = *p.n.get_or_insert(12);
    let m = *p.m.get_or_insert(2);
    let k_min = *p.k_min.get_or_insert(1);
    let k_max = *p.k_max.get_or_insert(n);
    let cap = *p.matrix_cap.get_or_insert(DEFAULT_MATRIX_CAP);
    if k_min == 0 || k_min > k_max || k_max > n {
        return Err(invalid(format!("kernel range {k_min}..={k_max} must lie in 1..={n}")));
    }
    let basis = Basis::enumerate(n, m)?;
    let classes = partition_classes(&basis).len();
    let mut ranks = Vec::new();
    let mut k_star = None;
    for k in 1..=n {
        if k > k_max && k_star.is_some() {
            break;
        }
        let rank = integer_rank(&motif_count_matrix_with_cap(&basis, k, cap)?);
        if rank >= classes && k_star.is_none() {
            k_star = Some(k);
        }
        if k >= k_min && k <= k_max {
            ranks.push((k, rank));
        }
    }
    let mut run = Run::open("motif-rank", seed, &p, out)?;
    let rows: Vec<Vec<String>> = ranks
        .iter()
        .map(|&(k, r)| vec![k.to_string(), r.to_string(), classes.to_string(), (r >= classes).to_string()])
        .collect();
    run.write_csv("ranks.csv", &["k", "rank", "class_count", "resolves_classes"], &rows)?;
    run.write_json(
        "report.json",
        &json!({
            "n": n,
            "m": m,
            "class_count": classes,
            "k_star": k_star,
            "ranks": ranks.iter().map(|&(k, rank)| json!({ "k": k, "rank": rank })).collect::<Vec<_>>(),
        }),
    )?;
    run.finish()
}

#[derive(Args, Debug, Clone, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExactParams {
    #[arg(long)]
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub n: Option<usize>,
    #[arg(long)]
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub m: Option<usize>,
    /// Window size for the MEV table and the entanglement spectrum.
    #[arg(long)]
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub k: Option<usize>,
    /// Apply the Marshall sign gauge (M = 2).
    #[arg(long)]
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub gauge: Option<bool>,
    /// Retained weight for the truncation curves.
    #[arg(long)]
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub fraction: Option<f64>,
}

fn default_window(n: usize, m: usize) -> usize {
    (n / 2).clamp(1, if m > 2 { 3 } else { 4 })
}

fn solve(n: usize, m: usize, gauge: bool) -> CliResult<GroundStateSolution> {
    Ok(ground_state(n, m, gauge && m == 2)?)
}

fn mev_rows(k: usize, m: usize, n: usize, probabilities: &[f64]) -> Vec<Vec<String>> {
    probabilities
        .iter()
        .enumerate()
        .map(|(i, &p)| vec![motif_label(i, k, m), num(p), num(p * n as f64)])
        .collect()
}

pub fn exact(mut p: ExactParams, seed: u64, out: Out) -> CliResult<Value> {
    let n = *p.n.get_or_insert(12);
    let m = *p.m.get_or_insert(2);
    let k = *p.k.get_or_insert(default_window(n, m));
    let gauge = *p.gauge.get_or_insert(m == 2);
    let fraction = *p.fraction.get_or_insert(0.99);
    if !(fraction > 0.0 && fraction <= 1.0) {
        return Err(invalid(format!("fraction {fraction} outside (0, 1]")));
    }
    let gs = solve(n, m, gauge)?;
    let mev = exact_mev(&gs, k)?;
    let rdm = reduced_density_matrix(&gs, k)?;
    let spectrum = entanglement_spectrum(&rdm);
    let mut truncation = Vec::new();
    for kk in (1..=n / 2).take_while(|&kk| motif_count(kk, m) <= RDM_CAP) {
        let eps = entanglement_spectrum(&reduced_density_matrix(&gs, kk)?);
        truncation.push((kk, motif_count(kk, m), spectrum_truncation_size(&eps, fraction)?));
    }
    let partition = partition_classes(&gs.basis);
    let masses = class_mass_curve(&gs, &partition);

    let mut run = Run::open("exact", seed, &p, out)?;
    run.write_json(
        "summary.json",
        &json!({
            "n": n,
            "m": m,
            "k": k,
            "gauge": gs.gauge,
            "basis_size": gs.basis.len(),
            "e0": gs.e0,
            "e1": gs.e1,
            "emax": gs.emax,
            "gap_estimate": gs.gap_estimate(),
            "solver": format!("{:?}", gs.solver),
            "residual": gs.residual,
            "rdm_trace": rdm.trace(),
            "class_count": partition.len(),
        }),
    )?;
    run.write_csv("mev.csv", &["motif", "probability", "count"], &mev_rows(k, m, n, &mev.probabilities))?;
    let rows: Vec<Vec<String>> = spectrum.iter().enumerate().map(|(i, e)| vec![i.to_string(), num(*e)]).collect();
    run.write_csv("spectrum.csv", &["index", "epsilon"], &rows)?;
    let rows: Vec<Vec<String>> = truncation
        .iter()
        .map(|&(kk, dim, size)| vec![kk.to_string(), dim.to_string(), size.to_string(), num(size as f64 / dim as f64)])
        .collect();
    run.write_csv("truncation.csv", &["k", "dimension", "retained", "ratio"], &rows)?;
    let mut cumulative = 0.0;
    let rows: Vec<Vec<String>> = masses
        .iter()
        .enumerate()
        .map(|(i, &w)| {
            cumulative += w;
            vec![(i + 1).to_string(), num(w), num(cumulative)]
        })
        .collect();
    run.write_csv("class_mass.csv", &["rank", "mass", "cumulative"], &rows)?;
    run.finish()
}

#[derive(Args, Debug, Clone, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct MevParams {
    #[arg(long)]
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub n: Option<usize>,
    #[arg(long)]
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub m: Option<usize>,
    #[arg(long)]
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub k: Option<usize>,
    #[arg(long)]
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub gauge: Option<bool>,
    /// Network checkpoint (as written by `train`) to compare against.
    #[arg(long)]
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub params: Option<PathBuf>,
}

fn load_checkpoint(path: &Path) -> CliResult<CnnCheckpoint> {
    let text = std::fs::read_to_string(path).map_err(|e| invalid(format!("cannot read {}: {e}", path.display())))?;
    serde_json::from_str(&text).map_err(|e| invalid(format!("{} is not a network checkpoint: {e}", path.display())))
}

pub fn mev(mut p: MevParams, seed: u64, out: Out) -> CliResult<Value> {
    let n = *p.n.get_or_insert(16);
    let m = *p.m.get_or_insert(2);
    let k = *p.k.get_or_insert(default_window(n, m));
    let gauge = *p.gauge.get_or_insert(m == 2);
    let checkpoint = p.params.as_deref().map(load_checkpoint).transpose()?;
    if let Some(c) = &checkpoint {
        if c.N != n || c.M != m {
            return Err(invalid(format!("checkpoint is for N = {}, M = {}, not N = {n}, M = {m}", c.N, c.M)));
        }
    }
    let gs = solve(n, m, gauge)?;
    let truth = exact_mev(&gs, k)?.probabilities;
    let table = mev_class_ordering(&truth, k, m)?;
    let model = match checkpoint {
        Some(c) => {
            let params = c.into_params()?;
            let energy = exact_energy(&params, &gs.basis)?;
            let mev = model_mev(&params, &gs.basis, k)?;
            let report = error_report(energy, &gs, &mev, &truth, k)?;
            Some((energy, mev, report))
        }
        None => None,
    };

    let mut run = Run::open("mev", seed, &p, out)?;
    let mut header = vec!["motif", "probability", "count", "class"];
    if m == 2 {
        header.extend(["d_neel", "n_like"]);
    }
    if model.is_some() {
        header.extend(["model", "relative_error", "delta_e"]);
    }
    let mut rows = Vec::new();
    for (i, &t) in truth.iter().enumerate() {
        let motif = Motif::from_index(i, k, m);
        let mut row = vec![motif.label(), num(t), num(t * n as f64), table.class_of(i).expect("every motif is classed").to_string()];
        if m == 2 {
            let f = motif_features(&motif)?;
            row.extend([f.d_neel.to_string(), f.n_like.to_string()]);
        }
        if let Some((_, mev, report)) = &model {
            row.extend([num(mev[i]), num((mev[i] - t) / t), num(report.relative_delta_e)]);
        }
        rows.push(row);
    }
    run.write_csv("mev.csv", &header, &rows)?;
    let rows: Vec<Vec<String>> = table
        .classes
        .iter()
        .enumerate()
        .map(|(c, members)| {
            let labels: Vec<String> = members.iter().map(|&i| motif_label(i, k, m)).collect();
            let mut row = vec![c.to_string(), num(table.values[c]), members.len().to_string(), labels.join(" ")];
            if let Some((_, _, report)) = &model {
                row.push(num(report.class_errors[c]));
            }
            row
        })
        .collect();
    let mut header = vec!["class", "mev", "size", "motifs"];
    if model.is_some() {
        header.push("relative_error");
    }
    run.write_csv("classes.csv", &header, &rows)?;
    let mut summary = json!({ "n": n, "m": m, "k": k, "e0": gs.e0, "gap_estimate": gs.gap_estimate(), "class_count": table.len() });
    if let Some((energy, _, report)) = &model {
        summary["energy"] = json!(energy);
        summary["report"] = json!(report);
    }
    run.write_json("summary.json", &summary)?;
    run.finish()
}

#[derive(Args, Debug, Clone, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CftParams {
    #[arg(long)]
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub n: Option<usize>,
    #[arg(long)]
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub m: Option<usize>,
    #[arg(long)]
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub k: Option<usize>,
    #[arg(long)]
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub gauge: Option<bool>,
}

pub fn cft(mut p: CftParams, seed: u64, out: Out) -> CliResult<Value> {
    let n = *p.n.get_or_insert(16);
    let m = *p.m.get_or_insert(2);
    let k = *p.k.get_or_insert(default_window(n, m));
    let gauge = *p.gauge.get_or_insert(m == 2);
    let gs = solve(n, m, gauge)?;
    let truth = exact_mev(&gs, k)?.probabilities;
    let beta = calibrate_beta(k, m, &truth)?;
    let model = EntanglementModel::new(k, m, beta)?;
    let fitted = model.diagonal();
    let exact_spectrum = entanglement_spectrum(&reduced_density_matrix(&gs, k)?);
    let model_spectrum = model.spectrum();
    let sse: f64 = fitted.iter().zip(&truth).map(|(a, b)| (a - b).powi(2)).sum();
    let max_rel = fitted.iter().zip(&truth).map(|(a, b)| ((a - b) / b).abs()).fold(0.0, f64::max);

    let mut run = Run::open("cft", seed, &p, out)?;
    run.write_json(
        "cft.json",
        &json!({ "n": n, "m": m, "k": k, "beta": beta, "objective": sse, "max_relative_error": max_rel }),
    )?;
    let rows: Vec<Vec<String>> = truth
        .iter()
        .zip(&fitted)
        .enumerate()
        .map(|(i, (t, f))| vec![motif_label(i, k, m), num(*t), num(*f)])
        .collect();
    run.write_csv("cft_mev.csv", &["motif", "exact", "cft"], &rows)?;
    let cell = |v: &[f64], i: usize| v.get(i).map(|x| num(*x)).unwrap_or_default();
    let rows: Vec<Vec<String>> = (0..exact_spectrum.len().max(model_spectrum.len()))
        .map(|i| vec![i.to_string(), cell(&exact_spectrum, i), cell(&model_spectrum, i)])
        .collect();
    run.write_csv("spectrum.csv", &["index", "exact", "cft"], &rows)?;
    run.finish()
}

#[derive(Args, Debug, Clone, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TrainParams {
    #[arg(long)]
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub n: Option<usize>,
    #[arg(long)]
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub m: Option<usize>,
    /// Kernel size.
    #[arg(long)]
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub k: Option<usize>,
    /// original, symforce-init or symforce-traj.
    #[arg(long)]
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub algorithm: Option<String>,
    /// Learning rate.
    #[arg(long)]
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub eta: Option<f64>,
    /// Descent steps per sample batch.
    #[arg(long)]
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub n_opt: Option<usize>,
    #[arg(long)]
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub max_iter: Option<usize>,
    /// Number of independently seeded runs.
    #[arg(long)]
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub runs: Option<usize>,
    /// Samples per iteration.
    #[arg(long)]
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub n_samples: Option<usize>,
    /// Burn-in proposals (default 10 N).
    #[arg(long)]
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub burn_in: Option<usize>,
    /// Proposals between samples (default N).
    #[arg(long)]
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub thinning: Option<usize>,
    /// any-pair or adjacent.
    #[arg(long, value_parser = parse_proposal)]
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub proposal: Option<Proposal>,
    /// uniform or zeros.
    #[arg(long)]
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub init: Option<String>,
    /// Compare against the exact ground state.
    #[arg(long)]
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub exact: Option<bool>,
    /// Parallel runs (does not affect outputs).
    #[arg(long)]
    #[serde(skip)]
    pub workers: Option<usize>,
}

fn algorithm_name(a: Algorithm) -> &'static str {
    match a {
        Algorithm::Original => "original",
        Algorithm::SymForceInit => "symforce-init",
        Algorithm::SymForceTraj => "symforce-traj",
    }
}

fn parse_proposal(s: &str) -> Result<Proposal, String> {
    serde_json::from_value(json!(s)).map_err(|_| format!("unknown proposal '{s}'"))
}

struct RunOutcome {
    seed: u64,
    trajectory: TrainingTrajectory,
    diverged: Option<(usize, f64)>,
}

fn train_one(n: usize, cfg: TrainConfig, sampler: SamplerConfig) -> CliResult<RunOutcome> {
    let seed = cfg.seed;
    match train_chain(n, &cfg, &sampler) {
        Ok(trajectory) => Ok(RunOutcome { seed, trajectory, diverged: None }),
        Err(Error::Diverged { iteration, energy, trajectory }) => {
            Ok(RunOutcome { seed, trajectory: *trajectory, diverged: Some((iteration, energy)) })
        }
        Err(e) => Err(e.into()),
    }
}

fn mean(values: &[f64]) -> Option<f64> {
    (!values.is_empty()).then(|| values.iter().sum::<f64>() / values.len() as f64)
}

pub fn train(mut p: TrainParams, seed: u64, out: Out) -> CliResult<Value> {
    let n = *p.n.get_or_insert(16);
    let m = *p.m.get_or_insert(2);
    let k = *p.k.get_or_insert(4);
    let algorithm: Algorithm = p.algorithm.get_or_insert_with(|| "symforce-traj".into()).parse()?;
    p.algorithm = Some(algorithm_name(algorithm).into());
    let eta = *p.eta.get_or_insert(1e-3);
    let n_opt = *p.n_opt.get_or_insert(10);
    let max_iter = *p.max_iter.get_or_insert(500);
    let runs = *p.runs.get_or_insert(1);
    let n_samples = *p.n_samples.get_or_insert(1000);
    let proposal = *p.proposal.get_or_insert(Proposal::AnyPair);
    let init = match p.init.get_or_insert_with(|| "uniform".into()).as_str() {
        "uniform" => InitScheme::Uniform,
        "zeros" => InitScheme::Zeros,
        other => return Err(invalid(format!("unknown init scheme '{other}'"))),
    };
    let with_exact = *p.exact.get_or_insert(true);
    if runs == 0 {
        return Err(invalid("runs must be at least 1"));
    }
    let workers = p.workers.unwrap_or_else(|| std::thread::available_parallelism().map_or(1, |x| x.get())).clamp(1, runs);

    let mut seeds = substream(seed, "runs");
    let configs: Vec<(TrainConfig, SamplerConfig)> = (0..runs)
        .map(|_| {
            let run_seed = seeds.next_u64();
            let cfg = TrainConfig { algorithm, k, m, eta, n_opt, max_iter, seed: run_seed, init: init.clone() };
            let sampler = SamplerConfig { n_samples, burn_in: p.burn_in, thinning: p.thinning, proposal, seed: run_seed };
            (cfg, sampler)
        })
        .collect();
    // fail fast on bad settings before spawning workers
    if let Some((cfg, sampler)) = configs.first() {
        let probe = TrainConfig { max_iter: 0, ..cfg.clone() };
        train_chain(n, &probe, sampler)?;
    }
    let exact = if with_exact { Some(solve(n, m, true)?) } else { None };

    let next = AtomicUsize::new(0);
    let results: Mutex<Vec<Option<CliResult<RunOutcome>>>> = Mutex::new((0..runs).map(|_| None).collect());
    std::thread::scope(|scope| {
        for _ in 0..workers {
            scope.spawn(|| loop {
                let i = next.fetch_add(1, Ordering::SeqCst);
                if i >= runs {
                    break;
                }
                let (cfg, sampler) = configs[i].clone();
                let outcome = train_one(n, cfg, sampler);
                results.lock().expect("no worker panics while holding the lock")[i] = Some(outcome);
            });
        }
    });
    let outcomes: Vec<RunOutcome> = results
        .into_inner()
        .expect("workers finished")
        .into_iter()
        .map(|r| r.expect("every run is visited"))
        .collect::<CliResult<_>>()?;

    let mut run = Run::open("train", seed, &p, out)?;
    let mut per_run = Vec::new();
    let mut deltas = Vec::new();
    let mut rel_errors = Vec::new();
    let mut diverged = Vec::new();
    for (i, o) in outcomes.iter().enumerate() {
        let t = &o.trajectory;
        let mut header = vec!["iteration".to_string(), "energy".into(), "stderr".into(), "grandsum".into(), "acceptance".into(), "v".into(), "b".into()];
        header.extend((0..k * m).map(|j| format!("w{j}")));
        let rows: Vec<Vec<String>> = t
            .records
            .iter()
            .map(|r| {
                let mut row = vec![
                    r.iteration.to_string(),
                    num(r.energy),
                    num(r.stderr),
                    r.grandsum.map(num).unwrap_or_default(),
                    num(r.acceptance),
                    num(r.params.v),
                    num(r.params.b),
                ];
                row.extend(r.params.w().iter().map(|x| num(*x)));
                row
            })
            .collect();
        let header: Vec<&str> = header.iter().map(String::as_str).collect();
        run.write_csv(&format!("trajectory_run{i}.csv"), &header, &rows)?;
        run.write_json(&format!("params_run{i}.json"), &CnnCheckpoint::from_params(n, &t.final_params))?;

        let energy = t.final_energy();
        let mut entry = json!({
            "run": i,
            "seed": o.seed,
            "iterations": t.records.len(),
            "final_energy": energy,
            "t_convergence": t.convergence_iteration(),
            "diverged": o.diverged.is_some(),
        });
        if let Some((iteration, e)) = o.diverged {
            entry["diverged_at"] = json!({ "iteration": iteration, "energy": e });
            diverged.push(i);
        }
        if let (Some(gs), Some(e), None) = (&exact, energy, o.diverged) {
            let delta = e - gs.e0;
            entry["delta_e"] = json!(delta);
            entry["relative_delta_e"] = json!(delta / gs.gap_estimate());
            entry["relative_error"] = json!(delta.abs() / gs.e0.abs());
            deltas.push(delta / gs.gap_estimate());
            rel_errors.push(delta.abs() / gs.e0.abs());
        }
        per_run.push(entry);
    }
    let fmin = |v: &[f64]| v.iter().copied().reduce(f64::min);
    let summary = json!({
        "n": n,
        "m": m,
        "k": k,
        "algorithm": algorithm_name(algorithm),
        "e0": exact.as_ref().map(|gs| gs.e0),
        "gap_estimate": exact.as_ref().map(|gs| gs.gap_estimate()),
        "runs": per_run,
        "min_relative_delta_e": fmin(&deltas),
        "mean_relative_delta_e": mean(&deltas),
        "min_relative_error": fmin(&rel_errors),
        "mean_relative_error": mean(&rel_errors),
        "diverged": diverged.len(),
    });
    run.write_json("summary.json", &summary)?;
    let ok = run.finish()?;
    if !diverged.is_empty() {
        return Err(CliError::Numerical {
            message: format!("{} of {runs} runs diverged", diverged.len()),
            details: json!({ "runs": diverged, "out": ok["out"] }),
        });
    }
    Ok(ok)
}

#[derive(Args, Debug, Clone, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RegressParams {
    /// CSV tables with a header row; rows are pooled.
    #[arg(long, num_args = 1.., value_delimiter = ',')]
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub inputs: Option<Vec<PathBuf>>,
    /// `features` (motif column to Intercept, d_Neel, n_like, d_Neel*n_like) or `columns`.
    #[arg(long)]
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub model: Option<String>,
    /// Response column.
    #[arg(long)]
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub y: Option<String>,
    /// Regressor columns for the `columns` model.
    #[arg(long, num_args = 1.., value_delimiter = ',')]
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub x: Option<Vec<String>>,
    /// Add an intercept column to the `columns` model.
    #[arg(long)]
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub intercept: Option<bool>,
    /// Factor applied to the response, e.g. 100 for percent.
    #[arg(long)]
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub scale: Option<f64>,
    /// Rows whose value in this column is at least 6 are dropped, when present.
    #[arg(long)]
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub outlier_column: Option<String>,
}

struct Table {
    header: Vec<String>,
    rows: Vec<Vec<String>>,
}

impl Table {
    fn column(&self, name: &str) -> CliResult<usize> {
        self.header.iter().position(|h| h == name).ok_or_else(|| invalid(format!("no column '{name}'")))
    }
}

fn read_tables(paths: &[PathBuf]) -> CliResult<Table> {
    let mut table: Option<Table> = None;
    for path in paths {
        let mut reader = csv::Reader::from_path(path).map_err(|e| invalid(format!("cannot read {}: {e}", path.display())))?;
        let header: Vec<String> = reader.headers()?.iter().map(str::to_string).collect();
        let rows = reader
            .records()
            .map(|r| r.map(|rec| rec.iter().map(str::to_string).collect()))
            .collect::<Result<Vec<Vec<String>>, _>>()?;
        match &mut table {
            None => table = Some(Table { header, rows }),
            Some(t) if t.header == header => t.rows.extend(rows),
            Some(_) => return Err(invalid(format!("{} has a different header", path.display()))),
        }
    }
    table.ok_or_else(|| invalid("no inputs given"))
}

fn parse_cell(text: &str, column: &str) -> CliResult<f64> {
    text.trim().parse().map_err(|_| invalid(format!("column '{column}' holds non-numeric value '{text}'")))
}

pub fn regress(mut p: RegressParams, seed: u64, out: Out) -> CliResult<Value> {
    let inputs = p.inputs.clone().ok_or_else(|| invalid("regress needs at least one input table"))?;
    let model = p.model.get_or_insert_with(|| "features".into()).clone();
    let scale = *p.scale.get_or_insert(1.0);
    let outlier_column = p.outlier_column.get_or_insert_with(|| "delta_e".into()).clone();
    let table = read_tables(&inputs)?;
    let filtered = match table.column(&outlier_column) {
        Ok(c) => {
            let values = table.rows.iter().map(|r| parse_cell(&r[c], &outlier_column)).collect::<CliResult<Vec<f64>>>()?;
            let indexed: Vec<usize> = (0..table.rows.len()).collect();
            outlier_filter(&indexed, |&i| values[i])
        }
        Err(_) => outlier_filter(&(0..table.rows.len()).collect::<Vec<_>>(), |_| 0.0),
    };
    let rows: Vec<&Vec<String>> = filtered.kept.iter().map(|&i| &table.rows[i]).collect();

    let (names, design, y_name): (Vec<String>, Vec<Vec<f64>>, String) = match model.as_str() {
        "features" => {
            let y_name = p.y.get_or_insert_with(|| "relative_error".into()).clone();
            let mc = table.column("motif")?;
            let design = rows
                .iter()
                .map(|r| {
                    let symbols = r[mc].bytes().map(|b| b.wrapping_sub(b'0')).collect();
                    let f = motif_features(&Motif::new(symbols, 2).map_err(|_| invalid(format!("bad motif '{}'", r[mc])))?)?;
                    let (d, l) = (f.d_neel as f64, f.n_like as f64);
                    Ok(vec![1.0, d, l, d * l])
                })
                .collect::<CliResult<Vec<_>>>()?;
            (FEATURE_NAMES.iter().map(|s| s.to_string()).collect(), design, y_name)
        }
        "columns" => {
            let y_name = p.y.clone().ok_or_else(|| invalid("the columns model needs a response column"))?;
            let xs = p.x.clone().filter(|x| !x.is_empty()).ok_or_else(|| invalid("the columns model needs regressor columns"))?;
            let intercept = *p.intercept.get_or_insert(true);
            let idx = xs.iter().map(|x| table.column(x)).collect::<CliResult<Vec<_>>>()?;
            let design = rows
                .iter()
                .map(|r| {
                    let mut row = if intercept { vec![1.0] } else { Vec::new() };
                    for (&c, x) in idx.iter().zip(&xs) {
                        row.push(parse_cell(&r[c], x)?);
                    }
                    Ok(row)
                })
                .collect::<CliResult<Vec<_>>>()?;
            let mut names = if intercept { vec!["Intercept".to_string()] } else { Vec::new() };
            names.extend(xs);
            (names, design, y_name)
        }
        other => return Err(invalid(format!("unknown model '{other}'"))),
    };
    let yc = table.column(&y_name)?;
    let y = rows.iter().map(|r| Ok(scale * parse_cell(&r[yc], &y_name)?)).collect::<CliResult<Vec<f64>>>()?;
    let name_refs: Vec<&str> = names.iter().map(String::as_str).collect();
    let fit = ols_regress(&name_refs, &design, &y)?;

    let mut run = Run::open("regress", seed, &p, out)?;
    let rows: Vec<Vec<String>> = (0..fit.names.len())
        .map(|i| {
            vec![
                fit.names[i].clone(),
                num(fit.coefficients[i]),
                num(fit.std_errors[i]),
                num(fit.t_values[i]),
                fit.stars[i].to_string(),
            ]
        })
        .collect();
    run.write_csv("coefficients.csv", &["name", "estimate", "std_error", "t_value", "stars"], &rows)?;
    run.write("table.txt", fit.to_table().as_bytes())?;
    run.write_json(
        "regression.json",
        &json!({ "model": model, "y": y_name, "rows": table.rows.len(), "outliers_removed": filtered.removed, "fit": fit }),
    )?;
    run.finish()
}
