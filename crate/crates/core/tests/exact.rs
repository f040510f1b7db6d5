mod common;

use approx::assert_relative_eq;
use nalgebra::{DMatrix, SymmetricEigen};

use spinmotif::exact::{
    beta_objective, calibrate_beta, cft_mev, cumulative_class_mass, entanglement_spectrum, exact_mev, ground_state,
    ground_state_with, reduced_density_matrix, truncation_size, EntanglementModel, ExchangeHamiltonian,
    GroundStateOptions, SolverChoice, SolverKind, BETA_BRACKET,
};
use spinmotif::spinchain::{partition_classes, Basis, SymmetryOp};

/// Independent `rho_K` on sites `0..K` from the oracle ground vector.
fn oracle_rho(n: usize, k: usize) -> DMatrix<f64> {
    let (_, psi) = common::dense_ground(n, false);
    let states = common::bit_basis(n);
    let d = 1 << k;
    let mut rho = DMatrix::zeros(d, d);
    for (i, &a) in states.iter().enumerate() {
        for (j, &b) in states.iter().enumerate() {
            let env_mask = (1u32 << (n - k)) - 1;
            if a & env_mask == b & env_mask {
                rho[((a >> (n - k)) as usize, (b >> (n - k)) as usize)] += psi[i] * psi[j];
            }
        }
    }
    rho
}

/// `sum_i i (K - i) / K` times the swap of sites `i-1, i` on an open chain.
fn oracle_entanglement_hamiltonian(k: usize) -> DMatrix<f64> {
    let d = 1usize << k;
    let mut h = DMatrix::zeros(d, d);
    for c in 0..d {
        for i in 1..k {
            let weight = (i * (k - i)) as f64 / k as f64;
            let (bi, bj) = (k - i, k - i - 1);
            let swapped = if ((c >> bi) & 1) == ((c >> bj) & 1) { c } else { c ^ (1 << bi) ^ (1 << bj) };
            h[(swapped, c)] += weight;
        }
    }
    h
}

#[test]
fn hamiltonian_is_symmetric_and_matches_oracle() {
    for n in [2, 4, 6, 8] {
        for gauge in [false, true] {
            let basis = Basis::enumerate(n, 2).unwrap();
            let h = ExchangeHamiltonian::new(&basis, gauge).unwrap().to_dense();
            assert_eq!(h, h.transpose());
            if n > 2 {
                assert_eq!(h, common::dense_hamiltonian(n, gauge));
            }
        }
    }
}

#[test]
fn small_ground_energies() {
    let gs = ground_state(4, 2, false).unwrap();
    assert!((gs.e0 + 2.0).abs() < 1e-12);
    let two = ground_state(2, 2, false).unwrap();
    let eig = SymmetricEigen::new(ExchangeHamiltonian::new(&Basis::enumerate(2, 2).unwrap(), false).unwrap().to_dense());
    assert!((two.e0 - eig.eigenvalues.min()).abs() < 1e-12);
}

#[test]
fn ground_energy_matches_oracle_and_is_gauge_invariant() {
    for n in [4, 6, 8, 10, 12] {
        let (oracle, _) = common::dense_ground(n, false);
        let plain = ground_state(n, 2, false).unwrap();
        let gauged = ground_state(n, 2, true).unwrap();
        assert!((plain.e0 - oracle).abs() < 1e-10);
        assert!((gauged.e0 - oracle).abs() < 1e-10);
        assert!(gauged.residual < 1e-9 && plain.residual < 1e-9);
        let a = exact_mev(&plain, 4.min(n)).unwrap().probabilities;
        let b = exact_mev(&gauged, 4.min(n)).unwrap().probabilities;
        for (x, y) in a.iter().zip(&b) {
            assert!((x - y).abs() < 1e-10);
        }
    }
}

#[test]
fn dense_and_lanczos_agree() {
    let dense = ground_state_with(10, 2, true, &GroundStateOptions { solver: SolverChoice::Dense, ..Default::default() }).unwrap();
    let lanczos =
        ground_state_with(10, 2, true, &GroundStateOptions { solver: SolverChoice::Lanczos, ..Default::default() }).unwrap();
    assert_eq!((dense.solver, lanczos.solver), (SolverKind::Dense, SolverKind::Lanczos));
    assert!((dense.e0 - lanczos.e0).abs() < 1e-10);
    assert!((dense.emax - lanczos.emax).abs() < 1e-6);
    let overlap: f64 = dense.amplitudes.iter().zip(&lanczos.amplitudes).map(|(a, b)| a * b).sum();
    assert!((overlap - 1.0).abs() < 1e-9);
}

#[test]
fn gauged_ground_state_is_positive_and_symmetric() {
    for n in [4, 6, 8, 10, 12] {
        let gs = ground_state(n, 2, true).unwrap();
        assert!(gs.amplitudes.iter().all(|&a| a > 0.0));
        let norm: f64 = gs.amplitudes.iter().map(|a| a * a).sum();
        assert!((norm - 1.0).abs() < 1e-12);
        for g in [SymmetryOp::Translate(1), SymmetryOp::Reflect(0), SymmetryOp::swap_labels()] {
            for (i, s) in gs.basis.iter().enumerate() {
                let j = gs.basis.index_of(&g.apply(s)).unwrap();
                assert!((gs.amplitudes[i] - gs.amplitudes[j]).abs() < 1e-9);
            }
        }
    }
}

#[test]
fn reduced_density_matrix_properties() {
    let gs = ground_state(12, 2, true).unwrap();
    let rho = reduced_density_matrix(&gs, 4).unwrap();
    assert!((rho.trace() - 1.0).abs() < 1e-12);
    assert_eq!(rho.rho, rho.rho.transpose());
    let eig = SymmetricEigen::new(rho.rho.clone());
    assert!(eig.eigenvalues.min() >= -1e-10);
    let mev = exact_mev(&gs, 4).unwrap();
    assert!((mev.probabilities.iter().sum::<f64>() - 1.0).abs() < 1e-12);
    for (a, b) in rho.diagonal().iter().zip(&mev.probabilities) {
        assert!((a - b).abs() < 1e-14);
    }

    // diagonal vs direct window marginal; ungauged rho vs oracle
    let n = 8;
    let (_, psi) = common::dense_ground(n, false);
    let states = common::bit_basis(n);
    let plain = ground_state(n, 2, false).unwrap();
    for k in 1..=4 {
        let mut marginal = vec![0.0; 1 << k];
        for (i, &c) in states.iter().enumerate() {
            marginal[(c >> (n - k)) as usize] += psi[i] * psi[i];
        }
        let diag = exact_mev(&plain, k).unwrap().probabilities;
        for (a, b) in diag.iter().zip(&marginal) {
            assert!((a - b).abs() < 1e-12);
        }
        let ours = reduced_density_matrix(&plain, k).unwrap().rho;
        let oracle = oracle_rho(n, k);
        assert!((ours - oracle).abs().max() < 1e-12);
    }
}

#[test]
fn full_window_is_a_projector() {
    let gs = ground_state(6, 2, true).unwrap();
    let rho = reduced_density_matrix(&gs, 6).unwrap().rho;
    assert!((&rho * &rho - &rho).abs().max() < 1e-12);
    let spectrum = entanglement_spectrum(&reduced_density_matrix(&gs, 6).unwrap());
    assert!(spectrum[0].abs() < 1e-10);
}

#[test]
fn entanglement_spectrum_matches_dense_oracle() {
    let gs = ground_state(8, 2, false).unwrap();
    let spectrum = entanglement_spectrum(&reduced_density_matrix(&gs, 2).unwrap());
    let mut oracle: Vec<f64> =
        SymmetricEigen::new(oracle_rho(8, 2)).eigenvalues.iter().filter(|&&l| l > 1e-30).map(|l| -l.ln()).collect();
    oracle.sort_by(f64::total_cmp);
    assert_eq!(spectrum.len(), oracle.len());
    for (a, b) in spectrum.iter().zip(&oracle) {
        assert!((a - b).abs() < 1e-9);
    }
    let total: f64 = spectrum.iter().map(|e| (-e).exp()).sum();
    assert!((total - 1.0).abs() < 1e-12);
    assert!(spectrum.windows(2).all(|w| w[0] <= w[1]));
}

#[test]
fn truncation_examples() {
    assert_eq!(truncation_size(&[1.0; 100], 0.99).unwrap(), 99);
    assert_eq!(truncation_size(&[0.995, 0.003, 0.002], 0.99).unwrap(), 1);
    assert_eq!(truncation_size(&[0.2, 0.5, 0.3], 1.0).unwrap(), 3);
    assert!(truncation_size(&[1.0], 0.0).is_err());
    assert!(truncation_size(&[1.0], 1.5).is_err());
    assert!(truncation_size(&[-1.0, 2.0], 0.5).is_err());
}

#[test]
fn thermal_model_limits() {
    for k in 2..=5 {
        let hot = cft_mev(k, 2, 1e-9).unwrap();
        for p in &hot {
            assert!((p - 1.0 / (1 << k) as f64).abs() < 1e-8);
        }
        let oracle = oracle_entanglement_hamiltonian(k);
        let model = EntanglementModel::new(k, 2, 1.0).unwrap();
        assert!((&model.hamiltonian - &oracle).abs().max() < 1e-14);
        let rho = model.density_matrix();
        assert!((rho.trace() - 1.0).abs() < 1e-12);

        // zero temperature: diagonal of the ground-space projector
        let eig = SymmetricEigen::new(oracle);
        let e0 = eig.eigenvalues.min();
        let ground: Vec<usize> = (0..eig.eigenvalues.len()).filter(|&i| eig.eigenvalues[i] - e0 < 1e-9).collect();
        let mut projector = vec![0.0; 1 << k];
        for &c in &ground {
            for r in 0..projector.len() {
                projector[r] += eig.eigenvectors[(r, c)].powi(2) / ground.len() as f64;
            }
        }
        let cold = cft_mev(k, 2, 1e3).unwrap();
        for (a, b) in cold.iter().zip(&projector) {
            assert!((a - b).abs() < 1e-6);
        }
    }
    assert!(cft_mev(3, 2, 0.0).is_err());
    assert!(cft_mev(3, 2, -1.0).is_err());
}

#[test]
fn beta_calibration() {
    for beta in [0.3, 1.7, 4.2] {
        let reference = cft_mev(4, 2, beta).unwrap();
        let fitted = calibrate_beta(4, 2, &reference).unwrap();
        assert!((fitted - beta).abs() < 1e-6 * beta, "{fitted} vs {beta}");
    }

    let gs16 = ground_state(16, 2, true).unwrap();
    let reference = exact_mev(&gs16, 4).unwrap().probabilities;
    let grid: Vec<f64> = (0..=200)
        .map(|i| {
            let ln_beta = BETA_BRACKET.0.ln() + (BETA_BRACKET.1.ln() - BETA_BRACKET.0.ln()) * i as f64 / 200.0;
            beta_objective(4, 2, &reference, ln_beta.exp()).unwrap()
        })
        .collect();
    let argmin = (0..grid.len()).min_by(|&a, &b| grid[a].total_cmp(&grid[b])).unwrap();
    assert!(grid[..argmin].windows(2).all(|w| w[0] >= w[1]));
    assert!(grid[argmin..].windows(2).all(|w| w[0] <= w[1]));

    let b16 = calibrate_beta(4, 2, &reference).unwrap();
    let gs12 = ground_state(12, 2, true).unwrap();
    let b12 = calibrate_beta(4, 2, &exact_mev(&gs12, 4).unwrap().probabilities).unwrap();
    assert!((b12 - b16).abs() / b16 < 0.05, "beta {b12} vs {b16}");
}

#[test]
fn class_mass() {
    let gs = ground_state(4, 2, true).unwrap();
    let partition = partition_classes(&gs.basis);
    let masses: Vec<f64> =
        partition.classes().iter().map(|c| c.iter().map(|&i| gs.amplitudes[i].powi(2)).sum()).collect();
    let expected = if masses.iter().all(|&m| m > 0.0) { 2 } else { 1 };
    assert_eq!(cumulative_class_mass(&gs, &partition, 0.99).unwrap(), expected);

    let gs = ground_state(10, 2, true).unwrap();
    let partition = partition_classes(&gs.basis);
    let nonzero = partition
        .classes()
        .iter()
        .filter(|c| c.iter().map(|&i| gs.amplitudes[i].powi(2)).sum::<f64>() > 0.0)
        .count();
    assert_eq!(cumulative_class_mass(&gs, &partition, 1.0).unwrap(), nonzero);
}

#[test]
fn gap_estimate_is_a_lower_scale() {
    let gs = ground_state(8, 2, true).unwrap();
    let eig = SymmetricEigen::new(common::dense_hamiltonian(8, true));
    let mut values: Vec<f64> = eig.eigenvalues.iter().copied().collect();
    values.sort_by(f64::total_cmp);
    let hand = (values[values.len() - 1] - values[0]) / 70.0;
    assert_relative_eq!(gs.gap_estimate(), hand, max_relative = 1e-10);
    assert!(gs.gap_estimate() > 0.0);
    assert!(gs.gap_estimate() <= values[1] - values[0]);
    assert_relative_eq!(gs.e1, values[1], max_relative = 1e-10);
}
