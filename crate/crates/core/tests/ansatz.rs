use approx::assert_relative_eq;
use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use spinmotif::ansatz::{
    cnn_logpsi, cnn_logpsi_motif_form, cnn_logpsi_with, cps_logpsi, grandsum, linear_activation_constancy_check,
    logpsi_gradient, maxent_logpsi, project_grandsum, Activation, CnnParams, CpsParams, MaxEntParams,
};
use spinmotif::exact::{exact_mev, ground_state};
use spinmotif::maxent::{fit_maxent, reduce_pair_multipliers};
use spinmotif::motif::{independent_operator_set, motif_count, motif_vector};
use spinmotif::spinchain::{partition_classes, Basis, SpinConfig, SymmetryOp};
use spinmotif::Error;

fn random_cnn(rng: &mut ChaCha8Rng, k: usize, m: usize) -> CnnParams {
    let w = (0..k * m).map(|_| rng.gen_range(-1.0..1.0)).collect();
    CnnParams::new(k, m, w, rng.gen_range(-1.0..1.0), rng.gen_range(-1.5..1.5)).unwrap()
}

fn random_state(rng: &mut ChaCha8Rng, n: usize, m: usize) -> SpinConfig {
    let mut sites: Vec<u8> = (0..n).map(|i| (i % m) as u8).collect();
    for i in (1..n).rev() {
        sites.swap(i, rng.gen_range(0..=i));
    }
    SpinConfig::new(sites, m).unwrap()
}

fn params() -> impl Strategy<Value = CnnParams> {
    (1usize..=4, 2usize..=3).prop_flat_map(|(k, m)| {
        (prop::collection::vec(-2.0..2.0f64, k * m), -2.0..2.0f64, -2.0..2.0f64)
            .prop_map(move |(w, b, v)| CnnParams::new(k, m, w, b, v).unwrap())
    })
}

fn two_label_params() -> impl Strategy<Value = CnnParams> {
    (1usize..=5).prop_flat_map(|k| {
        (prop::collection::vec(-2.0..2.0f64, 2 * k), -2.0..2.0f64, 0.1..2.0f64)
            .prop_map(move |(w, b, v)| CnnParams::new(k, 2, w, b, v).unwrap())
    })
}

fn flat(p: &CnnParams) -> Vec<f64> {
    let mut out = vec![p.v, p.b];
    out.extend_from_slice(p.w());
    out
}

fn unflat(p: &CnnParams, x: &[f64]) -> CnnParams {
    CnnParams::new(p.k(), p.m(), x[2..].to_vec(), x[1], x[0]).unwrap()
}

#[test]
fn zero_output_weight_gives_zero() {
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    let mut p = random_cnn(&mut rng, 3, 2);
    p.v = 0.0;
    for s in Basis::enumerate(8, 2).unwrap().iter() {
        assert_eq!(cnn_logpsi(&p, s), 0.0);
        let g = logpsi_gradient(&p, s);
        assert_eq!(g.b, 0.0);
        assert!(g.w.iter().all(|&x| x == 0.0));
    }
}

#[test]
fn dead_network_has_zero_gradient() {
    let p = CnnParams::new(3, 2, vec![-1.0; 6], -0.5, 1.3).unwrap();
    let s = SpinConfig::parse("00110101", 2).unwrap();
    let g = logpsi_gradient(&p, &s);
    assert_eq!(g.norm_max(), 0.0);
}

#[test]
fn motif_form_matches_over_many_draws() {
    let mut rng = ChaCha8Rng::seed_from_u64(2);
    for _ in 0..1000 {
        let m = rng.gen_range(2..=3);
        let n = m * rng.gen_range(2..=5);
        let k = rng.gen_range(1..=n.min(5));
        let p = random_cnn(&mut rng, k, m);
        let s = random_state(&mut rng, n, m);
        let counts = motif_vector(&s, k).unwrap();
        let direct = cnn_logpsi(&p, &s);
        let motif = cnn_logpsi_motif_form(&p, &counts).unwrap();
        assert!((direct - motif).abs() <= 1e-10 * (1.0 + direct.abs()));
        assert_eq!(cps_logpsi(&CpsParams::from_cnn(&p), &counts).unwrap(), motif);
    }
}

#[test]
fn motif_form_edge_cases() {
    let p = CnnParams::new(2, 2, vec![0.5, -0.2, 0.1, 0.3], 0.25, 1.5).unwrap();
    assert_eq!(cnn_logpsi_motif_form(&p, &[0, 0, 0, 0]).unwrap(), 0.0);
    // only motif 00 present, preactivation 0.5 + 0.1 + 0.25
    assert_relative_eq!(cnn_logpsi_motif_form(&p, &[6, 0, 0, 0]).unwrap(), 6.0 * 1.5 * 0.85, max_relative = 1e-14);
    assert!(matches!(cnn_logpsi_motif_form(&p, &[1, 2, 3]), Err(Error::DimensionMismatch { expected: 4, actual: 3 })));

    let zero = CpsParams::new(2, 2, vec![0.0; 4]).unwrap();
    assert_eq!(cps_logpsi(&zero, &[1, 2, 3, 4]).unwrap(), 0.0);
}

#[test]
fn gradient_matches_central_differences() {
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    let h = 1e-6;
    let mut checked = 0;
    while checked < 100 {
        let k = rng.gen_range(1..=4);
        let p = random_cnn(&mut rng, k, 2);
        let s = random_state(&mut rng, 10, 2);
        let near_kink = (0..10).any(|i| p.window_preactivation(s.sites(), i).abs() < 1e-3);
        if near_kink {
            continue;
        }
        checked += 1;
        let analytic = logpsi_gradient(&p, &s).to_vec();
        let x = flat(&p);
        for i in 0..x.len() {
            let (mut up, mut down) = (x.clone(), x.clone());
            up[i] += h;
            down[i] -= h;
            let fd = (cnn_logpsi(&unflat(&p, &up), &s) - cnn_logpsi(&unflat(&p, &down), &s)) / (2.0 * h);
            assert!((fd - analytic[i]).abs() <= 1e-4 * (1.0 + fd.abs()), "param {i}: fd {fd} vs {}", analytic[i]);
        }
    }
}

#[test]
fn grandsum_examples() {
    assert_eq!(grandsum(&CnnParams::zeros(3, 2)).unwrap(), 0.0);
    assert_eq!(grandsum(&CnnParams::new(3, 2, vec![1.0; 6], -3.0, 1.0).unwrap()).unwrap(), 0.0);
    assert!(matches!(grandsum(&CnnParams::zeros(2, 3)), Err(Error::RequiresTwoSpecies(3))));

    let mut rng = ChaCha8Rng::seed_from_u64(4);
    let p = random_cnn(&mut rng, 4, 2);
    let mut naive = 2.0 * p.b;
    for j in 0..4 {
        for l in 0..2u8 {
            naive += p.weight(j, l);
        }
    }
    assert_relative_eq!(grandsum(&p).unwrap(), naive, max_relative = 1e-14);

    let ones = CnnParams::new(2, 2, vec![1.0; 4], 0.0, 0.7).unwrap();
    let projected = project_grandsum(&ones).unwrap();
    assert_eq!(projected.w(), &[0.0; 4]);
    assert_eq!((projected.b, projected.v), (0.0, 0.7));
}

#[test]
fn relabel_symmetry_after_projection() {
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    let swap = SymmetryOp::swap_labels();
    for n in [8, 10, 12] {
        let basis = Basis::enumerate(n, 2).unwrap();
        for k in 2..=4 {
            for _ in 0..10 {
                let p = project_grandsum(&random_cnn(&mut rng, k, 2)).unwrap();
                for s in basis.iter() {
                    assert!((cnn_logpsi(&p, &swap.apply(s)) - cnn_logpsi(&p, s)).abs() < 1e-9);
                }
            }
        }
    }
}

#[test]
fn linear_activation_is_constant() {
    let mut rng = ChaCha8Rng::seed_from_u64(6);
    let basis = Basis::enumerate(6, 2).unwrap();
    assert_eq!(basis.len(), 20);
    for k in 1..=4 {
        let p = random_cnn(&mut rng, k, 2);
        let expected = linear_activation_constancy_check(&p, 6);
        for s in basis.iter() {
            assert_relative_eq!(cnn_logpsi_with(&p, s.sites(), Activation::Linear), expected, max_relative = 1e-12);
        }
        let centered = project_grandsum(&p).unwrap();
        assert!(linear_activation_constancy_check(&centered, 6).abs() < 1e-12);
        for s in basis.iter() {
            assert!(cnn_logpsi_with(&centered, s.sites(), Activation::Linear).abs() < 1e-12);
        }
    }
}

#[test]
fn maxent_uniform_state() {
    let basis = Basis::enumerate(8, 2).unwrap();
    let mut p = MaxEntParams::new(2, 2, vec![0, 1], vec![0.0, 0.0], 0.0).unwrap();
    let counts: Vec<Vec<u32>> = basis.iter().map(|s| motif_vector(s, 2).unwrap()).collect();
    p.normalize(counts.iter().map(Vec::as_slice));
    assert_relative_eq!(p.ln_z, (basis.len() as f64).sqrt().ln(), max_relative = 1e-14);
    let norm: f64 = counts.iter().map(|c| (2.0 * maxent_logpsi(&p, c).unwrap()).exp()).sum();
    assert_relative_eq!(norm, 1.0, max_relative = 1e-12);

    let support = independent_operator_set(3, 2).unwrap();
    let uniform: Vec<f64> = support
        .iter()
        .map(|&i| basis.iter().map(|s| motif_vector(s, 3).unwrap()[i] as f64).sum::<f64>() / basis.len() as f64)
        .collect();
    let fit = fit_maxent(&basis, 3, &support, &uniform).unwrap();
    assert!(fit.params.lambdas.iter().all(|l| l.abs() < 1e-10));
}

#[test]
fn maxent_pair_reduction() {
    let basis = Basis::enumerate(10, 2).unwrap();
    let full = [0.3, -0.7, 0.2, 1.1];
    let reduced = reduce_pair_multipliers(full);
    let all = MaxEntParams::new(2, 2, vec![0, 1, 2, 3], full.to_vec(), 0.0).unwrap();
    let pair = MaxEntParams::new(2, 2, vec![0, 1], reduced.to_vec(), 0.0).unwrap();
    for s in basis.iter() {
        let c = motif_vector(s, 2).unwrap();
        assert_relative_eq!(all.exponent(&c), pair.exponent(&c), max_relative = 1e-13);
        assert_eq!(cps_logpsi(&pair.as_cps(), &c).unwrap(), pair.exponent(&c));
    }
}

#[test]
fn maxent_reproduces_exact_targets() {
    let gs = ground_state(8, 2, true).unwrap();
    let basis = Basis::enumerate(8, 2).unwrap();
    for k in [2, 3] {
        let mev = exact_mev(&gs, k).unwrap().counts();
        let support = independent_operator_set(k, 2).unwrap();
        let targets: Vec<f64> = support.iter().map(|&i| mev[i]).collect();
        let fit = fit_maxent(&basis, k, &support, &targets).unwrap();
        assert!(fit.residual < 1e-8);
        // recompute expectations from the normalized model
        let counts: Vec<Vec<u32>> = basis.iter().map(|s| motif_vector(s, k).unwrap()).collect();
        for (j, &i) in support.iter().enumerate() {
            let e: f64 = counts
                .iter()
                .map(|c| (2.0 * maxent_logpsi(&fit.params, c).unwrap()).exp() * c[i] as f64)
                .sum();
            assert!((e - targets[j]).abs() < 1e-7);
        }
    }
}

#[test]
fn maxent_at_full_kernel_gives_class_probabilities() {
    let n = 8;
    let gs = ground_state(n, 2, true).unwrap();
    let basis = Basis::enumerate(n, 2).unwrap();
    let mev = exact_mev(&gs, n).unwrap().counts();
    let support = independent_operator_set(n, 2).unwrap();
    let targets: Vec<f64> = support.iter().map(|&i| mev[i]).collect();
    let fit = fit_maxent(&basis, n, &support, &targets).unwrap();

    let partition = partition_classes(&basis);
    let probs = gs.probabilities();
    for class in partition.classes() {
        let exact: f64 = class.iter().map(|&i| probs[i]).sum();
        let model: f64 = class
            .iter()
            .map(|&i| (2.0 * maxent_logpsi(&fit.params, &motif_vector(basis.get(i), n).unwrap()).unwrap()).exp())
            .sum();
        assert!((exact - model).abs() < 1e-8, "class mass {exact} vs {model}");
    }
    assert_eq!(motif_count(n, 2), 256);
}

proptest! {
    #[test]
    fn translation_invariant(p in params(), seed in any::<u64>(), t in 0usize..12) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let m = p.m();
        let s = random_state(&mut rng, m * 4, m);
        let shifted = SymmetryOp::Translate(t % s.len()).apply(&s);
        let (a, b) = (cnn_logpsi(&p, &shifted), cnn_logpsi(&p, &s));
        prop_assert!((a - b).abs() <= 1e-13 * (1.0 + b.abs()));
    }

    #[test]
    fn cps_embedding_is_exact(p in params(), seed in any::<u64>()) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let s = random_state(&mut rng, p.m() * 3, p.m());
        let counts = motif_vector(&s, p.k().min(s.len())).unwrap();
        prop_assume!(p.k() <= s.len());
        let direct = cnn_logpsi(&p, &s);
        let cps = cps_logpsi(&CpsParams::from_cnn(&p), &counts).unwrap();
        prop_assert!((direct - cps).abs() <= 1e-10 * (1.0 + direct.abs()));
        let doubled: Vec<u32> = counts.iter().map(|c| 2 * c).collect();
        let twice = cps_logpsi(&CpsParams::from_cnn(&p), &doubled).unwrap();
        prop_assert!((twice - 2.0 * cps).abs() <= 1e-12 * (1.0 + cps.abs()));
    }

    #[test]
    fn projection_zeroes_grandsum_and_is_idempotent(p in two_label_params()) {
        let once = project_grandsum(&p).unwrap();
        prop_assert!(grandsum(&once).unwrap().abs() < 1e-12);
        prop_assert_eq!((once.b, once.v), (p.b, p.v));
        let twice = project_grandsum(&once).unwrap();
        for (a, b) in once.w().iter().zip(twice.w()) {
            prop_assert!((a - b).abs() < 1e-15);
        }
    }

    #[test]
    fn projected_network_is_relabel_symmetric(p in two_label_params(), seed in any::<u64>()) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let p = project_grandsum(&p).unwrap();
        let s = random_state(&mut rng, 12, 2);
        let ls = SymmetryOp::swap_labels().apply(&s);
        prop_assert!((cnn_logpsi(&p, &ls) - cnn_logpsi(&p, &s)).abs() < 1e-9);
    }
}
