mod common;

use common::*;
use dg_core::autodiff::{Graph, Tensor};
use dg_core::data::{gen_gaussian, load_mnist_dir, GaussianMixtureSpec, MnistSplit};
use dg_core::gambling::{brute_force_max, side_information_gain, JointDistribution, Simplex};
use dg_core::losses::gambler_loss;
use dg_core::nn::{init_params, ModelSpec};
use dg_core::selective::{risk_coverage_curve, top_k_uncertain, EvalSplit, Selector, SelectorScores};
use proptest::prelude::*;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

fn loss_of(z: &Tensor, labels: &[usize], o: f64) -> f64 {
    let mut g = Graph::new();
    let v = g.leaf(z.clone());
    let l = gambler_loss(&mut g, v, labels, o).unwrap();
    g.value(l).item()
}

#[test]
fn full_reservation_costs_exactly_ln_o() {
    for o in [1.1, 1.5, 2.2, 7.0] {
        let z = Tensor::matrix(1, 4, vec![0.0, 0.0, 0.0, 900.0]).unwrap();
        assert_eq!(loss_of(&z, &[1], o), o.ln());
    }
}

#[test]
fn payoff_limits_on_the_grid() {
    let mut rng = ChaCha8Rng::seed_from_u64(11);
    let resolution = 0.01;
    for m in [2usize, 3] {
        for _ in 0..4 {
            let p = Simplex::new(random_simplex(&mut rng, m)).unwrap();
            for o in [0.5, 0.9] {
                let best = brute_force_max(&p, &vec![o; m], resolution, true).unwrap();
                assert!(best.bet[m] >= 1.0 - resolution, "o = {o}: {:?}", best.bet);
            }
            for o in [m as f64 + 0.5, m as f64 + 1.0] {
                let best = brute_force_max(&p, &vec![o; m], resolution, true).unwrap();
                assert!(best.bet[m] <= resolution, "o = {o}: {:?}", best.bet);
            }
        }
    }
}

#[test]
fn planted_uncertain_points_are_found_first() {
    let n = 500;
    let planted = [17usize, 42, 230, 231, 499];
    let mut confidence = vec![1.0; n];
    for (k, &i) in planted.iter().enumerate() {
        confidence[i] = 0.1 * k as f64;
    }
    let scores = SelectorScores {
        selector: Selector::Gambler,
        confidence,
    };
    assert_eq!(top_k_uncertain(&scores, planted.len()).unwrap(), planted.to_vec());
}

#[test]
fn iid_halves_realize_target_coverage() {
    let mut rng = ChaCha8Rng::seed_from_u64(12);
    let n = 10_000;
    let conf = normal_vec(&mut rng, n, 1.0);
    let split = EvalSplit {
        predictions: vec![0; n],
        labels: vec![0; n],
        scores: SelectorScores {
            selector: Selector::Entropy,
            confidence: conf,
        },
    };
    let first: Vec<usize> = (0..n / 2).collect();
    let second: Vec<usize> = (n / 2..n).collect();
    let curve = risk_coverage_curve(&split.subset(&first), &split.subset(&second), &[1.0, 0.9, 0.8]).unwrap();
    for p in &curve.points {
        assert!((p.result.coverage - p.target_coverage).abs() <= 0.03, "{p:?}");
    }
}

#[test]
fn official_test_files_load_stably() {
    let dir = require_mnist();
    let a = load_mnist_dir(&dir, MnistSplit::Test).unwrap();
    let b = load_mnist_dir(&dir, MnistSplit::Test).unwrap();
    assert_eq!(a.len(), 10000);
    assert!(a.labels.iter().all(|&y| y <= 9));
    let checksum = |img: &[f64]| img.iter().map(|v| (v * 255.0).round() as u64).sum::<u64>();
    assert_eq!(checksum(a.image(0)), checksum(b.image(0)));
    assert_eq!(a.labels[0], 7);
}

#[test]
fn forward_and_backward_are_deterministic() {
    let model = init_params(&ModelSpec::synthetic(), 3).unwrap();
    let x = Tensor::matrix(4, 2, vec![0.1, -0.3, 1.2, 0.5, -2.0, 0.7, 0.0, 0.0]).unwrap();
    let run = || {
        let mut g = Graph::new();
        let xv = g.leaf(x.clone());
        let (z, params) = model.forward(&mut g, xv).unwrap();
        let l = gambler_loss(&mut g, z, &[0, 1, 1, 0], 1.5).unwrap();
        g.backward(l).unwrap();
        let grads: Vec<Vec<f64>> = params.iter().map(|&p| g.grad(p).data().to_vec()).collect();
        (g.value(l).item(), grads)
    };
    assert_eq!(run(), run());
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn side_information_matches_direct_mutual_information(seed in any::<u64>()) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let flat = random_simplex(&mut rng, 16);
        let rows: Vec<Vec<f64>> = flat.chunks(4).map(|c| c.to_vec()).collect();
        let odds: Vec<f64> = (0..4).map(|_| uniform(&mut rng, 1.1, 9.0)).collect();
        let gain = side_information_gain(&JointDistribution::from_rows(&rows).unwrap(), &odds).unwrap();
        prop_assert!((gain.rate_gain - mutual_information(&rows)).abs() <= 1e-9);
    }

    #[test]
    fn outliers_only_in_test_set(seed in any::<u64>()) {
        let (train, test) = gen_gaussian(&GaussianMixtureSpec::default(), seed).unwrap();
        prop_assert!((0..train.len()).all(|i| !train.is_ood(i)));
        prop_assert_eq!((0..test.len()).filter(|&i| test.is_ood(i)).count(), 1000);
    }

    #[test]
    fn gambler_loss_matches_direct_formula(seed in any::<u64>(), m in 2usize..8) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let batch = 5;
        let o = uniform(&mut rng, 1.01, m as f64);
        let labels: Vec<usize> = (0..batch).map(|i| (i + seed as usize) % m).collect();
        let z = Tensor::matrix(batch, m + 1, normal_vec(&mut rng, batch * (m + 1), 2.0)).unwrap();
        let direct = (0..batch).map(|i| naive_gambler_loss(z.row(i), labels[i], o)).sum::<f64>() / batch as f64;
        prop_assert!((loss_of(&z, &labels, o) - direct).abs() <= 1e-12);
    }
}
