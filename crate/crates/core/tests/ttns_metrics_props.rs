mod common;

use proptest::prelude::*;
use rand::seq::SliceRandom;
use rand::Rng;

use common::{random_tree, rng, tv};
use ttns_sketch::metrics::{kl_divergence, nll, rel_l2_error, rel_l2_error_with_method, Method};
use ttns_sketch::{preset_model, ttns_sketch, DenseTensor, FitOptions, PresetParams, RankSpec, RootedTree, SketchConfig, Ttns};

fn random_model(seed: u64, d_hi: usize, lo: f64) -> Ttns {
    let mut r = rng(seed);
    let d = r.random_range(1..=d_hi);
    let tree = random_tree(d, &mut r);
    let n: Vec<usize> = (0..d).map(|_| r.random_range(2..=3)).collect();
    let ranks: Vec<usize> = (0..d).map(|_| r.random_range(1..=3)).collect();
    Ttns::random(tree, &n, |k, _| ranks[k - 1], lo, 1.0, seed).unwrap()
}

fn index_of(shape: &[usize], mut flat: usize) -> Vec<usize> {
    let mut x = vec![0; shape.len()];
    for i in (0..shape.len()).rev() {
        x[i] = flat % shape[i];
        flat /= shape[i];
    }
    x
}

fn normalized(seed: u64, shape: &[usize]) -> DenseTensor {
    let mut r = rng(seed);
    let mut p = DenseTensor::from_fn(shape.to_vec(), |_| r.random::<f64>() + 1e-3);
    let z = p.sum();
    p.scale(1.0 / z);
    p
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(32))]

    #[test]
    fn evaluate_matches_full_contraction(seed in any::<u64>()) {
        let m = random_model(seed, 7, -1.0);
        let full = m.contract_full().unwrap();
        let mut r = rng(seed ^ 2);
        for _ in 0..100 {
            let x = index_of(full.shape(), r.random_range(0..full.len()));
            prop_assert!((m.evaluate(&x).unwrap() - full.get(&x)).abs() <= 1e-12);
        }
    }

    #[test]
    fn pair_marginals_sum_to_single_marginals(seed in any::<u64>()) {
        let m = random_model(seed, 7, 0.0);
        let d = m.d();
        prop_assume!(d >= 2);
        let mut r = rng(seed ^ 3);
        let i = r.random_range(1..d);
        let j = r.random_range(i + 1..=d);
        let pair = m.marginalize(&[i, j]).unwrap();
        let single = m.marginalize(&[i]).unwrap();
        let summed = pair.marginal(&[0]).unwrap();
        prop_assert!(summed.max_abs_diff(&single) <= 1e-10);
        let full = m.contract_full().unwrap();
        prop_assert!(full.marginal(&[i - 1, j - 1]).unwrap().max_abs_diff(&pair) <= 1e-10);
    }

    #[test]
    fn inner_product_is_symmetric_and_bilinear(seed in any::<u64>(), c in -3.0f64..3.0) {
        let a = random_model(seed, 6, -1.0);
        let mut r = rng(seed ^ 4);
        let ranks: Vec<usize> = (0..a.d()).map(|_| r.random_range(1..=3)).collect();
        let b = Ttns::random(a.tree().clone(), a.state_counts(), |k, _| ranks[k - 1], -1.0, 1.0, seed ^ 9).unwrap();
        let (fa, fb) = (a.contract_full().unwrap(), b.contract_full().unwrap());
        let dense: f64 = fa.data().iter().zip(fb.data()).map(|(x, y)| x * y).sum();
        let ab = a.inner_product(&b).unwrap();
        prop_assert!((ab - b.inner_product(&a).unwrap()).abs() <= 1e-10);
        prop_assert!((ab - dense).abs() <= 1e-10 * dense.abs().max(1.0));
        let mut scaled = b.clone();
        let root = b.tree().root();
        let core = b.core(root);
        scaled.set_core(root, DenseTensor::new(core.shape().to_vec(), core.data().iter().map(|v| c * v).collect()).unwrap()).unwrap();
        prop_assert!((a.inner_product(&scaled).unwrap() - c * ab).abs() <= 1e-10 * ab.abs().max(1.0));
    }

    #[test]
    fn entries_bounded_by_core_norms(seed in any::<u64>()) {
        let m = random_model(seed, 7, -1.0);
        let bound: f64 = m.tree().nodes().map(|k| m.three_view(k).norm()).product();
        let full = m.contract_full().unwrap();
        prop_assert!(full.data().iter().all(|v| v.abs() <= bound + 1e-12));
    }

    #[test]
    fn core_perturbations_propagate_boundedly(seed in any::<u64>(), scale in 1e-4f64..1e-1) {
        let m = random_model(seed, 6, -1.0);
        let mut r = rng(seed ^ 5);
        let mut pert = m.clone();
        let mut total = 0.0;
        for k in m.tree().nodes() {
            let core = m.core(k);
            let noise = DenseTensor::from_fn(core.shape().to_vec(), |_| scale * (2.0 * r.random::<f64>() - 1.0));
            let mut only = m.clone();
            only.set_core(k, noise.clone()).unwrap();
            total += only.three_view(k).norm() / m.three_view(k).norm();
            let sum = core.data().iter().zip(noise.data()).map(|(a, b)| a + b).collect();
            pert.set_core(k, DenseTensor::new(core.shape().to_vec(), sum).unwrap()).unwrap();
        }
        let prod: f64 = m.tree().nodes().map(|k| m.three_view(k).norm()).product();
        let gap = pert.contract_full().unwrap().max_abs_diff(&m.contract_full().unwrap());
        prop_assert!(gap <= prod * total * total.exp() + 1e-12);
    }

    #[test]
    fn rel_error_paths_agree(seed in any::<u64>()) {
        let a = random_model(seed, 8, 0.0);
        let b = Ttns::random(a.tree().clone(), a.state_counts(), |_, _| 2, 0.0, 1.0, seed ^ 1).unwrap();
        let (via_ttns, method) = rel_l2_error_with_method(&a, &b).unwrap();
        prop_assert_eq!(method, Method::TtnsContraction);
        let (fa, fb) = (a.contract_full().unwrap(), b.contract_full().unwrap());
        let (dense, method) = rel_l2_error_with_method(&fa, &fb).unwrap();
        prop_assert_eq!(method, Method::Dense);
        prop_assert!((via_ttns - dense).abs() <= 1e-8);
        // mixed arguments fall back to the dense path
        prop_assert!((rel_l2_error(&a, &fb).unwrap() - dense).abs() <= 1e-8);
    }

    #[test]
    fn kl_is_nonnegative_and_zero_on_equal(seed in any::<u64>(), ndim in 1usize..5) {
        let mut r = rng(seed);
        let shape: Vec<usize> = (0..ndim).map(|_| r.random_range(2..=3)).collect();
        let p = normalized(seed ^ 1, &shape);
        let q = normalized(seed ^ 2, &shape);
        prop_assert!(kl_divergence(&p, &q).unwrap() >= 0.0);
        prop_assert!(kl_divergence(&p, &p).unwrap().abs() <= 1e-12);
    }

    #[test]
    fn nll_ignores_row_order(seed in any::<u64>()) {
        let pr = preset_model("trident10", &PresetParams::default()).unwrap();
        let truth = pr.mrf.to_ttns(&pr.tree).unwrap();
        let s = pr.mrf.sample(500, seed).unwrap();
        let mut order: Vec<usize> = (0..500).collect();
        order.shuffle(&mut rng(seed));
        let a = nll(&truth, &s).unwrap().value;
        let b = nll(&truth, &s.select(&order)).unwrap().value;
        prop_assert!((a - b).abs() <= 1e-12);
    }
}

#[test]
fn kl_detects_different_tensors() {
    let p = normalized(1, &[2, 3]);
    let q = normalized(2, &[2, 3]);
    assert!(kl_divergence(&p, &q).unwrap() > 1e-6);
}

#[test]
fn dense_fallback_refuses_huge_tensors() {
    let tree = RootedTree::path(30, 1).unwrap();
    let a = Ttns::constant(tree.clone(), &[2; 30], 0.5).unwrap();
    let b = Ttns::constant(RootedTree::path(30, 30).unwrap(), &[2; 30], 0.5).unwrap();
    assert!(rel_l2_error(&a, &b).is_err());
    assert!(rel_l2_error(&a, &a).unwrap() < 1e-12);
}

#[test]
fn sampling_reproduces_model_marginals() {
    let pr = preset_model("dendrimer10", &PresetParams::default()).unwrap();
    let s = pr.mrf.sample(1 << 14, 2).unwrap();
    let fit = ttns_sketch(&s, &pr.tree, &SketchConfig::markov(), &RankSpec::Fixed(2), &FitOptions::default()).unwrap();
    let n_rows = 40_000;
    let (drawn, report) = fit.model.draw_samples(n_rows, 8).unwrap();
    assert!(report.clamped_fraction < 1e-3);
    let (again, _) = fit.model.draw_samples(n_rows, 8).unwrap();
    assert_eq!(drawn, again);
    for i in 1..=10 {
        for j in i + 1..=10 {
            let exact = fit.model.marginalize(&[i, j]).unwrap();
            let z: f64 = exact.data().iter().map(|v| v.max(0.0)).sum();
            let exact: Vec<f64> = exact.data().iter().map(|v| v.max(0.0) / z).collect();
            let emp: Vec<f64> = drawn.pair_counts(i, j).iter().map(|&c| c as f64 / n_rows as f64).collect();
            assert!(tv(&exact, &emp) <= 5.0 * (4.0 / n_rows as f64).sqrt(), "({i},{j})");
        }
    }
}

#[test]
fn point_mass_has_unit_norm() {
    let tree = random_tree(5, &mut rng(3));
    let m = Ttns::point_mass(tree, &[2; 5], &[0, 1, 0, 1, 1]).unwrap();
    assert_eq!(m.evaluate(&[0, 1, 0, 1, 1]).unwrap(), 1.0);
    assert_eq!(m.norm_squared().unwrap(), 1.0);
}
