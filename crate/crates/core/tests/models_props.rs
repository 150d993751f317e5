mod common;

use proptest::prelude::*;
use rand::seq::SliceRandom;
use rand::Rng;

use common::{random_tree, random_tree_gm, rng, tv, unfolding_ranks};
use ttns_sketch::chow_liu::{chow_liu_model, chow_liu_tree, mi_matrix};
use ttns_sketch::models::PRESET_NAMES;
use ttns_sketch::{preset_model, PresetParams};

proptest! {
    #![proptest_config(ProptestConfig::with_cases(32))]

    #[test]
    fn tree_gm_is_a_distribution_with_small_edge_ranks(seed in any::<u64>(), d in 2usize..8) {
        let mut r = rng(seed);
        let tree = random_tree(d, &mut r);
        let n: Vec<usize> = (0..d).map(|_| r.random_range(2..=3)).collect();
        let gm = random_tree_gm(&tree, &n, 1.0, &mut r);
        let p = gm.full_tensor().unwrap();
        prop_assert!(p.data().iter().all(|&v| v >= 0.0));
        prop_assert!((p.sum() - 1.0).abs() <= 1e-12);
        let ranks = unfolding_ranks(&p, &tree);
        for k in tree.nodes().filter(|&k| !tree.is_root(k)) {
            prop_assert!(ranks[k - 1] <= n[k - 1].min(n[tree.parent(k).unwrap() - 1]));
        }
        let t = gm.to_ttns(&tree).unwrap();
        prop_assert!(t.contract_full().unwrap().max_abs_diff(&p) <= 1e-12);
    }

    #[test]
    fn chow_liu_ignores_row_order(seed in any::<u64>()) {
        let pr = preset_model("dendrimer10", &PresetParams::default()).unwrap();
        let s = pr.mrf.sample(600, seed).unwrap();
        let mut order: Vec<usize> = (0..s.len()).collect();
        order.shuffle(&mut rng(seed));
        let shuffled = s.select(&order);
        let (a, b) = (mi_matrix(&s), mi_matrix(&shuffled));
        for i in 1..=10 {
            for j in 1..=10 {
                prop_assert_eq!(a.get(i, j), a.get(j, i));
                prop_assert!((a.get(i, j) - b.get(i, j)).abs() <= 1e-12);
            }
        }
        prop_assert_eq!(chow_liu_tree(&s, 1).unwrap(), chow_liu_tree(&shuffled, 1).unwrap());
    }

    #[test]
    fn chow_liu_model_is_normalized(seed in any::<u64>(), rows in 1usize..200) {
        let pr = preset_model("trident10", &PresetParams::default()).unwrap();
        let s = pr.mrf.sample(rows, seed).unwrap();
        let tree = chow_liu_tree(&s, 1).unwrap();
        let m = chow_liu_model(&s, &tree).unwrap();
        prop_assert!((m.contract_full().unwrap().sum() - 1.0).abs() <= 1e-10);
    }
}

#[test]
fn presets_are_reproducible() {
    for &name in PRESET_NAMES {
        let a = preset_model(name, &PresetParams::default()).unwrap();
        let b = preset_model(name, &PresetParams::default()).unwrap();
        assert_eq!(a.tree, b.tree, "{name}");
        assert_eq!(a.mrf.edges(), b.mrf.edges(), "{name}");
        assert_eq!(a.sketch_sets, b.sketch_sets, "{name}");
        assert_eq!(a.mrf.sample(50, 4).ok(), b.mrf.sample(50, 4).ok(), "{name}");
    }
    assert!(preset_model("no-such-model", &PresetParams::default()).is_err());
}

#[test]
fn sampler_pair_marginals_converge() {
    for name in ["trident10", "bipartite10", "nonlocal-clock-d8"] {
        let pr = preset_model(name, &PresetParams::default()).unwrap();
        let p = pr.mrf.full_tensor().unwrap();
        let n_rows = 20_000;
        let s = pr.mrf.sample(n_rows, 17).unwrap();
        let d = pr.mrf.d();
        for i in 1..=d {
            for j in i + 1..=d {
                let exact = p.marginal(&[i - 1, j - 1]).unwrap();
                let emp: Vec<f64> = s.pair_counts(i, j).iter().map(|&c| c as f64 / n_rows as f64).collect();
                let cells = exact.len() as f64;
                let t = tv(exact.data(), &emp);
                assert!(t <= 5.0 * (cells / n_rows as f64).sqrt(), "{name} ({i},{j}): {t}");
            }
        }
    }
}

#[test]
fn chow_liu_success_rate_grows_with_n() {
    let pr = preset_model("trident10", &PresetParams::default()).unwrap();
    let rates: Vec<usize> = [1 << 6, 1 << 8, 1 << 10, 1 << 12]
        .iter()
        .map(|&n| {
            (0..20u64)
                .filter(|&s| chow_liu_tree(&pr.mrf.sample(n, 40 + s).unwrap(), 1).unwrap().undirected_edges() == pr.tree.undirected_edges())
                .count()
        })
        .collect();
    assert!(rates.windows(2).all(|w| w[0] <= w[1]), "{rates:?}");
    assert_eq!(rates[3], 20);
}
