#![allow(dead_code)]

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use ttns_sketch::tensor::{full_svd, Matrix};
use ttns_sketch::{DenseTensor, PairwiseMRF, RootedTree, ThreeTensor};

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

/// Random recursive tree: node `k > 1` attaches to a uniform earlier node.
pub fn random_tree(d: usize, rng: &mut ChaCha8Rng) -> RootedTree {
    let edges: Vec<(usize, usize)> = (2..=d).map(|k| (k, rng.random_range(1..k))).collect();
    let root = rng.random_range(1..=d);
    RootedTree::from_edges(d, &edges, root).unwrap()
}

pub fn random_matrix(rows: usize, cols: usize, rng: &mut ChaCha8Rng) -> Matrix {
    Matrix::from_fn(rows, cols, |_, _| rng.random::<f64>() * 2.0 - 1.0)
}

pub fn random_three(r1: usize, n: usize, r2: usize, rng: &mut ChaCha8Rng) -> ThreeTensor {
    ThreeTensor::from_fn(r1, n, r2, |_, _, _| rng.random::<f64>() * 2.0 - 1.0)
}

/// Random pairwise model on `tree` with potentials uniform in `[-1, 1)`.
pub fn random_tree_gm(tree: &RootedTree, n: &[usize], beta: f64, rng: &mut ChaCha8Rng) -> PairwiseMRF {
    let edges = tree.undirected_edges();
    let tables = edges.iter().map(|&(i, j)| random_matrix(n[i - 1], n[j - 1], rng)).collect();
    PairwiseMRF::new(n.to_vec(), beta, &edges, tables).unwrap()
}

/// Rank of the `subtree(k) | rest` unfolding of `p`, per node.
pub fn unfolding_ranks(p: &DenseTensor, tree: &RootedTree) -> Vec<usize> {
    tree.nodes()
        .map(|k| {
            if tree.is_root(k) {
                return 1;
            }
            let rows: Vec<usize> = tree.subtree(k).iter().map(|v| v - 1).collect();
            let cols: Vec<usize> = tree.non_descendants(k).iter().map(|v| v - 1).collect();
            let s = full_svd(&p.unfold(&rows, &cols).unwrap()).sigma;
            s.iter().filter(|&&v| v > 1e-12 * s[0]).count()
        })
        .collect()
}

pub fn median(values: &[f64]) -> f64 {
    ttns_sketch::experiment::median(values)
}

/// Total variation between two tables of equal length.
pub fn tv(p: &[f64], q: &[f64]) -> f64 {
    0.5 * p.iter().zip(q).map(|(a, b)| (a - b).abs()).sum::<f64>()
}
