//! Plug-in mutual information, maximum-MI spanning trees and the
//! maximum-likelihood tree graphical model.

use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::models::tree_model_ttns;
use crate::samples::DiscreteSamples;
use crate::tensor::Matrix;
use crate::tree::{union_find, RootedTree};
use crate::ttns::Ttns;

/// Additive smoothing applied to empirical conditionals.
pub const SMOOTHING: f64 = 1e-9;

/// MI in nats of a joint count or probability table (rows: x_i, cols: x_j).
pub fn table_mi(table: &[f64], ni: usize, nj: usize) -> f64 {
    let total: f64 = table.iter().sum();
    if total <= 0.0 {
        return 0.0;
    }
    let mut row = vec![0.0; ni];
    let mut col = vec![0.0; nj];
    for a in 0..ni {
        for b in 0..nj {
            row[a] += table[a * nj + b];
            col[b] += table[a * nj + b];
        }
    }
    let mut mi = 0.0;
    for a in 0..ni {
        for b in 0..nj {
            let p = table[a * nj + b] / total;
            if p > 0.0 {
                mi += p * (p * total * total / (row[a] * col[b])).ln();
            }
        }
    }
    mi.max(0.0)
}

/// Plug-in mutual information of nodes `i`, `j` (1-based), in nats.
pub fn empirical_mi(samples: &DiscreteSamples, i: usize, j: usize) -> f64 {
    let counts: Vec<f64> = samples.pair_counts(i, j).into_iter().map(|c| c as f64).collect();
    let n = samples.state_counts();
    table_mi(&counts, n[i - 1], n[j - 1])
}

/// Symmetric `d x d` matrix with zero diagonal; entry `(i-1, j-1)`.
#[derive(Clone, Debug, PartialEq)]
pub struct MiMatrix {
    d: usize,
    values: Vec<f64>,
}

impl MiMatrix {
    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.values[(i - 1) * self.d + (j - 1)]
    }

    pub fn d(&self) -> usize {
        self.d
    }

    pub fn to_matrix(&self) -> Matrix {
        Matrix::from_row_slice(self.d, self.d, &self.values)
    }

    pub fn to_csv(&self) -> String {
        let mut s = String::new();
        for r in self.values.chunks(self.d) {
            let line: Vec<String> = r.iter().map(|v| format!("{v:.17e}")).collect();
            s.push_str(&line.join(","));
            s.push('\n');
        }
        s
    }
}

pub fn mi_matrix(samples: &DiscreteSamples) -> MiMatrix {
    let d = samples.d();
    let pairs: Vec<(usize, usize)> = (1..=d).flat_map(|i| (i + 1..=d).map(move |j| (i, j))).collect();
    let mis: Vec<f64> = pairs.par_iter().map(|&(i, j)| empirical_mi(samples, i, j)).collect();
    let mut values = vec![0.0; d * d];
    for (&(i, j), &m) in pairs.iter().zip(&mis) {
        values[(i - 1) * d + (j - 1)] = m;
        values[(j - 1) * d + (i - 1)] = m;
    }
    MiMatrix { d, values }
}

/// Kruskal maximum spanning tree; equal weights are taken in lexicographic
/// `(min, max)` edge order.
pub fn max_spanning_tree(mi: &MiMatrix, root: usize) -> Result<RootedTree> {
    let d = mi.d();
    let mut pairs: Vec<(usize, usize)> = (1..=d).flat_map(|i| (i + 1..=d).map(move |j| (i, j))).collect();
    pairs.sort_by(|&a, &b| mi.get(b.0, b.1).total_cmp(&mi.get(a.0, a.1)).then(a.cmp(&b)));
    let mut join = union_find(d);
    let mut edges = Vec::with_capacity(d.saturating_sub(1));
    for (i, j) in pairs {
        if join(i - 1, j - 1) {
            edges.push((i, j));
            if edges.len() + 1 == d {
                break;
            }
        }
    }
    RootedTree::from_edges(d, &edges, root)
}

pub fn chow_liu_tree(samples: &DiscreteSamples, root: usize) -> Result<RootedTree> {
    max_spanning_tree(&mi_matrix(samples), root)
}

/// Maximum-likelihood tree graphical model on `tree`, smoothed by
/// [`SMOOTHING`], as an exact TTNS.
pub fn chow_liu_model(samples: &DiscreteSamples, tree: &RootedTree) -> Result<Ttns> {
    if tree.d() != samples.d() {
        return Err(Error::ShapeMismatch(format!("tree has {} nodes, samples {}", tree.d(), samples.d())));
    }
    let n = samples.state_counts();
    let r = tree.root();
    let rc = samples.counts(r);
    let total = samples.len() as f64 + SMOOTHING * n[r - 1] as f64;
    let root_marginal: Vec<f64> = rc.iter().map(|&c| (c as f64 + SMOOTHING) / total).collect();
    let cond: Vec<Option<Matrix>> = tree
        .nodes()
        .map(|k| {
            tree.parent(k).map(|p| {
                let (np, nk) = (n[p - 1], n[k - 1]);
                let counts = samples.pair_counts(p, k);
                let mut m = Matrix::from_fn(np, nk, |y, x| counts[y * nk + x] as f64 + SMOOTHING);
                for y in 0..np {
                    let z: f64 = m.row(y).sum();
                    m.row_mut(y).scale_mut(1.0 / z);
                }
                m
            })
        })
        .collect();
    tree_model_ttns(tree, n, &root_marginal, &cond)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn copy_gives_log2() {
        let rows: Vec<Vec<usize>> = (0..100).map(|i| vec![i % 2, i % 2]).collect();
        let s = DiscreteSamples::from_rows(vec![2, 2], &rows).unwrap();
        assert!((empirical_mi(&s, 1, 2) - 2f64.ln()).abs() < 1e-15);
    }

    #[test]
    fn constant_samples_give_star_at_one() {
        let s = DiscreteSamples::from_rows(vec![2; 5], &vec![vec![0; 5]; 10]).unwrap();
        let t = chow_liu_tree(&s, 1).unwrap();
        assert_eq!(t.undirected_edges(), vec![(1, 2), (1, 3), (1, 4), (1, 5)]);
        let two = DiscreteSamples::from_rows(vec![2; 2], &[vec![0, 1]]).unwrap();
        assert_eq!(chow_liu_tree(&two, 1).unwrap().undirected_edges(), vec![(1, 2)]);
    }

    #[test]
    fn single_row_model_is_normalized() {
        let s = DiscreteSamples::from_rows(vec![2, 3, 2], &[vec![1, 2, 0]]).unwrap();
        let tree = RootedTree::path(3, 1).unwrap();
        let m = chow_liu_model(&s, &tree).unwrap();
        let full = m.contract_full().unwrap();
        assert!((full.sum() - 1.0).abs() < 1e-12);
        assert!(full.get(&[1, 2, 0]) > 1.0 - 1e-6);
    }

    #[test]
    fn mi_matrix_symmetric() {
        let rows: Vec<Vec<usize>> = (0..200usize).map(|i| vec![i % 2, (i / 2) % 2, (i % 3).min(1)]).collect();
        let s = DiscreteSamples::from_rows(vec![2; 3], &rows).unwrap();
        let m = mi_matrix(&s);
        let mat = m.to_matrix();
        assert_eq!(mat, mat.transpose());
        assert!((0..3).all(|i| mat[(i, i)] == 0.0));
        assert_eq!(m.to_csv().lines().count(), 3);
    }
}
