//! Pairwise Markov random fields used as ground truth, exact sampling from
//! them, and exact TTNS forms of tree-structured models.

use std::collections::BTreeMap;
use std::f64::consts::FRAC_PI_2;

use rand::Rng;
use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::rng::{rng_for, shard_count, SHARD_ROWS};
use crate::samples::DiscreteSamples;
use crate::tensor::{increment, DenseTensor, Matrix};
use crate::tree::RootedTree;
use crate::ttns::{Ttns, DENSE_LIMIT};

/// `p(x) ∝ exp(-β Σ_{(i,j)} f_ij(x_i, x_j))` over a general interaction graph.
#[derive(Clone, Debug, PartialEq)]
pub struct PairwiseMRF {
    n: Vec<usize>,
    beta: f64,
    edges: Vec<(usize, usize)>,
    potentials: Vec<Matrix>,
    labels: Option<Vec<Vec<f64>>>,
}

impl PairwiseMRF {
    /// `tables[e]` is `f` for `edges[e]`, of shape `n_i x n_j`.
    pub fn new(n: Vec<usize>, beta: f64, edges: &[(usize, usize)], tables: Vec<Matrix>) -> Result<Self> {
        let d = n.len();
        if d == 0 || n.contains(&0) {
            return Err(Error::InvalidArgument("every variable needs at least one state".into()));
        }
        if !beta.is_finite() {
            return Err(Error::InvalidArgument("beta must be finite".into()));
        }
        if edges.len() != tables.len() {
            return Err(Error::ShapeMismatch(format!("{} edges but {} tables", edges.len(), tables.len())));
        }
        let mut norm: Vec<((usize, usize), Matrix)> = Vec::with_capacity(edges.len());
        for (&(i, j), t) in edges.iter().zip(tables) {
            for v in [i, j] {
                if v == 0 || v > d {
                    return Err(Error::NodeOutOfRange { node: v, d });
                }
            }
            if i == j {
                return Err(Error::SelfLoop(i));
            }
            if t.shape() != (n[i - 1], n[j - 1]) {
                return Err(Error::ShapeMismatch(format!(
                    "table for ({i}, {j}) is {:?}, expected {:?}",
                    t.shape(),
                    (n[i - 1], n[j - 1])
                )));
            }
            if t.iter().any(|v| !v.is_finite()) {
                return Err(Error::InvalidArgument(format!("table for ({i}, {j}) has non-finite entries")));
            }
            let key = (i.min(j), i.max(j));
            if norm.iter().any(|(k, _)| *k == key) {
                return Err(Error::InvalidArgument(format!("edge ({}, {}) listed twice", key.0, key.1)));
            }
            norm.push((key, if i < j { t } else { t.transpose() }));
        }
        norm.sort_by_key(|(k, _)| *k);
        let (edges, potentials) = norm.into_iter().unzip();
        Ok(PairwiseMRF { n, beta, edges, potentials, labels: None })
    }

    /// Ising model with spins ±1 (state 0 is -1) and `f = -x_i x_j`.
    pub fn ising(d: usize, edges: &[(usize, usize)], beta: f64) -> Result<Self> {
        let f = Matrix::from_row_slice(2, 2, &[-1.0, 1.0, 1.0, -1.0]);
        let mut m = Self::new(vec![2; d], beta, edges, vec![f; edges.len()])?;
        m.labels = Some(vec![vec![-1.0, 1.0]; d]);
        Ok(m)
    }

    /// 4-state clock model, angles `kπ/2`, `f = cos(x_i - x_j)`.
    pub fn clock(d: usize, edges: &[(usize, usize)], beta: f64) -> Result<Self> {
        let angles: Vec<f64> = (0..4).map(|k| k as f64 * FRAC_PI_2).collect();
        let f = Matrix::from_fn(4, 4, |a, b| (angles[a] - angles[b]).cos());
        let mut m = Self::new(vec![4; d], beta, edges, vec![f; edges.len()])?;
        m.labels = Some(vec![angles; d]);
        Ok(m)
    }

    pub fn d(&self) -> usize {
        self.n.len()
    }

    pub fn state_counts(&self) -> &[usize] {
        &self.n
    }

    pub fn beta(&self) -> f64 {
        self.beta
    }

    /// Interaction edges as `(min, max)`, sorted.
    pub fn edges(&self) -> &[(usize, usize)] {
        &self.edges
    }

    pub fn potential(&self, e: usize) -> &Matrix {
        &self.potentials[e]
    }

    /// State-value labels, when the model was built from a named alphabet.
    pub fn labels(&self) -> Option<&[Vec<f64>]> {
        self.labels.as_deref()
    }

    /// `-β Σ f` at a 0-based state.
    pub fn log_weight(&self, x: &[usize]) -> f64 {
        -self.beta
            * self
                .edges
                .iter()
                .zip(&self.potentials)
                .map(|(&(i, j), f)| f[(x[i - 1], x[j - 1])])
                .sum::<f64>()
    }

    /// The interaction graph rooted at `root`, when it is a spanning tree.
    pub fn interaction_tree(&self, root: usize) -> Option<RootedTree> {
        if self.edges.len() + 1 != self.d() {
            return None;
        }
        RootedTree::from_edges(self.d(), &self.edges, root).ok()
    }

    fn state_space(&self) -> Result<usize> {
        let size: u128 = self.n.iter().map(|&s| s as u128).product();
        if size > DENSE_LIMIT as u128 {
            return Err(Error::TooLarge { what: "state space", size, limit: DENSE_LIMIT as u128 });
        }
        Ok(size as usize)
    }

    /// Normalized joint probability tensor.
    pub fn full_tensor(&self) -> Result<DenseTensor> {
        let size = self.state_space()?;
        let mut logw = Vec::with_capacity(size);
        let mut x = vec![0usize; self.d()];
        for _ in 0..size {
            logw.push(self.log_weight(&x));
            increment(&mut x, &self.n);
        }
        let max = logw.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        let mut p: Vec<f64> = logw.iter().map(|l| (l - max).exp()).collect();
        let z: f64 = p.iter().sum();
        p.iter_mut().for_each(|v| *v /= z);
        DenseTensor::new(self.n.clone(), p)
    }

    /// Exact factors of a tree-structured model rooted as `tree`.
    fn tree_factors(&self, tree: &RootedTree) -> Result<TreeFactors> {
        if tree.d() != self.d() || tree.undirected_edges() != self.edges {
            return Err(Error::NotATree(format!(
                "interaction edges {:?} differ from the tree edges {:?}",
                self.edges,
                tree.undirected_edges()
            )));
        }
        // psi[k] is exp(-β f) indexed (x_k, x_parent)
        let mut psi: Vec<Option<Matrix>> = vec![None; self.d()];
        for (&(i, j), f) in self.edges.iter().zip(&self.potentials) {
            let (c, table) = if tree.parent(i) == Some(j) { (i, f.clone()) } else { (j, f.transpose()) };
            psi[c - 1] = Some(table.map(|v| (-self.beta * v).exp()));
        }
        let mut h: Vec<Vec<f64>> = self.n.iter().map(|&s| vec![1.0; s]).collect();
        let mut cond: Vec<Option<Matrix>> = vec![None; self.d()];
        for &k in tree.postorder().iter() {
            let Some(p) = tree.parent(k) else { continue };
            let ps = psi[k - 1].as_ref().expect("edge table");
            let (nk, np) = (self.n[k - 1], self.n[p - 1]);
            let mut c = Matrix::zeros(np, nk);
            let mut msg = vec![0.0; np];
            for y in 0..np {
                for x in 0..nk {
                    c[(y, x)] = ps[(x, y)] * h[k - 1][x];
                }
                let z: f64 = c.row(y).sum();
                c.row_mut(y).scale_mut(1.0 / z);
                msg[y] = z;
            }
            let s: f64 = msg.iter().sum();
            for (hv, m) in h[p - 1].iter_mut().zip(&msg) {
                *hv *= m / s;
            }
            cond[k - 1] = Some(c);
        }
        let r = tree.root();
        let z: f64 = h[r - 1].iter().sum();
        let root_marginal = h[r - 1].iter().map(|v| v / z).collect();
        Ok(TreeFactors { root_marginal, cond })
    }

    /// `rows` i.i.d. samples: ancestral sampling on tree interaction graphs,
    /// inverse-CDF sampling over the enumerated state space otherwise.
    pub fn sample(&self, rows: usize, seed: u64) -> Result<DiscreteSamples> {
        if let Some(tree) = self.interaction_tree(1) {
            let f = self.tree_factors(&tree)?;
            return Ok(f.sample(&tree, &self.n, rows, seed));
        }
        self.state_space().map_err(|_| {
            Error::InvalidArgument("loopy interaction graph with an intractable state space".into())
        })?;
        let p = self.full_tensor()?;
        let mut cdf = Vec::with_capacity(p.len());
        let mut acc = 0.0;
        for &v in p.data() {
            acc += v;
            cdf.push(acc);
        }
        let last = cdf.len() - 1;
        let strides = p.strides();
        let d = self.d();
        let data: Vec<u16> = (0..shard_count(rows))
            .into_par_iter()
            .flat_map_iter(|s| {
                let count = SHARD_ROWS.min(rows - s * SHARD_ROWS);
                let mut rng = rng_for(seed, s as u64);
                let mut out = Vec::with_capacity(count * d);
                for _ in 0..count {
                    let u = rng.random::<f64>() * acc;
                    let mut i = cdf.partition_point(|&c| c <= u).min(last);
                    for st in &strides {
                        out.push((i / st) as u16);
                        i %= st;
                    }
                }
                out
            })
            .collect();
        Ok(DiscreteSamples::from_raw(self.n.clone(), data))
    }

    /// Exact TTNS of a tree-structured model over `tree`, ranks `n_parent`.
    pub fn to_ttns(&self, tree: &RootedTree) -> Result<Ttns> {
        let f = self.tree_factors(tree)?;
        tree_model_ttns(tree, &self.n, &f.root_marginal, &f.cond)
    }
}

/// Root marginal and per-edge conditionals `cond[k][(x_parent, x_k)]`.
pub(crate) struct TreeFactors {
    pub root_marginal: Vec<f64>,
    pub cond: Vec<Option<Matrix>>,
}

impl TreeFactors {
    fn sample(&self, tree: &RootedTree, n: &[usize], rows: usize, seed: u64) -> DiscreteSamples {
        let d = tree.d();
        let cum = |w: &mut Vec<f64>| {
            let mut acc = 0.0;
            for v in w.iter_mut() {
                acc += *v;
                *v = acc;
            }
        };
        let mut root_cdf = self.root_marginal.clone();
        cum(&mut root_cdf);
        let cdfs: Vec<Option<Vec<Vec<f64>>>> = self
            .cond
            .iter()
            .map(|c| {
                c.as_ref().map(|m| {
                    (0..m.nrows())
                        .map(|y| {
                            let mut r: Vec<f64> = m.row(y).iter().copied().collect();
                            cum(&mut r);
                            r
                        })
                        .collect()
                })
            })
            .collect();
        let draw = |cdf: &[f64], rng: &mut rand_chacha::ChaCha8Rng| {
            let u = rng.random::<f64>() * cdf[cdf.len() - 1];
            cdf.partition_point(|&c| c <= u).min(cdf.len() - 1) as u16
        };
        let order = tree.preorder();
        let data: Vec<u16> = (0..shard_count(rows))
            .into_par_iter()
            .flat_map_iter(|s| {
                let count = SHARD_ROWS.min(rows - s * SHARD_ROWS);
                let mut rng = rng_for(seed, s as u64);
                let mut out = vec![0u16; count * d];
                for row in out.chunks_mut(d) {
                    for &k in order {
                        row[k - 1] = match tree.parent(k) {
                            None => draw(&root_cdf, &mut rng),
                            Some(p) => {
                                let c = cdfs[k - 1].as_ref().expect("conditional");
                                draw(&c[row[p - 1] as usize], &mut rng)
                            }
                        };
                    }
                }
                out
            })
            .collect();
        DiscreteSamples::from_raw(n.to_vec(), data)
    }
}

/// TTNS of `p(x) = p_root(x_root) Π_k cond_k(x_parent, x_k)` with bond
/// `(k, parent)` carrying the parent's state.
pub(crate) fn tree_model_ttns(
    tree: &RootedTree,
    n: &[usize],
    root_marginal: &[f64],
    cond: &[Option<Matrix>],
) -> Result<Ttns> {
    Ttns::from_fn(
        tree.clone(),
        n,
        |_, p| n[p - 1],
        |k, shape| {
            let m = tree.children(k).len();
            DenseTensor::from_fn(shape.to_vec(), |idx| {
                let x = idx[m];
                if idx[..m].iter().any(|&a| a != x) {
                    return 0.0;
                }
                match &cond[k - 1] {
                    None => root_marginal[x],
                    Some(c) => c[(idx[m + 1], x)],
                }
            })
        },
    )
}

/// A named benchmark: the model, the tree the TTNS is fitted on, and the
/// numeric-order path used as the alternative topology.
#[derive(Clone, Debug)]
pub struct ModelPreset {
    pub name: String,
    pub mrf: PairwiseMRF,
    pub tree: RootedTree,
    pub path_tree: Option<RootedTree>,
    /// Node sets for the custom indicator sketch, when the preset prescribes one.
    pub sketch_sets: Option<BTreeMap<usize, Vec<usize>>>,
}

#[derive(Clone, Debug, Default, PartialEq)]
pub struct PresetParams {
    pub d: Option<usize>,
    pub beta: Option<f64>,
}

pub const PRESET_NAMES: &[&str] = &[
    "trident10",
    "dendrimer10",
    "bipartite10",
    "nonlocal-clock",
    "nonlocal-clock-d8",
    "path-ising",
    "dendrimer94",
    "ring",
    "ring-d8",
];

pub const TRIDENT10_EDGES: [(usize, usize); 9] =
    [(1, 2), (2, 3), (3, 4), (4, 5), (5, 6), (6, 7), (4, 8), (8, 9), (9, 10)];
pub const DENDRIMER10_EDGES: [(usize, usize); 9] =
    [(1, 2), (2, 3), (2, 4), (4, 6), (5, 6), (6, 7), (4, 9), (8, 9), (9, 10)];
pub const BIPARTITE10_EDGES: [(usize, usize); 9] =
    [(1, 6), (2, 6), (2, 7), (3, 7), (3, 8), (4, 8), (4, 9), (5, 9), (5, 10)];

fn path_edges(d: usize) -> Vec<(usize, usize)> {
    (1..d).map(|i| (i, i + 1)).collect()
}

/// Center node 1 with three branches, each node branching in two per
/// generation, numbered breadth first.
pub fn dendrimer_edges(generations: usize) -> Vec<(usize, usize)> {
    let mut edges = Vec::new();
    let mut frontier = vec![1usize];
    let mut next = 2usize;
    for g in 0..generations {
        let branch = if g == 0 { 3 } else { 2 };
        let mut nf = Vec::new();
        for &v in &frontier {
            for _ in 0..branch {
                edges.push((v, next));
                nf.push(next);
                next += 1;
            }
        }
        frontier = nf;
    }
    edges
}

/// Custom sketch sets `{k-1, k, k+1} ∪ {1, d}` for the ring benchmark.
pub fn ring_sketch_sets(d: usize) -> BTreeMap<usize, Vec<usize>> {
    (1..=d)
        .map(|k| {
            let mut s = vec![1, d, k];
            if k > 1 {
                s.push(k - 1);
            }
            if k < d {
                s.push(k + 1);
            }
            s.sort_unstable();
            s.dedup();
            (k, s)
        })
        .collect()
}

pub fn preset_model(name: &str, params: &PresetParams) -> Result<ModelPreset> {
    let ising_beta = params.beta.unwrap_or(0.5);
    let tree_preset = |name: &str, d: usize, edges: &[(usize, usize)], path: bool| -> Result<ModelPreset> {
        Ok(ModelPreset {
            name: name.into(),
            mrf: PairwiseMRF::ising(d, edges, ising_beta)?,
            tree: RootedTree::from_edges(d, edges, 1)?,
            path_tree: if path { Some(RootedTree::path(d, 1)?) } else { None },
            sketch_sets: None,
        })
    };
    let fixed_d = |want: usize| -> Result<()> {
        match params.d {
            Some(d) if d != want => Err(Error::Config(format!("preset `{name}` has fixed d = {want}"))),
            _ => Ok(()),
        }
    };
    match name {
        "trident10" => {
            fixed_d(10)?;
            tree_preset(name, 10, &TRIDENT10_EDGES, true)
        }
        "dendrimer10" => {
            fixed_d(10)?;
            tree_preset(name, 10, &DENDRIMER10_EDGES, true)
        }
        "bipartite10" => {
            fixed_d(10)?;
            tree_preset(name, 10, &BIPARTITE10_EDGES, true)
        }
        "dendrimer94" => {
            fixed_d(94)?;
            tree_preset(name, 94, &dendrimer_edges(5), false)
        }
        "path-ising" => {
            let d = params.d.unwrap_or(100);
            if d < 2 {
                return Err(Error::Config("path-ising needs d >= 2".into()));
            }
            tree_preset(name, d, &path_edges(d), false)
        }
        "nonlocal-clock" | "nonlocal-clock-d8" => {
            let d = if name == "nonlocal-clock-d8" {
                fixed_d(8)?;
                8
            } else {
                params.d.unwrap_or(32)
            };
            if d < 3 {
                return Err(Error::Config("nonlocal-clock needs d >= 3".into()));
            }
            let mut edges = path_edges(d);
            edges.extend((1..d - 1).map(|i| (i, i + 2)));
            let tree = RootedTree::path(d, 1)?;
            Ok(ModelPreset {
                name: name.into(),
                mrf: PairwiseMRF::clock(d, &edges, params.beta.unwrap_or(0.25))?,
                path_tree: Some(tree.clone()),
                tree,
                sketch_sets: None,
            })
        }
        "ring" | "ring-d8" => {
            let d = if name == "ring-d8" {
                fixed_d(8)?;
                8
            } else {
                params.d.unwrap_or(16)
            };
            if d < 3 {
                return Err(Error::Config("ring needs d >= 3".into()));
            }
            let mut edges = path_edges(d);
            edges.push((1, d));
            let tree = RootedTree::path(d, 1)?;
            Ok(ModelPreset {
                name: name.into(),
                mrf: PairwiseMRF::ising(d, &edges, ising_beta)?,
                path_tree: Some(tree.clone()),
                tree,
                sketch_sets: Some(ring_sketch_sets(d)),
            })
        }
        other => Err(Error::UnknownPreset(other.into())),
    }
}
