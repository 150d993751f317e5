//! The sketching estimator: sketch accumulation (from samples or exactly
//! from a density), system forming by SVD, per-node least-squares solves and
//! rank estimation, plus the pseudo-inverse construction from full unfoldings.

use std::collections::BTreeMap;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::rng::{shard_count, SHARD_ROWS};
use crate::samples::DiscreteSamples;
use crate::sketch::{SketchConfig, SketchFunction};
use crate::tensor::{full_svd, kron, least_squares, pseudo_inverse, DenseTensor, Label, Labeled, Matrix, ThreeTensor};
use crate::tree::RootedTree;
use crate::ttns::Ttns;

/// Singular values at or below this fraction of `σ_1` count as zero.
pub const ZERO_SIGMA: f64 = 1e-14;

/// Sketched tensors `Ẑ_k` (node order) and `Ẑ_{w→parent(w)}` (at `w - 1`).
#[derive(Clone, Debug, PartialEq)]
pub struct SketchSet {
    nodes: Vec<ThreeTensor>,
    edges: Vec<Option<Matrix>>,
    samples: usize,
    exact: bool,
}

impl SketchSet {
    /// `Ẑ_k` with axes `(l_k, n_k, m_k)`.
    pub fn node(&self, k: usize) -> &ThreeTensor {
        &self.nodes[k - 1]
    }

    /// `Ẑ_{w→parent(w)}`, `l_w × m_w`; `None` at the root.
    pub fn edge(&self, w: usize) -> Option<&Matrix> {
        self.edges[w - 1].as_ref()
    }

    pub fn sample_count(&self) -> usize {
        self.samples
    }

    pub fn is_exact(&self) -> bool {
        self.exact
    }

    pub fn d(&self) -> usize {
        self.nodes.len()
    }

    /// Sketch of the union of both sample sets (sample-count weighted average).
    pub fn merge(&self, other: &SketchSet) -> Result<SketchSet> {
        if self.exact || other.exact {
            return Err(Error::InvalidArgument("exact sketches cannot be merged".into()));
        }
        if self.nodes.len() != other.nodes.len()
            || self.nodes.iter().zip(&other.nodes).any(|(a, b)| a.dims() != b.dims())
        {
            return Err(Error::ShapeMismatch("sketch sets differ in shape".into()));
        }
        let total = self.samples + other.samples;
        if total == 0 {
            return Ok(self.clone());
        }
        let (wa, wb) = (self.samples as f64 / total as f64, other.samples as f64 / total as f64);
        let nodes = self
            .nodes
            .iter()
            .zip(&other.nodes)
            .map(|(a, b)| {
                let (l, n, m) = a.dims();
                let data = a.data().iter().zip(b.data()).map(|(x, y)| wa * x + wb * y).collect();
                ThreeTensor::new(l, n, m, data).expect("same shape")
            })
            .collect();
        let edges = self
            .edges
            .iter()
            .zip(&other.edges)
            .map(|(a, b)| match (a, b) {
                (Some(a), Some(b)) => Some(a * wa + b * wb),
                _ => None,
            })
            .collect();
        Ok(SketchSet { nodes, edges, samples: total, exact: false })
    }

    /// Every sketched tensor multiplied by `c`.
    pub fn scaled(&self, c: f64) -> SketchSet {
        let nodes = self
            .nodes
            .iter()
            .map(|t| {
                let (l, n, m) = t.dims();
                ThreeTensor::new(l, n, m, t.data().iter().map(|v| c * v).collect()).expect("same shape")
            })
            .collect();
        let edges = self.edges.iter().map(|e| e.as_ref().map(|m| m * c)).collect();
        SketchSet { nodes, edges, samples: self.samples, exact: self.exact }
    }
}

struct Partial {
    nodes: Vec<Vec<f64>>,
    edges: Vec<Vec<f64>>,
}

fn node_dims(sk: &SketchFunction, k: usize) -> (usize, usize, usize) {
    (sk.node_left_dim(k), sk.state_counts()[k - 1], sk.right_dim(k))
}

impl Partial {
    fn zeros(sk: &SketchFunction) -> Partial {
        let tree = sk.tree();
        let nodes = tree
            .nodes()
            .map(|k| {
                let (l, n, m) = node_dims(sk, k);
                vec![0.0; l * n * m]
            })
            .collect();
        let edges = tree
            .nodes()
            .map(|w| if tree.is_root(w) { Vec::new() } else { vec![0.0; sk.left_dim(w) * sk.right_dim(w)] })
            .collect();
        Partial { nodes, edges }
    }

    fn add(&mut self, other: &Partial) {
        for (a, b) in self.nodes.iter_mut().zip(&other.nodes).chain(self.edges.iter_mut().zip(&other.edges)) {
            a.iter_mut().zip(b).for_each(|(x, y)| *x += y);
        }
    }
}

fn accumulate_rows(sk: &SketchFunction, samples: &DiscreteSamples, start: usize, end: usize) -> Partial {
    let tree = sk.tree();
    let n = sk.state_counts();
    let mut acc = Partial::zeros(sk);
    if sk.is_indicator() {
        let d = tree.d();
        let mut left = vec![0usize; d];
        let mut right = vec![0usize; d];
        for i in start..end {
            let row = samples.row(i);
            for k in tree.nodes() {
                if !tree.is_root(k) {
                    left[k - 1] = sk.left_index(k, row);
                    right[k - 1] = sk.right_index(k, row);
                }
            }
            for k in tree.nodes() {
                let beta = tree.children(k).iter().fold(0, |a, &c| a * sk.left_dim(c) + left[c - 1]);
                let m = sk.right_dim(k);
                acc.nodes[k - 1][(beta * n[k - 1] + row[k - 1] as usize) * m + right[k - 1]] += 1.0;
                if !tree.is_root(k) {
                    acc.edges[k - 1][left[k - 1] * m + right[k - 1]] += 1.0;
                }
            }
        }
    } else {
        for i in start..end {
            let row = samples.row(i);
            let msg = sk.messages(row);
            for k in tree.nodes() {
                let (nk, m) = (n[k - 1], sk.right_dim(k));
                let x = row[k - 1] as usize;
                let z = &mut acc.nodes[k - 1];
                let t = &msg.t[k - 1];
                for (beta, &s) in msg.s[k - 1].iter().enumerate() {
                    let o = (beta * nk + x) * m;
                    z[o..o + m].iter_mut().zip(t).for_each(|(a, &b)| *a += s * b);
                }
                if !tree.is_root(k) {
                    let e = &mut acc.edges[k - 1];
                    for (a, &s) in msg.left[k - 1].iter().enumerate() {
                        e[a * m..(a + 1) * m].iter_mut().zip(t).for_each(|(v, &b)| *v += s * b);
                    }
                }
            }
        }
    }
    acc
}

fn check_compatible(samples: &DiscreteSamples, sk: &SketchFunction) -> Result<()> {
    if samples.state_counts() != sk.state_counts() {
        return Err(Error::ShapeMismatch(format!(
            "samples have state counts {:?}, sketch expects {:?}",
            samples.state_counts(),
            sk.state_counts()
        )));
    }
    Ok(())
}

/// Empirical sketches with the `1/N` normalization.
///
/// Rows are accumulated in fixed blocks of [`SHARD_ROWS`] that are reduced in
/// ascending order, so the result does not depend on the thread count.
pub fn sketch_from_samples(samples: &DiscreteSamples, sk: &SketchFunction) -> Result<SketchSet> {
    check_compatible(samples, sk)?;
    let rows = samples.len();
    let partials: Vec<Partial> = (0..shard_count(rows))
        .into_par_iter()
        .map(|s| accumulate_rows(sk, samples, s * SHARD_ROWS, ((s + 1) * SHARD_ROWS).min(rows)))
        .collect();
    let mut total = Partial::zeros(sk);
    for p in &partials {
        total.add(p);
    }
    Ok(finish(sk, total, rows, false))
}

/// [`sketch_from_samples`] on a dedicated pool of `workers` threads.
pub fn sketch_from_samples_with_workers(samples: &DiscreteSamples, sk: &SketchFunction, workers: usize) -> Result<SketchSet> {
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(workers.max(1))
        .build()
        .map_err(|e| Error::InvalidArgument(format!("thread pool: {e}")))?;
    pool.install(|| sketch_from_samples(samples, sk))
}

/// Divides accumulated sums by `samples` (exact sketches pass 0 and are kept).
fn finish(sk: &SketchFunction, p: Partial, samples: usize, exact: bool) -> SketchSet {
    let div = if samples == 0 { 1.0 } else { samples as f64 };
    let tree = sk.tree();
    let nodes = p
        .nodes
        .into_iter()
        .zip(tree.nodes())
        .map(|(mut v, k)| {
            v.iter_mut().for_each(|x| *x /= div);
            let (l, n, m) = node_dims(sk, k);
            ThreeTensor::new(l, n, m, v).expect("accumulated shape")
        })
        .collect();
    let edges = p
        .edges
        .into_iter()
        .zip(tree.nodes())
        .map(|(v, w)| {
            (!tree.is_root(w)).then(|| Matrix::from_row_slice(sk.left_dim(w), sk.right_dim(w), &v) / div)
        })
        .collect();
    SketchSet { nodes, edges, samples, exact }
}

/// A density given either as a dense tensor or as a TTNS.
#[derive(Clone, Copy, Debug)]
pub enum Density<'a> {
    Dense(&'a DenseTensor),
    Ttns(&'a Ttns),
}

impl<'a> From<&'a DenseTensor> for Density<'a> {
    fn from(p: &'a DenseTensor) -> Self {
        Density::Dense(p)
    }
}

impl<'a> From<&'a Ttns> for Density<'a> {
    fn from(p: &'a Ttns) -> Self {
        Density::Ttns(p)
    }
}

impl Density<'_> {
    fn state_counts(&self) -> &[usize] {
        match self {
            Density::Dense(p) => p.shape(),
            Density::Ttns(m) => m.state_counts(),
        }
    }

    /// Marginal over `vars` with axes in the listed order.
    fn marginal(&self, vars: &[usize]) -> Result<DenseTensor> {
        match self {
            Density::Dense(p) => p.marginal(&vars.iter().map(|v| v - 1).collect::<Vec<_>>()),
            Density::Ttns(m) => {
                let mut sorted = vars.to_vec();
                sorted.sort_unstable();
                let t = m.marginalize(&sorted)?;
                let perm: Vec<usize> = vars.iter().map(|v| sorted.binary_search(v).expect("listed")).collect();
                t.permuted(&perm)
            }
        }
    }
}

/// Noiseless sketches `Z*_k`, `Z*_{w→k}` of a density.
pub fn sketch_exact<'a>(p: impl Into<Density<'a>>, sk: &SketchFunction) -> Result<SketchSet> {
    let p = p.into();
    if p.state_counts() != sk.state_counts() {
        return Err(Error::ShapeMismatch("density and sketch have different state counts".into()));
    }
    let tree = sk.tree();
    let mut part = Partial::zeros(sk);
    if sk.is_indicator() {
        for k in tree.nodes() {
            let mut vars: Vec<usize> = Vec::new();
            for &c in tree.children(k) {
                vars.extend_from_slice(sk.left_vars(c).expect("indicator"));
            }
            vars.push(k);
            vars.extend_from_slice(sk.right_vars(k).expect("indicator"));
            part.nodes[k - 1] = p.marginal(&vars)?.into_data();
            if !tree.is_root(k) {
                let mut vars = sk.left_vars(k).expect("indicator").to_vec();
                vars.extend_from_slice(sk.right_vars(k).expect("indicator"));
                part.edges[k - 1] = p.marginal(&vars)?.into_data();
            }
        }
    } else {
        match p {
            Density::Dense(t) => perturbative_exact_dense(t, sk, &mut part)?,
            Density::Ttns(m) => perturbative_exact_ttns(m, sk, &mut part)?,
        }
    }
    Ok(finish(sk, part, 0, true))
}

/// Contraction of the sketch cores on a connected node set.
fn sketch_network(sk: &SketchFunction, member: &[bool]) -> Labeled {
    let tree = sk.tree();
    tree.preorder().iter().filter(|&&j| member[j - 1]).fold(Labeled::scalar(1.0), |acc, &j| {
        acc.contract(&sk.labeled_core(j))
    })
}

fn order_for(tree: &RootedTree, k: usize) -> Vec<Label> {
    let mut order: Vec<Label> = tree.children(k).iter().map(|&c| Label::Aux(c)).collect();
    order.push(Label::Var(k));
    if !tree.is_root(k) {
        order.push(Label::Aux(k));
    }
    order
}

fn perturbative_exact_dense(p: &DenseTensor, sk: &SketchFunction, part: &mut Partial) -> Result<()> {
    let tree = sk.tree();
    let d = tree.d();
    if p.len() > crate::ttns::DENSE_LIMIT {
        return Err(Error::TooLarge { what: "dense density", size: p.len() as u128, limit: crate::ttns::DENSE_LIMIT as u128 });
    }
    let full = Labeled::new((1..=d).map(Label::Var).collect(), p.clone());
    let mask = |nodes: &[usize]| {
        let mut m = vec![false; d];
        nodes.iter().for_each(|&j| m[j - 1] = true);
        m
    };
    let below: Vec<Option<Labeled>> =
        tree.nodes().map(|w| (!tree.is_root(w)).then(|| sketch_network(sk, &mask(&tree.subtree(w))))).collect();
    let above: Vec<Option<Labeled>> =
        tree.nodes().map(|k| (!tree.is_root(k)).then(|| sketch_network(sk, &mask(&tree.non_descendants(k))))).collect();
    for k in tree.nodes() {
        let mut z = full.clone();
        for &c in tree.children(k) {
            z = z.contract(below[c - 1].as_ref().expect("non-root"));
        }
        if let Some(t) = &above[k - 1] {
            z = z.contract(t);
        }
        part.nodes[k - 1] = z.to_dense(&order_for(tree, k)).into_data();
        if let (Some(s), Some(t)) = (&below[k - 1], &above[k - 1]) {
            let e = full.contract(s).contract(&t.clone().relabel(Label::Aux(k), Label::Dual(k)));
            part.edges[k - 1] = e.to_dense(&[Label::Aux(k), Label::Dual(k)]).into_data();
        }
    }
    Ok(())
}

fn perturbative_exact_ttns(m: &Ttns, sk: &SketchFunction, part: &mut Partial) -> Result<()> {
    let tree = sk.tree();
    if m.tree() != tree {
        return Err(Error::ShapeMismatch("density and sketch live on different trees".into()));
    }
    let d = tree.d();
    // upward: E_w over subtree(w), labels (Bond(w), Aux(w))
    let mut up: Vec<Option<Labeled>> = vec![None; d];
    for &w in tree.postorder().iter() {
        if tree.is_root(w) {
            continue;
        }
        let mut e = m.labeled_core(w);
        for &c in tree.children(w) {
            e = e.contract(up[c - 1].as_ref().expect("child first"));
        }
        up[w - 1] = Some(e.contract(&sk.labeled_core(w)));
    }
    // downward: D_k over R(k), labels (Bond(k), Aux(k))
    let mut down: Vec<Option<Labeled>> = vec![None; d];
    for &k in tree.preorder() {
        for &c in tree.children(k) {
            let mut e = m.labeled_core(k);
            for &o in tree.children(k) {
                if o != c {
                    e = e.contract(up[o - 1].as_ref().expect("computed"));
                }
            }
            if let Some(dk) = &down[k - 1] {
                e = e.contract(dk);
            }
            down[c - 1] = Some(e.contract(&sk.labeled_core(k)));
        }
    }
    for k in tree.nodes() {
        let mut z = m.labeled_core(k);
        for &c in tree.children(k) {
            z = z.contract(up[c - 1].as_ref().expect("computed"));
        }
        if let Some(dk) = &down[k - 1] {
            z = z.contract(dk);
        }
        part.nodes[k - 1] = z.to_dense(&order_for(tree, k)).into_data();
        if let (Some(e), Some(dk)) = (&up[k - 1], &down[k - 1]) {
            let z = e.contract(&dk.clone().relabel(Label::Aux(k), Label::Dual(k)));
            part.edges[k - 1] = z.to_dense(&[Label::Aux(k), Label::Dual(k)]).into_data();
        }
    }
    Ok(())
}

/// Sketched core-determining systems `A_k G_k = B_k`.
#[derive(Clone, Debug)]
pub struct CdeSystem {
    tree: RootedTree,
    ranks: Vec<usize>,
    a: Vec<Matrix>,
    b: Vec<ThreeTensor>,
    q: Vec<Matrix>,
    a_edges: Vec<Option<Matrix>>,
    spectra: Vec<Vec<f64>>,
}

impl CdeSystem {
    pub fn a(&self, k: usize) -> &Matrix {
        &self.a[k - 1]
    }

    pub fn b(&self, k: usize) -> &ThreeTensor {
        &self.b[k - 1]
    }

    pub fn q(&self, k: usize) -> &Matrix {
        &self.q[k - 1]
    }

    /// `Ẑ_{w→parent(w)} Q_w`.
    pub fn a_edge(&self, w: usize) -> Option<&Matrix> {
        self.a_edges[w - 1].as_ref()
    }

    /// Full singular spectrum of `Ẑ_k`'s `(β, x; γ)` unfolding.
    pub fn spectrum(&self, k: usize) -> &[f64] {
        &self.spectra[k - 1]
    }

    /// Rank of edge `(k, parent(k))`; 1 at the root.
    pub fn rank(&self, k: usize) -> usize {
        self.ranks[k - 1]
    }

    pub fn tree(&self) -> &RootedTree {
        &self.tree
    }

    /// Largest entrywise gap between `A_{w→k}` and its recursive form
    /// `map_w · B_w`, over the edges where the sketch admits one.
    pub fn recursive_discrepancy(&self, sk: &SketchFunction) -> Option<f64> {
        let mut worst: Option<f64> = None;
        for w in self.tree.nodes() {
            let (Some(a), Some(map)) = (self.a_edge(w), sk.recursive_edge_map(w)) else { continue };
            let alt = map * self.b[w - 1].left_unfolding();
            let gap = (a - alt).abs().max();
            worst = Some(worst.map_or(gap, |g: f64| g.max(gap)));
        }
        worst
    }
}

/// Per-node singular spectra of the sketched unfoldings (the root has one value).
pub fn sketch_spectra(zs: &SketchSet) -> Vec<Vec<f64>> {
    zs.nodes.par_iter().map(|z| full_svd(&z.left_unfolding()).sigma).collect()
}

/// Ranks per node index `k - 1` (edge `(k, parent(k))`, root entry ignored).
pub fn system_forming(zs: &SketchSet, tree: &RootedTree, ranks: &[usize]) -> Result<CdeSystem> {
    let d = tree.d();
    if zs.d() != d || ranks.len() != d {
        return Err(Error::ShapeMismatch(format!("{} sketches and {} ranks for {d} nodes", zs.d(), ranks.len())));
    }
    let formed: Vec<(ThreeTensor, Matrix, Vec<f64>)> = tree
        .nodes()
        .collect::<Vec<_>>()
        .into_par_iter()
        .map(|k| {
            let z = zs.node(k);
            let (l, n, m) = z.dims();
            let svd = full_svd(&z.left_unfolding());
            if tree.is_root(k) {
                return Ok((z.clone(), Matrix::from_element(1, 1, 1.0), svd.sigma));
            }
            let r = ranks[k - 1];
            let max = (l * n).min(m);
            if r == 0 || r > max {
                return Err(Error::RankTooLarge { node: k, rank: r, max });
            }
            let s1 = svd.sigma[0];
            if let Some(i) = (0..r).find(|&i| !(svd.sigma[i] > ZERO_SIGMA * s1)) {
                return Err(Error::ZeroSingularValue { node: k, index: i + 1 });
            }
            let u = svd.u.columns(0, r).into_owned();
            let b = ThreeTensor::new(l, n, r, u.transpose().as_slice().to_vec()).expect("U shape");
            let mut q = svd.v.columns(0, r).into_owned();
            for j in 0..r {
                q.column_mut(j).scale_mut(1.0 / svd.sigma[j]);
            }
            Ok((b, q, svd.sigma))
        })
        .collect::<Result<_>>()?;
    let mut b = Vec::with_capacity(d);
    let mut q = Vec::with_capacity(d);
    let mut spectra = Vec::with_capacity(d);
    for (bk, qk, s) in formed {
        b.push(bk);
        q.push(qk);
        spectra.push(s);
    }
    let a_edges: Vec<Option<Matrix>> = tree
        .nodes()
        .map(|w| zs.edge(w).map(|e| e * &q[w - 1]))
        .collect();
    let a = tree
        .nodes()
        .map(|k| {
            tree.children(k)
                .iter()
                .fold(Matrix::from_element(1, 1, 1.0), |acc, &c| kron(&acc, a_edges[c - 1].as_ref().expect("child edge")))
        })
        .collect();
    let mut rk: Vec<usize> = ranks.to_vec();
    rk[tree.root() - 1] = 1;
    Ok(CdeSystem { tree: tree.clone(), ranks: rk, a, b, q, a_edges, spectra })
}

/// Edge ranks from singular-value thresholding: the count of `σ_i > δ σ_1`
/// (or `σ_i > δ` when `absolute`), at least 1. Root entry is 1.
pub fn estimate_ranks(spectra: &[Vec<f64>], tree: &RootedTree, delta: f64, absolute: bool) -> Result<Vec<usize>> {
    if !(delta > 0.0) {
        return Err(Error::InvalidArgument(format!("rank threshold must be positive, got {delta}")));
    }
    Ok(tree
        .nodes()
        .map(|k| {
            if tree.is_root(k) {
                return 1;
            }
            let s = &spectra[k - 1];
            let cut = if absolute { delta } else { delta * s.first().copied().unwrap_or(0.0) };
            s.iter().filter(|&&v| v > cut).count().max(1)
        })
        .collect())
}

/// Per-node least-squares diagnostics.
#[derive(Clone, Debug, Serialize)]
pub struct SolveReport {
    pub condition: Vec<f64>,
    pub effective_rank: Vec<usize>,
    pub full_rank: Vec<bool>,
    pub residual: Vec<f64>,
}

/// Solves every node's system; leaves take `G_k = B_k`.
pub fn solve_cores(sys: &CdeSystem) -> Result<(Ttns, SolveReport)> {
    let tree = &sys.tree;
    let solved: Vec<(DenseTensor, f64, usize, bool, f64)> = tree
        .nodes()
        .collect::<Vec<_>>()
        .into_par_iter()
        .map(|k| {
            let b = &sys.b[k - 1];
            let (_, n, r) = b.dims();
            let mut shape: Vec<usize> = tree.children(k).iter().map(|&c| sys.ranks[c - 1]).collect();
            shape.push(n);
            if !tree.is_root(k) {
                shape.push(r);
            }
            if tree.is_leaf(k) {
                let g = DenseTensor::new(shape, b.data().to_vec())?;
                return Ok((g, 1.0, 1, true, 0.0));
            }
            let rhs = b.right_unfolding();
            let ls = least_squares(&sys.a[k - 1], &rhs)?;
            let residual = (&sys.a[k - 1] * &ls.x - &rhs).norm();
            let g = DenseTensor::new(shape, ls.x.transpose().as_slice().to_vec())?;
            Ok((g, ls.condition, ls.effective_rank, ls.full_rank, residual))
        })
        .collect::<Result<_>>()?;
    let mut cores = Vec::with_capacity(solved.len());
    let mut report = SolveReport { condition: vec![], effective_rank: vec![], full_rank: vec![], residual: vec![] };
    for (g, c, e, f, r) in solved {
        cores.push(g);
        report.condition.push(c);
        report.effective_rank.push(e);
        report.full_rank.push(f);
        report.residual.push(r);
    }
    Ok((Ttns::new(tree.clone(), cores)?, report))
}

/// How edge ranks are chosen. JSON: `{"fixed": 2}`, `{"capped": 8}`,
/// `{"per-edge": [...]}` or `{"delta": {"delta": 1e-3, "absolute": false}}`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum RankSpec {
    /// The same rank on every edge.
    Fixed(usize),
    /// Rank at index `k - 1` for edge `(k, parent(k))`.
    PerEdge(Vec<usize>),
    /// `min(r, largest admissible rank)` on every edge, where the admissible
    /// rank is bounded by the sketch dimensions and by the state counts on
    /// either side of the edge.
    Capped(usize),
    /// Singular-value thresholding.
    Delta {
        delta: f64,
        #[serde(default)]
        absolute: bool,
    },
}

#[derive(Clone, Debug)]
pub struct FitOptions {
    pub renormalize: bool,
}

impl Default for FitOptions {
    fn default() -> Self {
        FitOptions { renormalize: true }
    }
}

#[derive(Clone, Debug, Serialize)]
pub struct FitDiagnostics {
    pub sample_count: usize,
    pub eps: Option<f64>,
    /// Rank at `k - 1` of edge `(k, parent(k))`.
    pub ranks: Vec<usize>,
    pub spectra: Vec<Vec<f64>>,
    /// Discarded fraction of each node's sketch energy `Σ_{i>r} σ_i² / Σ σ_i²`.
    pub truncated_energy: Vec<f64>,
    pub solve: SolveReport,
    pub warnings: Vec<String>,
    pub mass_before_renormalize: f64,
}

#[derive(Clone, Debug)]
pub struct Fit {
    pub model: Ttns,
    pub diagnostics: FitDiagnostics,
}

fn resolve_ranks(spec: &RankSpec, spectra: &[Vec<f64>], zs: &SketchSet, tree: &RootedTree) -> Result<Vec<usize>> {
    // neither the sketch shape nor the unfolding of the density can exceed these
    let max = |k: usize| {
        let (l, n, m) = zs.node(k).dims();
        let states = |nodes: Vec<usize>| nodes.iter().fold(1u128, |a, &j| a.saturating_mul(zs.node(j).dims().1 as u128));
        let unfold = states(tree.subtree(k)).min(states(tree.non_descendants(k)));
        ((l * n).min(m) as u128).min(unfold) as usize
    };
    let ranks = match spec {
        RankSpec::Fixed(r) => tree.nodes().map(|k| if tree.is_root(k) { 1 } else { *r }).collect(),
        RankSpec::PerEdge(v) => {
            if v.len() != tree.d() {
                return Err(Error::ShapeMismatch(format!("{} ranks for {} nodes", v.len(), tree.d())));
            }
            let mut v = v.clone();
            v[tree.root() - 1] = 1;
            v
        }
        RankSpec::Capped(r) => tree.nodes().map(|k| if tree.is_root(k) { 1 } else { (*r).min(max(k)) }).collect(),
        RankSpec::Delta { delta, absolute } => estimate_ranks(spectra, tree, *delta, *absolute)?,
    };
    Ok(ranks)
}

/// Fits a TTNS on `tree` from samples.
pub fn ttns_sketch(
    samples: &DiscreteSamples,
    tree: &RootedTree,
    config: &SketchConfig,
    ranks: &RankSpec,
    options: &FitOptions,
) -> Result<Fit> {
    if samples.d() != tree.d() {
        return Err(Error::ShapeMismatch(format!("samples have {} variables, tree {}", samples.d(), tree.d())));
    }
    let sk = config.build(tree, samples.state_counts(), samples.len())?;
    let zs = sketch_from_samples(samples, &sk)?;
    fit_from_sketches(&zs, &sk, ranks, options)
}

/// System forming and solving for given sketches.
pub fn fit_from_sketches(zs: &SketchSet, sk: &SketchFunction, ranks: &RankSpec, options: &FitOptions) -> Result<Fit> {
    let tree = sk.tree();
    let spectra = sketch_spectra(zs);
    let ranks = resolve_ranks(ranks, &spectra, zs, tree)?;
    let sys = system_forming(zs, tree, &ranks)?;
    let (mut model, solve) = solve_cores(&sys)?;
    let mut warnings: Vec<String> = sk.warnings().to_vec();
    for (k, full) in solve.full_rank.iter().enumerate() {
        if !full {
            warnings.push(format!("node {}: A_k is rank deficient, minimum-norm solution used", k + 1));
        }
    }
    let truncated_energy = tree
        .nodes()
        .map(|k| {
            let s = &spectra[k - 1];
            let total: f64 = s.iter().map(|v| v * v).sum();
            let r = if tree.is_root(k) { s.len() } else { ranks[k - 1] };
            if total > 0.0 {
                s[r.min(s.len())..].iter().map(|v| v * v).sum::<f64>() / total
            } else {
                0.0
            }
        })
        .collect();
    let mass = model.total_mass();
    if options.renormalize {
        model.renormalize()?;
    }
    Ok(Fit {
        model,
        diagnostics: FitDiagnostics {
            sample_count: zs.sample_count(),
            eps: sk.eps(),
            ranks,
            spectra,
            truncated_energy,
            solve,
            warnings,
            mass_before_renormalize: mass,
        },
    })
}

/// Per-edge factors `p = Φ_k Ψ_k` of the `(subtree(k); R(k))` unfolding.
///
/// Rows of `Φ_k` follow `ord(k)`: the children's orders in ascending child
/// order, then `k`.
#[derive(Clone, Debug)]
pub struct EdgeDecomposition {
    pub order: Vec<Vec<usize>>,
    pub phi: Vec<Option<Matrix>>,
    pub psi: Vec<Option<Matrix>>,
    /// Frobenius norm of the discarded singular values per edge.
    pub tail: Vec<f64>,
}

impl EdgeDecomposition {
    /// `⊗_{c ∈ C(k)} Φ_c`, children ascending.
    pub fn phi_children(&self, tree: &RootedTree, k: usize) -> Matrix {
        tree.children(k)
            .iter()
            .fold(Matrix::from_element(1, 1, 1.0), |acc, &c| kron(&acc, self.phi[c - 1].as_ref().expect("non-root")))
    }
}

fn subtree_order(tree: &RootedTree) -> Vec<Vec<usize>> {
    let mut ord: Vec<Vec<usize>> = vec![Vec::new(); tree.d()];
    for &k in tree.postorder().iter() {
        let mut o: Vec<usize> = tree.children(k).iter().flat_map(|&c| ord[c - 1].clone()).collect();
        o.push(k);
        ord[k - 1] = o;
    }
    ord
}

/// Truncated SVD factors of every edge unfolding. `gauge` maps a node to an
/// invertible `r × r` matrix applied as `Φ R`, `R⁻¹ Ψ`.
pub fn edge_decomposition(
    p: &DenseTensor,
    tree: &RootedTree,
    ranks: &[usize],
    gauge: &BTreeMap<usize, Matrix>,
) -> Result<EdgeDecomposition> {
    if p.ndim() != tree.d() || ranks.len() != tree.d() {
        return Err(Error::ShapeMismatch("density, tree and ranks disagree on d".into()));
    }
    let order = subtree_order(tree);
    let d = tree.d();
    let mut phi = vec![None; d];
    let mut psi = vec![None; d];
    let mut tail = vec![0.0; d];
    for k in tree.nodes() {
        if tree.is_root(k) {
            continue;
        }
        let rows: Vec<usize> = order[k - 1].iter().map(|v| v - 1).collect();
        let cols: Vec<usize> = tree.non_descendants(k).iter().map(|v| v - 1).collect();
        let m = p.unfold(&rows, &cols)?;
        let r = ranks[k - 1];
        let max = m.nrows().min(m.ncols());
        if r == 0 || r > max {
            return Err(Error::RankTooLarge { node: k, rank: r, max });
        }
        let svd = full_svd(&m);
        let mut f = svd.u.columns(0, r).into_owned();
        for j in 0..r {
            f.column_mut(j).scale_mut(svd.sigma[j]);
        }
        let mut g = svd.v.columns(0, r).transpose();
        if let Some(rm) = gauge.get(&k) {
            let inv = rm
                .clone()
                .try_inverse()
                .ok_or_else(|| Error::InvalidArgument(format!("gauge of node {k} is singular")))?;
            f *= rm;
            g = inv * g;
        }
        tail[k - 1] = svd.sigma[r..].iter().map(|s| s * s).sum::<f64>().sqrt();
        phi[k - 1] = Some(f);
        psi[k - 1] = Some(g);
    }
    Ok(EdgeDecomposition { order, phi, psi, tail })
}

#[derive(Clone, Debug)]
pub struct CdeOracle {
    pub model: Ttns,
    pub decomposition: EdgeDecomposition,
    /// `‖contract_full(model) − p‖_F`.
    pub residual: f64,
}

/// Exact cores `G_k = Φ_{C(k)}^† Φ_k` from full unfoldings of `p`.
pub fn cde_oracle(p: &DenseTensor, tree: &RootedTree, ranks: &[usize]) -> Result<CdeOracle> {
    cde_oracle_gauged(p, tree, ranks, &BTreeMap::new())
}

pub fn cde_oracle_gauged(
    p: &DenseTensor,
    tree: &RootedTree,
    ranks: &[usize],
    gauge: &BTreeMap<usize, Matrix>,
) -> Result<CdeOracle> {
    let dec = edge_decomposition(p, tree, ranks, gauge)?;
    let n = p.shape();
    let mut cores = Vec::with_capacity(tree.d());
    for k in tree.nodes() {
        let nk = n[k - 1];
        let mut shape: Vec<usize> = tree.children(k).iter().map(|&c| ranks[c - 1]).collect();
        shape.push(nk);
        let (target, r) = if tree.is_root(k) {
            let rows: Vec<usize> = dec.order[k - 1].iter().map(|v| v - 1).collect();
            (p.unfold(&rows, &[])?, 1)
        } else {
            shape.push(ranks[k - 1]);
            (dec.phi[k - 1].clone().expect("non-root"), ranks[k - 1])
        };
        // Φ_k as (x_{L(k)}) × (x_k, α)
        let left: usize = target.len() / (nk * r);
        let data: Vec<f64> = target.transpose().as_slice().to_vec();
        let phi_k = Matrix::from_row_slice(left, nk * r, &data);
        let g = if tree.is_leaf(k) {
            phi_k
        } else {
            pseudo_inverse(&dec.phi_children(tree, k)) * phi_k
        };
        cores.push(DenseTensor::new(shape, g.transpose().as_slice().to_vec())?);
    }
    let model = Ttns::new(tree.clone(), cores)?;
    let full = model.contract_full()?;
    let residual = full.data().iter().zip(p.data()).map(|(a, b)| (a - b) * (a - b)).sum::<f64>().sqrt();
    Ok(CdeOracle { model, decomposition: dec, residual })
}
