//! Sketch functions: indicator sketches over node sets (Markov, L-Markov,
//! custom sets) and recursive perturbative sketches built from cores
//! `s_k = 1 + ε Δ_k`.
//!
//! Edge `(w, parent(w))` has a left dimension `l_w`; node `k` has a right
//! dimension `m_k` (1 at the root). The joint left index of a node merges
//! its children's left indices mixed-radix in ascending child order.

use std::collections::BTreeMap;

use rand::Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::rng::rng_for;
use crate::tensor::{DenseTensor, Label, Labeled, Matrix};
use crate::tree::RootedTree;
use crate::ttns::{contract_except, contract_leading, core_labels, core_shape};

/// Upper bound on any single sketch dimension.
pub const MAX_SKETCH_DIM: usize = 1 << 20;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum SketchKind {
    Markov,
    LMarkov,
    CustomSets,
    Perturbative,
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Perturbation {
    #[default]
    Uniform,
    Normal,
}

/// Optional `ε = c N^{-f}` schedule.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct EpsDecay {
    pub c: f64,
    pub f: f64,
}

/// The JSON sketch block: `{"kind", "L"?, "sets"?, "eps"?, "l"?, "seed"?}`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SketchConfig {
    pub kind: SketchKind,
    #[serde(rename = "L", default, skip_serializing_if = "Option::is_none")]
    pub cutoff: Option<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub sets: Option<BTreeMap<usize, Vec<usize>>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub eps: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub l: Option<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub seed: Option<u64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub perturbation: Option<Perturbation>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub decay: Option<EpsDecay>,
}

pub const DEFAULT_EPS: f64 = 0.05;
pub const DEFAULT_SKETCH_DIM: usize = 20;

impl SketchConfig {
    pub fn markov() -> Self {
        SketchConfig {
            kind: SketchKind::Markov,
            cutoff: None,
            sets: None,
            eps: None,
            l: None,
            seed: None,
            perturbation: None,
            decay: None,
        }
    }

    pub fn l_markov(cutoff: usize) -> Self {
        SketchConfig { kind: SketchKind::LMarkov, cutoff: Some(cutoff), ..Self::markov() }
    }

    pub fn custom_sets(sets: BTreeMap<usize, Vec<usize>>) -> Self {
        SketchConfig { kind: SketchKind::CustomSets, sets: Some(sets), ..Self::markov() }
    }

    pub fn perturbative(eps: f64, l: usize, seed: u64) -> Self {
        SketchConfig { kind: SketchKind::Perturbative, eps: Some(eps), l: Some(l), seed: Some(seed), ..Self::markov() }
    }

    /// Parses the CLI shorthand `markov`, `lmarkov:L` or `perturbative`.
    pub fn parse_short(s: &str) -> Result<Self> {
        match s {
            "markov" => Ok(Self::markov()),
            "perturbative" => Ok(Self::perturbative(DEFAULT_EPS, DEFAULT_SKETCH_DIM, 0)),
            _ => {
                let l = s
                    .strip_prefix("lmarkov:")
                    .and_then(|v| v.parse().ok())
                    .ok_or_else(|| Error::Config(format!("unknown sketch `{s}`")))?;
                Ok(Self::l_markov(l))
            }
        }
    }

    /// ε after applying the optional decay schedule for `n_samples` rows.
    pub fn resolved_eps(&self, n_samples: usize) -> f64 {
        match self.decay {
            Some(EpsDecay { c, f }) if n_samples > 0 => c * (n_samples as f64).powf(-f),
            _ => self.eps.unwrap_or(DEFAULT_EPS),
        }
    }

    pub fn build(&self, tree: &RootedTree, n: &[usize], n_samples: usize) -> Result<SketchFunction> {
        match self.kind {
            SketchKind::Markov => SketchFunction::markov(tree, n),
            SketchKind::LMarkov => {
                let l = self.cutoff.ok_or_else(|| Error::Config("l-markov sketch needs \"L\"".into()))?;
                SketchFunction::l_markov(tree, n, l)
            }
            SketchKind::CustomSets => {
                let sets = self.sets.as_ref().ok_or_else(|| Error::Config("custom-sets sketch needs \"sets\"".into()))?;
                SketchFunction::custom_sets(tree, n, sets)
            }
            SketchKind::Perturbative => SketchFunction::perturbative(
                tree,
                n,
                self.resolved_eps(n_samples),
                self.l.unwrap_or(DEFAULT_SKETCH_DIM),
                self.seed.unwrap_or(0),
                self.perturbation.unwrap_or_default(),
            ),
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
struct IndicatorSets {
    sets: Vec<Vec<usize>>,
    // variables of the left sketch on edge (w, parent(w)), at w - 1
    left_vars: Vec<Vec<usize>>,
    right_vars: Vec<Vec<usize>>,
}

#[derive(Clone, Debug, PartialEq)]
struct PerturbCores {
    eps: f64,
    cores: Vec<DenseTensor>,
    deltas: Vec<DenseTensor>,
}

#[derive(Clone, Debug, PartialEq)]
pub struct SketchFunction {
    kind: SketchKind,
    tree: RootedTree,
    n: Vec<usize>,
    left_dim: Vec<usize>,
    right_dim: Vec<usize>,
    indicator: Option<IndicatorSets>,
    perturb: Option<PerturbCores>,
    warnings: Vec<String>,
}

/// Sketch messages of one sample row.
#[derive(Clone, Debug, PartialEq)]
pub struct Messages {
    /// `S_{w→parent(w)}` at `w - 1` (empty at the root).
    pub left: Vec<Vec<f64>>,
    /// `S_k` over the joint child index (`[1.0]` at leaves).
    pub s: Vec<Vec<f64>>,
    /// `T_k` (`[1.0]` at the root).
    pub t: Vec<Vec<f64>>,
}

fn product(n: &[usize], vars: &[usize]) -> Result<usize> {
    let p: u128 = vars.iter().map(|&v| n[v - 1] as u128).product();
    if p > MAX_SKETCH_DIM as u128 {
        return Err(Error::TooLarge { what: "sketch dimension", size: p, limit: MAX_SKETCH_DIM as u128 });
    }
    Ok(p as usize)
}

fn intersect(a: &[usize], b: &[usize]) -> Vec<usize> {
    a.iter().copied().filter(|x| b.contains(x)).collect()
}

impl SketchFunction {
    pub fn markov(tree: &RootedTree, n: &[usize]) -> Result<Self> {
        let sets = tree
            .nodes()
            .map(|k| {
                let mut s = tree.neighbors(k);
                s.push(k);
                s.sort_unstable();
                s
            })
            .collect();
        let mut sk = Self::from_sets(tree, n, sets)?;
        sk.kind = SketchKind::Markov;
        Ok(sk)
    }

    /// Sets `S_k = {j : dist(j, k) <= cutoff}`.
    pub fn l_markov(tree: &RootedTree, n: &[usize], cutoff: usize) -> Result<Self> {
        if cutoff == 0 {
            return Err(Error::Config("L-Markov cutoff must be at least 1".into()));
        }
        let sets = tree
            .nodes()
            .map(|k| {
                let dist = tree.distances_from(k);
                tree.nodes().filter(|&j| dist[j - 1] <= cutoff).collect()
            })
            .collect();
        let mut sk = Self::from_sets(tree, n, sets)?;
        sk.kind = SketchKind::LMarkov;
        Ok(sk)
    }

    /// Explicit node sets; nodes without an entry get `{k} ∪ N(k)`.
    pub fn custom_sets(tree: &RootedTree, n: &[usize], sets: &BTreeMap<usize, Vec<usize>>) -> Result<Self> {
        for (&k, s) in sets {
            tree.check_node(k)?;
            for &j in s {
                tree.check_node(j)?;
            }
            if !s.contains(&k) {
                return Err(Error::Config(format!("sketch set of node {k} must contain {k}")));
            }
        }
        let all = tree
            .nodes()
            .map(|k| {
                let mut s = sets.get(&k).cloned().unwrap_or_else(|| {
                    let mut s = tree.neighbors(k);
                    s.push(k);
                    s
                });
                s.sort_unstable();
                s.dedup();
                s
            })
            .collect();
        let mut sk = Self::from_sets(tree, n, all)?;
        sk.kind = SketchKind::CustomSets;
        Ok(sk)
    }

    fn from_sets(tree: &RootedTree, n: &[usize], sets: Vec<Vec<usize>>) -> Result<Self> {
        if n.len() != tree.d() {
            return Err(Error::ShapeMismatch(format!("{} state counts for {} nodes", n.len(), tree.d())));
        }
        let d = tree.d();
        let mut left_vars = vec![Vec::new(); d];
        let mut right_vars = vec![Vec::new(); d];
        let mut left_dim = vec![1; d];
        let mut right_dim = vec![1; d];
        let mut warnings = Vec::new();
        for k in tree.nodes() {
            let rv = intersect(&sets[k - 1], &tree.non_descendants(k));
            right_dim[k - 1] = product(n, &rv)?;
            right_vars[k - 1] = rv;
            for &w in tree.children(k) {
                let lv = intersect(&sets[k - 1], &tree.subtree(w));
                left_dim[w - 1] = product(n, &lv)?;
                // recursive evaluation needs S_k ∩ L(w) ⊆ S_w
                let below = intersect(&sets[k - 1], &tree.descendants(w));
                let missing: Vec<usize> = below.iter().copied().filter(|v| !sets[w - 1].contains(v)).collect();
                if !missing.is_empty() {
                    warnings.push(format!(
                        "edge ({w}, {k}): nodes {missing:?} of S_{k} below {w} are not in S_{w}; sketch is not recursive"
                    ));
                }
                left_vars[w - 1] = lv;
            }
        }
        Ok(SketchFunction {
            kind: SketchKind::CustomSets,
            tree: tree.clone(),
            n: n.to_vec(),
            left_dim,
            right_dim,
            indicator: Some(IndicatorSets { sets, left_vars, right_vars }),
            perturb: None,
            warnings,
        })
    }

    /// Cores `s_k = 1 + ε Δ_k` with every sketch bond of size `l`.
    pub fn perturbative(
        tree: &RootedTree,
        n: &[usize],
        eps: f64,
        l: usize,
        seed: u64,
        perturbation: Perturbation,
    ) -> Result<Self> {
        if n.len() != tree.d() {
            return Err(Error::ShapeMismatch(format!("{} state counts for {} nodes", n.len(), tree.d())));
        }
        if !(eps.is_finite() && eps >= 0.0) {
            return Err(Error::Config(format!("perturbative scale must be finite and nonnegative, got {eps}")));
        }
        if l == 0 {
            return Err(Error::Config("sketch dimension l must be at least 1".into()));
        }
        let d = tree.d();
        let ranks = vec![l; d];
        let mut cores = Vec::with_capacity(d);
        let mut deltas = Vec::with_capacity(d);
        for k in tree.nodes() {
            let shape = core_shape(tree, n, &ranks, k);
            let mut rng = rng_for(seed, k as u64);
            let delta = DenseTensor::from_fn(shape, |_| match perturbation {
                Perturbation::Uniform => rng.random::<f64>(),
                Perturbation::Normal => rng.sample::<f64, _>(StandardNormal),
            });
            let mut s = delta.clone();
            s.data_mut().iter_mut().for_each(|v| *v = 1.0 + eps * *v);
            cores.push(s);
            deltas.push(delta);
        }
        let mut left_dim = vec![l; d];
        let mut right_dim = vec![l; d];
        left_dim[tree.root() - 1] = 1;
        right_dim[tree.root() - 1] = 1;
        Ok(SketchFunction {
            kind: SketchKind::Perturbative,
            tree: tree.clone(),
            n: n.to_vec(),
            left_dim,
            right_dim,
            indicator: None,
            perturb: Some(PerturbCores { eps, cores, deltas }),
            warnings: Vec::new(),
        })
    }

    pub fn kind(&self) -> SketchKind {
        self.kind
    }

    pub fn tree(&self) -> &RootedTree {
        &self.tree
    }

    pub fn state_counts(&self) -> &[usize] {
        &self.n
    }

    /// `l` of edge `(w, parent(w))`.
    pub fn left_dim(&self, w: usize) -> usize {
        self.left_dim[w - 1]
    }

    /// `l_k`: product of the child-edge left dimensions (1 at leaves).
    pub fn node_left_dim(&self, k: usize) -> usize {
        self.tree.children(k).iter().map(|&c| self.left_dim[c - 1]).product()
    }

    /// `m_k` (1 at the root).
    pub fn right_dim(&self, k: usize) -> usize {
        self.right_dim[k - 1]
    }

    pub fn warnings(&self) -> &[String] {
        &self.warnings
    }

    pub fn is_recursive(&self) -> bool {
        self.warnings.is_empty()
    }

    /// `S_k` for indicator kinds.
    pub fn set(&self, k: usize) -> Option<&[usize]> {
        self.indicator.as_ref().map(|i| i.sets[k - 1].as_slice())
    }

    /// Variables of the left sketch on edge `(w, parent(w))`.
    pub fn left_vars(&self, w: usize) -> Option<&[usize]> {
        self.indicator.as_ref().map(|i| i.left_vars[w - 1].as_slice())
    }

    pub fn right_vars(&self, k: usize) -> Option<&[usize]> {
        self.indicator.as_ref().map(|i| i.right_vars[k - 1].as_slice())
    }

    pub fn eps(&self) -> Option<f64> {
        self.perturb.as_ref().map(|p| p.eps)
    }

    /// Sketch core `s_k` (perturbative kind).
    pub fn core(&self, k: usize) -> Option<&DenseTensor> {
        self.perturb.as_ref().map(|p| &p.cores[k - 1])
    }

    /// Perturbation `Δ_k` (perturbative kind).
    pub fn delta(&self, k: usize) -> Option<&DenseTensor> {
        self.perturb.as_ref().map(|p| &p.deltas[k - 1])
    }

    pub(crate) fn is_indicator(&self) -> bool {
        self.indicator.is_some()
    }

    fn var_index(&self, vars: &[usize], row: &[u16]) -> usize {
        vars.iter().fold(0, |acc, &v| acc * self.n[v - 1] + row[v - 1] as usize)
    }

    /// One-hot position of the left sketch of edge `(w, parent(w))`.
    pub(crate) fn left_index(&self, w: usize, row: &[u16]) -> usize {
        let ind = self.indicator.as_ref().expect("indicator sketch");
        self.var_index(&ind.left_vars[w - 1], row)
    }

    pub(crate) fn right_index(&self, k: usize, row: &[u16]) -> usize {
        let ind = self.indicator.as_ref().expect("indicator sketch");
        self.var_index(&ind.right_vars[k - 1], row)
    }

    pub(crate) fn check_row(&self, row: &[u16], index: usize) -> Result<()> {
        if row.len() != self.n.len() {
            return Err(Error::ShapeMismatch(format!("row of length {}, expected {}", row.len(), self.n.len())));
        }
        for (k, (&v, &n)) in row.iter().zip(&self.n).enumerate() {
            if v as usize >= n {
                return Err(Error::StateOutOfRange { row: index + 1, node: k + 1, value: v as usize + 1, n });
            }
        }
        Ok(())
    }

    /// All sketch messages of one 0-based row, by one upward and one downward pass.
    pub fn eval_on_sample(&self, row: &[u16]) -> Result<Messages> {
        self.check_row(row, 0)?;
        Ok(self.messages(row))
    }

    pub(crate) fn messages(&self, row: &[u16]) -> Messages {
        let d = self.tree.d();
        let mut left: Vec<Vec<f64>> = vec![Vec::new(); d];
        let mut t: Vec<Vec<f64>> = vec![vec![1.0]; d];
        if self.indicator.is_some() {
            for k in self.tree.nodes() {
                if !self.tree.is_root(k) {
                    let mut v = vec![0.0; self.left_dim[k - 1]];
                    v[self.left_index(k, row)] = 1.0;
                    left[k - 1] = v;
                    let mut v = vec![0.0; self.right_dim[k - 1]];
                    v[self.right_index(k, row)] = 1.0;
                    t[k - 1] = v;
                }
            }
        } else {
            let p = self.perturb.as_ref().expect("perturbative sketch");
            let l = |k: usize| self.left_dim[k - 1];
            for &k in self.tree.postorder().iter() {
                if self.tree.is_root(k) {
                    continue;
                }
                let vecs: Vec<&[f64]> = self.tree.children(k).iter().map(|&c| left[c - 1].as_slice()).collect();
                left[k - 1] = contract_leading(slice_of(&p.cores[k - 1], self.n[k - 1], l(k), row[k - 1] as usize), &vecs);
            }
            for &k in self.tree.preorder() {
                let ch = self.tree.children(k);
                if ch.is_empty() {
                    continue;
                }
                let r = if self.tree.is_root(k) { 1 } else { l(k) };
                let slice = slice_of(&p.cores[k - 1], self.n[k - 1], r, row[k - 1] as usize);
                let mut dims: Vec<usize> = ch.iter().map(|&c| l(c)).collect();
                dims.push(r);
                for (j, &c) in ch.iter().enumerate() {
                    let mut vecs: Vec<&[f64]> = ch.iter().map(|&o| left[o - 1].as_slice()).collect();
                    vecs.push(&t[k - 1]);
                    let msg = contract_except(&slice, &dims, &vecs, j);
                    t[c - 1] = msg;
                }
            }
        }
        let s = self.tree.nodes().map(|k| outer(self.tree.children(k).iter().map(|&c| left[c - 1].as_slice()))).collect();
        Messages { left, s, t }
    }

    /// Sketch core labeled with `Aux` bonds.
    pub(crate) fn labeled_core(&self, k: usize) -> Labeled {
        let p = self.perturb.as_ref().expect("perturbative sketch");
        labeled_aux(&self.tree, k, p.cores[k - 1].clone())
    }

    /// For recursive sketches, the matrix mapping `(β_{C(w)}, x_w)` to the
    /// left index of edge `(w, parent(w))`: `Z_{w→k} = map · Z_w`.
    pub fn recursive_edge_map(&self, w: usize) -> Option<Matrix> {
        if self.tree.is_root(w) {
            return None;
        }
        let lw = self.node_left_dim(w);
        let nw = self.n[w - 1];
        let rows = self.left_dim[w - 1];
        match (&self.indicator, &self.perturb) {
            (Some(ind), _) => {
                // every variable of the edge sketch must be w or inside a child's left set
                let ch = self.tree.children(w);
                let target = &ind.left_vars[w - 1];
                for &v in target {
                    if v != w && !ch.iter().any(|&c| ind.left_vars[c - 1].contains(&v)) {
                        return None;
                    }
                }
                let mut m = Matrix::zeros(rows, lw * nw);
                let mut row = vec![0u16; self.n.len()];
                let child_dims: Vec<usize> = ch.iter().map(|&c| self.left_dim[c - 1]).collect();
                for col in 0..lw * nw {
                    let (mut beta, x) = (col / nw, col % nw);
                    row[w - 1] = x as u16;
                    for (j, &c) in ch.iter().enumerate().rev() {
                        let b = beta % child_dims[j];
                        beta /= child_dims[j];
                        // decode the child's left index into its variables
                        let mut rem = b;
                        for &v in ind.left_vars[c - 1].iter().rev() {
                            row[v - 1] = (rem % self.n[v - 1]) as u16;
                            rem /= self.n[v - 1];
                        }
                    }
                    m[(self.var_index(target, &row), col)] = 1.0;
                }
                Some(m)
            }
            (None, Some(p)) => {
                let c = &p.cores[w - 1];
                Some(Matrix::from_row_slice(lw * nw, rows, c.data()).transpose())
            }
            _ => None,
        }
    }
}

pub(crate) fn labeled_aux(tree: &RootedTree, k: usize, core: DenseTensor) -> Labeled {
    let labels = core_labels(tree, k)
        .into_iter()
        .map(|l| match l {
            Label::Bond(c) => Label::Aux(c),
            other => other,
        })
        .collect();
    Labeled::new(labels, core)
}

fn slice_of(core: &DenseTensor, n: usize, r: usize, x: usize) -> Vec<f64> {
    let data = core.data();
    let l = data.len() / (n * r);
    let mut out = Vec::with_capacity(l * r);
    for b in 0..l {
        let o = (b * n + x) * r;
        out.extend_from_slice(&data[o..o + r]);
    }
    out
}

/// Outer product of vectors, last fastest; `[1.0]` for none.
pub(crate) fn outer<'a>(vs: impl Iterator<Item = &'a [f64]>) -> Vec<f64> {
    let mut acc = vec![1.0];
    for v in vs {
        let mut next = Vec::with_capacity(acc.len() * v.len());
        for &a in &acc {
            next.extend(v.iter().map(|&b| a * b));
        }
        acc = next;
    }
    acc
}

/// `Z*_k` of a dense density under a perturbative sketch, assembled from the
/// power series over subsets `S ⊆ [d] \ {k}` instead of direct sketching.
/// Axes: child sketch bonds (ascending), `x_k`, parent sketch bond.
pub fn perturbative_series_oracle(p: &DenseTensor, sk: &SketchFunction, k: usize) -> Result<DenseTensor> {
    let tree = &sk.tree;
    let d = tree.d();
    tree.check_node(k)?;
    if d > 8 {
        return Err(Error::TooLarge { what: "subset series", size: 1u128 << (d - 1), limit: 1 << 7 });
    }
    let pt = sk.perturb.as_ref().ok_or_else(|| Error::InvalidArgument("series oracle needs a perturbative sketch".into()))?;
    if p.shape() != sk.n.as_slice() {
        return Err(Error::ShapeMismatch("density and sketch have different state counts".into()));
    }
    let others: Vec<usize> = tree.nodes().filter(|&j| j != k).collect();
    let full = Labeled::new((1..=d).map(Label::Var).collect(), p.clone());
    let l = |c: usize| sk.left_dim[c - 1];
    let mut order: Vec<Label> = tree.children(k).iter().map(|&c| Label::Aux(c)).collect();
    order.push(Label::Var(k));
    if !tree.is_root(k) {
        order.push(Label::Aux(k));
    }
    let mut total: Option<Labeled> = None;
    for mask in 0u32..(1 << others.len()) {
        let set: Vec<usize> = others.iter().enumerate().filter(|(i, _)| mask >> i & 1 == 1).map(|(_, &v)| v).collect();
        let in_set = |v: usize| set.contains(&v);
        let mut keep: Vec<usize> = set.clone();
        keep.push(k);
        let gone: Vec<Label> = tree.nodes().filter(|v| !keep.contains(v)).map(Label::Var).collect();
        let marg = full.sum_out(&gone);
        let mut delta = Labeled::scalar(1.0);
        for &u in &set {
            delta = delta.contract(&labeled_aux(tree, u, pt.deltas[u - 1].clone()));
        }
        // bonds from S to nodes outside S ∪ {k} meet all-ones cores: summed
        let mut summed = Vec::new();
        let mut factor = 1.0;
        for (c, par) in tree.edges() {
            let a = in_set(c) || c == k;
            let b = in_set(par) || par == k;
            if (in_set(c) && !b) || (in_set(par) && !a) {
                summed.push(Label::Aux(c));
            }
            if !a && !b {
                factor *= l(c) as f64;
            }
        }
        delta = delta.sum_out(&summed);
        let mut term = marg.contract(&delta);
        let mut extra = Vec::new();
        for &c in tree.children(k) {
            if !in_set(c) {
                extra.push((Label::Aux(c), l(c)));
            }
        }
        if let Some(par) = tree.parent(k) {
            if !in_set(par) {
                extra.push((Label::Aux(k), l(k)));
            }
        }
        term = term.broadcast(&extra).scale(factor * pt.eps.powi(set.len() as i32));
        total = Some(match total {
            None => term,
            Some(t) => t.add(&term),
        });
    }
    Ok(total.expect("at least the empty subset").to_dense(&order))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn trident() -> RootedTree {
        RootedTree::from_edges(10, &crate::models::TRIDENT10_EDGES, 1).unwrap()
    }

    #[test]
    fn markov_dims_and_one_hot_messages() {
        let t = trident();
        let n = vec![2; 10];
        let sk = SketchFunction::markov(&t, &n).unwrap();
        assert!(sk.is_recursive());
        assert_eq!(sk.left_dim(8), 2);
        assert_eq!(sk.node_left_dim(4), 4);
        assert_eq!(sk.right_dim(1), 1);
        let row: Vec<u16> = vec![1, 0, 1, 1, 0, 0, 1, 0, 1, 1];
        let m = sk.eval_on_sample(&row).unwrap();
        for w in 2..=10 {
            let mut want = vec![0.0; 2];
            want[row[w - 1] as usize] = 1.0;
            assert_eq!(m.left[w - 1], want);
        }
        assert_eq!(m.t[0], vec![1.0]);
        // node 4 has children 5 and 8
        assert_eq!(m.s[3], outer([m.left[4].as_slice(), m.left[7].as_slice()].into_iter()));
        assert!(matches!(sk.eval_on_sample(&[2; 10]), Err(Error::StateOutOfRange { .. })));
    }

    #[test]
    fn l1_equals_markov() {
        let t = trident();
        let n = vec![2; 10];
        let a = SketchFunction::markov(&t, &n).unwrap();
        let b = SketchFunction::l_markov(&t, &n, 1).unwrap();
        assert_eq!(a.indicator, b.indicator);
        assert_eq!((a.left_dim.clone(), a.right_dim.clone()), (b.left_dim.clone(), b.right_dim.clone()));
    }

    #[test]
    fn ring_sets_dims() {
        let d = 8;
        let t = RootedTree::path(d, 1).unwrap();
        let sk = SketchFunction::custom_sets(&t, &[2; 8], &crate::models::ring_sketch_sets(d)).unwrap();
        // node 4: child 5, parent 3; S_4 = {1, 3, 4, 5, 8}
        assert_eq!(sk.left_vars(5).unwrap(), &[5, 8]);
        assert_eq!(sk.right_vars(4).unwrap(), &[1, 3]);
        assert_eq!((sk.left_dim(5), sk.right_dim(4)), (4, 4));
        assert!(sk.is_recursive(), "{:?}", sk.warnings());
        let bad = BTreeMap::from([(2, vec![1, 3])]);
        assert!(matches!(SketchFunction::custom_sets(&t, &[2; 8], &bad), Err(Error::Config(_))));
    }

    #[test]
    fn non_recursive_sets_warn() {
        let t = RootedTree::path(4, 1).unwrap();
        // S_1 reaches node 4 below child 2, which S_2 lacks
        let sets = BTreeMap::from([(1, vec![1, 2, 4]), (2, vec![1, 2, 3])]);
        let sk = SketchFunction::custom_sets(&t, &[2; 4], &sets).unwrap();
        assert!(!sk.is_recursive());
        assert!(sk.recursive_edge_map(2).is_none());
    }

    #[test]
    fn perturbative_is_seeded() {
        let t = RootedTree::path(4, 2).unwrap();
        let a = SketchFunction::perturbative(&t, &[2; 4], 0.05, 3, 9, Perturbation::Uniform).unwrap();
        let b = SketchFunction::perturbative(&t, &[2; 4], 0.05, 3, 9, Perturbation::Uniform).unwrap();
        assert_eq!(a, b);
        assert_eq!(a.core(1).unwrap().shape(), &[2, 3]);
        assert_eq!(a.core(2).unwrap().shape(), &[3, 3, 2]);
        let c = a.core(3).unwrap();
        let dl = a.delta(3).unwrap();
        assert!(c.data().iter().zip(dl.data()).all(|(s, e)| (s - 1.0 - 0.05 * e).abs() < 1e-15));
        assert!(dl.data().iter().all(|v| (0.0..1.0).contains(v)));
    }

    #[test]
    fn perturbative_messages_match_brute_force() {
        // path 1 - 2 - 3 rooted at 2
        let t = RootedTree::path(3, 2).unwrap();
        let n = [2, 3, 2];
        let sk = SketchFunction::perturbative(&t, &n, 0.3, 2, 4, Perturbation::Uniform).unwrap();
        let row = [1u16, 2, 0];
        let m = sk.eval_on_sample(&row).unwrap();
        let (s1, s2, s3) = (sk.core(1).unwrap(), sk.core(2).unwrap(), sk.core(3).unwrap());
        for b in 0..2 {
            assert!((m.left[0][b] - s1.get(&[1, b])).abs() < 1e-15);
            assert!((m.left[2][b] - s3.get(&[0, b])).abs() < 1e-15);
            // T_1 contracts the cores on R(1) = {2, 3}
            let want: f64 = (0..2).map(|c| s2.get(&[b, c, 2]) * s3.get(&[0, c])).sum();
            assert!((m.t[0][b] - want).abs() < 1e-14);
        }
        assert_eq!(m.t[1], vec![1.0]);
        assert_eq!(m.s[1].len(), 4);
    }
}
