//! Tree tensor network states: evaluation, contraction, marginals, inner
//! products, exact sampling and (de)serialization.
//!
//! Core `G_k` has axes `[bond of each child (ascending), x_k, parent bond]`;
//! leaves have no child axes and the root has no parent axis.

use std::collections::BTreeMap;
use std::fs;
use std::path::Path;

use rand::Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::rng::{rng_for, shard_count, SHARD_ROWS};
use crate::samples::DiscreteSamples;
use crate::tensor::{DenseTensor, Label, Labeled, ThreeTensor};
use crate::tree::{RootedTree, TreeSpec};

/// Largest dense tensor materialized by contractions.
pub const DENSE_LIMIT: usize = 1 << 24;

pub const MODEL_FORMAT: &str = "ttns-model";
pub const MODEL_VERSION: u32 = 1;

/// Clamped mass fraction above which sampling reports a warning.
pub const CLAMP_WARN: f64 = 1e-3;

#[derive(Clone, Debug, PartialEq)]
pub struct Ttns {
    tree: RootedTree,
    n: Vec<usize>,
    // rank of edge (k, parent(k)) at index k - 1; 1 for the root
    ranks: Vec<usize>,
    cores: Vec<DenseTensor>,
}

/// Outcome of [`Ttns::draw_samples`].
#[derive(Clone, Debug)]
pub struct SamplingReport {
    /// Negative conditional mass removed, as a fraction of total absolute mass.
    pub clamped_fraction: f64,
    pub warning: Option<String>,
}

#[derive(Serialize, Deserialize)]
struct CoreEntry {
    node: usize,
    shape: Vec<usize>,
}

#[derive(Serialize, Deserialize)]
struct Manifest {
    format: String,
    version: u32,
    tree: TreeSpec,
    n: Vec<usize>,
    ranks: BTreeMap<String, usize>,
    cores: Vec<CoreEntry>,
    blob: String,
}

pub(crate) fn core_shape(tree: &RootedTree, n: &[usize], ranks: &[usize], k: usize) -> Vec<usize> {
    let mut s: Vec<usize> = tree.children(k).iter().map(|&c| ranks[c - 1]).collect();
    s.push(n[k - 1]);
    if !tree.is_root(k) {
        s.push(ranks[k - 1]);
    }
    s
}

pub(crate) fn core_labels(tree: &RootedTree, k: usize) -> Vec<Label> {
    let mut l: Vec<Label> = tree.children(k).iter().map(|&c| Label::Bond(c)).collect();
    l.push(Label::Var(k));
    if !tree.is_root(k) {
        l.push(Label::Bond(k));
    }
    l
}

/// Contracts the leading axes of a row-major buffer with `vecs` in order.
pub(crate) fn contract_leading(mut data: Vec<f64>, vecs: &[&[f64]]) -> Vec<f64> {
    for v in vecs {
        let rest = data.len() / v.len();
        let mut out = vec![0.0; rest];
        for (a, &w) in v.iter().enumerate() {
            if w == 0.0 {
                continue;
            }
            for (o, &x) in out.iter_mut().zip(&data[a * rest..(a + 1) * rest]) {
                *o += w * x;
            }
        }
        data = out;
    }
    data
}

/// Contracts every axis of `data` except `open` with the matching vector.
pub(crate) fn contract_except(data: &[f64], dims: &[usize], vecs: &[&[f64]], open: usize) -> Vec<f64> {
    let mut out = vec![0.0; dims[open]];
    let mut idx = vec![0usize; dims.len()];
    for &v in data {
        let mut w = v;
        for (a, &i) in idx.iter().enumerate() {
            if a != open {
                w *= vecs[a][i];
            }
        }
        out[idx[open]] += w;
        crate::tensor::increment(&mut idx, dims);
    }
    out
}

impl Ttns {
    /// Builds a TTNS from cores in node order; ranks are read off the shapes.
    pub fn new(tree: RootedTree, cores: Vec<DenseTensor>) -> Result<Self> {
        let d = tree.d();
        if cores.len() != d {
            return Err(Error::ShapeMismatch(format!("{} cores for {d} nodes", cores.len())));
        }
        let mut n = vec![0; d];
        let mut ranks = vec![1; d];
        for k in tree.nodes() {
            let c = &cores[k - 1];
            let m = tree.children(k).len();
            let want = m + 1 + usize::from(!tree.is_root(k));
            if c.ndim() != want {
                return Err(Error::ShapeMismatch(format!("core {k} has {} axes, expected {want}", c.ndim())));
            }
            n[k - 1] = c.shape()[m];
            if !tree.is_root(k) {
                ranks[k - 1] = c.shape()[m + 1];
            }
        }
        for k in tree.nodes() {
            for (i, &c) in tree.children(k).iter().enumerate() {
                if cores[k - 1].shape()[i] != ranks[c - 1] {
                    return Err(Error::ShapeMismatch(format!(
                        "edge ({c}, {k}): rank {} at node {k} but {} at node {c}",
                        cores[k - 1].shape()[i],
                        ranks[c - 1]
                    )));
                }
            }
        }
        Ok(Ttns { tree, n, ranks, cores })
    }

    /// Cores filled by `f(node, shape)`.
    pub fn from_fn(
        tree: RootedTree,
        n: &[usize],
        rank: impl Fn(usize, usize) -> usize,
        mut f: impl FnMut(usize, &[usize]) -> DenseTensor,
    ) -> Result<Self> {
        let d = tree.d();
        if n.len() != d {
            return Err(Error::ShapeMismatch(format!("{} state counts for {d} nodes", n.len())));
        }
        let ranks: Vec<usize> = tree.nodes().map(|k| tree.parent(k).map_or(1, |p| rank(k, p))).collect();
        let cores = tree
            .nodes()
            .map(|k| {
                let shape = core_shape(&tree, n, &ranks, k);
                f(k, &shape)
            })
            .collect();
        Self::new(tree, cores)
    }

    /// Entries uniform in `[lo, hi)`.
    pub fn random(
        tree: RootedTree,
        n: &[usize],
        rank: impl Fn(usize, usize) -> usize,
        lo: f64,
        hi: f64,
        seed: u64,
    ) -> Result<Self> {
        Self::from_fn(tree, n, rank, |k, shape| {
            let mut rng = rng_for(seed, k as u64);
            DenseTensor::from_fn(shape.to_vec(), |_| lo + (hi - lo) * rng.random::<f64>())
        })
    }

    /// Rank-1 TTNS with every entry of the represented tensor equal to `value`.
    pub fn constant(tree: RootedTree, n: &[usize], value: f64) -> Result<Self> {
        Self::from_fn(tree.clone(), n, |_, _| 1, |k, shape| {
            let v = if tree.is_root(k) { value } else { 1.0 };
            DenseTensor::filled(shape.to_vec(), v)
        })
    }

    /// Rank-1 TTNS of the indicator of the 0-based state `x`.
    pub fn point_mass(tree: RootedTree, n: &[usize], x: &[usize]) -> Result<Self> {
        if x.len() != n.len() || x.iter().zip(n).any(|(a, b)| a >= b) {
            return Err(Error::InvalidArgument("point outside the state space".into()));
        }
        Self::from_fn(tree, n, |_, _| 1, |k, shape| {
            let mut t = DenseTensor::zeros(shape.to_vec());
            t.data_mut()[x[k - 1]] = 1.0;
            t
        })
    }

    pub fn tree(&self) -> &RootedTree {
        &self.tree
    }

    pub fn d(&self) -> usize {
        self.tree.d()
    }

    pub fn state_counts(&self) -> &[usize] {
        &self.n
    }

    /// Rank of the edge `(k, parent(k))`.
    pub fn rank(&self, k: usize) -> usize {
        self.ranks[k - 1]
    }

    /// Ranks keyed by `(child, parent)`.
    pub fn ranks(&self) -> BTreeMap<(usize, usize), usize> {
        self.tree.edges().into_iter().map(|(c, p)| ((c, p), self.ranks[c - 1])).collect()
    }

    pub fn core(&self, k: usize) -> &DenseTensor {
        &self.cores[k - 1]
    }

    pub fn cores(&self) -> &[DenseTensor] {
        &self.cores
    }

    /// Replaces one core with another of the same shape.
    pub fn set_core(&mut self, k: usize, core: DenseTensor) -> Result<()> {
        if core.shape() != self.cores[k - 1].shape() {
            return Err(Error::ShapeMismatch(format!(
                "core {k} must keep shape {:?}, got {:?}",
                self.cores[k - 1].shape(),
                core.shape()
            )));
        }
        self.cores[k - 1] = core;
        Ok(())
    }

    pub(crate) fn labeled_core(&self, k: usize) -> Labeled {
        Labeled::new(core_labels(&self.tree, k), self.cores[k - 1].clone())
    }

    /// Product of the child ranks of `k`.
    fn left_size(&self, k: usize) -> usize {
        self.tree.children(k).iter().map(|&c| self.ranks[c - 1]).product()
    }

    /// The core as a 3-tensor (child bonds merged, x_k, parent bond).
    pub fn three_view(&self, k: usize) -> ThreeTensor {
        let (l, n, r) = (self.left_size(k), self.n[k - 1], self.ranks[k - 1]);
        ThreeTensor::new(l, n, r, self.cores[k - 1].data().to_vec()).expect("shape is consistent")
    }

    /// Slice `G_k(·, x, ·)` as a buffer over `[child bonds..., parent bond]`.
    fn slice(&self, k: usize, x: usize) -> Vec<f64> {
        let (l, n, r) = (self.left_size(k), self.n[k - 1], self.ranks[k - 1]);
        let data = self.cores[k - 1].data();
        let mut out = Vec::with_capacity(l * r);
        for b in 0..l {
            let o = (b * n + x) * r;
            out.extend_from_slice(&data[o..o + r]);
        }
        out
    }

    fn slice_dims(&self, k: usize) -> Vec<usize> {
        let mut dims: Vec<usize> = self.tree.children(k).iter().map(|&c| self.ranks[c - 1]).collect();
        dims.push(self.ranks[k - 1]);
        dims
    }

    /// Value at a 0-based state vector.
    pub fn evaluate(&self, x: &[usize]) -> Result<f64> {
        if x.len() != self.d() {
            return Err(Error::ShapeMismatch(format!("state vector of length {}, expected {}", x.len(), self.d())));
        }
        for (k, (&v, &n)) in x.iter().zip(&self.n).enumerate() {
            if v >= n {
                return Err(Error::StateOutOfRange { row: 1, node: k + 1, value: v + 1, n });
            }
        }
        Ok(self.eval_with(|k| x[k - 1]))
    }

    fn eval_with(&self, x: impl Fn(usize) -> usize) -> f64 {
        let mut msgs: Vec<Vec<f64>> = vec![Vec::new(); self.d()];
        for &k in self.tree.postorder().iter() {
            let ch = self.tree.children(k);
            let vecs: Vec<&[f64]> = ch.iter().map(|&c| msgs[c - 1].as_slice()).collect();
            let m = contract_leading(self.slice(k, x(k)), &vecs);
            msgs[k - 1] = m;
        }
        msgs[self.tree.root() - 1][0]
    }

    /// Values at every sample row.
    pub fn evaluate_samples(&self, samples: &DiscreteSamples) -> Result<Vec<f64>> {
        if samples.state_counts() != self.n.as_slice() {
            return Err(Error::ShapeMismatch("samples and model have different state counts".into()));
        }
        Ok((0..samples.len())
            .into_par_iter()
            .map(|i| {
                let row = samples.row(i);
                self.eval_with(|k| row[k - 1] as usize)
            })
            .collect())
    }

    fn dense_size(&self, nodes: &[usize]) -> Result<usize> {
        let size: u128 = nodes.iter().map(|&k| self.n[k - 1] as u128).product();
        if size > DENSE_LIMIT as u128 {
            return Err(Error::TooLarge { what: "dense output", size, limit: DENSE_LIMIT as u128 });
        }
        Ok(size as usize)
    }

    /// The represented tensor, axes in node order.
    pub fn contract_full(&self) -> Result<DenseTensor> {
        let all: Vec<usize> = self.tree.nodes().collect();
        self.marginalize(&all)
    }

    /// Sum over every variable outside `keep`; result axes in ascending node order.
    pub fn marginalize(&self, keep: &[usize]) -> Result<DenseTensor> {
        let mut keep = keep.to_vec();
        keep.sort_unstable();
        keep.dedup();
        for &k in &keep {
            self.tree.check_node(k)?;
        }
        self.dense_size(&keep)?;
        let mut member = vec![false; self.d()];
        keep.iter().for_each(|&k| member[k - 1] = true);
        let mut env: Vec<Option<Labeled>> = vec![None; self.d()];
        for &k in self.tree.postorder().iter() {
            let mut c = self.labeled_core(k);
            if !member[k - 1] {
                c = c.sum_out(&[Label::Var(k)]);
            }
            for &w in self.tree.children(k) {
                c = env[w - 1].take().expect("child visited first").contract(&c);
            }
            env[k - 1] = Some(c);
        }
        let root = env[self.tree.root() - 1].take().expect("root visited");
        let order: Vec<Label> = keep.iter().map(|&k| Label::Var(k)).collect();
        Ok(root.to_dense(&order))
    }

    /// Sum of all entries.
    pub fn total_mass(&self) -> f64 {
        let mut msgs: Vec<Vec<f64>> = vec![Vec::new(); self.d()];
        for &k in self.tree.postorder().iter() {
            let ch = self.tree.children(k);
            let vecs: Vec<&[f64]> = ch.iter().map(|&c| msgs[c - 1].as_slice()).collect();
            let mut acc = vec![0.0; self.ranks[k - 1]];
            for x in 0..self.n[k - 1] {
                let m = contract_leading(self.slice(k, x), &vecs);
                acc.iter_mut().zip(m).for_each(|(a, b)| *a += b);
            }
            msgs[k - 1] = acc;
        }
        msgs[self.tree.root() - 1][0]
    }

    /// Divides the root core by the total mass; returns the old mass.
    pub fn renormalize(&mut self) -> Result<f64> {
        let mass = self.total_mass();
        if !(mass.is_finite() && mass > 0.0) {
            return Err(Error::NonPositiveMass { node: self.tree.root(), mass });
        }
        self.cores[self.tree.root() - 1].scale(1.0 / mass);
        Ok(mass)
    }

    /// `Σ_x a(x) b(x)` by leaf-to-root contraction of doubled bonds.
    pub fn inner_product(&self, other: &Ttns) -> Result<f64> {
        if self.tree != other.tree || self.n != other.n {
            return Err(Error::ShapeMismatch("inner product needs the same tree and state counts".into()));
        }
        for k in self.tree.nodes() {
            let double: u128 = (self.left_size(k) as u128)
                * (other.left_size(k) as u128)
                * (self.ranks[k - 1] as u128)
                * (other.ranks[k - 1] as u128)
                * (self.n[k - 1] as u128);
            if double > (1u128 << 28) {
                return Err(Error::TooLarge { what: "doubled-bond core", size: double, limit: 1 << 28 });
            }
        }
        let mut env: Vec<Option<Labeled>> = vec![None; self.d()];
        for &k in self.tree.postorder().iter() {
            let mut a = self.labeled_core(k);
            for &w in self.tree.children(k) {
                a = a.contract(env[w - 1].as_ref().expect("child visited first"));
                env[w - 1] = None;
            }
            let mut b = other.labeled_core(k);
            for &w in self.tree.children(k) {
                b = b.relabel(Label::Bond(w), Label::Aux(w));
            }
            b = b.relabel(Label::Bond(k), Label::Aux(k));
            env[k - 1] = Some(a.contract(&b));
        }
        Ok(env[self.tree.root() - 1].take().expect("root visited").value())
    }

    pub fn norm_squared(&self) -> Result<f64> {
        self.inner_product(self)
    }

    /// Contraction of the cores of a connected set `nodes` over its internal
    /// edges. Axes: `x_s` for `s` ascending, then the open boundary bonds in
    /// `(child, parent)` key order, which is also returned.
    pub fn subgraph_function(&self, nodes: &[usize]) -> Result<(DenseTensor, Vec<(usize, usize)>)> {
        let mut set = nodes.to_vec();
        set.sort_unstable();
        set.dedup();
        for &k in &set {
            self.tree.check_node(k)?;
        }
        if !self.tree.is_connected_subset(&set) {
            return Err(Error::DisconnectedSubgraph(set));
        }
        let mut member = vec![false; self.d()];
        set.iter().for_each(|&k| member[k - 1] = true);
        let mut boundary = Vec::new();
        for &k in &set {
            for &c in self.tree.children(k) {
                if !member[c - 1] {
                    boundary.push((c, k));
                }
            }
            if let Some(p) = self.tree.parent(k) {
                if !member[p - 1] {
                    boundary.push((k, p));
                }
            }
        }
        boundary.sort_unstable();
        let mut size: u128 = set.iter().map(|&k| self.n[k - 1] as u128).product();
        size *= boundary.iter().map(|&(c, _)| self.ranks[c - 1] as u128).product::<u128>();
        if size > DENSE_LIMIT as u128 {
            return Err(Error::TooLarge { what: "subgraph function", size, limit: DENSE_LIMIT as u128 });
        }
        let mut acc = Labeled::scalar(1.0);
        for &k in self.tree.preorder() {
            if member[k - 1] {
                acc = acc.contract(&self.labeled_core(k));
            }
        }
        let mut order: Vec<Label> = set.iter().map(|&k| Label::Var(k)).collect();
        order.extend(boundary.iter().map(|&(c, _)| Label::Bond(c)));
        Ok((acc.to_dense(&order), boundary))
    }

    /// `N` i.i.d. rows by conditional sampling in depth-first order.
    pub fn draw_samples(&self, rows: usize, seed: u64) -> Result<(DiscreteSamples, SamplingReport)> {
        let up = self.marginal_messages();
        let shards: Vec<Result<(Vec<u16>, f64, f64)>> = (0..shard_count(rows))
            .into_par_iter()
            .map(|s| {
                let count = SHARD_ROWS.min(rows - s * SHARD_ROWS);
                let mut rng = rng_for(seed, s as u64);
                let mut data = vec![0u16; count * self.d()];
                let (mut neg, mut tot) = (0.0, 0.0);
                for chunk in data.chunks_mut(self.d()) {
                    let mut st = Stats { neg: 0.0, total: 0.0 };
                    self.sample_node(self.tree.root(), &[1.0], &up, &mut rng, chunk, &mut st)?;
                    neg += st.neg;
                    tot += st.total;
                }
                Ok((data, neg, tot))
            })
            .collect();
        let mut data = Vec::with_capacity(rows * self.d());
        let (mut neg, mut tot) = (0.0, 0.0);
        for s in shards {
            let (d, a, b) = s?;
            data.extend(d);
            neg += a;
            tot += b;
        }
        let clamped_fraction = if tot > 0.0 { neg / tot } else { 0.0 };
        let warning = (clamped_fraction > CLAMP_WARN).then(|| {
            format!("negative conditional mass clamped: {clamped_fraction:.3e} of the total")
        });
        Ok((DiscreteSamples::from_raw(self.n.clone(), data), SamplingReport { clamped_fraction, warning }))
    }

    /// Per node, the subtree summed over all of its variables, as a vector over
    /// the parent bond.
    fn marginal_messages(&self) -> Vec<Vec<f64>> {
        let mut msgs: Vec<Vec<f64>> = vec![Vec::new(); self.d()];
        for &k in self.tree.postorder().iter() {
            let ch = self.tree.children(k);
            let vecs: Vec<&[f64]> = ch.iter().map(|&c| msgs[c - 1].as_slice()).collect();
            let mut acc = vec![0.0; self.ranks[k - 1]];
            for x in 0..self.n[k - 1] {
                let m = contract_leading(self.slice(k, x), &vecs);
                acc.iter_mut().zip(m).for_each(|(a, b)| *a += b);
            }
            msgs[k - 1] = acc;
        }
        msgs
    }

    /// Samples the subtree of `k` given the environment `env` on its parent
    /// bond, and returns the subtree's fixed-value message.
    fn sample_node(
        &self,
        k: usize,
        env: &[f64],
        up: &[Vec<f64>],
        rng: &mut impl Rng,
        row: &mut [u16],
        st: &mut Stats,
    ) -> Result<Vec<f64>> {
        let ch = self.tree.children(k);
        let mut msgs: Vec<Vec<f64>> = ch.iter().map(|&c| up[c - 1].clone()).collect();
        let n = self.n[k - 1];
        let mut w = Vec::with_capacity(n);
        for x in 0..n {
            let vecs: Vec<&[f64]> = msgs.iter().map(|m| m.as_slice()).collect();
            let m = contract_leading(self.slice(k, x), &vecs);
            w.push(m.iter().zip(env).map(|(a, b)| a * b).sum::<f64>());
        }
        let pos: f64 = w.iter().filter(|v| **v > 0.0).sum();
        let neg: f64 = -w.iter().filter(|v| **v < 0.0).sum::<f64>();
        st.neg += neg;
        st.total += pos + neg;
        if !(pos.is_finite() && pos > 0.0) {
            return Err(Error::NonPositiveMass { node: k, mass: pos - neg });
        }
        let u = rng.random::<f64>() * pos;
        let mut acc = 0.0;
        let mut x = n - 1;
        for (i, &v) in w.iter().enumerate() {
            if v > 0.0 {
                acc += v;
                x = i;
                if u < acc {
                    break;
                }
            }
        }
        row[k - 1] = x as u16;
        if ch.is_empty() {
            return Ok(self.slice(k, x));
        }
        let slice = self.slice(k, x);
        let dims = self.slice_dims(k);
        for (j, &c) in ch.iter().enumerate() {
            let mut vecs: Vec<&[f64]> = msgs.iter().map(|m| m.as_slice()).collect();
            vecs.push(env);
            let child_env = contract_except(&slice, &dims, &vecs, j);
            msgs[j] = self.sample_node(c, &child_env, up, rng, row, st)?;
        }
        let vecs: Vec<&[f64]> = msgs.iter().map(|m| m.as_slice()).collect();
        Ok(contract_leading(slice, &vecs))
    }

    /// Writes the JSON manifest to `path` and the cores to `path` with a
    /// `.bin` extension.
    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        let blob = path.with_extension("bin");
        let blob_name = blob
            .file_name()
            .and_then(|s| s.to_str())
            .ok_or_else(|| Error::InvalidArgument("model path needs a file name".into()))?
            .to_string();
        let mut bytes = Vec::new();
        for c in &self.cores {
            for v in c.data() {
                bytes.extend_from_slice(&v.to_le_bytes());
            }
        }
        fs::write(&blob, bytes)?;
        let manifest = Manifest {
            format: MODEL_FORMAT.into(),
            version: MODEL_VERSION,
            tree: self.tree.to_spec(),
            n: self.n.clone(),
            ranks: self.ranks().into_iter().map(|((c, p), r)| (format!("{c}-{p}"), r)).collect(),
            cores: self
                .tree
                .nodes()
                .map(|k| CoreEntry { node: k, shape: self.cores[k - 1].shape().to_vec() })
                .collect(),
            blob: blob_name,
        };
        fs::write(path, serde_json::to_string_pretty(&manifest)?)?;
        Ok(())
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = fs::read_to_string(path)?;
        let value: serde_json::Value =
            serde_json::from_str(&text).map_err(|e| Error::MalformedHeader(format!("model manifest: {e}")))?;
        match value.get("format").and_then(|v| v.as_str()) {
            Some(MODEL_FORMAT) => {}
            other => return Err(Error::MalformedHeader(format!("unexpected model format {other:?}"))),
        }
        match value.get("version").and_then(|v| v.as_u64()) {
            Some(v) if v == MODEL_VERSION as u64 => {}
            other => {
                return Err(Error::VersionMismatch {
                    found: other.map_or("none".into(), |v| v.to_string()),
                    expected: MODEL_VERSION.to_string(),
                })
            }
        }
        let m: Manifest =
            serde_json::from_value(value).map_err(|e| Error::MalformedHeader(format!("model manifest: {e}")))?;
        let tree = RootedTree::from_spec(&m.tree)?;
        let d = tree.d();
        if m.n.len() != d || m.cores.len() != d {
            return Err(Error::ShapeMismatch("manifest sizes disagree with the tree".into()));
        }
        let mut ranks = vec![1; d];
        for (c, p) in tree.edges() {
            ranks[c - 1] = *m
                .ranks
                .get(&format!("{c}-{p}"))
                .ok_or_else(|| Error::ShapeMismatch(format!("no rank for edge {c}-{p}")))?;
        }
        let blob_path = path.parent().unwrap_or(Path::new(".")).join(&m.blob);
        let bytes = fs::read(blob_path)?;
        let mut off = 0usize;
        let mut cores = Vec::with_capacity(d);
        for (i, entry) in m.cores.iter().enumerate() {
            let k = i + 1;
            let want = core_shape(&tree, &m.n, &ranks, k);
            if entry.node != k || entry.shape != want {
                return Err(Error::ShapeMismatch(format!("core {k}: manifest shape {:?}, expected {want:?}", entry.shape)));
            }
            let len: usize = want.iter().product();
            if bytes.len() < off + 8 * len {
                return Err(Error::ShapeMismatch("model blob is too short".into()));
            }
            let data = bytes[off..off + 8 * len]
                .chunks_exact(8)
                .map(|c| f64::from_le_bytes(c.try_into().expect("8 bytes")))
                .collect();
            off += 8 * len;
            cores.push(DenseTensor::new(want, data)?);
        }
        if off != bytes.len() {
            return Err(Error::ShapeMismatch("model blob has trailing bytes".into()));
        }
        Ttns::new(tree, cores)
    }
}

struct Stats {
    neg: f64,
    total: f64,
}

#[cfg(test)]
mod tests {
    use super::*;

    fn chain(d: usize) -> RootedTree {
        RootedTree::path(d, d).unwrap()
    }

    fn small_tree() -> RootedTree {
        RootedTree::from_edges(5, &[(1, 2), (2, 3), (2, 4), (4, 5)], 2).unwrap()
    }

    #[test]
    fn all_ones_evaluates_to_one() {
        let m = Ttns::constant(small_tree(), &[2, 3, 2, 2, 3], 1.0).unwrap();
        assert_eq!(m.evaluate(&[1, 2, 0, 1, 2]).unwrap(), 1.0);
        assert_eq!(m.total_mass(), 72.0);
        assert!(matches!(m.evaluate(&[2, 0, 0, 0, 0]), Err(Error::StateOutOfRange { .. })));
    }

    #[test]
    fn chain_matches_triple_sum() {
        let t = chain(3);
        let m = Ttns::random(t, &[2, 3, 2], |_, _| 2, -1.0, 1.0, 5).unwrap();
        // root 3: G1[x1, a], G2[a, x2, b], G3[b, x3]
        let (g1, g2, g3) = (m.core(1), m.core(2), m.core(3));
        let full = m.contract_full().unwrap();
        for x1 in 0..2 {
            for x2 in 0..3 {
                for x3 in 0..2 {
                    let mut want = 0.0;
                    for a in 0..2 {
                        for b in 0..2 {
                            want += g1.get(&[x1, a]) * g2.get(&[a, x2, b]) * g3.get(&[b, x3]);
                        }
                    }
                    let got = m.evaluate(&[x1, x2, x3]).unwrap();
                    assert!((got - want).abs() < 1e-14);
                    assert!((full.get(&[x1, x2, x3]) - want).abs() < 1e-14);
                }
            }
        }
    }

    #[test]
    fn marginals_are_consistent() {
        let m = Ttns::random(small_tree(), &[2, 3, 2, 2, 3], |c, _| c % 3 + 1, 0.0, 1.0, 6).unwrap();
        let full = m.contract_full().unwrap();
        let pair = m.marginalize(&[4, 1]).unwrap();
        assert_eq!(pair.shape(), &[2, 2]);
        let want = full.marginal(&[0, 3]).unwrap();
        assert!(pair.max_abs_diff(&want) < 1e-12);
        let single = m.marginalize(&[1]).unwrap();
        assert!(single.max_abs_diff(&pair.marginal(&[0]).unwrap()) < 1e-12);
        let mass = m.marginalize(&[]).unwrap();
        assert!((mass.data()[0] - full.sum()).abs() < 1e-12);
        assert!((m.total_mass() - full.sum()).abs() < 1e-12);
    }

    #[test]
    fn inner_product_matches_dense() {
        let t = small_tree();
        let n = [2, 3, 2, 2, 3];
        let a = Ttns::random(t.clone(), &n, |_, _| 2, -1.0, 1.0, 7).unwrap();
        let b = Ttns::random(t.clone(), &n, |_, _| 3, -1.0, 1.0, 8).unwrap();
        let (fa, fb) = (a.contract_full().unwrap(), b.contract_full().unwrap());
        let want: f64 = fa.data().iter().zip(fb.data()).map(|(x, y)| x * y).sum();
        assert!((a.inner_product(&b).unwrap() - want).abs() < 1e-10);
        assert!((a.norm_squared().unwrap() - fa.norm().powi(2)).abs() < 1e-10);
        let p = Ttns::point_mass(t.clone(), &n, &[0, 0, 0, 0, 0]).unwrap();
        let q = Ttns::point_mass(t, &n, &[1, 0, 0, 0, 0]).unwrap();
        assert_eq!(p.inner_product(&q).unwrap(), 0.0);
    }

    #[test]
    fn subgraph_of_leaf_and_whole() {
        let m = Ttns::random(small_tree(), &[2, 3, 2, 2, 3], |_, _| 2, -1.0, 1.0, 9).unwrap();
        let (leaf, b) = m.subgraph_function(&[5]).unwrap();
        assert_eq!(b, vec![(5, 4)]);
        assert_eq!(&leaf, m.core(5));
        let (all, b) = m.subgraph_function(&[1, 2, 3, 4, 5]).unwrap();
        assert!(b.is_empty());
        assert!(all.max_abs_diff(&m.contract_full().unwrap()) < 1e-14);
        assert!(matches!(m.subgraph_function(&[1, 5]), Err(Error::DisconnectedSubgraph(_))));
    }

    #[test]
    fn point_mass_samples_are_identical() {
        let n = [2, 3, 2, 2, 3];
        let m = Ttns::point_mass(small_tree(), &n, &[1, 2, 0, 1, 1]).unwrap();
        let (s, rep) = m.draw_samples(50, 3).unwrap();
        assert!(s.rows().all(|r| r == [1, 2, 0, 1, 1]));
        assert_eq!(rep.clamped_fraction, 0.0);
    }

    #[test]
    fn negative_model_fails_or_clamps() {
        let m = Ttns::constant(chain(2), &[2, 2], -1.0).unwrap();
        assert!(matches!(m.draw_samples(3, 1), Err(Error::NonPositiveMass { .. })));
    }

    #[test]
    fn save_load_bit_identical() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("m.json");
        let m = Ttns::random(small_tree(), &[2, 3, 2, 2, 3], |c, _| c % 2 + 1, -1.0, 1.0, 10).unwrap();
        m.save(&p).unwrap();
        let back = Ttns::load(&p).unwrap();
        assert_eq!(back, m);
        for (a, b) in m.cores().iter().zip(back.cores()) {
            assert!(a.data().iter().zip(b.data()).all(|(x, y)| x.to_bits() == y.to_bits()));
        }
        let text = fs::read_to_string(&p).unwrap().replace("\"version\": 1", "\"version\": 9");
        fs::write(&p, text).unwrap();
        assert!(matches!(Ttns::load(&p), Err(Error::VersionMismatch { .. })));
    }
}
