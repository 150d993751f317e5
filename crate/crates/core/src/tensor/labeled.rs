//! Small einsum-style helper: tensors whose axes carry labels, contracted
//! over shared labels. Used by the exact contraction paths and the oracles.

use super::{matmul_row_major, DenseTensor};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub(crate) enum Label {
    /// Physical index of a node.
    Var(usize),
    /// Bond of the edge keyed by its child node.
    Bond(usize),
    /// Second-layer bond (sketch or second model) keyed by child node.
    Aux(usize),
    /// Another copy of a second-layer bond, for two open ends on one edge.
    Dual(usize),
}

#[derive(Clone, Debug)]
pub(crate) struct Labeled {
    labels: Vec<Label>,
    t: DenseTensor,
}

impl Labeled {
    pub(crate) fn new(labels: Vec<Label>, t: DenseTensor) -> Self {
        assert_eq!(labels.len(), t.ndim(), "one label per axis");
        for (i, l) in labels.iter().enumerate() {
            assert!(!labels[..i].contains(l), "duplicate label {l:?}");
        }
        Labeled { labels, t }
    }

    pub(crate) fn scalar(v: f64) -> Self {
        Labeled { labels: vec![], t: DenseTensor::scalar(v) }
    }

    /// All-ones vector over one label.
    pub(crate) fn ones(label: Label, n: usize) -> Self {
        Labeled { labels: vec![label], t: DenseTensor::filled(vec![n], 1.0) }
    }

    #[cfg(test)]
    pub(crate) fn len(&self) -> usize {
        self.t.len()
    }

    pub(crate) fn value(&self) -> f64 {
        assert!(self.labels.is_empty(), "not a scalar");
        self.t.data()[0]
    }

    fn axis(&self, l: Label) -> Option<usize> {
        self.labels.iter().position(|&x| x == l)
    }

    pub(crate) fn relabel(mut self, from: Label, to: Label) -> Self {
        if let Some(a) = self.axis(from) {
            assert!(self.axis(to).is_none(), "relabel would duplicate {to:?}");
            self.labels[a] = to;
        }
        self
    }

    /// Contracts every label the two tensors share.
    pub(crate) fn contract(&self, other: &Labeled) -> Labeled {
        let shared: Vec<Label> = self.labels.iter().copied().filter(|l| other.labels.contains(l)).collect();
        let a_free: Vec<usize> = (0..self.labels.len()).filter(|&i| !shared.contains(&self.labels[i])).collect();
        let b_free: Vec<usize> = (0..other.labels.len()).filter(|&i| !shared.contains(&other.labels[i])).collect();
        let a_sh: Vec<usize> = shared.iter().map(|&l| self.axis(l).unwrap()).collect();
        let b_sh: Vec<usize> = shared.iter().map(|&l| other.axis(l).unwrap()).collect();
        for (&i, &j) in a_sh.iter().zip(&b_sh) {
            assert_eq!(self.t.shape()[i], other.t.shape()[j], "dimension mismatch on {:?}", self.labels[i]);
        }
        let pa: Vec<usize> = a_free.iter().chain(&a_sh).copied().collect();
        let pb: Vec<usize> = b_sh.iter().chain(&b_free).copied().collect();
        let ta = self.t.permuted(&pa).expect("valid permutation");
        let tb = other.t.permuted(&pb).expect("valid permutation");
        let m: usize = a_free.iter().map(|&i| self.t.shape()[i]).product();
        let k: usize = a_sh.iter().map(|&i| self.t.shape()[i]).product();
        let n: usize = b_free.iter().map(|&i| other.t.shape()[i]).product();
        let data = matmul_row_major(ta.data(), m, k, tb.data(), n);
        let mut shape: Vec<usize> = a_free.iter().map(|&i| self.t.shape()[i]).collect();
        shape.extend(b_free.iter().map(|&i| other.t.shape()[i]));
        let mut labels: Vec<Label> = a_free.iter().map(|&i| self.labels[i]).collect();
        labels.extend(b_free.iter().map(|&i| other.labels[i]));
        Labeled { labels, t: DenseTensor::from_parts(shape, data) }
    }

    /// Sums out the given labels; absent labels are ignored.
    pub(crate) fn sum_out(&self, drop: &[Label]) -> Labeled {
        let keep: Vec<usize> = (0..self.labels.len()).filter(|&i| !drop.contains(&self.labels[i])).collect();
        if keep.len() == self.labels.len() {
            return self.clone();
        }
        Labeled {
            labels: keep.iter().map(|&i| self.labels[i]).collect(),
            t: self.t.marginal(&keep).expect("valid axes"),
        }
    }

    /// Appends constant axes.
    pub(crate) fn broadcast(&self, extra: &[(Label, usize)]) -> Labeled {
        let mut out = self.clone();
        for &(l, n) in extra {
            out = out.contract(&Labeled::ones(l, n));
        }
        out
    }

    pub(crate) fn scale(mut self, c: f64) -> Self {
        self.t.scale(c);
        self
    }

    /// Entrywise sum; `other` must carry the same label set.
    pub(crate) fn add(&self, other: &Labeled) -> Labeled {
        let o = other.to_dense(&self.labels);
        let mut t = self.t.clone();
        t.data_mut().iter_mut().zip(o.data()).for_each(|(a, b)| *a += b);
        Labeled { labels: self.labels.clone(), t }
    }

    /// Dense tensor with axes in `order`, which must be a permutation of the labels.
    pub(crate) fn to_dense(&self, order: &[Label]) -> DenseTensor {
        assert_eq!(order.len(), self.labels.len(), "label set mismatch: {order:?} vs {:?}", self.labels);
        let perm: Vec<usize> = order
            .iter()
            .map(|&l| self.axis(l).unwrap_or_else(|| panic!("missing label {l:?}")))
            .collect();
        self.t.permuted(&perm).expect("valid permutation")
    }
}
