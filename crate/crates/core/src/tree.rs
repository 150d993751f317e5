//! Rooted trees over nodes `1..=d`.
//!
//! Node ids are 1-based everywhere in the public API. Edges of a rooted tree
//! are keyed `(child, parent)`; children lists are sorted ascending, and any
//! joint index over several child edges is mixed-radix with the last child
//! varying fastest.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// A spanning tree on `1..=d` oriented away from `root`.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct RootedTree {
    d: usize,
    root: usize,
    parent: Vec<Option<usize>>,
    children: Vec<Vec<usize>>,
    preorder: Vec<usize>,
}

/// The neighbourhood sets of one node: children, parent, neighbours,
/// descendants (left), non-descendants (right) and incident edges.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Relations {
    pub children: Vec<usize>,
    pub parent: Option<usize>,
    pub neighbors: Vec<usize>,
    pub left: Vec<usize>,
    pub right: Vec<usize>,
    pub incident_edges: Vec<(usize, usize)>,
}

/// On-disk form: `{"d": int, "root": int, "edges": [[child, parent], ...]}`.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct TreeSpec {
    pub d: usize,
    pub root: usize,
    pub edges: Vec<[usize; 2]>,
}

struct DisjointSets {
    parent: Vec<usize>,
}

impl DisjointSets {
    fn new(n: usize) -> Self {
        DisjointSets { parent: (0..n).collect() }
    }

    fn find(&mut self, mut x: usize) -> usize {
        while self.parent[x] != x {
            self.parent[x] = self.parent[self.parent[x]];
            x = self.parent[x];
        }
        x
    }

    /// Returns false when `a` and `b` were already joined.
    fn union(&mut self, a: usize, b: usize) -> bool {
        let (ra, rb) = (self.find(a), self.find(b));
        if ra == rb {
            return false;
        }
        self.parent[ra.max(rb)] = ra.min(rb);
        true
    }
}

pub(crate) fn union_find(n: usize) -> impl FnMut(usize, usize) -> bool {
    let mut sets = DisjointSets::new(n);
    move |a, b| sets.union(a, b)
}

impl RootedTree {
    /// Orients an unordered spanning-tree edge list away from `root`.
    pub fn from_edges(d: usize, edges: &[(usize, usize)], root: usize) -> Result<Self> {
        if d == 0 {
            return Err(Error::InvalidArgument("tree needs at least one node".into()));
        }
        let check = |k: usize| {
            if k == 0 || k > d {
                Err(Error::NodeOutOfRange { node: k, d })
            } else {
                Ok(())
            }
        };
        check(root)?;
        for &(a, b) in edges {
            check(a)?;
            check(b)?;
            if a == b {
                return Err(Error::SelfLoop(a));
            }
        }
        let mut join = union_find(d);
        let mut adjacency = vec![Vec::new(); d];
        for &(a, b) in edges {
            if !join(a - 1, b - 1) {
                return Err(Error::CycleDetected(a, b));
            }
            adjacency[a - 1].push(b);
            adjacency[b - 1].push(a);
        }

        let mut parent = vec![None; d];
        let mut children = vec![Vec::new(); d];
        let mut seen = vec![false; d];
        let mut stack = vec![root];
        seen[root - 1] = true;
        while let Some(k) = stack.pop() {
            for &w in &adjacency[k - 1] {
                if !seen[w - 1] {
                    seen[w - 1] = true;
                    parent[w - 1] = Some(k);
                    children[k - 1].push(w);
                    stack.push(w);
                }
            }
        }
        if let Some(missing) = seen.iter().position(|s| !s) {
            return Err(Error::Disconnected { node: missing + 1 });
        }
        for c in &mut children {
            c.sort_unstable();
        }

        let mut preorder = Vec::with_capacity(d);
        let mut stack = vec![root];
        while let Some(k) = stack.pop() {
            preorder.push(k);
            stack.extend(children[k - 1].iter().rev());
        }
        Ok(RootedTree { d, root, parent, children, preorder })
    }

    /// The path `1 - 2 - ... - d`.
    pub fn path(d: usize, root: usize) -> Result<Self> {
        let edges: Vec<_> = (1..d).map(|i| (i, i + 1)).collect();
        Self::from_edges(d, &edges, root)
    }

    pub fn from_spec(spec: &TreeSpec) -> Result<Self> {
        let edges: Vec<_> = spec.edges.iter().map(|e| (e[0], e[1])).collect();
        Self::from_edges(spec.d, &edges, spec.root)
    }

    pub fn to_spec(&self) -> TreeSpec {
        TreeSpec {
            d: self.d,
            root: self.root,
            edges: self.edges().into_iter().map(|(c, p)| [c, p]).collect(),
        }
    }

    /// Same undirected tree, new root.
    pub fn rerooted(&self, root: usize) -> Result<Self> {
        Self::from_edges(self.d, &self.edges(), root)
    }

    pub fn d(&self) -> usize {
        self.d
    }

    pub fn root(&self) -> usize {
        self.root
    }

    pub fn nodes(&self) -> impl Iterator<Item = usize> {
        1..=self.d
    }

    pub fn check_node(&self, k: usize) -> Result<()> {
        if k == 0 || k > self.d {
            Err(Error::NodeOutOfRange { node: k, d: self.d })
        } else {
            Ok(())
        }
    }

    pub fn parent(&self, k: usize) -> Option<usize> {
        self.parent[k - 1]
    }

    pub fn children(&self, k: usize) -> &[usize] {
        &self.children[k - 1]
    }

    pub fn is_root(&self, k: usize) -> bool {
        k == self.root
    }

    pub fn is_leaf(&self, k: usize) -> bool {
        self.children[k - 1].is_empty()
    }

    pub fn neighbors(&self, k: usize) -> Vec<usize> {
        let mut n = self.children[k - 1].clone();
        n.extend(self.parent(k));
        n.sort_unstable();
        n
    }

    pub fn degree(&self, k: usize) -> usize {
        self.children[k - 1].len() + usize::from(self.parent(k).is_some())
    }

    /// All `d - 1` edges as `(child, parent)`, sorted by child.
    pub fn edges(&self) -> Vec<(usize, usize)> {
        self.nodes().filter_map(|k| self.parent(k).map(|p| (k, p))).collect()
    }

    pub fn has_edge(&self, a: usize, b: usize) -> bool {
        self.parent(a) == Some(b) || self.parent(b) == Some(a)
    }

    /// Canonical `(child, parent)` key of an undirected tree edge.
    pub fn edge_key(&self, a: usize, b: usize) -> Option<(usize, usize)> {
        if self.parent(a) == Some(b) {
            Some((a, b))
        } else if self.parent(b) == Some(a) {
            Some((b, a))
        } else {
            None
        }
    }

    /// E(k): edges incident to `k`, each keyed `(child, parent)`, sorted.
    pub fn incident_edges(&self, k: usize) -> Vec<(usize, usize)> {
        let mut e: Vec<_> = self.children(k).iter().map(|&w| (w, k)).collect();
        e.extend(self.parent(k).map(|p| (k, p)));
        e.sort_unstable();
        e
    }

    /// Root first, children visited in ascending order (depth first).
    pub fn preorder(&self) -> &[usize] {
        &self.preorder
    }

    /// Every node after all of its descendants.
    pub fn postorder(&self) -> Vec<usize> {
        self.preorder.iter().rev().copied().collect()
    }

    /// L(k): strict descendants of `k`, sorted.
    pub fn descendants(&self, k: usize) -> Vec<usize> {
        let mut out = Vec::new();
        let mut stack: Vec<usize> = self.children(k).to_vec();
        while let Some(w) = stack.pop() {
            out.push(w);
            stack.extend_from_slice(self.children(w));
        }
        out.sort_unstable();
        out
    }

    /// L(k) together with `k`, sorted.
    pub fn subtree(&self, k: usize) -> Vec<usize> {
        let mut s = self.descendants(k);
        s.push(k);
        s.sort_unstable();
        s
    }

    /// R(k): every node that is neither `k` nor below it, sorted.
    pub fn non_descendants(&self, k: usize) -> Vec<usize> {
        let mut inside = vec![false; self.d];
        for w in self.subtree(k) {
            inside[w - 1] = true;
        }
        self.nodes().filter(|w| !inside[w - 1]).collect()
    }

    pub fn is_descendant(&self, w: usize, k: usize) -> bool {
        let mut cur = self.parent(w);
        while let Some(p) = cur {
            if p == k {
                return true;
            }
            cur = self.parent(p);
        }
        false
    }

    pub fn relations(&self, k: usize) -> Result<Relations> {
        self.check_node(k)?;
        Ok(Relations {
            children: self.children(k).to_vec(),
            parent: self.parent(k),
            neighbors: self.neighbors(k),
            left: self.descendants(k),
            right: self.non_descendants(k),
            incident_edges: self.incident_edges(k),
        })
    }

    /// Hop distances from `k` to every node (index `w - 1`).
    pub fn distances_from(&self, k: usize) -> Vec<usize> {
        let mut dist = vec![usize::MAX; self.d];
        dist[k - 1] = 0;
        let mut queue = std::collections::VecDeque::from([k]);
        while let Some(v) = queue.pop_front() {
            for w in self.neighbors(v) {
                if dist[w - 1] == usize::MAX {
                    dist[w - 1] = dist[v - 1] + 1;
                    queue.push_back(w);
                }
            }
        }
        dist
    }

    pub fn distance(&self, a: usize, b: usize) -> usize {
        self.distances_from(a)[b - 1]
    }

    /// True when `set` is non-empty and induces a connected subgraph.
    pub fn is_connected_subset(&self, set: &[usize]) -> bool {
        if set.is_empty() {
            return false;
        }
        let mut member = vec![false; self.d];
        for &k in set {
            member[k - 1] = true;
        }
        // a connected induced subgraph of a tree has exactly one node whose
        // parent lies outside it
        set.iter()
            .filter(|&&k| self.parent(k).is_none_or(|p| !member[p - 1]))
            .count()
            == 1
    }

    /// Undirected edge set, each edge as `(min, max)`, sorted.
    pub fn undirected_edges(&self) -> Vec<(usize, usize)> {
        let mut e: Vec<_> = self.edges().into_iter().map(|(a, b)| (a.min(b), a.max(b))).collect();
        e.sort_unstable();
        e
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    /// The ten-node tree used to illustrate the notation: rooted at 7,
    /// node 4 has children {2, 5} and parent 6.
    pub(crate) fn notation_tree() -> RootedTree {
        let edges = [(1, 2), (3, 2), (2, 4), (5, 4), (4, 6), (6, 7), (8, 7), (9, 8), (10, 8)];
        RootedTree::from_edges(10, &edges, 7).unwrap()
    }

    #[test]
    fn forced_orientation_on_path() {
        let t = RootedTree::from_edges(3, &[(1, 2), (2, 3)], 3).unwrap();
        assert_eq!(t.parent(1), Some(2));
        assert_eq!(t.parent(2), Some(3));
        assert_eq!(t.parent(3), None);
        assert_eq!(t.edges(), vec![(1, 2), (2, 3)]);
    }

    #[test]
    fn notation_example_relations() {
        let t = notation_tree();
        let r = t.relations(4).unwrap();
        assert_eq!(r.children, vec![2, 5]);
        assert_eq!(r.parent, Some(6));
        assert_eq!(r.neighbors, vec![2, 5, 6]);
        assert_eq!(r.left, vec![1, 2, 3, 5]);
        assert_eq!(r.right, vec![6, 7, 8, 9, 10]);
        assert_eq!(r.incident_edges, vec![(2, 4), (4, 6), (5, 4)]);
    }

    #[test]
    fn root_and_leaf_relations() {
        let t = notation_tree();
        let r = t.relations(7).unwrap();
        assert_eq!(r.parent, None);
        assert!(r.right.is_empty());
        let p = RootedTree::path(3, 3).unwrap();
        let r = p.relations(1).unwrap();
        assert!(r.left.is_empty());
        assert_eq!(r.right, vec![2, 3]);
    }

    #[test]
    fn rejections_are_distinct() {
        assert!(matches!(
            RootedTree::from_edges(3, &[(1, 2), (2, 3), (3, 1)], 1),
            Err(Error::CycleDetected(3, 1))
        ));
        assert!(matches!(
            RootedTree::from_edges(4, &[(1, 2), (3, 4)], 1),
            Err(Error::Disconnected { node: 3 })
        ));
        assert!(matches!(
            RootedTree::from_edges(3, &[(1, 2), (2, 4)], 1),
            Err(Error::NodeOutOfRange { node: 4, d: 3 })
        ));
        assert!(matches!(RootedTree::from_edges(3, &[(1, 2)], 0), Err(Error::NodeOutOfRange { .. })));
        assert!(matches!(RootedTree::from_edges(2, &[(2, 2)], 1), Err(Error::SelfLoop(2))));
    }

    #[test]
    fn partition_and_child_blocks() {
        let t = notation_tree();
        for k in t.nodes() {
            let mut all = t.descendants(k);
            all.push(k);
            all.extend(t.non_descendants(k));
            all.sort_unstable();
            assert_eq!(all, (1..=10).collect::<Vec<_>>());
            if !t.is_leaf(k) {
                let mut union: Vec<usize> = t.children(k).iter().flat_map(|&w| t.subtree(w)).collect();
                let n = union.len();
                union.sort_unstable();
                union.dedup();
                assert_eq!(union.len(), n, "child blocks overlap at {k}");
                assert_eq!(union, t.descendants(k));
            }
        }
    }

    #[test]
    fn deterministic_for_permuted_input() {
        let a = RootedTree::from_edges(4, &[(1, 2), (2, 3), (2, 4)], 1).unwrap();
        let b = RootedTree::from_edges(4, &[(4, 2), (3, 2), (2, 1)], 1).unwrap();
        assert_eq!(a, b);
        assert_eq!(a.children(2), &[3, 4]);
    }

    #[test]
    fn spec_round_trip_and_connectivity() {
        let t = notation_tree();
        let json = serde_json::to_string(&t.to_spec()).unwrap();
        let back = RootedTree::from_spec(&serde_json::from_str(&json).unwrap()).unwrap();
        assert_eq!(t, back);
        assert!(t.is_connected_subset(&[2, 4, 5]));
        assert!(!t.is_connected_subset(&[1, 3]));
        assert_eq!(t.distance(1, 10), 6);
        assert_eq!(t.preorder()[0], 7);
        assert_eq!(t.preorder().len(), 10);
    }
}
