//! Decorated rooted forests, admissible cuts and the Connes-Kreimer coproduct.
//!
//! Vertices are numbered `0..n` and every non-root vertex has a parent with a
//! smaller number, so the integer order is a total order compatible with the
//! tree order. The canonical text form (used by fixtures and debug output) is
//! 1-based with `0` for "no parent":
//!
//! ```text
//! 3; 0,1,1; 2,1,3
//! ```
//!
//! is the tree rooted at vertex 1 (label 2) with two children.

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{invalid, Error, Result};

/// Largest forest for which cuts are enumerated (subset enumeration is exponential).
pub const MAX_CUT_VERTICES: usize = 24;

#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct DecoratedForest {
    parent: Vec<Option<usize>>,
    labels: Vec<usize>,
}

/// An admissible cut, stored as a sorted vertex list.
#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct Cut(Vec<usize>);

impl Cut {
    pub fn new(mut vertices: Vec<usize>) -> Result<Self> {
        if vertices.is_empty() {
            return invalid("a cut needs at least one vertex");
        }
        vertices.sort_unstable();
        vertices.dedup();
        Ok(Cut(vertices))
    }

    pub fn vertices(&self) -> &[usize] {
        &self.0
    }
}

/// One term `L ⊗ R` of the coproduct: root part on the left, top part on the right.
///
/// `left_vertices[i]` is the vertex of the original forest that became vertex
/// `i` of `left` (same for the right part).
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct TensorSplit {
    pub left: DecoratedForest,
    pub right: DecoratedForest,
    pub left_vertices: Vec<usize>,
    pub right_vertices: Vec<usize>,
}

impl DecoratedForest {
    pub fn new(parent: Vec<Option<usize>>, labels: Vec<usize>) -> Result<Self> {
        if parent.len() != labels.len() {
            return invalid(format!(
                "parent map has {} entries but label map has {}",
                parent.len(),
                labels.len()
            ));
        }
        for (v, p) in parent.iter().enumerate() {
            if let Some(p) = *p {
                if p >= v {
                    return invalid(format!("parent({}) = {} violates parent(v) < v", v + 1, p + 1));
                }
            }
        }
        if let Some(v) = labels.iter().position(|&l| l == 0) {
            return invalid(format!("label of vertex {} must be >= 1", v + 1));
        }
        Ok(DecoratedForest { parent, labels })
    }

    pub fn empty() -> Self {
        DecoratedForest { parent: Vec::new(), labels: Vec::new() }
    }

    /// The chain `n → n-1 → … → 1` rooted at the first vertex.
    pub fn trunk(labels: &[usize]) -> Result<Self> {
        if labels.is_empty() {
            return invalid("trunk tree needs a nonempty word");
        }
        let parent = (0..labels.len()).map(|v| v.checked_sub(1)).collect();
        Self::new(parent, labels.to_vec())
    }

    pub fn len(&self) -> usize {
        self.parent.len()
    }

    pub fn is_empty(&self) -> bool {
        self.parent.is_empty()
    }

    pub fn parent(&self, v: usize) -> Option<usize> {
        self.parent[v]
    }

    pub fn parents(&self) -> &[Option<usize>] {
        &self.parent
    }

    pub fn label(&self, v: usize) -> usize {
        self.labels[v]
    }

    pub fn labels(&self) -> &[usize] {
        &self.labels
    }

    pub fn roots(&self) -> Vec<usize> {
        (0..self.len()).filter(|&v| self.parent[v].is_none()).collect()
    }

    pub fn children(&self, v: usize) -> Vec<usize> {
        (v + 1..self.len()).filter(|&w| self.parent[w] == Some(v)).collect()
    }

    pub fn is_tree(&self) -> bool {
        self.roots().len() == 1
    }

    pub fn max_label(&self) -> usize {
        self.labels.iter().copied().max().unwrap_or(0)
    }

    /// `w ↠ v`: `w` lies strictly above `v` (v is a proper ancestor of w).
    pub fn is_above(&self, w: usize, v: usize) -> bool {
        let mut cur = self.parent[w];
        while let Some(p) = cur {
            if p == v {
                return true;
            }
            if p < v {
                return false;
            }
            cur = self.parent[p];
        }
        false
    }

    pub fn comparable(&self, a: usize, b: usize) -> bool {
        a == b || self.is_above(a, b) || self.is_above(b, a)
    }

    /// Vertices strictly above `v`, in increasing order.
    pub fn above(&self, v: usize) -> Vec<usize> {
        (v + 1..self.len()).filter(|&w| self.is_above(w, v)).collect()
    }

    /// `1 + |{w : w ↠ v}|`.
    pub fn vertex_weight(&self, v: usize) -> Result<usize> {
        if v >= self.len() {
            return invalid(format!("unknown vertex {}", v + 1));
        }
        Ok(1 + self.above(v).len())
    }

    /// Root of the tree containing `v`.
    pub fn root_of(&self, mut v: usize) -> usize {
        while let Some(p) = self.parent[v] {
            v = p;
        }
        v
    }

    /// Vertex sets of the connected components, ordered by root.
    pub fn components(&self) -> Vec<Vec<usize>> {
        let roots = self.roots();
        let mut comps = vec![Vec::new(); roots.len()];
        for v in 0..self.len() {
            let r = self.root_of(v);
            let idx = roots.binary_search(&r).expect("root listed");
            comps[idx].push(v);
        }
        comps
    }

    /// Induced sub-forest on `vertices` (sorted); edges leaving the set are dropped.
    pub fn subforest(&self, vertices: &[usize]) -> DecoratedForest {
        let index_of = |v: usize| vertices.binary_search(&v).ok();
        let parent = vertices
            .iter()
            .map(|&v| self.parent[v].and_then(index_of))
            .collect();
        let labels = vertices.iter().map(|&v| self.labels[v]).collect();
        DecoratedForest { parent, labels }
    }

    /// All admissible cuts, lexicographically ordered on their sorted vertex sets.
    ///
    /// These are the nonempty antichains of the forest other than the set of
    /// all roots; for a single tree this means antichains avoiding the root.
    pub fn admissible_cuts(&self) -> Vec<Cut> {
        let n = self.len();
        assert!(n <= MAX_CUT_VERTICES, "cut enumeration limited to {MAX_CUT_VERTICES} vertices");
        let roots = self.roots();
        let mut out = Vec::new();
        let mut current = Vec::new();
        self.antichains(0, &mut current, &mut out);
        out.retain(|c| !c.is_empty() && *c != roots);
        out.sort();
        out.into_iter().map(Cut).collect()
    }

    fn antichains(&self, next: usize, current: &mut Vec<usize>, out: &mut Vec<Vec<usize>>) {
        if next == self.len() {
            out.push(current.clone());
            return;
        }
        self.antichains(next + 1, current, out);
        if current.iter().all(|&c| !self.comparable(c, next)) {
            current.push(next);
            self.antichains(next + 1, current, out);
            current.pop();
        }
    }

    pub fn is_admissible(&self, cut: &Cut) -> bool {
        let vs = cut.vertices();
        if vs.iter().any(|&v| v >= self.len()) {
            return false;
        }
        let pairwise_free = vs
            .iter()
            .enumerate()
            .all(|(i, &a)| vs[i + 1..].iter().all(|&b| !self.comparable(a, b)));
        pairwise_free && vs != self.roots().as_slice()
    }

    pub fn split_at_cut(&self, cut: &Cut) -> Result<TensorSplit> {
        if !self.is_admissible(cut) {
            return Err(Error::InvalidInput(format!("cut {:?} is not admissible", cut.display())));
        }
        let vs = cut.vertices();
        let (right_vertices, left_vertices): (Vec<usize>, Vec<usize>) = (0..self.len())
            .partition(|&w| vs.iter().any(|&c| c == w || self.is_above(w, c)));
        Ok(self.split_by(left_vertices, right_vertices))
    }

    fn split_by(&self, left_vertices: Vec<usize>, right_vertices: Vec<usize>) -> TensorSplit {
        TensorSplit {
            left: self.subforest(&left_vertices),
            right: self.subforest(&right_vertices),
            left_vertices,
            right_vertices,
        }
    }

    /// `Δ F = ∅ ⊗ F + F ⊗ ∅ + Σ_cuts L ⊗ R`, trivial terms first.
    pub fn coproduct(&self) -> Vec<TensorSplit> {
        let all: Vec<usize> = (0..self.len()).collect();
        if all.is_empty() {
            return vec![self.split_by(Vec::new(), Vec::new())];
        }
        let mut out = vec![self.split_by(Vec::new(), all.clone()), self.split_by(all, Vec::new())];
        for cut in self.admissible_cuts() {
            out.push(self.split_at_cut(&cut).expect("enumerated cuts are admissible"));
        }
        out
    }

    pub fn to_canonical_string(&self) -> String {
        self.to_string()
    }
}

impl Cut {
    fn display(&self) -> Vec<usize> {
        self.0.iter().map(|v| v + 1).collect()
    }
}

impl fmt::Display for DecoratedForest {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let parents: Vec<String> = self
            .parent
            .iter()
            .map(|p| p.map_or(0, |p| p + 1).to_string())
            .collect();
        let labels: Vec<String> = self.labels.iter().map(|l| l.to_string()).collect();
        write!(f, "{}; {}; {}", self.len(), parents.join(","), labels.join(","))
    }
}

impl FromStr for DecoratedForest {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let parts: Vec<&str> = s.split(';').map(str::trim).collect();
        if parts.len() != 3 {
            return invalid(format!("expected `n; parents; labels`, got {s:?}"));
        }
        let n: usize = parts[0]
            .parse()
            .map_err(|_| Error::InvalidInput(format!("bad vertex count {:?}", parts[0])))?;
        let list = |p: &str| -> Result<Vec<usize>> {
            if p.is_empty() {
                return Ok(Vec::new());
            }
            p.split(',')
                .map(|x| {
                    x.trim()
                        .parse()
                        .map_err(|_| Error::InvalidInput(format!("bad integer {x:?}")))
                })
                .collect()
        };
        let parents = list(parts[1])?;
        let labels = list(parts[2])?;
        if parents.len() != n || labels.len() != n {
            return invalid(format!("expected {n} parents and labels"));
        }
        let parent = parents.into_iter().map(|p| p.checked_sub(1)).collect();
        DecoratedForest::new(parent, labels)
    }
}

/// All order-preserving interleavings of two words, with multiplicity.
pub fn shuffles<T: Clone>(w1: &[T], w2: &[T]) -> Vec<Vec<T>> {
    fn rec<T: Clone>(a: &[T], b: &[T], prefix: &mut Vec<T>, out: &mut Vec<Vec<T>>) {
        if a.is_empty() || b.is_empty() {
            let mut w = prefix.clone();
            w.extend_from_slice(a);
            w.extend_from_slice(b);
            out.push(w);
            return;
        }
        prefix.push(a[0].clone());
        rec(&a[1..], b, prefix, out);
        prefix.pop();
        prefix.push(b[0].clone());
        rec(a, &b[1..], prefix, out);
        prefix.pop();
    }
    let mut out = Vec::new();
    rec(w1, w2, &mut Vec::new(), &mut out);
    out
}

/// Every forest on `n` vertices (labels all 1), i.e. every parent map with `parent(v) < v`.
pub fn all_forests(n: usize) -> Vec<DecoratedForest> {
    let mut out = Vec::new();
    let mut parent = Vec::with_capacity(n);
    fn rec(n: usize, parent: &mut Vec<Option<usize>>, out: &mut Vec<DecoratedForest>) {
        let v = parent.len();
        if v == n {
            out.push(DecoratedForest { parent: parent.clone(), labels: vec![1; n] });
            return;
        }
        for p in std::iter::once(None).chain((0..v).map(Some)) {
            parent.push(p);
            rec(n, parent, out);
            parent.pop();
        }
    }
    rec(n, &mut parent, &mut out);
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    fn cherry() -> DecoratedForest {
        DecoratedForest::new(vec![None, Some(0), Some(0)], vec![1, 2, 3]).unwrap()
    }

    fn cut_sets(f: &DecoratedForest) -> Vec<Vec<usize>> {
        f.admissible_cuts().iter().map(|c| c.display()).collect()
    }

    #[test]
    fn trunk_shapes() {
        let t = DecoratedForest::trunk(&[1]).unwrap();
        assert_eq!(t.len(), 1);
        assert!(t.roots() == vec![0]);
        let t = DecoratedForest::trunk(&[1, 2]).unwrap();
        assert_eq!(t.parent(1), Some(0));
        assert_eq!(t.labels(), &[1, 2]);
        let t = DecoratedForest::trunk(&[1, 2, 3]).unwrap();
        assert_eq!(t.to_string(), "3; 0,1,2; 1,2,3");
        assert!(DecoratedForest::trunk(&[]).is_err());
    }

    #[test]
    fn invalid_parent_order_rejected() {
        assert!(DecoratedForest::new(vec![Some(1), None], vec![1, 1]).is_err());
        assert!(DecoratedForest::new(vec![None], vec![0]).is_err());
        assert!(DecoratedForest::new(vec![None, None], vec![1]).is_err());
    }

    #[test]
    fn cuts_of_small_trees() {
        let t = DecoratedForest::trunk(&[1, 2, 3]).unwrap();
        assert_eq!(cut_sets(&t), vec![vec![2], vec![3]]);
        assert_eq!(cut_sets(&cherry()), vec![vec![2], vec![2, 3], vec![3]]);
        for n in 1..=8 {
            let t = DecoratedForest::trunk(&vec![1; n]).unwrap();
            assert_eq!(t.admissible_cuts().len(), n - 1);
        }
    }

    #[test]
    fn forest_cuts_allow_single_roots() {
        // two singletons: {1} and {2} are cuts, {} and {1,2} are the trivial ones
        let f = DecoratedForest::new(vec![None, None], vec![1, 2]).unwrap();
        assert_eq!(cut_sets(&f), vec![vec![1], vec![2]]);
    }

    #[test]
    fn splits_follow_the_cut() {
        let t = DecoratedForest::trunk(&[1, 2, 3]).unwrap();
        let s = t.split_at_cut(&Cut::new(vec![1]).unwrap()).unwrap();
        assert_eq!(s.left_vertices, vec![0]);
        assert_eq!(s.right_vertices, vec![1, 2]);
        assert_eq!(s.right.to_string(), "2; 0,1; 2,3");
        let s = t.split_at_cut(&Cut::new(vec![2]).unwrap()).unwrap();
        assert_eq!(s.left.to_string(), "2; 0,1; 1,2");
        assert_eq!(s.right.to_string(), "1; 0; 3");
        let s = cherry().split_at_cut(&Cut::new(vec![1, 2]).unwrap()).unwrap();
        assert_eq!(s.left.to_string(), "1; 0; 1");
        assert_eq!(s.right.to_string(), "2; 0,0; 2,3");
        assert!(t.split_at_cut(&Cut::new(vec![0]).unwrap()).is_err());
        assert!(t.split_at_cut(&Cut::new(vec![1, 2]).unwrap()).is_err());
    }

    #[test]
    fn coproduct_counts() {
        assert_eq!(DecoratedForest::trunk(&[1]).unwrap().coproduct().len(), 2);
        assert_eq!(DecoratedForest::trunk(&[1, 2]).unwrap().coproduct().len(), 3);
    }

    #[test]
    fn weights() {
        let t = DecoratedForest::trunk(&[1, 2, 3]).unwrap();
        assert_eq!(t.vertex_weight(2).unwrap(), 1);
        assert_eq!(t.vertex_weight(0).unwrap(), 3);
        assert!(t.vertex_weight(3).is_err());
        // nodes 1,2,5 and leaves 3,4,6: 2 -> 1, 3 -> 2, 4 -> 2, 5 -> 1, 6 -> 5
        let fig = DecoratedForest::new(
            vec![None, Some(0), Some(1), Some(1), Some(0), Some(4)],
            vec![1; 6],
        )
        .unwrap();
        assert_eq!(fig.vertex_weight(0).unwrap(), 6);
        assert_eq!(fig.vertex_weight(1).unwrap(), 3);
        for leaf in [2, 3, 5] {
            assert_eq!(fig.vertex_weight(leaf).unwrap(), 1);
        }
    }

    #[test]
    fn shuffle_examples() {
        assert_eq!(shuffles(&[1], &[2]), vec![vec![1, 2], vec![2, 1]]);
        assert_eq!(shuffles(&[1], &[1]), vec![vec![1, 1], vec![1, 1]]);
        assert_eq!(
            shuffles(&[1, 2], &[3]),
            vec![vec![1, 2, 3], vec![1, 3, 2], vec![3, 1, 2]]
        );
    }

    #[test]
    fn canonical_text_round_trip() {
        let f = cherry();
        let s = f.to_string();
        assert_eq!(s, "3; 0,1,1; 1,2,3");
        assert_eq!(s.parse::<DecoratedForest>().unwrap(), f);
        assert!("2; 0; 1".parse::<DecoratedForest>().is_err());
    }

    #[test]
    fn forest_enumeration_counts() {
        // parent(v) ranges over v+1 choices, so n! forests on n vertices
        assert_eq!(all_forests(4).len(), 24);
        assert_eq!(all_forests(5).len(), 120);
    }
}
