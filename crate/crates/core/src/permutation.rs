//! Fubini reordering of the simplex: sector assignment and permutation graphs.
//!
//! Integrating the variables of `t > x_1 > … > x_n > s` in the order
//! `x_{σ(1)}, …, x_{σ(n)}` bounds each new variable by its nearest already
//! integrated neighbours. Writing every two-sided bound `∫_{s_j}^{t_j}` as
//! `∫_s^{t_j} − ∫_s^{s_j}` turns the simplex integral into a signed sum of
//! tree integrals whose vertices are the variables in integration order.

use std::fmt;

use crate::error::{invalid, Error, Result};
use crate::tree::DecoratedForest;

/// A permutation of `0..n`, `images()[j] = σ(j)`.
#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct Permutation(Vec<usize>);

impl Permutation {
    pub fn new(images: Vec<usize>) -> Result<Self> {
        let n = images.len();
        let mut seen = vec![false; n];
        for &i in &images {
            if i >= n || seen[i] {
                return invalid(format!("{images:?} is not a bijection on 0..{n}"));
            }
            seen[i] = true;
        }
        Ok(Permutation(images))
    }

    /// Builds from the 1-based one-line notation `(σ(1), …, σ(n))`.
    pub fn from_one_based(images: &[usize]) -> Result<Self> {
        let zero: Option<Vec<usize>> = images.iter().map(|&i| i.checked_sub(1)).collect();
        match zero {
            Some(v) => Self::new(v),
            None => invalid("one-based permutation contains 0"),
        }
    }

    pub fn identity(n: usize) -> Self {
        Permutation((0..n).collect())
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    pub fn images(&self) -> &[usize] {
        &self.0
    }

    pub fn is_identity(&self) -> bool {
        self.0.iter().enumerate().all(|(j, &i)| i == j)
    }

    /// All permutations of `0..n` in lexicographic order.
    pub fn all(n: usize) -> Vec<Permutation> {
        let mut out = Vec::new();
        let mut cur: Vec<usize> = (0..n).collect();
        loop {
            out.push(Permutation(cur.clone()));
            // next lexicographic permutation
            let Some(i) = (1..n).rev().find(|&i| cur[i - 1] < cur[i]) else {
                break;
            };
            let j = (i..n).rev().find(|&j| cur[j] > cur[i - 1]).expect("pivot exists");
            cur.swap(i - 1, j);
            cur[i..].reverse();
        }
        out
    }
}

impl fmt::Display for Permutation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let s: Vec<String> = self.0.iter().map(|i| (i + 1).to_string()).collect();
        write!(f, "({})", s.join(","))
    }
}

/// Sector ordering key: magnitude first, then original index.
///
/// The index tie-break is invariant under `ξ → −ξ`, which keeps Hermitian
/// conjugate tuples in the same sector.
#[inline]
pub(crate) fn sector_precedes(mag_a: f64, idx_a: usize, mag_b: f64, idx_b: usize) -> bool {
    mag_a < mag_b || (mag_a == mag_b && idx_a < idx_b)
}

fn check_frequencies(xi: &[f64]) -> Result<()> {
    if let Some(i) = xi.iter().position(|x| *x == 0.0 || !x.is_finite()) {
        return Err(Error::InvalidInput(format!(
            "frequency {} at position {} must be finite and nonzero",
            xi[i],
            i + 1
        )));
    }
    Ok(())
}

/// The unique `σ` with `|ξ_{σ(1)}| ≤ … ≤ |ξ_{σ(n)}|`, equal magnitudes ordered by index.
pub fn sector_assignment(xi: &[f64]) -> Result<Permutation> {
    check_frequencies(xi)?;
    let mut idx: Vec<usize> = (0..xi.len()).collect();
    idx.sort_by(|&a, &b| xi[a].abs().total_cmp(&xi[b].abs()).then(a.cmp(&b)));
    Ok(Permutation(idx))
}

/// Whether the tuple lies in the sector `D^σ` (with the same tie-break).
pub fn in_sector(sigma: &Permutation, xi: &[f64]) -> Result<bool> {
    check_frequencies(xi)?;
    if sigma.len() != xi.len() {
        return invalid("permutation and tuple lengths differ");
    }
    let s = sigma.images();
    Ok(s.windows(2)
        .all(|w| sector_precedes(xi[w[0]].abs(), w[0], xi[w[1]].abs(), w[1])))
}

/// `T^σ = Σ_j g(σ, j) T_j^σ`.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct SignedForestSum {
    pub terms: Vec<(i8, DecoratedForest)>,
}

impl SignedForestSum {
    pub fn len(&self) -> usize {
        self.terms.len()
    }

    pub fn is_empty(&self) -> bool {
        self.terms.is_empty()
    }
}

/// Expands the σ-reordered simplex integral with labels `labels` (one per
/// original variable) into signed forests.
///
/// Vertex `j` of every output forest is the `j`-th integrated variable
/// `x_{σ(j)}` and carries `labels[σ(j)]`.
pub fn permutation_graph(sigma: &Permutation, labels: &[usize]) -> Result<SignedForestSum> {
    let n = sigma.len();
    if n == 0 {
        return invalid("permutation graph needs n >= 1");
    }
    if labels.len() != n {
        return invalid(format!("{} labels for a permutation of {n}", labels.len()));
    }
    let s = sigma.images();
    let mut partial: Vec<(i8, Vec<Option<usize>>)> = vec![(1, Vec::with_capacity(n))];
    for j in 0..n {
        let var = s[j];
        // nearest integrated neighbours: larger variable (smaller index) above, smaller below
        let upper = (0..j).filter(|&i| s[i] < var).max_by_key(|&i| s[i]);
        let lower = (0..j).filter(|&i| s[i] > var).min_by_key(|&i| s[i]);
        partial = match lower {
            None => partial
                .into_iter()
                .map(|(g, mut p)| {
                    p.push(upper);
                    (g, p)
                })
                .collect(),
            Some(lo) => partial
                .into_iter()
                .flat_map(|(g, p)| {
                    let mut a = p.clone();
                    a.push(upper);
                    let mut b = p;
                    b.push(Some(lo));
                    [(g, a), (-g, b)]
                })
                .collect(),
        };
    }
    let relabeled: Vec<usize> = s.iter().map(|&i| labels[i]).collect();
    let terms = partial
        .into_iter()
        .map(|(g, p)| Ok((g, DecoratedForest::new(p, relabeled.clone())?)))
        .collect::<Result<Vec<_>>>()?;
    Ok(SignedForestSum { terms })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn perm(v: &[usize]) -> Permutation {
        Permutation::from_one_based(v).unwrap()
    }

    #[test]
    fn sector_examples() {
        assert_eq!(sector_assignment(&[5.0, -2.0, 3.0]).unwrap(), perm(&[2, 3, 1]));
        assert!(sector_assignment(&[1.0, 2.0, 3.0, 4.0]).unwrap().is_identity());
        assert_eq!(sector_assignment(&[-3.0, 3.0]).unwrap(), perm(&[1, 2]));
        assert!(sector_assignment(&[1.0, 0.0]).is_err());
    }

    #[test]
    fn all_permutations_lexicographic() {
        let all = Permutation::all(3);
        assert_eq!(all.len(), 6);
        assert!(all[0].is_identity());
        assert_eq!(all[5], perm(&[3, 2, 1]));
        assert!(Permutation::new(vec![0, 0]).is_err());
    }

    #[test]
    fn identity_gives_trunk() {
        let g = permutation_graph(&Permutation::identity(4), &[3, 1, 4, 1]).unwrap();
        assert_eq!(g.terms.len(), 1);
        assert_eq!(g.terms[0].0, 1);
        assert_eq!(g.terms[0].1, DecoratedForest::trunk(&[3, 1, 4, 1]).unwrap());
    }

    #[test]
    fn transposition_on_two_letters() {
        let g = permutation_graph(&perm(&[2, 1]), &[7, 9]).unwrap();
        assert_eq!(g.terms.len(), 2);
        assert_eq!(g.terms[0].0, 1);
        assert_eq!(g.terms[0].1.to_string(), "2; 0,0; 9,7");
        assert_eq!(g.terms[1].0, -1);
        assert_eq!(g.terms[1].1.to_string(), "2; 0,1; 9,7");
    }

    #[test]
    fn cyclic_example_on_three_letters() {
        let g = permutation_graph(&perm(&[2, 3, 1]), &[1, 2, 3]).unwrap();
        let mut terms: Vec<(i8, String)> =
            g.terms.iter().map(|(s, f)| (*s, f.to_string())).collect();
        terms.sort();
        assert_eq!(
            terms,
            vec![(-1, "3; 0,1,1; 2,3,1".to_string()), (1, "3; 0,1,0; 2,3,1".to_string())]
        );
    }

    #[test]
    fn term_count_is_power_of_two() {
        for n in 1..=5 {
            for sigma in Permutation::all(n) {
                let g = permutation_graph(&sigma, &vec![1; n]).unwrap();
                let s = sigma.images();
                let expansions = (1..n)
                    .filter(|&j| (0..j).any(|i| s[i] > s[j]))
                    .count();
                assert_eq!(g.len(), 1 << expansions, "sigma {sigma}");
            }
        }
    }
}
