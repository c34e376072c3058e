//! Regularized skeleton and tree integrals of atomic measures.
//!
//! For a tree with frequencies `ξ_v`, the skeleton integral of the pure
//! exponential `x ↦ e^{i Σ x_v ξ_v}` is
//!
//! ```text
//! e^{it Σ_v ξ_v} / Π_v i(ξ_v + Σ_{w↠v} ξ_w)
//! ```
//!
//! and the regularized version keeps only tuples in the tree's regularization
//! domain. Tree integrals are assembled from skeleton integrals by the
//! increment/boundary recursion
//!
//! ```text
//! [RI_T]_ts = [δ RSkI_T]_ts − Σ_cuts [RI_{L_c T}]_ts [RSkI_{R_c T}]_s
//! ```
//!
//! which is expanded once per forest into a signed polynomial in "pieces"
//! (connected vertex sets evaluated at the upper or lower time) and then
//! summed over frequency tuples.

use std::collections::{BTreeMap, HashMap};

use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::error::{invalid, Error, Result};
use crate::numeric::pairwise_sum_complex;
use crate::tree::{Cut, DecoratedForest};

pub const DEFAULT_C_REG: f64 = 0.5;

const MAX_PLAN_VERTICES: usize = 8;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Mode {
    Regularized,
    /// No frequency cut-off; only meaningful for non-resonant atomic measures.
    Trivial,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RegularizationConfig {
    pub c_reg: f64,
    pub mode: Mode,
}

impl RegularizationConfig {
    pub fn new(c_reg: f64, mode: Mode) -> Result<Self> {
        if !(c_reg > 0.0 && c_reg < 1.0) {
            return invalid(format!("c_reg must lie in (0,1), got {c_reg}"));
        }
        Ok(RegularizationConfig { c_reg, mode })
    }

    pub fn regularized(c_reg: f64) -> Result<Self> {
        Self::new(c_reg, Mode::Regularized)
    }

    pub fn trivial() -> Self {
        RegularizationConfig { c_reg: DEFAULT_C_REG, mode: Mode::Trivial }
    }
}

impl Default for RegularizationConfig {
    fn default() -> Self {
        RegularizationConfig { c_reg: DEFAULT_C_REG, mode: Mode::Regularized }
    }
}

fn check_tuple(forest: &DecoratedForest, xi: &[f64]) -> Result<()> {
    if xi.len() != forest.len() {
        return invalid(format!("{} frequencies for {} vertices", xi.len(), forest.len()));
    }
    if let Some(v) = xi.iter().position(|x| *x == 0.0 || !x.is_finite()) {
        return invalid(format!("frequency at vertex {} must be finite and nonzero", v + 1));
    }
    Ok(())
}

/// `|ξ_1| ≤ … ≤ |ξ_n|` along the vertex numbering (equal magnitudes are
/// ordered by vertex number, so they always pass).
pub fn in_plus_domain(forest: &DecoratedForest, xi: &[f64]) -> Result<bool> {
    check_tuple(forest, xi)?;
    Ok(xi.windows(2).all(|w| w[0].abs() <= w[1].abs()))
}

/// `ξ_v + Σ_{w↠v} ξ_w` for every vertex.
pub fn resonance_denominators(forest: &DecoratedForest, xi: &[f64]) -> Vec<f64> {
    let mut d = xi.to_vec();
    for v in (0..forest.len()).rev() {
        if let Some(p) = forest.parent(v) {
            d[p] += d[v];
        }
    }
    d
}

/// Membership in the regularization domain of `forest`.
///
/// Regularized mode: `in_plus_domain` and, at every vertex with something
/// above it, `|ξ_v + Σ_{w↠v} ξ_w| > c_reg · max_{w↠v} |ξ_w|`. Trivial mode:
/// every tuple whose denominators are all nonzero.
pub fn in_reg_domain(forest: &DecoratedForest, xi: &[f64], cfg: &RegularizationConfig) -> Result<bool> {
    check_tuple(forest, xi)?;
    let d = resonance_denominators(forest, xi);
    match cfg.mode {
        Mode::Trivial => Ok(d.iter().all(|x| *x != 0.0)),
        Mode::Regularized => {
            if !in_plus_domain(forest, xi)? {
                return Ok(false);
            }
            Ok((0..forest.len()).all(|v| {
                let above = forest.above(v);
                above.is_empty() || {
                    let m = above.iter().map(|&w| xi[w].abs()).fold(0.0, f64::max);
                    d[v].abs() > cfg.c_reg * m
                }
            }))
        }
    }
}

/// Which frequency tuples the measure charges.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum Support {
    /// Product of the per-vertex atom tables.
    Product,
    /// Product restricted to the ordered sector `|ξ_1| ≤ … ≤ |ξ_n|`. A tuple
    /// whose magnitudes tie in groups of sizes `m_g` is shared evenly among
    /// the `Π m_g!` sectors it touches, so it is charged `1/Π m_g!` here.
    Sector,
}

/// An atomic measure on the frequencies of a forest's vertices.
#[derive(Debug, Clone)]
pub struct AtomicTreeMeasure {
    pub forest: DecoratedForest,
    /// Per-vertex atoms `(ξ, amplitude)`.
    pub tables: Vec<Vec<(f64, Complex64)>>,
    pub support: Support,
}

impl AtomicTreeMeasure {
    pub fn new(forest: DecoratedForest, tables: Vec<Vec<(f64, Complex64)>>, support: Support) -> Result<Self> {
        if tables.len() != forest.len() {
            return invalid(format!("{} atom tables for {} vertices", tables.len(), forest.len()));
        }
        for (v, t) in tables.iter().enumerate() {
            if t.iter().any(|(x, a)| *x == 0.0 || !x.is_finite() || !a.re.is_finite() || !a.im.is_finite()) {
                return invalid(format!("vertex {} has a zero or non-finite atom", v + 1));
            }
        }
        Ok(AtomicTreeMeasure { forest, tables, support })
    }

    /// Number of frequency tuples the evaluator will visit (an upper bound).
    pub fn tuple_count(&self) -> f64 {
        self.tables.iter().map(|t| t.len() as f64).product()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
enum Slot {
    Upper,
    Lower,
}

type Monomial = Vec<(u64, Slot)>;
type Poly = BTreeMap<Monomial, i64>;

fn poly_mul(a: &Poly, b: &Poly) -> Poly {
    let mut out = Poly::new();
    for (ma, ca) in a {
        for (mb, cb) in b {
            let mut m: Monomial = ma.iter().chain(mb.iter()).copied().collect();
            m.sort_unstable();
            *out.entry(m).or_insert(0) += ca * cb;
        }
    }
    out.retain(|_, c| *c != 0);
    out
}

fn poly_add_scaled(acc: &mut Poly, p: &Poly, scale: i64) {
    for (m, c) in p {
        *acc.entry(m.clone()).or_insert(0) += scale * c;
    }
    acc.retain(|_, c| *c != 0);
}

fn mask_of(vs: &[usize]) -> u64 {
    vs.iter().fold(0u64, |m, &v| m | (1 << v))
}

fn vertices_of(mask: u64) -> Vec<usize> {
    (0..64).filter(|v| mask & (1 << v) != 0).collect()
}

/// Symbolic expansion of `[RI_F]_{ts}` into pieces.
struct Expander<'a> {
    forest: &'a DecoratedForest,
    memo: HashMap<u64, Poly>,
}

impl<'a> Expander<'a> {
    fn components(&self, mask: u64) -> Vec<u64> {
        let vs = vertices_of(mask);
        self.forest.subforest(&vs).components().iter()
            .map(|c| mask_of(&c.iter().map(|&i| vs[i]).collect::<Vec<_>>()))
            .collect()
    }

    fn skeleton_lower(&self, mask: u64) -> Poly {
        let mut m: Monomial = self.components(mask).into_iter().map(|c| (c, Slot::Lower)).collect();
        m.sort_unstable();
        Poly::from([(m, 1)])
    }

    fn integral(&mut self, mask: u64) -> Poly {
        if let Some(p) = self.memo.get(&mask) {
            return p.clone();
        }
        let mut acc = Poly::from([(Vec::new(), 1)]);
        for comp in self.components(mask) {
            let t = self.tree_integral(comp);
            acc = poly_mul(&acc, &t);
        }
        self.memo.insert(mask, acc.clone());
        acc
    }

    fn tree_integral(&mut self, mask: u64) -> Poly {
        let mut acc = Poly::from([(vec![(mask, Slot::Upper)], 1), (vec![(mask, Slot::Lower)], -1)]);
        let vs = vertices_of(mask);
        let sub = self.forest.subforest(&vs);
        for cut in sub.admissible_cuts() {
            let split = sub.split_at_cut(&cut).expect("enumerated cut");
            let left = mask_of(&split.left_vertices.iter().map(|&i| vs[i]).collect::<Vec<_>>());
            let right = mask_of(&split.right_vertices.iter().map(|&i| vs[i]).collect::<Vec<_>>());
            let term = poly_mul(&self.integral(left), &self.skeleton_lower(right));
            poly_add_scaled(&mut acc, &term, -1);
        }
        acc
    }
}

/// A connected piece: vertices ascending (root first) with in-piece parents.
#[derive(Debug, Clone)]
struct Piece {
    vertices: Vec<usize>,
    parent: Vec<Option<usize>>,
    children: Vec<Vec<usize>>,
}

impl Piece {
    fn new(forest: &DecoratedForest, mask: u64) -> Self {
        let vertices = vertices_of(mask);
        let parent: Vec<Option<usize>> = vertices
            .iter()
            .map(|&v| forest.parent(v).and_then(|p| vertices.iter().position(|&w| w == p)))
            .collect();
        let mut children = vec![Vec::new(); vertices.len()];
        for (j, p) in parent.iter().enumerate() {
            if let Some(p) = p {
                children[*p].push(j);
            }
        }
        Piece { vertices, parent, children }
    }
}

/// Upper-vertex mask with its `(coefficient, pieces)` products.
type TermGroup = (u64, Vec<(i64, Vec<usize>)>);

/// Precomputed expansion of a forest, reusable across measures and times.
#[derive(Debug, Clone)]
pub struct ForestPlan {
    n: usize,
    pieces: Vec<Piece>,
    /// Terms grouped by the vertex set evaluated at the upper time:
    /// `(upper_mask, [(coefficient, piece indices)])`.
    groups: Vec<TermGroup>,
}

impl ForestPlan {
    /// Expansion of `[RI_F]_{ts}`.
    pub fn integral(forest: &DecoratedForest) -> Result<Self> {
        Self::check(forest)?;
        let mut ex = Expander { forest, memo: HashMap::new() };
        let full = if forest.is_empty() { 0 } else { (1u64 << forest.len()) - 1 };
        let poly = ex.integral(full);
        Ok(Self::from_poly(forest, &poly))
    }

    /// The skeleton integral at the upper time: one piece per tree.
    pub fn skeleton(forest: &DecoratedForest) -> Result<Self> {
        Self::check(forest)?;
        let mut m: Monomial = forest
            .components()
            .iter()
            .map(|c| (mask_of(c), Slot::Upper))
            .collect();
        m.sort_unstable();
        Ok(Self::from_poly(forest, &Poly::from([(m, 1)])))
    }

    fn check(forest: &DecoratedForest) -> Result<()> {
        if forest.len() > MAX_PLAN_VERTICES {
            return invalid(format!("forests above {MAX_PLAN_VERTICES} vertices are not supported"));
        }
        Ok(())
    }

    /// Signed sum of plans for forests on the same vertex set.
    pub fn combine(forest_terms: &[(i64, &DecoratedForest)]) -> Result<Self> {
        let Some((_, first)) = forest_terms.first() else {
            return invalid("nothing to combine");
        };
        let n = first.len();
        let mut total = Poly::new();
        let mut pieces: Vec<(u64, Piece)> = Vec::new();
        let mut keyed = Poly::new();
        for (sign, f) in forest_terms {
            Self::check(f)?;
            if f.len() != n {
                return invalid("combined forests must share the vertex count");
            }
            let mut ex = Expander { forest: f, memo: HashMap::new() };
            let poly = ex.integral((1u64 << n) - 1);
            // the same vertex mask may form different pieces in different forests,
            // so key monomials by piece identity rather than by mask
            for (m, c) in poly {
                let mut key: Monomial = Vec::with_capacity(m.len());
                for (mask, slot) in m {
                    let piece = Piece::new(f, mask);
                    let idx = match pieces.iter().position(|(pm, p)| *pm == mask && p.parent == piece.parent) {
                        Some(i) => i,
                        None => {
                            pieces.push((mask, piece));
                            pieces.len() - 1
                        }
                    };
                    key.push((idx as u64, slot));
                }
                key.sort_unstable();
                *keyed.entry(key).or_insert(0) += sign * c;
            }
        }
        keyed.retain(|_, c| *c != 0);
        total.extend(keyed);
        let piece_list: Vec<Piece> = pieces.into_iter().map(|(_, p)| p).collect();
        Ok(Self::group(n, piece_list, &total))
    }

    fn from_poly(forest: &DecoratedForest, poly: &Poly) -> Self {
        let mut masks: Vec<u64> = poly.keys().flat_map(|m| m.iter().map(|(mask, _)| *mask)).collect();
        masks.sort_unstable();
        masks.dedup();
        let pieces: Vec<Piece> = masks.iter().map(|&m| Piece::new(forest, m)).collect();
        let keyed: Poly = poly
            .iter()
            .map(|(m, c)| {
                let mut key: Monomial = m
                    .iter()
                    .map(|(mask, slot)| (masks.binary_search(mask).unwrap() as u64, *slot))
                    .collect();
                key.sort_unstable();
                (key, *c)
            })
            .collect();
        Self::group(forest.len(), pieces, &keyed)
    }

    fn group(n: usize, pieces: Vec<Piece>, keyed: &Poly) -> Self {
        let mut groups: BTreeMap<u64, Vec<(i64, Vec<usize>)>> = BTreeMap::new();
        for (m, c) in keyed {
            let upper = m
                .iter()
                .filter(|(_, s)| *s == Slot::Upper)
                .fold(0u64, |acc, (p, _)| acc | mask_of(&pieces[*p as usize].vertices));
            groups.entry(upper).or_default().push((*c, m.iter().map(|(p, _)| *p as usize).collect()));
        }
        ForestPlan { n, pieces, groups: groups.into_iter().collect() }
    }

    pub fn vertex_count(&self) -> usize {
        self.n
    }

    pub fn term_count(&self) -> usize {
        self.groups.iter().map(|(_, g)| g.len()).sum()
    }
}

/// Frequencies that all sit on `step · ℤ`; domain tests then run in integers,
/// so every evaluator takes the same decision on boundary tuples.
struct Lattice {
    step: f64,
    /// `idx[v][atom]` for the sorted tables
    idx: Vec<Vec<i64>>,
}

const MAX_LATTICE_INDEX: f64 = 1e7;

fn detect_lattice(tables: &[Vec<(f64, Complex64)>]) -> Option<Lattice> {
    let step = tables.iter().flatten().map(|(x, _)| x.abs()).fold(f64::INFINITY, f64::min);
    if !(step.is_finite() && step > 0.0) {
        return None;
    }
    let mut idx = Vec::with_capacity(tables.len());
    for t in tables {
        let mut row = Vec::with_capacity(t.len());
        for (x, _) in t {
            let q = x / step;
            let r = q.round();
            if (q - r).abs() > 1e-9 || r.abs() > MAX_LATTICE_INDEX {
                return None;
            }
            row.push(r as i64);
        }
        idx.push(row);
    }
    Some(Lattice { step, idx })
}

/// `|p| > c·m` for lattice indices.
#[inline]
pub(crate) fn lattice_pass(p: i64, m: i64, c: f64) -> bool {
    (p.unsigned_abs() as f64) > c * m as f64
}

/// Largest `q ≥ 0` with `!lattice_pass(q, m, c)`.
#[inline]
fn lattice_gap(m: i64, c: f64) -> i64 {
    (c * m as f64).floor() as i64
}

/// Per-tuple scratch for piece evaluation.
struct PieceScratch {
    d: Vec<f64>,
    maxabove: Vec<f64>,
    dk: Vec<i64>,
    mk: Vec<i64>,
}

impl PieceScratch {
    fn new() -> Self {
        PieceScratch {
            d: vec![0.0; MAX_PLAN_VERTICES],
            maxabove: vec![0.0; MAX_PLAN_VERTICES],
            dk: vec![0; MAX_PLAN_VERTICES],
            mk: vec![0; MAX_PLAN_VERTICES],
        }
    }

    /// `1_P(ξ) / Π_v i D_P(v)`; zero outside the piece's domain.
    fn eval(
        &mut self,
        piece: &Piece,
        xi: &[f64],
        lattice: Option<(f64, &[i64])>,
        cfg: &RegularizationConfig,
    ) -> Result<Complex64> {
        let m = piece.vertices.len();
        let zero = Complex64::new(0.0, 0.0);
        let regularized = cfg.mode == Mode::Regularized;
        if regularized {
            for j in 1..m {
                if xi[piece.vertices[j - 1]].abs() > xi[piece.vertices[j]].abs() {
                    return Ok(zero);
                }
            }
        }
        let mut prod = Complex64::new(1.0, 0.0);
        for j in (0..m).rev() {
            let v = piece.vertices[j];
            let has_children = !piece.children[j].is_empty();
            let d = if let Some((step, k)) = lattice {
                let mut dk = k[v];
                let mut mk = 0i64;
                for &c in &piece.children[j] {
                    dk += self.dk[c];
                    mk = mk.max(k[piece.vertices[c]].abs()).max(self.mk[c]);
                }
                self.dk[j] = dk;
                self.mk[j] = mk;
                if regularized && has_children && !lattice_pass(dk, mk, cfg.c_reg) {
                    return Ok(zero);
                }
                if !regularized && dk == 0 {
                    return Err(Error::Resonance { vertex: v + 1, denominator: 0.0 });
                }
                dk as f64 * step
            } else {
                let x = xi[v];
                let mut d = x;
                let mut mx = 0.0f64;
                let mut scale = x.abs();
                for &c in &piece.children[j] {
                    d += self.d[c];
                    let up = xi[piece.vertices[c]].abs().max(self.maxabove[c]);
                    mx = mx.max(up);
                    scale += up;
                }
                self.d[j] = d;
                self.maxabove[j] = mx;
                if regularized {
                    if has_children && d.abs() <= cfg.c_reg * mx {
                        return Ok(zero);
                    }
                } else if d.abs() <= 1e-12 * scale {
                    return Err(Error::Resonance { vertex: v + 1, denominator: d });
                }
                d
            };
            // 1/(i d) = −i/d
            prod *= Complex64::new(0.0, -1.0 / d);
        }
        Ok(prod)
    }
}

fn sort_tables(tables: &[Vec<(f64, Complex64)>]) -> Vec<Vec<(f64, Complex64)>> {
    tables
        .iter()
        .map(|t| {
            let mut t: Vec<(f64, Complex64)> =
                t.iter().copied().filter(|(_, a)| *a != Complex64::new(0.0, 0.0)).collect();
            t.sort_by(|a, b| a.0.abs().total_cmp(&b.0.abs()).then(a.0.total_cmp(&b.0)));
            t
        })
        .collect()
}

fn distinct_times(pairs: &[(f64, f64)]) -> (Vec<f64>, Vec<(usize, usize)>) {
    let mut times: Vec<f64> = pairs.iter().flat_map(|(t, s)| [*t, *s]).collect();
    times.sort_by(f64::total_cmp);
    times.dedup();
    let idx = |x: f64| times.iter().position(|&y| y == x).unwrap();
    let pi = pairs.iter().map(|(t, s)| (idx(*t), idx(*s))).collect();
    (times, pi)
}

/// Evaluates a plan against an atomic measure for a batch of `(t, s)` pairs.
pub fn evaluate_plan(
    plan: &ForestPlan,
    measure: &AtomicTreeMeasure,
    cfg: &RegularizationConfig,
    pairs: &[(f64, f64)],
) -> Result<Vec<Complex64>> {
    if plan.n != measure.forest.len() {
        return invalid("plan and measure disagree on the vertex count");
    }
    if plan.n == 0 {
        return Ok(vec![Complex64::new(1.0, 0.0); pairs.len()]);
    }
    match &measure.support {
        Support::Product => evaluate_product(plan, measure, cfg, pairs),
        Support::Sector => evaluate_sector(plan, measure, cfg, pairs),
    }
}

/// Product measures factor over pieces: every piece is summed on its own.
fn evaluate_product(
    plan: &ForestPlan,
    measure: &AtomicTreeMeasure,
    cfg: &RegularizationConfig,
    pairs: &[(f64, f64)],
) -> Result<Vec<Complex64>> {
    let tables = sort_tables(&measure.tables);
    let lattice = detect_lattice(&tables);
    let (times, pair_idx) = distinct_times(pairs);
    let sums: Vec<Vec<Complex64>> = plan
        .pieces
        .iter()
        .map(|p| piece_skeleton_sums(p, &tables, lattice.as_ref(), cfg, &times))
        .collect::<Result<_>>()?;
    let mut out = Vec::with_capacity(pairs.len());
    for &(ti, si) in &pair_idx {
        let mut total = Vec::new();
        for (upper, terms) in &plan.groups {
            for (coef, pieces) in terms {
                let mut prod = Complex64::new(*coef as f64, 0.0);
                for &p in pieces {
                    let inside_upper = mask_of(&plan.pieces[p].vertices) & upper != 0;
                    prod *= sums[p][if inside_upper { ti } else { si }];
                }
                total.push(prod);
            }
        }
        out.push(pairwise_sum_complex(&total));
    }
    Ok(out)
}

/// Prefix sums over the root's lattice atoms of `a e^{iτξ} / (i(ξ + PΔ))`,
/// one row per children sum `P`.
struct RootTable {
    kmax: i64,
    pmin: i64,
    pmax: i64,
    nt: usize,
    data: Vec<Complex64>,
}

const MAX_ROOT_TABLE: usize = 1 << 22;

impl RootTable {
    fn build(atoms: &[(f64, Complex64)], idx: &[i64], step: f64, prange: i64, times: &[f64]) -> Option<Self> {
        let kmax = idx.iter().map(|k| k.abs()).max()?;
        let nt = times.len();
        let width = (2 * kmax + 2) as usize;
        let rows = (2 * prange + 1) as usize;
        if rows * width * nt > MAX_ROOT_TABLE {
            return None;
        }
        let mut dense = vec![Complex64::new(0.0, 0.0); (2 * kmax + 1) as usize];
        for ((_, a), k) in atoms.iter().zip(idx) {
            dense[(k + kmax) as usize] += a;
        }
        let phases: Vec<Vec<Complex64>> = (-kmax..=kmax)
            .map(|k| times.iter().map(|t| Complex64::new(0.0, t * k as f64 * step).exp()).collect())
            .collect();
        let mut data = vec![Complex64::new(0.0, 0.0); rows * width * nt];
        for (r, p) in (-prange..=prange).enumerate() {
            let base = r * width * nt;
            for (i, k) in (-kmax..=kmax).enumerate() {
                let a = dense[i];
                let denom = k + p;
                for tk in 0..nt {
                    let prev = data[base + i * nt + tk];
                    data[base + (i + 1) * nt + tk] = if a == Complex64::new(0.0, 0.0) || denom == 0 {
                        prev
                    } else {
                        prev + a * phases[i][tk] * Complex64::new(0.0, -1.0 / (denom as f64 * step))
                    };
                }
            }
        }
        Some(RootTable { kmax, pmin: -prange, pmax: prange, nt, data })
    }

    /// Adds `weight · Σ_{k ∈ [lo, hi]}` row `p` into `acc`, for every time.
    fn accumulate(&self, p: i64, lo: i64, hi: i64, sign: f64, weight: &[Complex64], acc: &mut [Complex64]) {
        let lo = lo.max(-self.kmax);
        let hi = hi.min(self.kmax);
        if lo > hi || p < self.pmin || p > self.pmax {
            return;
        }
        let width = (2 * self.kmax + 2) as usize;
        let base = (p - self.pmin) as usize * width * self.nt;
        let a = base + (lo + self.kmax) as usize * self.nt;
        let b = base + (hi + self.kmax + 1) as usize * self.nt;
        for k in 0..self.nt {
            acc[k] += weight[k] * (self.data[b + k] - self.data[a + k]) * sign;
        }
    }
}

/// `Σ_ξ Π_v a_v(ξ_v) e^{iτ ξ_v} 1_P(ξ)/Π_v i D_P(v)` for each time `τ`.
fn piece_skeleton_sums(
    piece: &Piece,
    tables: &[Vec<(f64, Complex64)>],
    lattice: Option<&Lattice>,
    cfg: &RegularizationConfig,
    times: &[f64],
) -> Result<Vec<Complex64>> {
    let m = piece.vertices.len();
    let nt = times.len();
    // phased[j][atom][time] = a e^{iτξ}
    let phased: Vec<Vec<Vec<Complex64>>> = piece
        .vertices
        .iter()
        .map(|&v| {
            tables[v]
                .iter()
                .map(|(x, a)| times.iter().map(|t| a * Complex64::new(0.0, t * x).exp()).collect())
                .collect()
        })
        .collect();
    let root = match lattice {
        Some(l) if m >= 2 && cfg.mode == Mode::Regularized => {
            let prange: i64 = piece.vertices[1..]
                .iter()
                .map(|&v| l.idx[v].iter().map(|k| k.abs()).max().unwrap_or(0))
                .sum();
            let r = piece.vertices[0];
            RootTable::build(&tables[r], &l.idx[r], l.step, prange, times)
        }
        _ => None,
    };
    let mut st = SkelState {
        piece,
        tables,
        phased: &phased,
        lattice,
        root: root.as_ref(),
        cfg,
        xi: vec![0.0; m],
        d: vec![0.0; m],
        maxabove: vec![0.0; m],
        kv: vec![0; m],
        dk: vec![0; m],
        mk: vec![0; m],
        weight: vec![Complex64::new(1.0, 0.0); (m + 1) * nt],
        acc: vec![Complex64::new(0.0, 0.0); nt],
        nt,
    };
    let top = m - 1;
    let mut partials: Vec<Vec<Complex64>> = Vec::with_capacity(tables[piece.vertices[top]].len());
    for atom in 0..tables[piece.vertices[top]].len() {
        st.acc.iter_mut().for_each(|z| *z = Complex64::new(0.0, 0.0));
        st.choose(top, atom)?;
        partials.push(st.acc.clone());
    }
    Ok((0..nt)
        .map(|k| pairwise_sum_complex(&partials.iter().map(|p| p[k]).collect::<Vec<_>>()))
        .collect())
}

struct SkelState<'a> {
    piece: &'a Piece,
    tables: &'a [Vec<(f64, Complex64)>],
    phased: &'a [Vec<Vec<Complex64>>],
    lattice: Option<&'a Lattice>,
    root: Option<&'a RootTable>,
    cfg: &'a RegularizationConfig,
    xi: Vec<f64>,
    d: Vec<f64>,
    maxabove: Vec<f64>,
    kv: Vec<i64>,
    dk: Vec<i64>,
    mk: Vec<i64>,
    /// weight[j*nt + k]: product over chosen vertices ≥ j at time k
    weight: Vec<Complex64>,
    acc: Vec<Complex64>,
    nt: usize,
}

impl SkelState<'_> {
    fn choose(&mut self, j: usize, atom: usize) -> Result<()> {
        let v = self.piece.vertices[j];
        let x = self.tables[v][atom].0;
        let has_children = !self.piece.children[j].is_empty();
        let regularized = self.cfg.mode == Mode::Regularized;
        let d = if let Some(l) = self.lattice {
            let kx = l.idx[v][atom];
            let mut dk = kx;
            let mut mk = 0i64;
            for &c in &self.piece.children[j] {
                dk += self.dk[c];
                mk = mk.max(self.kv[c].abs()).max(self.mk[c]);
            }
            if regularized && has_children && !lattice_pass(dk, mk, self.cfg.c_reg) {
                return Ok(());
            }
            if !regularized && dk == 0 {
                return Err(Error::Resonance { vertex: v + 1, denominator: 0.0 });
            }
            self.kv[j] = kx;
            self.dk[j] = dk;
            self.mk[j] = mk;
            dk as f64 * l.step
        } else {
            let mut d = x;
            let mut mx = 0.0f64;
            let mut scale = x.abs();
            for &c in &self.piece.children[j] {
                d += self.d[c];
                let up = self.xi[c].abs().max(self.maxabove[c]);
                mx = mx.max(up);
                scale += up;
            }
            if regularized {
                if has_children && d.abs() <= self.cfg.c_reg * mx {
                    return Ok(());
                }
            } else if d.abs() <= 1e-12 * scale {
                return Err(Error::Resonance { vertex: v + 1, denominator: d });
            }
            self.d[j] = d;
            self.maxabove[j] = mx;
            d
        };
        self.xi[j] = x;
        let inv = Complex64::new(0.0, -1.0 / d);
        let nt = self.nt;
        for k in 0..nt {
            self.weight[j * nt + k] = self.weight[(j + 1) * nt + k] * self.phased[j][atom][k] * inv;
        }
        if j == 0 {
            for k in 0..nt {
                self.acc[k] += self.weight[k];
            }
            return Ok(());
        }
        if j == 1 {
            if let Some(root) = self.root {
                self.sum_root(root);
                return Ok(());
            }
        }
        let next = self.piece.vertices[j - 1];
        let bound = x.abs();
        for a in 0..self.tables[next].len() {
            if regularized && self.tables[next][a].0.abs() > bound {
                break;
            }
            self.choose(j - 1, a)?;
        }
        Ok(())
    }

    /// All root atoms at once: `|k| ≤ |k_1|` minus the band `|k + P| ≤ q`.
    fn sum_root(&mut self, root: &RootTable) {
        let mut p = 0i64;
        let mut m = 0i64;
        for &c in &self.piece.children[0] {
            p += self.dk[c];
            m = m.max(self.kv[c].abs()).max(self.mk[c]);
        }
        let b = self.kv[1].abs();
        let q = lattice_gap(m, self.cfg.c_reg);
        let nt = self.nt;
        let (weight, acc) = (&self.weight[nt..2 * nt], &mut self.acc);
        root.accumulate(p, -b, b, 1.0, weight, acc);
        root.accumulate(p, (-q - p).max(-b), (q - p).min(b), -1.0, weight, acc);
    }
}

/// Sector measures couple all vertices through the ordering; every tuple is
/// visited once and all pieces are evaluated on it.
fn evaluate_sector(
    plan: &ForestPlan,
    measure: &AtomicTreeMeasure,
    cfg: &RegularizationConfig,
    pairs: &[(f64, f64)],
) -> Result<Vec<Complex64>> {
    let n = plan.n;
    let tables = sort_tables(&measure.tables);
    let lattice = detect_lattice(&tables);
    let (times, pair_idx) = distinct_times(pairs);
    let phases: Vec<Vec<Vec<Complex64>>> = tables
        .iter()
        .map(|t| {
            t.iter()
                .map(|(x, _)| times.iter().map(|tau| Complex64::new(0.0, tau * x).exp()).collect())
                .collect()
        })
        .collect();
    let mut st = SectorState {
        plan,
        tables: &tables,
        phases: &phases,
        lattice: lattice.as_ref(),
        inv_fact: (0..=n).scan(1.0, |f, k| {
            *f *= k.max(1) as f64;
            Some(1.0 / *f)
        }).collect(),
        cfg,
        pair_idx: &pair_idx,
        atoms: vec![0; n],
        xi: vec![0.0; n],
        kv: vec![0; n],
        weight: vec![Complex64::new(1.0, 0.0); n + 1],
        piece_vals: vec![Complex64::new(0.0, 0.0); plan.pieces.len()],
        group_vals: vec![Complex64::new(0.0, 0.0); plan.groups.len()],
        scratch: PieceScratch::new(),
        acc: vec![Complex64::new(0.0, 0.0); pairs.len()],
    };
    let top = n - 1;
    let mut partials: Vec<Vec<Complex64>> = Vec::new();
    for atom in 0..tables[top].len() {
        st.acc.iter_mut().for_each(|z| *z = Complex64::new(0.0, 0.0));
        st.choose(top, atom)?;
        partials.push(st.acc.clone());
    }
    Ok((0..pairs.len())
        .map(|k| pairwise_sum_complex(&partials.iter().map(|p| p[k]).collect::<Vec<_>>()))
        .collect())
}

struct SectorState<'a> {
    plan: &'a ForestPlan,
    tables: &'a [Vec<(f64, Complex64)>],
    phases: &'a [Vec<Vec<Complex64>>],
    lattice: Option<&'a Lattice>,
    inv_fact: Vec<f64>,
    cfg: &'a RegularizationConfig,
    pair_idx: &'a [(usize, usize)],
    atoms: Vec<usize>,
    xi: Vec<f64>,
    kv: Vec<i64>,
    weight: Vec<Complex64>,
    piece_vals: Vec<Complex64>,
    group_vals: Vec<Complex64>,
    scratch: PieceScratch,
    acc: Vec<Complex64>,
}

impl SectorState<'_> {
    fn tie_share(&self) -> f64 {
        let tied = |a: usize, b: usize| match self.lattice {
            Some(_) => self.kv[a].abs() == self.kv[b].abs(),
            None => self.xi[a].abs() == self.xi[b].abs(),
        };
        let (mut share, mut run) = (1.0, 1);
        for j in 1..self.plan.n {
            if tied(j - 1, j) {
                run += 1;
            } else {
                share *= self.inv_fact[run];
                run = 1;
            }
        }
        share * self.inv_fact[run]
    }

    fn choose(&mut self, j: usize, atom: usize) -> Result<()> {
        let (x, a) = self.tables[j][atom];
        self.atoms[j] = atom;
        self.xi[j] = x;
        if let Some(l) = self.lattice {
            self.kv[j] = l.idx[j][atom];
        }
        self.weight[j] = self.weight[j + 1] * a;
        if j == 0 {
            return self.leaf();
        }
        let bound = x.abs();
        for b in 0..self.tables[j - 1].len() {
            if self.tables[j - 1][b].0.abs() > bound {
                break;
            }
            self.choose(j - 1, b)?;
        }
        Ok(())
    }

    fn leaf(&mut self) -> Result<()> {
        let lattice = self.lattice.map(|l| (l.step, self.kv.as_slice()));
        for (p, piece) in self.plan.pieces.iter().enumerate() {
            self.piece_vals[p] = self.scratch.eval(piece, &self.xi, lattice, self.cfg)?;
        }
        for (g, (_, terms)) in self.plan.groups.iter().enumerate() {
            let mut sum = Complex64::new(0.0, 0.0);
            for (coef, pieces) in terms {
                let mut prod = Complex64::new(*coef as f64, 0.0);
                for &p in pieces {
                    prod *= self.piece_vals[p];
                }
                sum += prod;
            }
            self.group_vals[g] = sum;
        }
        let w = self.weight[0] * self.tie_share();
        for (k, &(ti, si)) in self.pair_idx.iter().enumerate() {
            let mut total = Complex64::new(0.0, 0.0);
            for (g, (upper, _)) in self.plan.groups.iter().enumerate() {
                let gv = self.group_vals[g];
                if gv == Complex64::new(0.0, 0.0) {
                    continue;
                }
                let mut ph = Complex64::new(1.0, 0.0);
                for v in 0..self.plan.n {
                    let tk = if upper & (1 << v) != 0 { ti } else { si };
                    ph *= self.phases[v][self.atoms[v]][tk];
                }
                total += gv * ph;
            }
            self.acc[k] += w * total;
        }
        Ok(())
    }
}

/// `[RSkI_F]_t`.
pub fn skeleton_integral(measure: &AtomicTreeMeasure, cfg: &RegularizationConfig, t: f64) -> Result<Complex64> {
    let plan = ForestPlan::skeleton(&measure.forest)?;
    Ok(evaluate_plan(&plan, measure, cfg, &[(t, t)])?[0])
}

/// `[RI_F]_{ts}`.
pub fn reg_iterated_integral(
    measure: &AtomicTreeMeasure,
    cfg: &RegularizationConfig,
    t: f64,
    s: f64,
) -> Result<Complex64> {
    Ok(reg_iterated_integrals(measure, cfg, &[(t, s)])?[0])
}

pub fn reg_iterated_integrals(
    measure: &AtomicTreeMeasure,
    cfg: &RegularizationConfig,
    pairs: &[(f64, f64)],
) -> Result<Vec<Complex64>> {
    let plan = ForestPlan::integral(&measure.forest)?;
    evaluate_plan(&plan, measure, cfg, pairs)
}

/// The measure restricted to the vertices of a cut part (product support only).
pub fn restrict(measure: &AtomicTreeMeasure, vertices: &[usize]) -> Result<AtomicTreeMeasure> {
    if measure.support != Support::Product {
        return invalid("only product measures restrict to sub-forests");
    }
    AtomicTreeMeasure::new(
        measure.forest.subforest(vertices),
        vertices.iter().map(|&v| measure.tables[v].clone()).collect(),
        Support::Product,
    )
}

/// `Σ_cuts [RI_L]_{tu} [RI_R]_{us}` for a product measure, the right side of
/// the tree multiplicative identity.
pub fn cut_sum(
    measure: &AtomicTreeMeasure,
    cfg: &RegularizationConfig,
    t: f64,
    u: f64,
    s: f64,
) -> Result<Complex64> {
    let mut terms = Vec::new();
    for cut in measure.forest.admissible_cuts() {
        let split = measure.forest.split_at_cut(&cut)?;
        let left = restrict(measure, &split.left_vertices)?;
        let right = restrict(measure, &split.right_vertices)?;
        terms.push(reg_iterated_integral(&left, cfg, t, u)? * reg_iterated_integral(&right, cfg, u, s)?);
    }
    Ok(pairwise_sum_complex(&terms))
}

/// Unused-cut guard for callers building cuts by hand.
pub fn validate_cut(forest: &DecoratedForest, cut: &Cut) -> Result<()> {
    if forest.is_admissible(cut) {
        Ok(())
    } else {
        invalid("cut is not admissible")
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    const I: Complex64 = Complex64::new(0.0, 1.0);

    fn c(re: f64, im: f64) -> Complex64 {
        Complex64::new(re, im)
    }

    /// Per-tuple kernel of `[RI_F]_{ts}` straight from the recursion.
    fn brute_kernel(f: &DecoratedForest, xi: &[f64], cfg: &RegularizationConfig, t: f64, s: f64) -> Complex64 {
        let skel = |g: &DecoratedForest, x: &[f64], tau: f64| -> Complex64 {
            let mut v = Complex64::new(1.0, 0.0);
            for comp in g.components() {
                let sub = g.subforest(&comp);
                let xs: Vec<f64> = comp.iter().map(|&i| x[i]).collect();
                if !in_reg_domain(&sub, &xs, cfg).unwrap() {
                    return Complex64::new(0.0, 0.0);
                }
                let d = resonance_denominators(&sub, &xs);
                let sum: f64 = xs.iter().sum();
                v *= (I * tau * sum).exp() / d.iter().map(|y| I * y).product::<Complex64>();
            }
            v
        };
        let mut total = Complex64::new(1.0, 0.0);
        for comp in f.components() {
            let tree = f.subforest(&comp);
            let xs: Vec<f64> = comp.iter().map(|&i| xi[i]).collect();
            let mut v = skel(&tree, &xs, t) - skel(&tree, &xs, s);
            for cut in tree.admissible_cuts() {
                let sp = tree.split_at_cut(&cut).unwrap();
                let xl: Vec<f64> = sp.left_vertices.iter().map(|&i| xs[i]).collect();
                let xr: Vec<f64> = sp.right_vertices.iter().map(|&i| xs[i]).collect();
                v -= brute_kernel(&sp.left, &xl, cfg, t, s) * skel(&sp.right, &xr, s);
            }
            total *= v;
        }
        total
    }

    fn brute_integral(m: &AtomicTreeMeasure, cfg: &RegularizationConfig, t: f64, s: f64) -> Complex64 {
        let n = m.forest.len();
        let mut idx = vec![0usize; n];
        let mut terms = Vec::new();
        loop {
            let xi: Vec<f64> = (0..n).map(|v| m.tables[v][idx[v]].0).collect();
            let amp: Complex64 = (0..n).map(|v| m.tables[v][idx[v]].1).product();
            terms.push(amp * brute_kernel(&m.forest, &xi, cfg, t, s));
            let mut v = 0;
            while v < n {
                idx[v] += 1;
                if idx[v] < m.tables[v].len() {
                    break;
                }
                idx[v] = 0;
                v += 1;
            }
            if v == n {
                break;
            }
        }
        pairwise_sum_complex(&terms)
    }

    #[test]
    fn product_engine_matches_brute_force() {
        use rand::{Rng, SeedableRng};
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(17);
        let cfg = RegularizationConfig::regularized(0.37).unwrap();
        for n in 1..=4 {
            for f in crate::tree::all_forests(n) {
                for jitter in [0.0, 1e-3] {
                    // jitter breaks the lattice and exercises the floating-point tests
                    let tables: Vec<Vec<(f64, Complex64)>> = (0..n)
                        .map(|_| {
                            [-4i32, -3, -1, 1, 2, 4]
                                .iter()
                                .map(|&k| {
                                    let x = k as f64 * 0.9 + jitter * rng.gen_range(0.0..1.0);
                                    (x, c(rng.gen_range(-1.0..1.0), rng.gen_range(-1.0..1.0)))
                                })
                                .collect()
                        })
                        .collect();
                    let m = AtomicTreeMeasure::new(f.clone(), tables, Support::Product).unwrap();
                    let got = reg_iterated_integral(&m, &cfg, 0.8, -0.3).unwrap();
                    let want = brute_integral(&m, &cfg, 0.8, -0.3);
                    assert!((got - want).norm() < 1e-11 * (1.0 + want.norm()), "{f} jitter {jitter}: {got} vs {want}");
                }
            }
        }
    }

    #[test]
    fn domain_examples() {
        let t2 = DecoratedForest::trunk(&[1, 1]).unwrap();
        let cfg = RegularizationConfig::regularized(0.5).unwrap();
        assert!(in_plus_domain(&t2, &[1.0, 3.0]).unwrap());
        assert!(!in_plus_domain(&t2, &[3.0, 1.0]).unwrap());
        assert!(in_plus_domain(&t2, &[-2.0, 2.0]).unwrap());
        assert!(in_plus_domain(&t2, &[0.0, 2.0]).is_err());
        // root frequency cancels the top one exactly
        assert!(!in_reg_domain(&t2, &[-1.5, 1.5], &cfg).unwrap());
        assert!(in_reg_domain(&t2, &[1.5, 4.5], &cfg).unwrap());
        let single = DecoratedForest::trunk(&[1]).unwrap();
        for x in [-3.0, 0.1, 7.0] {
            assert!(in_reg_domain(&single, &[x], &cfg).unwrap());
        }
        assert!(!in_reg_domain(&t2, &[-1.5, 1.5], &RegularizationConfig::trivial()).unwrap());
        assert!(in_reg_domain(&t2, &[3.0, 1.0], &RegularizationConfig::trivial()).unwrap());
    }

    #[test]
    fn config_validation() {
        assert!(RegularizationConfig::regularized(0.0).is_err());
        assert!(RegularizationConfig::regularized(1.0).is_err());
        assert!(RegularizationConfig::regularized(0.3).is_ok());
    }

    #[test]
    fn single_vertex_skeleton() {
        let f = DecoratedForest::trunk(&[1]).unwrap();
        let (a, w, t) = (c(0.3, -1.2), 2.5, 0.7);
        let m = AtomicTreeMeasure::new(f, vec![vec![(w, a)]], Support::Product).unwrap();
        let got = skeleton_integral(&m, &RegularizationConfig::default(), t).unwrap();
        let want = a * (I * w * t).exp() / (I * w);
        assert!((got - want).norm() < 1e-14);
        let inc = reg_iterated_integral(&m, &RegularizationConfig::default(), t, 0.2).unwrap();
        let want = a * ((I * w * t).exp() - (I * w * 0.2).exp()) / (I * w);
        assert!((inc - want).norm() < 1e-14);
    }

    #[test]
    fn trunk_two_skeleton() {
        let f = DecoratedForest::trunk(&[1, 2]).unwrap();
        let (a, b) = (c(1.0, 0.5), c(-0.2, 0.9));
        let (w_root, w_top, t) = (2.0, 3.0, 0.4);
        let m = AtomicTreeMeasure::new(f, vec![vec![(w_root, b)], vec![(w_top, a)]], Support::Product).unwrap();
        let got = skeleton_integral(&m, &RegularizationConfig::trivial(), t).unwrap();
        let want = a * b * (I * t * (w_root + w_top)).exp() / ((I * w_top) * (I * (w_root + w_top)));
        assert!((got - want).norm() < 1e-14);
    }

    #[test]
    fn singleton_forest_multiplies() {
        let f = DecoratedForest::new(vec![None, None], vec![1, 2]).unwrap();
        let tables = vec![vec![(2.0, c(1.0, 0.0)), (-5.0, c(0.5, 0.5))], vec![(3.0, c(0.0, 1.0))]];
        let m = AtomicTreeMeasure::new(f, tables.clone(), Support::Product).unwrap();
        let cfg = RegularizationConfig::default();
        let single = |tab: Vec<(f64, Complex64)>| {
            let m = AtomicTreeMeasure::new(DecoratedForest::trunk(&[1]).unwrap(), vec![tab], Support::Product).unwrap();
            skeleton_integral(&m, &cfg, 0.3).unwrap()
        };
        let got = skeleton_integral(&m, &cfg, 0.3).unwrap();
        let want = single(tables[0].clone()) * single(tables[1].clone());
        assert!((got - want).norm() < 1e-14);
    }

    #[test]
    fn vanishes_on_the_diagonal() {
        let f = DecoratedForest::new(vec![None, Some(0), Some(0), Some(1)], vec![1, 2, 1, 2]).unwrap();
        let tab = vec![(1.0, c(1.0, 0.2)), (-2.0, c(0.3, 0.0)), (4.0, c(-0.7, 0.1))];
        let m = AtomicTreeMeasure::new(f, vec![tab; 4], Support::Product).unwrap();
        let v = reg_iterated_integral(&m, &RegularizationConfig::default(), 0.6, 0.6).unwrap();
        assert!(v.norm() < 1e-12);
    }

    #[test]
    fn trivial_mode_reports_resonance() {
        let f = DecoratedForest::trunk(&[1, 1]).unwrap();
        let tab = vec![(2.0, c(1.0, 0.0)), (-2.0, c(1.0, 0.0))];
        let m = AtomicTreeMeasure::new(f, vec![tab.clone(), tab], Support::Product).unwrap();
        let err = reg_iterated_integral(&m, &RegularizationConfig::trivial(), 1.0, 0.0);
        assert!(matches!(err, Err(Error::Resonance { .. })));
    }

    #[test]
    fn plan_sizes() {
        let t = DecoratedForest::trunk(&[1, 1, 1]).unwrap();
        let plan = ForestPlan::integral(&t).unwrap();
        assert!(plan.term_count() >= 2);
        let single = ForestPlan::integral(&DecoratedForest::trunk(&[1]).unwrap()).unwrap();
        assert_eq!(single.term_count(), 2);
    }

    #[test]
    fn sector_and_product_agree_when_the_sector_is_everything() {
        // one atom per vertex, already ordered: the sector charges the same tuple
        let f = DecoratedForest::new(vec![None, Some(0), Some(0)], vec![1, 2, 3]).unwrap();
        let tables = vec![vec![(1.0, c(1.0, 0.3))], vec![(-2.0, c(0.4, -0.1))], vec![(5.0, c(0.2, 0.8))]];
        let cfg = RegularizationConfig::default();
        let p = AtomicTreeMeasure::new(f.clone(), tables.clone(), Support::Product).unwrap();
        let s = AtomicTreeMeasure::new(f, tables, Support::Sector).unwrap();
        let pairs = [(0.9, 0.1), (0.4, -0.3)];
        let a = reg_iterated_integrals(&p, &cfg, &pairs).unwrap();
        let b = reg_iterated_integrals(&s, &cfg, &pairs).unwrap();
        for (x, y) in a.iter().zip(&b) {
            assert!((x - y).norm() < 1e-13 * (1.0 + x.norm()));
        }
    }
}
