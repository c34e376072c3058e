//! Fourier normal ordered iterated integrals and the rough-path tensor.
//!
//! The `n`-fold iterated integral of a word is split by the magnitude order
//! of its frequency tuple. In each sector the integration variables are
//! reordered so that the largest frequency is integrated first; the
//! reordered simplex integral becomes a signed sum of forest integrals, each
//! of which is regularized and evaluated by the skeleton engine.

use std::cmp::Ordering;
use std::collections::BTreeMap;
use std::fmt;
use std::str::FromStr;
use std::sync::OnceLock;

use num_complex::Complex64;
use rayon::prelude::*;
use serde::{Deserialize, Deserializer, Serialize, Serializer};

use crate::error::{invalid, Error, Result};
use crate::numeric::pairwise_sum_complex;
use crate::permutation::{permutation_graph, Permutation};
use crate::skeleton::{evaluate_plan, lattice_pass, AtomicTreeMeasure, ForestPlan, Mode, RegularizationConfig, Support};
use crate::spectral::{AtomicPath, SpectralPath};

pub const MAX_LEVEL: usize = 5;
pub const DEFAULT_TUPLE_BUDGET: f64 = 1e9;
const REALNESS_TOL: f64 = 1e-10;

/// A word `(i_1, …, i_n)` over the letters `1..=d`.
#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct Word(Vec<usize>);

impl Word {
    pub fn new(letters: Vec<usize>) -> Result<Self> {
        if letters.is_empty() || letters.len() > MAX_LEVEL {
            return invalid(format!("word length must be in 1..={MAX_LEVEL}, got {}", letters.len()));
        }
        if letters.contains(&0) {
            return invalid("letters are 1-based");
        }
        Ok(Word(letters))
    }

    pub fn letters(&self) -> &[usize] {
        &self.0
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    pub fn max_letter(&self) -> usize {
        self.0.iter().copied().max().unwrap_or(0)
    }

    /// Every word of length `n` over `1..=d`, lexicographically.
    pub fn all(d: usize, n: usize) -> Vec<Word> {
        let mut out = vec![Vec::new()];
        for _ in 0..n {
            out = out
                .into_iter()
                .flat_map(|w: Vec<usize>| {
                    (1..=d).map(move |l| {
                        let mut w = w.clone();
                        w.push(l);
                        w
                    })
                })
                .collect();
        }
        out.into_iter().map(Word).collect()
    }

    /// Splits into `(w[..k], w[k..])`.
    pub fn split(&self, k: usize) -> (Word, Word) {
        (Word(self.0[..k].to_vec()), Word(self.0[k..].to_vec()))
    }
}

impl Ord for Word {
    fn cmp(&self, other: &Self) -> Ordering {
        self.0.len().cmp(&other.0.len()).then_with(|| self.0.cmp(&other.0))
    }
}

impl PartialOrd for Word {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}

impl fmt::Display for Word {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let s: Vec<String> = self.0.iter().map(|l| l.to_string()).collect();
        write!(f, "{}", s.join(","))
    }
}

impl FromStr for Word {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let letters = s
            .split(',')
            .map(|p| p.trim().parse::<usize>().map_err(|e| Error::InvalidInput(format!("bad letter {p:?}: {e}"))))
            .collect::<Result<Vec<_>>>()?;
        Word::new(letters)
    }
}

impl Serialize for Word {
    fn serialize<S: Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        s.collect_str(self)
    }
}

impl<'de> Deserialize<'de> for Word {
    fn deserialize<D: Deserializer<'de>>(d: D) -> std::result::Result<Self, D::Error> {
        let s = String::deserialize(d)?;
        s.parse().map_err(serde::de::Error::custom)
    }
}

/// All levels of the regularized rough path over one interval.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RoughPathTensor {
    pub s: f64,
    pub t: f64,
    pub alpha: Option<f64>,
    pub eta: Option<f64>,
    pub c_reg: f64,
    pub mode: Mode,
    pub levels: BTreeMap<Word, f64>,
}

impl RoughPathTensor {
    pub fn get(&self, w: &Word) -> Option<f64> {
        self.levels.get(w).copied()
    }

    pub fn max_level(&self) -> usize {
        self.levels.keys().map(Word::len).max().unwrap_or(0)
    }

    pub fn config(&self) -> RegularizationConfig {
        RegularizationConfig { c_reg: self.c_reg, mode: self.mode }
    }

    pub fn with_model(mut self, alpha: f64, eta: f64) -> Self {
        self.alpha = Some(alpha);
        self.eta = Some(eta);
        self
    }

    pub fn to_json(&self) -> Result<String> {
        serde_json::to_string_pretty(self).map_err(|e| Error::InvalidInput(format!("tensor serialization: {e}")))
    }

    pub fn from_json(s: &str) -> Result<Self> {
        serde_json::from_str(s).map_err(|e| Error::InvalidInput(format!("bad tensor JSON: {e}")))
    }
}

/// Forest plans of every sector for words of length `n`, built once.
fn sector_plans(n: usize) -> Result<&'static [(Permutation, ForestPlan)]> {
    static PLANS: [OnceLock<Vec<(Permutation, ForestPlan)>>; MAX_LEVEL + 1] =
        [const { OnceLock::new() }; MAX_LEVEL + 1];
    if n == 0 || n > MAX_LEVEL {
        return invalid(format!("level must be in 1..={MAX_LEVEL}"));
    }
    if let Some(p) = PLANS[n].get() {
        return Ok(p);
    }
    let mut plans = Vec::new();
    for sigma in Permutation::all(n) {
        let graph = permutation_graph(&sigma, &vec![1; n])?;
        let terms: Vec<(i64, &_)> = graph.terms.iter().map(|(g, f)| (*g as i64, f)).collect();
        plans.push((sigma, ForestPlan::combine(&terms)?));
    }
    Ok(PLANS[n].get_or_init(|| plans))
}

fn check_budget(estimated: f64, budget: f64) -> Result<()> {
    if estimated > budget {
        return Err(Error::Budget { estimated, budget });
    }
    Ok(())
}

/// Complex sector-sum of a word on an atomic path for a batch of `(t, s)` pairs.
pub fn fno_level_atomic(
    path: &AtomicPath,
    word: &Word,
    cfg: &RegularizationConfig,
    pairs: &[(f64, f64)],
    budget: f64,
) -> Result<Vec<Complex64>> {
    if word.max_letter() > path.d() {
        return invalid(format!("word {word} uses letters beyond d = {}", path.d()));
    }
    let n = word.len();
    let letters = word.letters();
    check_budget(letters.iter().map(|&l| path.atoms(l).len() as f64).product(), budget)?;
    let mut per_sector: Vec<Vec<Complex64>> = Vec::new();
    for (sigma, plan) in sector_plans(n)? {
        let s = sigma.images();
        let tables: Vec<Vec<(f64, Complex64)>> = (0..n).map(|j| path.atoms(letters[s[j]]).to_vec()).collect();
        let forest = crate::tree::DecoratedForest::trunk(&vec![1; n])?;
        let measure = AtomicTreeMeasure::new(forest, tables, Support::Sector)?;
        per_sector.push(evaluate_plan(plan, &measure, cfg, pairs)?);
    }
    Ok((0..pairs.len())
        .map(|k| pairwise_sum_complex(&per_sector.iter().map(|v| v[k]).collect::<Vec<_>>()))
        .collect())
}

fn real_part(z: Complex64) -> Result<f64> {
    if z.im.abs() > REALNESS_TOL * (z.re.abs() + 1.0) {
        return Err(Error::NotReal { real: z.re, imag: z.im });
    }
    Ok(z.re)
}

/// `R B^{n}_{ts}(word)` for a batch of `(t, s)` pairs.
pub fn fno_levels(
    path: &SpectralPath,
    word: &Word,
    cfg: &RegularizationConfig,
    pairs: &[(f64, f64)],
    budget: f64,
) -> Result<Vec<f64>> {
    if word.max_letter() > path.d() {
        return invalid(format!("word {word} uses letters beyond d = {}", path.d()));
    }
    let l = word.letters();
    let values: Vec<f64> = match word.len() {
        1 => pairs.iter().map(|&(t, s)| path.increment(l[0], s, t)).collect::<Result<_>>()?,
        2 if cfg.mode == Mode::Regularized => {
            let k = path.grid().modes() as f64;
            check_budget(4.0 * k * k, budget)?;
            let g = Level2Grid::new(path, l[0], l[1]);
            pairs.iter().map(|&(t, s)| real_part(g.regularized(cfg.c_reg, t, s))).collect::<Result<_>>()?
        }
        _ => fno_level_atomic(&path.to_atomic(), word, cfg, pairs, budget)?
            .into_iter()
            .map(real_part)
            .collect::<Result<_>>()?,
    };
    // an empty interval carries no increment at any level
    Ok(values.into_iter().zip(pairs).map(|(v, &(t, s))| if t == s { 0.0 } else { v }).collect())
}

pub fn fno_level(path: &SpectralPath, word: &Word, s: f64, t: f64, cfg: &RegularizationConfig) -> Result<f64> {
    Ok(fno_levels(path, word, cfg, &[(t, s)], DEFAULT_TUPLE_BUDGET)?[0])
}

/// The plain double integral `∫_s^t dB_u(a) ∫_s^u dB_v(b)` of a grid path.
pub fn unregularized_level2(path: &SpectralPath, a: usize, b: usize, s: f64, t: f64) -> Result<f64> {
    if a == 0 || b == 0 || a > path.d() || b > path.d() {
        return invalid(format!("letters ({a},{b}) out of range 1..={}", path.d()));
    }
    real_part(Level2Grid::new(path, a, b).unregularized(t, s))
}

/// The uncorrected area between components 1 and 2.
pub fn unregularized_area(path: &SpectralPath, s: f64, t: f64) -> Result<f64> {
    if path.d() < 2 {
        return invalid("the area needs d >= 2");
    }
    unregularized_level2(path, 1, 2, s, t)
}

/// Level-2 evaluation on the integer frequency grid `ξ = jΔ`, `j = ±1..±K`.
///
/// Separable parts reduce to prefix sums over magnitudes; the coupled parts
/// only depend on `ξ_1 + ξ_2 = (j_1 + j_2)Δ` and are window sums against a
/// table of `∫_s^t e^{ipΔx} dx`.
struct Level2Grid {
    k: usize,
    /// signed frequencies indexed by `j + K`
    xi: Vec<f64>,
    a: Vec<Complex64>,
    b: Vec<Complex64>,
}

impl Level2Grid {
    fn new(path: &SpectralPath, a: usize, b: usize) -> Self {
        let k = path.grid().modes();
        let mut xi = vec![0.0; 2 * k + 1];
        let mut ta = vec![Complex64::new(0.0, 0.0); 2 * k + 1];
        let mut tb = ta.clone();
        for m in 1..=k {
            let f = path.grid().freq(m);
            xi[k + m] = f;
            xi[k - m] = -f;
            ta[k + m] = path.amps(a)[m - 1];
            ta[k - m] = path.amps(a)[m - 1].conj();
            tb[k + m] = path.amps(b)[m - 1];
            tb[k - m] = path.amps(b)[m - 1].conj();
        }
        Level2Grid { k, xi, a: ta, b: tb }
    }

    fn signed(&self, j: i64) -> usize {
        (j + self.k as i64) as usize
    }

    /// `g[p + 2K] = ∫_s^t e^{ipΔx} dx`, using `ξ_1 + ξ_2` for the frequency.
    fn sum_table(&self, t: f64, s: f64) -> Vec<Complex64> {
        let k = self.k as i64;
        let dx = if self.k > 0 { self.xi[self.k + 1] } else { 1.0 };
        (-2 * k..=2 * k)
            .map(|p| {
                if p == 0 {
                    return Complex64::new(t - s, 0.0);
                }
                let x = p as f64 * dx;
                (Complex64::new(0.0, t * x).exp() - Complex64::new(0.0, s * x).exp()) / Complex64::new(0.0, x)
            })
            .collect()
    }

    fn increments(&self, t: f64, s: f64) -> (Vec<Complex64>, Vec<Complex64>) {
        // I(ξ) = (e^{itξ} − e^{isξ})/(iξ) and E_s(ξ) = e^{isξ}/(iξ)
        let mut inc = vec![Complex64::new(0.0, 0.0); self.xi.len()];
        let mut low = inc.clone();
        for (j, &x) in self.xi.iter().enumerate() {
            if x != 0.0 {
                let es = Complex64::new(0.0, s * x).exp();
                inc[j] = (Complex64::new(0.0, t * x).exp() - es) / Complex64::new(0.0, x);
                low[j] = es / Complex64::new(0.0, x);
            }
        }
        (inc, low)
    }

    /// Sums of `f(j)` over `j = ±m`, for `m = 0..=K` (entry 0 is zero).
    fn by_magnitude(&self, f: impl Fn(usize) -> Complex64) -> Vec<Complex64> {
        (0..=self.k)
            .map(|m| if m == 0 { Complex64::new(0.0, 0.0) } else { f(self.k + m) + f(self.k - m) })
            .collect()
    }

    /// Window `[lo, hi]` of partners `j` with `|j| ≤ m` such that
    /// `|ξ_j + ξ_J| > c |ξ_J|` for the outer index `J`.
    fn window(&self, outer: i64, c: f64) -> (i64, i64) {
        let m = outer.abs();
        let bound = m;
        let pass = |j: i64| j != 0 && lattice_pass(j + outer, m, c);
        // the passing set within [−bound, bound] is an interval on the side of `outer`
        let (mut lo, mut hi) = (-bound, bound);
        if outer > 0 {
            let mut j = ((c - 1.0) * m as f64).floor() as i64 - 1;
            j = j.max(-bound);
            while j <= bound && !pass(j) {
                j += 1;
            }
            lo = j;
        } else {
            let mut j = ((1.0 - c) * m as f64).ceil() as i64 + 1;
            j = j.min(bound);
            while j >= -bound && !pass(j) {
                j -= 1;
            }
            hi = j;
        }
        (lo, hi)
    }

    fn window_sum(&self, amps: &[Complex64], g: &[Complex64], outer: i64, lo: i64, hi: i64) -> Complex64 {
        if lo > hi {
            return Complex64::new(0.0, 0.0);
        }
        let k = self.k as i64;
        let mut acc = Complex64::new(0.0, 0.0);
        for j in lo..=hi {
            if j != 0 {
                // partners tied in magnitude with the outer index are split between the two sectors
                let share = if j.abs() == outer.abs() { 0.5 } else { 1.0 };
                acc += amps[(j + k) as usize] * g[(j + outer + 2 * k) as usize] * share;
            }
        }
        acc
    }

    fn regularized(&self, c: f64, t: f64, s: f64) -> Complex64 {
        if self.k == 0 {
            return Complex64::new(0.0, 0.0);
        }
        let k = self.k;
        let g = self.sum_table(t, s);
        let (inc, low) = self.increments(t, s);
        let a_inc = self.by_magnitude(|j| self.a[j] * inc[j]);
        let a_low = self.by_magnitude(|j| self.a[j] * low[j]);
        let b_inc = self.by_magnitude(|j| self.b[j] * inc[j]);
        let b_low = self.by_magnitude(|j| self.b[j] * low[j]);
        let mut terms = Vec::with_capacity(4 * k + 2);
        // separable boundary and product terms, |ξ_1| < |ξ_2| and |ξ_2| < |ξ_1|,
        // with equal magnitudes charged half to each side
        let mut cum_a = Complex64::new(0.0, 0.0);
        let mut cum_b = Complex64::new(0.0, 0.0);
        for m in 1..=k {
            terms.push(-b_low[m] * (cum_a + 0.5 * a_inc[m]));
            terms.push((a_inc[m] + a_low[m]) * (cum_b + 0.5 * b_inc[m]));
            cum_a += a_inc[m];
            cum_b += b_inc[m];
        }
        let ki = k as i64;
        for m in 1..=ki {
            for outer in [-m, m] {
                let (lo, hi) = self.window(outer, c);
                let w = self.window_sum(&self.a, &g, outer, lo, hi);
                let x = self.xi[self.signed(outer)];
                terms.push(self.b[self.signed(outer)] / Complex64::new(0.0, x) * w);
                let (lo, hi) = self.window(outer, c);
                let w = self.window_sum(&self.b, &g, outer, lo, hi);
                terms.push(-self.a[self.signed(outer)] / Complex64::new(0.0, x) * w);
            }
        }
        pairwise_sum_complex(&terms)
    }

    fn unregularized(&self, t: f64, s: f64) -> Complex64 {
        if self.k == 0 {
            return Complex64::new(0.0, 0.0);
        }
        let ki = self.k as i64;
        let g = self.sum_table(t, s);
        let (inc, low) = self.increments(t, s);
        let mut terms = Vec::with_capacity(2 * self.k + 1);
        let sep_a: Complex64 = pairwise_sum_complex(&self.a.iter().zip(&inc).map(|(a, i)| a * i).collect::<Vec<_>>());
        let sep_b: Complex64 = pairwise_sum_complex(&self.b.iter().zip(&low).map(|(b, l)| b * l).collect::<Vec<_>>());
        terms.push(-sep_a * sep_b);
        for outer in (-ki..=ki).filter(|&j| j != 0) {
            let x = self.xi[self.signed(outer)];
            let w = self.window_sum(&self.a, &g, outer, -ki, ki);
            terms.push(self.b[self.signed(outer)] / Complex64::new(0.0, x) * w);
        }
        pairwise_sum_complex(&terms)
    }
}

/// Every word of length `≤ n_max` over `1..=d` on each interval.
pub fn build_tensors(
    path: &SpectralPath,
    n_max: usize,
    pairs: &[(f64, f64)],
    cfg: &RegularizationConfig,
) -> Result<Vec<RoughPathTensor>> {
    build_tensors_within(path, n_max, pairs, cfg, DEFAULT_TUPLE_BUDGET)
}

/// As [`build_tensors`], refusing any word whose tuple count exceeds `budget`.
pub fn build_tensors_within(
    path: &SpectralPath,
    n_max: usize,
    pairs: &[(f64, f64)],
    cfg: &RegularizationConfig,
    budget: f64,
) -> Result<Vec<RoughPathTensor>> {
    if n_max == 0 || n_max > MAX_LEVEL {
        return invalid(format!("N must be in 1..={MAX_LEVEL}"));
    }
    let words: Vec<Word> = (1..=n_max).flat_map(|n| Word::all(path.d(), n)).collect();
    let values: Vec<Vec<f64>> = words
        .par_iter()
        .map(|w| fno_levels(path, w, cfg, pairs, budget))
        .collect::<Result<_>>()?;
    Ok(pairs
        .iter()
        .enumerate()
        .map(|(k, &(t, s))| RoughPathTensor {
            s,
            t,
            alpha: None,
            eta: None,
            c_reg: cfg.c_reg,
            mode: cfg.mode,
            levels: words.iter().cloned().zip(values.iter().map(|v| v[k])).collect(),
        })
        .collect())
}

pub fn build_tensor(
    path: &SpectralPath,
    n_max: usize,
    s: f64,
    t: f64,
    cfg: &RegularizationConfig,
) -> Result<RoughPathTensor> {
    Ok(build_tensors(path, n_max, &[(t, s)], cfg)?.remove(0))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::spectral::{sample_fbm, FbmModel, FrequencyGrid};

    fn word(l: &[usize]) -> Word {
        Word::new(l.to_vec()).unwrap()
    }

    fn small_path(k: usize, seed: u64) -> SpectralPath {
        let model = FbmModel::new(0.3, 0.05, 2).unwrap();
        sample_fbm(&model, &FrequencyGrid::new(k, 0.9).unwrap(), seed).unwrap()
    }

    #[test]
    fn word_parsing_and_order() {
        let w: Word = "1,2,1".parse().unwrap();
        assert_eq!(w.letters(), &[1, 2, 1]);
        assert_eq!(w.to_string(), "1,2,1");
        assert!("0,1".parse::<Word>().is_err());
        assert!("".parse::<Word>().is_err());
        assert!(word(&[2]) < word(&[1, 1]));
        assert_eq!(Word::all(2, 3).len(), 8);
    }

    #[test]
    fn level_two_fast_path_matches_sector_engine() {
        for (k, c) in [(6, 0.5), (9, 0.3), (7, 0.8)] {
            let p = small_path(k, 11 + k as u64);
            let cfg = RegularizationConfig::regularized(c).unwrap();
            let pairs = [(0.7, 0.1), (1.3, -0.4), (0.2, 0.2)];
            for w in Word::all(2, 2) {
                let fast = Level2Grid::new(&p, w.letters()[0], w.letters()[1]);
                let general = fno_level_atomic(&p.to_atomic(), &w, &cfg, &pairs, 1e9).unwrap();
                for (&(t, s), g) in pairs.iter().zip(general) {
                    let f = fast.regularized(c, t, s);
                    assert!((f - g).norm() <= 1e-12 * (1.0 + g.norm()), "{w} {k}: {f} vs {g}");
                }
            }
        }
    }

    #[test]
    fn level_one_is_the_increment() {
        let p = small_path(10, 3);
        let cfg = RegularizationConfig::default();
        let v = fno_level(&p, &word(&[2]), 0.2, 0.9, &cfg).unwrap();
        assert_eq!(v, p.increment(2, 0.2, 0.9).unwrap());
        let general = fno_level_atomic(&p.to_atomic(), &word(&[2]), &cfg, &[(0.9, 0.2)], 1e9).unwrap()[0];
        assert!((general.re - v).abs() < 1e-12 && general.im.abs() < 1e-12);
    }

    #[test]
    fn repeated_letter_is_half_the_square() {
        let p = small_path(12, 5);
        let cfg = RegularizationConfig::default();
        let inc = p.increment(1, -0.3, 0.8).unwrap();
        let v = fno_level(&p, &word(&[1, 1]), -0.3, 0.8, &cfg).unwrap();
        assert!((v - 0.5 * inc * inc).abs() < 1e-9 * inc * inc);
    }

    #[test]
    fn tensor_shape_and_diagonal() {
        let p = small_path(5, 9);
        let cfg = RegularizationConfig::default();
        let tensor = build_tensor(&p, 2, 0.3, 0.3, &cfg).unwrap();
        assert_eq!(tensor.levels.len(), 6);
        assert!(tensor.levels.values().all(|v| v.abs() < 1e-13));
        let json = tensor.clone().with_model(0.3, 0.05).to_json().unwrap();
        let back = RoughPathTensor::from_json(&json).unwrap();
        assert_eq!(back.levels, tensor.levels);
        assert!(json.contains("\"1,2\""));
    }

    #[test]
    fn area_chen_identity() {
        let p = small_path(16, 21);
        let (t, u, s) = (0.9, 0.35, -0.2);
        let a = |t, s| unregularized_area(&p, s, t).unwrap();
        let rhs = p.increment(1, u, t).unwrap() * p.increment(2, s, u).unwrap();
        let lhs = a(t, s) - a(t, u) - a(u, s);
        assert!((lhs - rhs).abs() < 1e-9 * (1.0 + rhs.abs()));
        assert_eq!(a(0.4, 0.4), 0.0);
    }

    #[test]
    fn budget_is_enforced() {
        let p = small_path(8, 1);
        let err = fno_levels(&p, &word(&[1, 2, 1]), &RegularizationConfig::default(), &[(1.0, 0.0)], 100.0);
        assert!(matches!(err, Err(Error::Budget { .. })));
    }
}
