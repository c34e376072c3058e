//! Oracles, identity residuals and Monte Carlo scaling estimators.

use std::io::Write;

use num_complex::Complex64;
use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{invalid, Error, Result};
use crate::numeric::{mean_and_stderr, pairwise_sum};
use crate::rough_path::{
    fno_level_atomic, fno_levels, unregularized_level2, RoughPathTensor, Word, DEFAULT_TUPLE_BUDGET,
};
use crate::skeleton::RegularizationConfig;
use crate::spectral::{substream_seed, AtomicPath, FbmModel, FrequencyGrid, Noise, SpectralPath};
use crate::tree::shuffles;

/// Added to residual denominators so that `0/0` reads as zero.
pub const RESIDUAL_EPS: f64 = 1e-30;

/// `Σ_j p_j(x) e^{iω_j x}` with polynomial coefficients in increasing degree.
#[derive(Debug, Clone, PartialEq)]
pub struct ExpPoly {
    pub terms: Vec<(Vec<Complex64>, f64)>,
    tol: f64,
}

impl ExpPoly {
    /// The constant `c`; frequencies closer than `tol` are merged.
    pub fn constant(c: Complex64, tol: f64) -> Self {
        ExpPoly { terms: vec![(vec![c], 0.0)], tol }
    }

    fn add_term(&mut self, poly: Vec<Complex64>, omega: f64) {
        let omega = if omega.abs() <= self.tol { 0.0 } else { omega };
        if let Some((p, _)) = self.terms.iter_mut().find(|(_, w)| (w - omega).abs() <= self.tol) {
            if p.len() < poly.len() {
                p.resize(poly.len(), Complex64::new(0.0, 0.0));
            }
            for (a, b) in p.iter_mut().zip(poly) {
                *a += b;
            }
        } else {
            self.terms.push((poly, omega));
        }
    }

    /// Multiplies by `Σ a e^{iξx}`.
    pub fn times_atoms(&self, atoms: &[(f64, Complex64)]) -> Self {
        let mut out = ExpPoly { terms: Vec::new(), tol: self.tol };
        for (p, w) in &self.terms {
            for (xi, a) in atoms {
                out.add_term(p.iter().map(|c| c * a).collect(), w + xi);
            }
        }
        out
    }

    /// `x ↦ ∫_s^x self(y) dy`.
    pub fn integrate_from(&self, s: f64) -> Self {
        let mut out = ExpPoly { terms: Vec::new(), tol: self.tol };
        let mut constant = Complex64::new(0.0, 0.0);
        for (p, w) in &self.terms {
            let q: Vec<Complex64> = if *w == 0.0 {
                let mut q = vec![Complex64::new(0.0, 0.0); p.len() + 1];
                for (k, c) in p.iter().enumerate() {
                    q[k + 1] = c / (k as f64 + 1.0);
                }
                q
            } else {
                // Q = Σ_k (−1)^k p^{(k)} / (iω)^{k+1}
                let iw = Complex64::new(0.0, *w);
                let mut q = vec![Complex64::new(0.0, 0.0); p.len()];
                let mut deriv = p.clone();
                let mut factor = 1.0 / iw;
                for _ in 0..p.len() {
                    for (qk, dk) in q.iter_mut().zip(&deriv) {
                        *qk += dk * factor;
                    }
                    deriv = deriv.iter().enumerate().skip(1).map(|(k, c)| c * k as f64).collect();
                    factor *= -1.0 / iw;
                }
                q
            };
            constant -= eval_poly(&q, s) * Complex64::new(0.0, w * s).exp();
            out.add_term(q, *w);
        }
        out.add_term(vec![constant], 0.0);
        out
    }

    pub fn eval(&self, x: f64) -> Complex64 {
        self.terms.iter().map(|(p, w)| eval_poly(p, x) * Complex64::new(0.0, w * x).exp()).sum()
    }
}

fn eval_poly(p: &[Complex64], x: f64) -> Complex64 {
    p.iter().rev().fold(Complex64::new(0.0, 0.0), |acc, c| acc * x + c)
}

/// Frequency merge tolerance for a path's atoms.
fn oracle_tol(path: &AtomicPath) -> f64 {
    let scale = path.components.iter().flatten().map(|(x, _)| x.abs()).fold(0.0, f64::max);
    1e-12 * scale.max(1.0)
}

/// `∫_{s<x_n<…<x_1<t} dΓ_{x_1}(i_1) ⋯ dΓ_{x_n}(i_n)` by exact nested antiderivatives.
pub fn oracle_iterated_integral(path: &AtomicPath, word: &Word, s: f64, t: f64) -> Result<Complex64> {
    if word.max_letter() > path.d() {
        return invalid(format!("word {word} uses letters beyond d = {}", path.d()));
    }
    let mut f = ExpPoly::constant(Complex64::new(1.0, 0.0), oracle_tol(path));
    for &l in word.letters().iter().rev() {
        f = f.times_atoms(path.atoms(l)).integrate_from(s);
    }
    Ok(f.eval(t))
}

const GL_X: [f64; 4] = [0.183_434_642_495_649_8, 0.525_532_409_916_329, 0.796_666_477_413_626_7, 0.960_289_856_497_536_3];
const GL_W: [f64; 4] = [0.362_683_783_378_362, 0.313_706_645_877_887_3, 0.222_381_034_453_374_5, 0.101_228_536_290_376_3];

fn gauss_legendre_complex(a: f64, b: f64, panels: usize, f: &dyn Fn(f64) -> Complex64) -> Complex64 {
    let h = (b - a) / panels as f64;
    let mut sum = Complex64::new(0.0, 0.0);
    for p in 0..panels {
        let mid = a + (p as f64 + 0.5) * h;
        let half = 0.5 * h;
        for (x, w) in GL_X.iter().zip(GL_W) {
            sum += (f(mid - half * x) + f(mid + half * x)) * (w * half);
        }
    }
    sum
}

/// The same nested integral by composite Gauss–Legendre quadrature at every level.
pub fn quadrature_iterated_integral(path: &AtomicPath, word: &Word, s: f64, t: f64, panels: usize) -> Result<Complex64> {
    if word.max_letter() > path.d() {
        return invalid(format!("word {word} uses letters beyond d = {}", path.d()));
    }
    fn nested(path: &AtomicPath, letters: &[usize], s: f64, x: f64, panels: usize) -> Complex64 {
        let Some((&first, rest)) = letters.split_first() else {
            return Complex64::new(1.0, 0.0);
        };
        let density = |y: f64| -> Complex64 {
            path.atoms(first).iter().map(|(xi, a)| a * Complex64::new(0.0, xi * y).exp()).sum()
        };
        gauss_legendre_complex(s, x, panels, &|y| density(y) * nested(path, rest, s, y, panels))
    }
    Ok(nested(path, word.letters(), s, t, panels))
}

/// Relative gap between the unregularized sector reconstruction and the oracle.
pub fn fubini_residual(path: &AtomicPath, word: &Word, s: f64, t: f64) -> Result<f64> {
    let oracle = oracle_iterated_integral(path, word, s, t)?;
    let fno = fno_level_atomic(path, word, &RegularizationConfig::trivial(), &[(t, s)], DEFAULT_TUPLE_BUDGET)?[0];
    Ok((fno - oracle).norm() / (oracle.norm() + RESIDUAL_EPS))
}

/// Largest normalized Chen defect `δX_{tus} − Σ X_{tu} X_{us}` over all words.
pub fn chen_residual(tu: &RoughPathTensor, us: &RoughPathTensor, ts: &RoughPathTensor) -> Result<f64> {
    if tu.config() != us.config() || tu.config() != ts.config() {
        return invalid("tensors were built with different regularization configs");
    }
    if tu.t != ts.t || tu.s != us.t || us.s != ts.s {
        return invalid("tensors do not cover (t,u), (u,s) and (t,s)");
    }
    let mut worst: f64 = 0.0;
    for (w, &v_ts) in &ts.levels {
        let get = |x: &RoughPathTensor, w: &Word| {
            x.get(w).ok_or_else(|| Error::InvalidInput(format!("word {w} missing from a tensor")))
        };
        let v_tu = get(tu, w)?;
        let v_us = get(us, w)?;
        let mut defect = vec![v_ts, -v_tu, -v_us];
        for k in 1..w.len() {
            let (left, right) = w.split(k);
            defect.push(-get(tu, &left)? * get(us, &right)?);
        }
        let scale = pairwise_sum(&defect.iter().map(|x| x.abs()).collect::<Vec<_>>());
        worst = worst.max(pairwise_sum(&defect).abs() / (scale + RESIDUAL_EPS));
    }
    Ok(worst)
}

/// Normalized defect of `X(w1) X(w2) = Σ_{shuffles} X(k)`.
pub fn shuffle_residual(tensor: &RoughPathTensor, w1: &Word, w2: &Word) -> Result<f64> {
    if w1.len() + w2.len() > tensor.max_level() {
        return invalid(format!("|{w1}| + |{w2}| exceeds the tensor level {}", tensor.max_level()));
    }
    let get = |w: &Word| tensor.get(w).ok_or_else(|| Error::InvalidInput(format!("word {w} missing from the tensor")));
    let product = get(w1)? * get(w2)?;
    let mut terms = Vec::new();
    for k in shuffles(w1.letters(), w2.letters()) {
        terms.push(get(&Word::new(k)?)?);
    }
    let sum = pairwise_sum(&terms);
    let scale = product.abs() + pairwise_sum(&terms.iter().map(|x| x.abs()).collect::<Vec<_>>());
    Ok((product - sum).abs() / (scale + RESIDUAL_EPS))
}

/// `max_{s≠t} |f_{ts}| / |t−s|^κ` over a time grid, `values[i][j] = f_{t_i t_j}`.
pub fn holder_norm_2var(times: &[f64], values: &[Vec<f64>], kappa: f64, level: usize) -> Result<f64> {
    if !(kappa > 0.0 && kappa <= level as f64) {
        return invalid(format!("kappa must lie in (0, {level}], got {kappa}"));
    }
    if values.len() != times.len() || values.iter().any(|r| r.len() != times.len()) {
        return invalid("values must be a square matrix over the time grid");
    }
    let mut best: f64 = 0.0;
    for (i, ti) in times.iter().enumerate() {
        if values[i][i] != 0.0 {
            return invalid("the two-parameter function must vanish on the diagonal");
        }
        for (j, tj) in times.iter().enumerate() {
            if i != j {
                best = best.max(values[i][j].abs() / (ti - tj).abs().powf(kappa));
            }
        }
    }
    Ok(best)
}

fn primes(count: usize) -> Vec<u64> {
    let mut out = Vec::with_capacity(count);
    let mut n = 2u64;
    while out.len() < count {
        if (2..).take_while(|p| p * p <= n).all(|p| !n.is_multiple_of(p)) {
            out.push(n);
        }
        n += 1;
    }
    out
}

/// Whether some nonempty signed subset of at most `max_size` frequencies sums to zero.
fn has_vanishing_subset(freqs: &[i64], max_size: usize) -> bool {
    fn go(freqs: &[i64], start: usize, left: usize, sum: i64, used: usize) -> bool {
        if used > 0 && sum == 0 {
            return true;
        }
        if left == 0 {
            return false;
        }
        (start..freqs.len()).any(|i| go(freqs, i + 1, left - 1, sum + freqs[i], used + 1))
    }
    go(freqs, 0, max_size, 0, 0)
}

/// Complex test path with atoms at distinct primes times `delta_xi` and random
/// signs, resampled until no signed subset of up to five atoms is resonant.
pub fn generic_atoms(d: usize, per_component: usize, delta_xi: f64, seed: u64) -> Result<AtomicPath> {
    if d == 0 || per_component == 0 || delta_xi.is_nan() || delta_xi <= 0.0 {
        return invalid("generic atoms need d, per_component >= 1 and delta_xi > 0");
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut ps = primes(d * per_component);
    ps.shuffle(&mut rng);
    for _ in 0..10_000 {
        let signed: Vec<i64> = ps.iter().map(|&p| if rng.gen::<bool>() { p as i64 } else { -(p as i64) }).collect();
        if has_vanishing_subset(&signed, 5) {
            continue;
        }
        let components = signed
            .chunks(per_component)
            .map(|c| {
                c.iter()
                    .map(|&p| (p as f64 * delta_xi, Complex64::new(rng.gen_range(-1.0..1.0), rng.gen_range(-1.0..1.0))))
                    .collect()
            })
            .collect();
        return AtomicPath::new(components);
    }
    invalid("could not find a non-resonant sign pattern")
}

/// Scaling experiment for the second-moment slope estimator.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", deny_unknown_fields)]
pub enum Experiment {
    /// `E|R B^n_{s,s+h}(w)|²` against the gap `h`.
    Holder { word: Word, gaps: Vec<f64>, s: f64 },
    /// `E|R B^{n,η}_{ts}(w) − R B^{n,η+δ}_{ts}(w)|²` against `δ`, same noise.
    Rate { word: Word, eta: f64, deltas: Vec<f64>, s: f64, t: f64 },
    /// Second moment against `η`, of the plain area or of the regularized level 2.
    Divergence { etas: Vec<f64>, regularized: bool, s: f64, t: f64 },
}

impl Experiment {
    fn abscissae(&self) -> &[f64] {
        match self {
            Experiment::Holder { gaps, .. } => gaps,
            Experiment::Rate { deltas, .. } => deltas,
            Experiment::Divergence { etas, .. } => etas,
        }
    }

    pub fn name(&self) -> &'static str {
        match self {
            Experiment::Holder { .. } => "holder",
            Experiment::Rate { .. } => "rate",
            Experiment::Divergence { .. } => "divergence",
        }
    }
}

/// One regression point: `(log abscissa, log E|·|², stderr of the log estimate)`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SlopePoint {
    pub log_abscissa: f64,
    pub log_estimate: f64,
    pub mc_stderr: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SlopeReport {
    pub experiment: String,
    pub slope: f64,
    pub stderr: f64,
    pub points: Vec<SlopePoint>,
    #[serde(rename = "M")]
    pub m: usize,
    pub seed: u64,
}

/// Per-sample values of a scaling run, `samples[i][m]` at abscissa `i`.
#[derive(Debug, Clone, PartialEq)]
pub struct ScalingSamples {
    pub abscissae: Vec<f64>,
    pub samples: Vec<Vec<f64>>,
}

impl ScalingSamples {
    /// Writes `abscissa,sample_index,value`.
    pub fn write_csv<W: Write>(&self, out: W) -> Result<()> {
        let io = |e: csv::Error| Error::InvalidInput(format!("csv write failed: {e}"));
        let mut w = csv::Writer::from_writer(out);
        w.write_record(["abscissa", "sample_index", "value"]).map_err(io)?;
        for (x, row) in self.abscissae.iter().zip(&self.samples) {
            for (m, v) in row.iter().enumerate() {
                w.write_record(&[x.to_string(), m.to_string(), v.to_string()]).map_err(io)?;
            }
        }
        w.flush().map_err(|e| Error::InvalidInput(format!("csv write failed: {e}")))
    }
}

/// Ordinary least squares `y = a + b x`; returns `(b, stderr of b)`.
pub fn ols_slope(x: &[f64], y: &[f64]) -> Result<(f64, f64)> {
    if x.len() != y.len() || x.len() < 3 {
        return invalid("regression needs at least three points");
    }
    let n = x.len() as f64;
    let mx = pairwise_sum(x) / n;
    let my = pairwise_sum(y) / n;
    let sxx: f64 = x.iter().map(|a| (a - mx) * (a - mx)).sum();
    if sxx == 0.0 {
        return invalid("regression abscissae are all equal");
    }
    let sxy: f64 = x.iter().zip(y).map(|(a, b)| (a - mx) * (b - my)).sum();
    let b = sxy / sxx;
    let a = my - b * mx;
    let rss: f64 = x.iter().zip(y).map(|(u, v)| (v - a - b * u).powi(2)).sum();
    Ok((b, (rss / (n - 2.0) / sxx).sqrt()))
}

fn check_scaling_inputs(experiment: &Experiment, m: usize) -> Result<()> {
    if m < 100 {
        return invalid(format!("at least 100 samples per point are required, got {m}"));
    }
    let xs = experiment.abscissae();
    if xs.len() < 4 {
        return invalid("at least four abscissae are required");
    }
    if xs.iter().any(|x| !(*x > 0.0 && x.is_finite())) {
        return invalid("abscissae must be positive");
    }
    Ok(())
}

/// Values of one Monte Carlo sample at every abscissa.
fn sample_values(
    experiment: &Experiment,
    model: &FbmModel,
    grid: &FrequencyGrid,
    cfg: &RegularizationConfig,
    seed: u64,
) -> Result<Vec<f64>> {
    let streams = match model.coupling {
        crate::spectral::Coupling::Independent => model.d,
        crate::spectral::Coupling::Antisymmetric => 1,
    };
    let noise = Noise::sample(streams, grid.modes(), seed);
    match experiment {
        Experiment::Holder { word, gaps, s } => {
            let path = model.path_from_noise(grid, &noise)?;
            let pairs: Vec<(f64, f64)> = gaps.iter().map(|h| (s + h, *s)).collect();
            fno_levels(&path, word, cfg, &pairs, DEFAULT_TUPLE_BUDGET)
        }
        Experiment::Rate { word, eta, deltas, s, t } => {
            let value = |eta: f64| -> Result<f64> {
                let path = model.with_eta(eta)?.path_from_noise(grid, &noise)?;
                Ok(fno_levels(&path, word, cfg, &[(*t, *s)], DEFAULT_TUPLE_BUDGET)?[0])
            };
            let base = value(*eta)?;
            deltas.iter().map(|d| Ok(value(eta + d)? - base)).collect()
        }
        Experiment::Divergence { etas, regularized, s, t } => etas
            .iter()
            .map(|&eta| {
                let path: SpectralPath = model.with_eta(eta)?.path_from_noise(grid, &noise)?;
                if *regularized {
                    Ok(fno_levels(&path, &Word::new(vec![1, 2])?, cfg, &[(*t, *s)], DEFAULT_TUPLE_BUDGET)?[0])
                } else {
                    unregularized_level2(&path, 1, 2, *s, *t)
                }
            })
            .collect(),
    }
}

/// Draws `m` samples for every abscissa (sample `k` uses substream `k` of `seed`).
pub fn scaling_samples(
    experiment: &Experiment,
    model: &FbmModel,
    grid: &FrequencyGrid,
    cfg: &RegularizationConfig,
    m: usize,
    seed: u64,
) -> Result<ScalingSamples> {
    check_scaling_inputs(experiment, m)?;
    model.validate()?;
    let needed = match experiment {
        Experiment::Holder { word, .. } | Experiment::Rate { word, .. } => word.max_letter(),
        Experiment::Divergence { .. } => 2,
    };
    if needed > model.d {
        return invalid(format!("the experiment needs {needed} components, the model has {}", model.d));
    }
    let per_sample: Vec<Vec<f64>> = (0..m as u64)
        .into_par_iter()
        .map(|k| sample_values(experiment, model, grid, cfg, substream_seed(seed, k)))
        .collect::<Result<_>>()?;
    let xs = experiment.abscissae().to_vec();
    let samples = (0..xs.len()).map(|i| per_sample.iter().map(|row| row[i]).collect()).collect();
    Ok(ScalingSamples { abscissae: xs, samples })
}

/// Log-log slope of the second moment.
pub fn slope_report(experiment: &Experiment, samples: &ScalingSamples, seed: u64) -> Result<SlopeReport> {
    let mut points = Vec::new();
    for (x, row) in samples.abscissae.iter().zip(&samples.samples) {
        let squares: Vec<f64> = row.iter().map(|v| v * v).collect();
        let (mean, se) = mean_and_stderr(&squares);
        if mean > 0.0 && mean.is_finite() {
            points.push(SlopePoint { log_abscissa: x.ln(), log_estimate: mean.ln(), mc_stderr: se / mean });
        }
    }
    if points.len() < 4 {
        return Err(Error::Regression(format!("only {} usable regression points", points.len())));
    }
    let xs: Vec<f64> = points.iter().map(|p| p.log_abscissa).collect();
    let ys: Vec<f64> = points.iter().map(|p| p.log_estimate).collect();
    let (slope, stderr) = ols_slope(&xs, &ys)?;
    Ok(SlopeReport {
        experiment: experiment.name().to_string(),
        slope,
        stderr,
        points,
        m: samples.samples.first().map_or(0, Vec::len),
        seed,
    })
}

pub fn scaling_slope(
    experiment: &Experiment,
    model: &FbmModel,
    grid: &FrequencyGrid,
    cfg: &RegularizationConfig,
    m: usize,
    seed: u64,
) -> Result<SlopeReport> {
    let samples = scaling_samples(experiment, model, grid, cfg, m, seed)?;
    slope_report(experiment, &samples, seed)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn c(re: f64, im: f64) -> Complex64 {
        Complex64::new(re, im)
    }

    #[test]
    fn single_atom_oracle() {
        let p = AtomicPath::new(vec![vec![(1.7, c(0.4, -0.2))]]).unwrap();
        let w = Word::new(vec![1]).unwrap();
        let got = oracle_iterated_integral(&p, &w, 0.2, 1.1).unwrap();
        let want = c(0.4, -0.2) * (c(0.0, 1.7 * 1.1).exp() - c(0.0, 1.7 * 0.2).exp()) / c(0.0, 1.7);
        assert!((got - want).norm() < 1e-14);
    }

    #[test]
    fn repeated_letter_oracle_is_half_square() {
        let p = AtomicPath::new(vec![vec![(1.0, c(1.0, 0.5)), (-1.0, c(1.0, -0.5)), (3.0, c(0.2, 0.0))]]).unwrap();
        let w = Word::new(vec![1, 1]).unwrap();
        let inc = p.increment(1, -0.4, 0.9);
        let got = oracle_iterated_integral(&p, &w, -0.4, 0.9).unwrap();
        assert!((got - 0.5 * inc * inc).norm() < 1e-13);
    }

    #[test]
    fn oracle_agrees_with_quadrature() {
        let p = generic_atoms(3, 3, 0.7, 4).unwrap();
        for letters in [vec![1, 2], vec![2, 3, 1], vec![3, 3, 1]] {
            let w = Word::new(letters).unwrap();
            let exact = oracle_iterated_integral(&p, &w, 0.1, 0.8).unwrap();
            let quad = quadrature_iterated_integral(&p, &w, 0.1, 0.8, 12).unwrap();
            assert!((exact - quad).norm() < 1e-10 * exact.norm(), "{w}: {exact} vs {quad}");
        }
    }

    #[test]
    fn generic_atoms_are_non_resonant() {
        let p = generic_atoms(4, 3, 0.5, 9).unwrap();
        let ints: Vec<i64> = p.components.iter().flatten().map(|(x, _)| (x / 0.5).round() as i64).collect();
        assert!(!has_vanishing_subset(&ints, 5));
        assert!(has_vanishing_subset(&[2, 3, -5], 5));
    }

    #[test]
    fn two_letter_fubini() {
        let p = generic_atoms(2, 2, 0.6, 1).unwrap();
        let r = fubini_residual(&p, &Word::new(vec![1, 2]).unwrap(), -0.2, 0.7).unwrap();
        assert!(r < 1e-9, "residual {r}");
    }

    #[test]
    fn holder_norm_examples() {
        let times: Vec<f64> = (0..=8).map(|k| k as f64 / 8.0).collect();
        let grid = |f: &dyn Fn(f64, f64) -> f64| -> Vec<Vec<f64>> {
            times.iter().map(|&t| times.iter().map(|&s| f(t, s)).collect()).collect()
        };
        assert_eq!(holder_norm_2var(&times, &grid(&|_, _| 0.0), 0.5, 1).unwrap(), 0.0);
        let lin = holder_norm_2var(&times, &grid(&|t, s| t - s), 1.0, 1).unwrap();
        assert!((lin - 1.0).abs() < 1e-12);
        let pow = holder_norm_2var(&times, &grid(&|t, s| (t - s).abs().powf(0.6)), 0.5, 1).unwrap();
        assert!((pow - 1.0f64.powf(0.1)).abs() < 1e-12);
        assert!(holder_norm_2var(&times, &grid(&|_, _| 0.0), 1.5, 1).is_err());
    }

    #[test]
    fn ols_recovers_a_line() {
        let x = [0.0, 1.0, 2.0, 3.0];
        let y = [1.0, 3.0, 5.0, 7.0];
        let (b, se) = ols_slope(&x, &y).unwrap();
        assert!((b - 2.0).abs() < 1e-14 && se < 1e-12);
    }
}
