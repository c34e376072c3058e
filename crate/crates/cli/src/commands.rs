use std::fs::{self, File};
use std::io::BufWriter;
use std::path::{Path, PathBuf};

use clap::ValueEnum;
use fnorp::permutation::Permutation;
use fnorp::rough_path::{build_tensors_within, Word};
use fnorp::spectral::{sample_fbm, substream_seed, Coupling, SpectrumMetadata, PATH_CONVENTION};
use fnorp::verify::{
    chen_residual, fubini_residual, generic_atoms, scaling_samples, shuffle_residual, slope_report, Experiment,
    SlopeReport,
};
use fnorp::{FbmModel, FrequencyGrid, SpectralPath};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::Serialize;
use serde_json::{json, Value};

use crate::config::RunConfig;

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum, Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum Command {
    Sample,
    Build,
    VerifyChen,
    VerifyShuffle,
    VerifyFubini,
    HolderScan,
    RateScan,
    DivergenceScan,
    CovarianceCheck,
}

/// Why a command did not succeed.
#[derive(Debug)]
pub enum Failure {
    /// Invalid input or a refused resource request (exit 2).
    Input(String),
}

impl From<fnorp::Error> for Failure {
    fn from(e: fnorp::Error) -> Self {
        Failure::Input(e.to_string())
    }
}

impl From<String> for Failure {
    fn from(e: String) -> Self {
        Failure::Input(e)
    }
}

type Run<T> = Result<T, Failure>;

/// Files written and whether every declared tolerance held.
pub struct Outcome {
    pub outputs: Vec<String>,
    pub tolerances_met: bool,
}

struct Out<'a> {
    dir: &'a Path,
    written: Vec<String>,
}

impl Out<'_> {
    fn file(&mut self, name: &str) -> Run<BufWriter<File>> {
        self.written.push(name.to_string());
        let f = File::create(self.dir.join(name)).map_err(|e| Failure::Input(format!("cannot write {name}: {e}")))?;
        Ok(BufWriter::new(f))
    }

    fn json<T: Serialize>(&mut self, name: &str, value: &T) -> Run<()> {
        let mut text = serde_json::to_string_pretty(value).map_err(|e| Failure::Input(e.to_string()))?;
        text.push('\n');
        self.written.push(name.to_string());
        fs::write(self.dir.join(name), text).map_err(|e| Failure::Input(format!("cannot write {name}: {e}")))
    }
}

pub fn run(command: Command, cfg: &RunConfig, dir: &Path) -> Run<Outcome> {
    fs::create_dir_all(dir).map_err(|e| Failure::Input(format!("cannot create {}: {e}", dir.display())))?;
    let mut out = Out { dir, written: Vec::new() };
    let tolerances_met = match command {
        Command::Sample => sample(cfg, &mut out)?,
        Command::Build => build(cfg, &mut out)?,
        Command::VerifyChen => verify_chen(cfg, &mut out)?,
        Command::VerifyShuffle => verify_shuffle(cfg, &mut out)?,
        Command::VerifyFubini => verify_fubini(cfg, &mut out)?,
        Command::HolderScan => holder_scan(cfg, &mut out)?,
        Command::RateScan => rate_scan(cfg, &mut out)?,
        Command::DivergenceScan => divergence_scan(cfg, &mut out)?,
        Command::CovarianceCheck => covariance_check(cfg, &mut out)?,
    };
    Ok(Outcome { outputs: out.written, tolerances_met })
}

fn load_path(cfg: &RunConfig) -> Run<SpectralPath> {
    let grid = cfg.grid()?;
    match &cfg.spectrum {
        Some(p) => {
            let f = File::open(p).map_err(|e| Failure::Input(format!("cannot read {}: {e}", p.display())))?;
            Ok(SpectralPath::read_csv(grid, cfg.d, f)?)
        }
        None => Ok(sample_fbm(&cfg.model()?, &grid, cfg.seed)?),
    }
}

/// Tuple count of the most expensive word up to level `n` on a `K`-mode grid.
fn tensor_cost(cfg: &RunConfig) -> f64 {
    let atoms = 2.0 * cfg.k as f64;
    match cfg.n {
        1 => atoms,
        2 => atoms * atoms,
        n => atoms.powi(n as i32),
    }
}

fn guard(cfg: &RunConfig, estimated: f64) -> Run<()> {
    if estimated > cfg.budget {
        return Err(Failure::Input(format!(
            "estimated {estimated:.3e} frequency tuples exceeds the budget {:.3e}",
            cfg.budget
        )));
    }
    Ok(())
}

fn sample(cfg: &RunConfig, out: &mut Out) -> Run<bool> {
    let path = sample_fbm(&cfg.model()?, &cfg.grid()?, cfg.seed)?;
    path.write_csv(out.file("spectrum.csv")?)?;
    let meta = SpectrumMetadata {
        alpha: cfg.alpha,
        eta: cfg.eta,
        k: cfg.k,
        delta_xi: cfg.delta_xi,
        seed: cfg.seed,
        d: cfg.d,
        convention: PATH_CONVENTION.to_string(),
    };
    out.json("spectrum.json", &meta)?;
    Ok(true)
}

fn build(cfg: &RunConfig, out: &mut Out) -> Run<bool> {
    guard(cfg, tensor_cost(cfg))?;
    let path = load_path(cfg)?;
    let tensor = build_tensors_within(&path, cfg.n, &[(cfg.t, cfg.s)], &cfg.regularization()?, cfg.budget)?
        .remove(0)
        .with_model(cfg.alpha, cfg.eta);
    out.written.push("tensor.json".into());
    fs::write(out.dir.join("tensor.json"), tensor.to_json()? + "\n")
        .map_err(|e| Failure::Input(format!("cannot write tensor.json: {e}")))?;
    Ok(true)
}

fn random_triples(cfg: &RunConfig) -> Vec<(f64, f64, f64)> {
    let (lo, hi) = (cfg.s.min(cfg.t), cfg.s.max(cfg.t));
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    (0..cfg.trials)
        .map(|_| {
            let mut v: [f64; 3] = [0.0; 3];
            for x in &mut v {
                *x = if hi > lo { rng.gen_range(lo..hi) } else { lo };
            }
            v.sort_by(|a, b| b.total_cmp(a));
            (v[0], v[1], v[2])
        })
        .collect()
}

fn verify_chen(cfg: &RunConfig, out: &mut Out) -> Run<bool> {
    guard(cfg, tensor_cost(cfg))?;
    let path = load_path(cfg)?;
    let triples = random_triples(cfg);
    let pairs: Vec<(f64, f64)> = triples.iter().flat_map(|&(t, u, s)| [(t, u), (u, s), (t, s)]).collect();
    let tensors = build_tensors_within(&path, cfg.n, &pairs, &cfg.regularization()?, cfg.budget)?;
    let mut rows = Vec::new();
    let mut worst: f64 = 0.0;
    for (&(t, u, s), c) in triples.iter().zip(tensors.chunks(3)) {
        let r = chen_residual(&c[0], &c[1], &c[2])?;
        worst = worst.max(r);
        rows.push(json!({ "t": t, "u": u, "s": s, "residual": r }));
    }
    let pass = worst <= cfg.identity_tolerance;
    out.json(
        "chen_report.json",
        &json!({ "N": cfg.n, "max_residual": worst, "tolerance": cfg.identity_tolerance, "pass": pass, "triples": rows }),
    )?;
    Ok(pass)
}

fn verify_shuffle(cfg: &RunConfig, out: &mut Out) -> Run<bool> {
    guard(cfg, tensor_cost(cfg))?;
    if cfg.n < 2 {
        return Err(Failure::Input("verify-shuffle needs N >= 2".into()));
    }
    let path = load_path(cfg)?;
    let tensor = build_tensors_within(&path, cfg.n, &[(cfg.t, cfg.s)], &cfg.regularization()?, cfg.budget)?.remove(0);
    let mut rows = Vec::new();
    let mut worst: f64 = 0.0;
    for n1 in 1..cfg.n {
        for n2 in 1..=(cfg.n - n1) {
            for w1 in Word::all(path.d(), n1) {
                for w2 in Word::all(path.d(), n2) {
                    let r = shuffle_residual(&tensor, &w1, &w2)?;
                    worst = worst.max(r);
                    rows.push(json!({ "w1": w1.to_string(), "w2": w2.to_string(), "residual": r }));
                }
            }
        }
    }
    let pass = worst <= cfg.identity_tolerance;
    out.json(
        "shuffle_report.json",
        &json!({ "N": cfg.n, "max_residual": worst, "tolerance": cfg.identity_tolerance, "pass": pass, "pairs": rows }),
    )?;
    Ok(pass)
}

/// Words with `N` distinct letters on generic atoms, every letter order.
fn verify_fubini(cfg: &RunConfig, out: &mut Out) -> Run<bool> {
    let n = cfg.n;
    guard(cfg, (cfg.atoms_per_component as f64 * 2.0).powi(n as i32))?;
    let path = generic_atoms(n, cfg.atoms_per_component, cfg.delta_xi, cfg.seed)?;
    let mut rows = Vec::new();
    let mut worst: f64 = 0.0;
    for sigma in Permutation::all(n) {
        let w = Word::new(sigma.images().iter().map(|i| i + 1).collect())?;
        let r = fubini_residual(&path, &w, cfg.s, cfg.t)?;
        worst = worst.max(r);
        rows.push(json!({ "word": w.to_string(), "residual": r }));
    }
    let pass = worst <= cfg.identity_tolerance;
    out.json(
        "fubini_report.json",
        &json!({ "n": n, "max_residual": worst, "tolerance": cfg.identity_tolerance, "pass": pass, "words": rows }),
    )?;
    Ok(pass)
}

#[derive(Serialize)]
struct ScanResult {
    report: SlopeReport,
    expected_slope: f64,
    tolerance: f64,
    pass: bool,
}

fn scan(cfg: &RunConfig, out: &mut Out, exp: &Experiment, csv: &str, expected: f64, band: f64) -> Run<ScanResult> {
    let grid = cfg.grid()?;
    guard(cfg, 4.0 * (grid.modes() as f64).powi(2))?;
    let samples = scaling_samples(exp, &cfg.model()?, &grid, &cfg.regularization()?, cfg.m, cfg.seed)?;
    samples.write_csv(out.file(csv)?)?;
    let report = slope_report(exp, &samples, cfg.seed)?;
    let pass = (report.slope - expected).abs() <= band;
    Ok(ScanResult { report, expected_slope: expected, tolerance: band, pass })
}

fn holder_scan(cfg: &RunConfig, out: &mut Out) -> Run<bool> {
    let word = cfg.word_or_default()?;
    let expected = 2.0 * word.len() as f64 * cfg.alpha;
    let exp = Experiment::Holder { word, gaps: cfg.gaps.clone(), s: cfg.s };
    let r = scan(cfg, out, &exp, "holder_samples.csv", expected, cfg.slope_tolerance.unwrap_or(0.2))?;
    out.json("holder_report.json", &r)?;
    Ok(r.pass)
}

fn rate_scan(cfg: &RunConfig, out: &mut Out) -> Run<bool> {
    let exp = Experiment::Rate { word: cfg.word_or_default()?, eta: cfg.eta, deltas: cfg.deltas.clone(), s: cfg.s, t: cfg.t };
    let r = scan(cfg, out, &exp, "rate_samples.csv", 2.0 * cfg.alpha, cfg.slope_tolerance.unwrap_or(0.2))?;
    out.json("rate_report.json", &r)?;
    Ok(r.pass)
}

fn divergence_scan(cfg: &RunConfig, out: &mut Out) -> Run<bool> {
    if cfg.d < 2 {
        return Err(Failure::Input("divergence-scan needs d >= 2".into()));
    }
    // the plain area blows up like η^{−(1−4α)} below α = 1/4 and converges above
    let expected = (4.0 * cfg.alpha - 1.0).min(0.0);
    let plain = Experiment::Divergence { etas: cfg.etas.clone(), regularized: false, s: cfg.s, t: cfg.t };
    let reg = Experiment::Divergence { etas: cfg.etas.clone(), regularized: true, s: cfg.s, t: cfg.t };
    let p = scan(cfg, out, &plain, "divergence_plain_samples.csv", expected, cfg.slope_tolerance.unwrap_or(0.15))?;
    let r = scan(cfg, out, &reg, "divergence_regularized_samples.csv", 0.0, cfg.slope_tolerance.unwrap_or(0.1))?;
    let pass = p.pass && r.pass;
    out.json("divergence_report.json", &json!({ "plain": p, "regularized": r, "pass": pass }))?;
    Ok(pass)
}

fn fbm_covariance(alpha: f64, s: f64, t: f64) -> f64 {
    let h = 2.0 * alpha;
    0.5 * (s.abs().powf(h) + t.abs().powf(h) - (t - s).abs().powf(h))
}

/// `Cov(Z_s(1), Z_t(2))` of the antisymmetric fBm.
fn antisymmetric_cross(alpha: f64, s: f64, t: f64) -> f64 {
    let sp = |x: f64| x.signum() * x.abs().powf(2.0 * alpha);
    -(std::f64::consts::PI * alpha).tan() / 2.0 * (-sp(s) + sp(t) - sp(t - s))
}

fn continuum(model: &FbmModel, i: usize, j: usize, s: f64, t: f64) -> f64 {
    match (i == j, model.coupling) {
        (true, _) => fbm_covariance(model.alpha, s, t),
        (false, Coupling::Independent) => 0.0,
        (false, Coupling::Antisymmetric) if i == 1 => antisymmetric_cross(model.alpha, s, t),
        (false, Coupling::Antisymmetric) => antisymmetric_cross(model.alpha, t, s),
    }
}

#[derive(Serialize)]
struct CovarianceRow {
    s: f64,
    t: f64,
    i: usize,
    j: usize,
    empirical: f64,
    mc_stderr: f64,
    grid_exact: f64,
    continuum: f64,
}

fn covariance_check(cfg: &RunConfig, out: &mut Out) -> Run<bool> {
    let model = cfg.model()?;
    let grid: FrequencyGrid = cfg.grid()?;
    if cfg.times.is_empty() || cfg.times.iter().any(|t| !t.is_finite()) {
        return Err(Failure::Input("times must be a non-empty list of finite values".into()));
    }
    if cfg.m < 2 {
        return Err(Failure::Input("covariance-check needs M >= 2".into()));
    }
    let times = &cfg.times;
    let d = model.d;
    // per sample: B_t(i) for every component and time
    let draws: Vec<Vec<f64>> = (0..cfg.m as u64)
        .into_par_iter()
        .map(|k| -> fnorp::Result<Vec<f64>> {
            let p = sample_fbm(&model, &grid, substream_seed(cfg.seed, k))?;
            let mut v = Vec::with_capacity(d * times.len());
            for i in 1..=d {
                for &t in times {
                    v.push(p.eval(i, t)?);
                }
            }
            Ok(v)
        })
        .collect::<fnorp::Result<_>>()?;
    let nt = times.len();
    let m = cfg.m as f64;
    let mut rows = Vec::new();
    let (mut worst_rel, mut worst_se): (f64, f64) = (0.0, 0.0);
    for i in 1..=d {
        for j in 1..=d {
            for (a, &s) in times.iter().enumerate() {
                for (b, &t) in times.iter().enumerate() {
                    let prods: Vec<f64> = draws.iter().map(|v| v[(i - 1) * nt + a] * v[(j - 1) * nt + b]).collect();
                    let mean = prods.iter().sum::<f64>() / m;
                    let var = prods.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (m - 1.0);
                    let se = (var / m).sqrt();
                    let exact = model.exact_covariance(&grid, i, j, s, t)?;
                    let cont = continuum(&model, i, j, s, t);
                    let scale = if cont != 0.0 {
                        cont.abs()
                    } else {
                        (model.exact_covariance(&grid, i, i, s, s)? * model.exact_covariance(&grid, j, j, t, t)?).sqrt()
                    };
                    if scale > 0.0 {
                        worst_rel = worst_rel.max((exact - cont).abs() / scale);
                    }
                    if se > 0.0 {
                        worst_se = worst_se.max((mean - exact).abs() / se);
                    }
                    rows.push(CovarianceRow { s, t, i, j, empirical: mean, mc_stderr: se, grid_exact: exact, continuum: cont });
                }
            }
        }
    }
    let mut w = csv::Writer::from_writer(out.file("covariance.csv")?);
    for r in &rows {
        w.serialize(r).map_err(|e| Failure::Input(format!("cannot write covariance.csv: {e}")))?;
    }
    w.flush().map_err(|e| Failure::Input(format!("cannot write covariance.csv: {e}")))?;
    let pass = worst_rel <= cfg.covariance_tolerance && worst_se <= cfg.se_tolerance;
    out.json(
        "covariance_report.json",
        &json!({
            "max_grid_vs_continuum": worst_rel,
            "covariance_tolerance": cfg.covariance_tolerance,
            "max_mc_deviation_in_se": worst_se,
            "se_tolerance": cfg.se_tolerance,
            "pass": pass,
        }),
    )?;
    Ok(pass)
}

/// Echo of the run, written last.
pub fn manifest(command: Command, cfg: &RunConfig, outcome: &Outcome, exit_code: u8) -> Value {
    let timestamp = std::time::SystemTime::now()
        .duration_since(std::time::UNIX_EPOCH)
        .map(|d| d.as_secs())
        .unwrap_or(0);
    json!({
        "command": command,
        "library_version": fnorp::VERSION,
        "config": cfg,
        "outputs": outcome.outputs,
        "tolerances_met": outcome.tolerances_met,
        "exit_code": exit_code,
        "timestamp_unix": timestamp,
    })
}

pub fn write_manifest(dir: &Path, manifest: &Value) -> Result<PathBuf, String> {
    let path = dir.join("manifest.json");
    let mut text = serde_json::to_string_pretty(manifest).map_err(|e| e.to_string())?;
    text.push('\n');
    fs::write(&path, text).map_err(|e| format!("cannot write {}: {e}", path.display()))?;
    Ok(path)
}
