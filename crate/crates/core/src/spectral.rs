//! Finite-frequency-grid Gaussian paths.
//!
//! A [`SpectralPath`] stores, for every component, the complex amplitude of
//! the path derivative at each positive grid frequency; the negative
//! frequencies carry the complex conjugates, so
//!
//! ```text
//! B'_t = 2 Re Σ_k a_k e^{itξ_k},    B_t = 2 Re Σ_k a_k (e^{itξ_k} − 1)/(iξ_k).
//! ```
//!
//! The fBm approximation draws `a_k` as centred complex Gaussians whose
//! variance is the spectral mass `c_α² ∫_cell ξ^{1−2α} e^{−2ηξ} dξ / α` of the
//! grid cell around `ξ_k`. Two models built from the same [`Noise`] at
//! different `η` are coupled sample-by-sample.

use std::f64::consts::PI;
use std::io::{Read, Write};

use num_complex::Complex64;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::error::{invalid, Error, Result};

const I: Complex64 = Complex64::new(0.0, 1.0);

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FrequencyGrid {
    k: usize,
    delta_xi: f64,
}

impl FrequencyGrid {
    pub const DEFAULT_MODES: usize = 1024;
    pub const DEFAULT_PERIOD: f64 = 8.0;

    pub fn new(k: usize, delta_xi: f64) -> Result<Self> {
        if k == 0 {
            return invalid("frequency grid needs K >= 1 modes");
        }
        if !(delta_xi > 0.0 && delta_xi.is_finite()) {
            return invalid(format!("grid spacing must be positive, got {delta_xi}"));
        }
        Ok(FrequencyGrid { k, delta_xi })
    }

    pub fn modes(&self) -> usize {
        self.k
    }

    pub fn delta_xi(&self) -> f64 {
        self.delta_xi
    }

    /// Frequency of positive mode `k` (1-based).
    pub fn freq(&self, k: usize) -> f64 {
        k as f64 * self.delta_xi
    }

    pub fn max_freq(&self) -> f64 {
        self.freq(self.k)
    }
}

impl Default for FrequencyGrid {
    fn default() -> Self {
        FrequencyGrid { k: Self::DEFAULT_MODES, delta_xi: 2.0 * PI / Self::DEFAULT_PERIOD }
    }
}

/// `c_α = ½ √(−α / (cos(πα) Γ(−2α)))`.
pub fn c_alpha(alpha: f64) -> Result<f64> {
    if !(alpha > 0.0 && alpha < 1.0) {
        return invalid(format!("Hurst index must lie in (0,1), got {alpha}"));
    }
    if (alpha - 0.5).abs() < 1e-12 {
        return invalid("c_alpha is singular at alpha = 1/2; use a flat-spectrum Brownian model");
    }
    let radicand = -alpha / ((PI * alpha).cos() * statrs::function::gamma::gamma(-2.0 * alpha));
    Ok(0.5 * radicand.sqrt())
}

/// How the components of a sample are built from the complex noise.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Coupling {
    /// Independent noise per component.
    Independent,
    /// Two components `(2 Re Γ, 2 Im Γ)` sharing one noise stream.
    Antisymmetric,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FbmModel {
    pub alpha: f64,
    pub eta: f64,
    pub d: usize,
    pub coupling: Coupling,
}

impl FbmModel {
    pub fn new(alpha: f64, eta: f64, d: usize) -> Result<Self> {
        let m = FbmModel { alpha, eta, d, coupling: Coupling::Independent };
        m.validate()?;
        Ok(m)
    }

    pub fn antisymmetric(alpha: f64, eta: f64) -> Result<Self> {
        let m = FbmModel { alpha, eta, d: 2, coupling: Coupling::Antisymmetric };
        m.validate()?;
        Ok(m)
    }

    pub fn validate(&self) -> Result<()> {
        c_alpha(self.alpha)?;
        if !(self.eta > 0.0 && self.eta.is_finite()) {
            return invalid(format!("eta must be positive, got {}", self.eta));
        }
        if self.d == 0 {
            return invalid("dimension must be >= 1");
        }
        if self.coupling == Coupling::Antisymmetric && self.d != 2 {
            return invalid("the antisymmetric model is two-dimensional");
        }
        Ok(())
    }

    pub fn with_eta(&self, eta: f64) -> Result<Self> {
        let m = FbmModel { eta, ..*self };
        m.validate()?;
        Ok(m)
    }

    /// `E|a_k|²` for every positive mode.
    pub fn mode_variances(&self, grid: &FrequencyGrid) -> Vec<f64> {
        let c = c_alpha(self.alpha).expect("validated model");
        let p = 1.0 - 2.0 * self.alpha;
        let lambda = 2.0 * self.eta;
        let dx = grid.delta_xi();
        (1..=grid.modes())
            .map(|k| {
                let lo = if k == 1 { 0.0 } else { (k as f64 - 0.5) * dx };
                let hi = (k as f64 + 0.5) * dx;
                c * c * cell_mass(p, lambda, lo, hi) / self.alpha
            })
            .collect()
    }

    /// Amplitudes of a sample given its noise.
    pub fn path_from_noise(&self, grid: &FrequencyGrid, noise: &Noise) -> Result<SpectralPath> {
        self.validate()?;
        let needed = match self.coupling {
            Coupling::Independent => self.d,
            Coupling::Antisymmetric => 1,
        };
        if noise.streams.len() < needed || noise.streams.iter().any(|s| s.len() < grid.modes()) {
            return invalid("noise sample does not cover the model's components and grid");
        }
        let std: Vec<f64> = self.mode_variances(grid).into_iter().map(f64::sqrt).collect();
        let scale = |w: &[Complex64]| -> Vec<Complex64> {
            std.iter().zip(w).map(|(s, z)| z * *s).collect()
        };
        let amps = match self.coupling {
            Coupling::Independent => noise.streams[..self.d].iter().map(|w| scale(w)).collect(),
            Coupling::Antisymmetric => {
                let first = scale(&noise.streams[0]);
                let second = first.iter().map(|a| -I * a).collect();
                vec![first, second]
            }
        };
        SpectralPath::new(*grid, amps)
    }

    /// `E[B_s(i) B_t(j)]` of the discrete model.
    pub fn exact_covariance(
        &self,
        grid: &FrequencyGrid,
        i: usize,
        j: usize,
        s: f64,
        t: f64,
    ) -> Result<f64> {
        if i == 0 || j == 0 || i > self.d || j > self.d {
            return invalid(format!("components ({i},{j}) out of range 1..={}", self.d));
        }
        let var = self.mode_variances(grid);
        // E[Re(cZ) Re(dZ)] = v/2 Re(c conj d), E[Re(cZ) Im(dZ)] = v/2 Im(conj(c) d)
        let terms: Vec<f64> = var
            .iter()
            .enumerate()
            .map(|(idx, v)| {
                let xi = grid.freq(idx + 1);
                let fs = kernel(xi, s);
                let ft = kernel(xi, t);
                let pairing = match (self.coupling, i == j) {
                    (_, true) => (fs * ft.conj()).re,
                    (Coupling::Independent, false) => 0.0,
                    (Coupling::Antisymmetric, false) if i == 1 => (fs.conj() * ft).im,
                    (Coupling::Antisymmetric, false) => (ft.conj() * fs).im,
                };
                2.0 * v * pairing
            })
            .collect();
        Ok(crate::numeric::pairwise_sum(&terms))
    }
}

/// `∫_lo^hi ξ^p e^{−λξ} dξ` for `p > −1`.
fn cell_mass(p: f64, lambda: f64, lo: f64, hi: f64) -> f64 {
    if lo == 0.0 {
        // Σ_n (−λ)^n hi^{p+n+1} / (n! (p+n+1)), alternating and fast for λ·hi small
        if lambda * hi <= 8.0 {
            let mut sum = 0.0;
            let mut coeff = hi.powf(p + 1.0);
            for n in 0..200 {
                let term = coeff / (p + n as f64 + 1.0);
                sum += term;
                if term.abs() < 1e-17 * sum.abs() {
                    break;
                }
                coeff *= -lambda * hi / (n as f64 + 1.0);
            }
            return sum;
        }
        return statrs::function::gamma::gamma_li(p + 1.0, lambda * hi) / lambda.powf(p + 1.0);
    }
    gauss_legendre(lo, hi, 16, |x| x.powf(p) * (-lambda * x).exp())
}

fn gauss_legendre(a: f64, b: f64, panels: usize, f: impl Fn(f64) -> f64) -> f64 {
    // 8-point rule
    const X: [f64; 4] = [0.183_434_642_495_649_8, 0.525_532_409_916_329, 0.796_666_477_413_626_7, 0.960_289_856_497_536_3];
    const W: [f64; 4] = [0.362_683_783_378_362, 0.313_706_645_877_887_3, 0.222_381_034_453_374_5, 0.101_228_536_290_376_3];
    let h = (b - a) / panels as f64;
    let mut sum = 0.0;
    for p in 0..panels {
        let mid = a + (p as f64 + 0.5) * h;
        let half = 0.5 * h;
        for (x, w) in X.iter().zip(W) {
            sum += w * half * (f(mid - half * x) + f(mid + half * x));
        }
    }
    sum
}

/// `(e^{itξ} − 1)/(iξ)`.
#[inline]
pub fn kernel(xi: f64, t: f64) -> Complex64 {
    (Complex64::new(0.0, t * xi).exp() - 1.0) / (I * xi)
}

/// Standard complex Gaussian draws, `E|ΔW_k|² = 1`, one stream per component.
#[derive(Debug, Clone, PartialEq)]
pub struct Noise {
    pub streams: Vec<Vec<Complex64>>,
}

/// Derives an independent seed for sub-experiment `index` (splitmix64 finaliser).
pub fn substream_seed(master: u64, index: u64) -> u64 {
    let mut z = master ^ index.wrapping_add(1).wrapping_mul(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

impl Noise {
    pub fn sample(streams: usize, modes: usize, seed: u64) -> Self {
        let streams = (0..streams)
            .map(|c| {
                let mut rng = ChaCha8Rng::seed_from_u64(seed);
                rng.set_stream(c as u64);
                (0..modes)
                    .map(|_| {
                        let re: f64 = StandardNormal.sample(&mut rng);
                        let im: f64 = StandardNormal.sample(&mut rng);
                        Complex64::new(re, im) * std::f64::consts::FRAC_1_SQRT_2
                    })
                    .collect()
            })
            .collect();
        Noise { streams }
    }
}

pub fn sample_fbm(model: &FbmModel, grid: &FrequencyGrid, seed: u64) -> Result<SpectralPath> {
    let streams = match model.coupling {
        Coupling::Independent => model.d,
        Coupling::Antisymmetric => 1,
    };
    model.path_from_noise(grid, &Noise::sample(streams, grid.modes(), seed))
}

pub fn sample_antisym_fbm(alpha: f64, eta: f64, grid: &FrequencyGrid, seed: u64) -> Result<SpectralPath> {
    sample_fbm(&FbmModel::antisymmetric(alpha, eta)?, grid, seed)
}

/// Real path with Hermitian spectrum on a grid.
#[derive(Debug, Clone, PartialEq)]
pub struct SpectralPath {
    grid: FrequencyGrid,
    amps: Vec<Vec<Complex64>>,
}

impl SpectralPath {
    pub fn new(grid: FrequencyGrid, amps: Vec<Vec<Complex64>>) -> Result<Self> {
        if amps.is_empty() {
            return invalid("a path needs at least one component");
        }
        for (i, a) in amps.iter().enumerate() {
            if a.len() != grid.modes() {
                return invalid(format!("component {} has {} amplitudes, grid has {}", i + 1, a.len(), grid.modes()));
            }
            if a.iter().any(|z| !z.re.is_finite() || !z.im.is_finite()) {
                return invalid(format!("component {} has non-finite amplitudes", i + 1));
            }
        }
        Ok(SpectralPath { grid, amps })
    }

    pub fn d(&self) -> usize {
        self.amps.len()
    }

    pub fn grid(&self) -> &FrequencyGrid {
        &self.grid
    }

    /// Amplitudes of component `i` (1-based).
    pub fn amps(&self, i: usize) -> &[Complex64] {
        &self.amps[i - 1]
    }

    fn check_component(&self, i: usize) -> Result<()> {
        if i == 0 || i > self.d() {
            return invalid(format!("component {i} out of range 1..={}", self.d()));
        }
        Ok(())
    }

    pub fn eval(&self, i: usize, t: f64) -> Result<f64> {
        self.check_component(i)?;
        let terms: Vec<f64> = self.amps[i - 1]
            .iter()
            .enumerate()
            .map(|(k, a)| 2.0 * (a * kernel(self.grid.freq(k + 1), t)).re)
            .collect();
        Ok(crate::numeric::pairwise_sum(&terms))
    }

    pub fn increment(&self, i: usize, s: f64, t: f64) -> Result<f64> {
        Ok(self.eval(i, t)? - self.eval(i, s)?)
    }

    /// The same path as a list of signed-frequency atoms, `±ξ_k` with `a_k`, `conj(a_k)`.
    pub fn to_atomic(&self) -> AtomicPath {
        let components = self
            .amps
            .iter()
            .map(|a| {
                a.iter()
                    .enumerate()
                    .flat_map(|(k, z)| {
                        let xi = self.grid.freq(k + 1);
                        [(-xi, z.conj()), (xi, *z)]
                    })
                    .collect()
            })
            .collect();
        AtomicPath { components }
    }

    /// Writes `component,k,xi,re_amp,im_amp`, one row per positive mode.
    pub fn write_csv<W: Write>(&self, out: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(out);
        let io = |e: csv::Error| Error::InvalidInput(format!("csv write failed: {e}"));
        w.write_record(["component", "k", "xi", "re_amp", "im_amp"]).map_err(io)?;
        for (i, comp) in self.amps.iter().enumerate() {
            for (k, z) in comp.iter().enumerate() {
                w.write_record(&[
                    (i + 1).to_string(),
                    (k + 1).to_string(),
                    self.grid.freq(k + 1).to_string(),
                    z.re.to_string(),
                    z.im.to_string(),
                ])
                .map_err(io)?;
            }
        }
        w.flush().map_err(|e| Error::InvalidInput(format!("csv write failed: {e}")))?;
        Ok(())
    }

    pub fn read_csv<R: Read>(grid: FrequencyGrid, d: usize, input: R) -> Result<Self> {
        #[derive(Deserialize)]
        struct Row {
            component: usize,
            k: usize,
            #[allow(dead_code)]
            xi: f64,
            re_amp: f64,
            im_amp: f64,
        }
        let mut amps = vec![vec![Complex64::new(0.0, 0.0); grid.modes()]; d];
        let mut seen = vec![vec![false; grid.modes()]; d];
        let mut r = csv::Reader::from_reader(input);
        for row in r.deserialize() {
            let row: Row = row.map_err(|e| Error::InvalidInput(format!("bad spectrum row: {e}")))?;
            if row.component == 0 || row.component > d || row.k == 0 || row.k > grid.modes() {
                return invalid(format!("row (component {}, k {}) outside d={d}, K={}", row.component, row.k, grid.modes()));
            }
            amps[row.component - 1][row.k - 1] = Complex64::new(row.re_amp, row.im_amp);
            seen[row.component - 1][row.k - 1] = true;
        }
        if seen.iter().flatten().any(|s| !s) {
            return invalid("spectrum file misses some modes");
        }
        SpectralPath::new(grid, amps)
    }
}

/// How the amplitudes of a persisted spectrum define the path.
pub const PATH_CONVENTION: &str = "B_t(i) = sum_k 2 Re(a_k(i) (exp(i t xi_k) - 1) / (i xi_k)), xi_k = k delta_xi";

/// Sidecar metadata of a persisted spectrum.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SpectrumMetadata {
    pub alpha: f64,
    pub eta: f64,
    #[serde(rename = "K")]
    pub k: usize,
    pub delta_xi: f64,
    pub seed: u64,
    pub d: usize,
    pub convention: String,
}

/// A (possibly complex) path whose derivative is a finite sum of exponentials,
/// `Γ'_t(i) = Σ a e^{itξ}`, started at `Γ_0 = 0`.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct AtomicPath {
    pub components: Vec<Vec<(f64, Complex64)>>,
}

impl AtomicPath {
    pub fn new(components: Vec<Vec<(f64, Complex64)>>) -> Result<Self> {
        if components.is_empty() {
            return invalid("a path needs at least one component");
        }
        for (i, c) in components.iter().enumerate() {
            if c.iter().any(|(xi, a)| *xi == 0.0 || !xi.is_finite() || !a.re.is_finite() || !a.im.is_finite()) {
                return invalid(format!("component {} has a zero or non-finite atom", i + 1));
            }
        }
        Ok(AtomicPath { components })
    }

    pub fn d(&self) -> usize {
        self.components.len()
    }

    pub fn atoms(&self, i: usize) -> &[(f64, Complex64)] {
        &self.components[i - 1]
    }

    pub fn eval(&self, i: usize, t: f64) -> Complex64 {
        self.atoms(i).iter().map(|(xi, a)| a * kernel(*xi, t)).sum()
    }

    pub fn increment(&self, i: usize, s: f64, t: f64) -> Complex64 {
        self.eval(i, t) - self.eval(i, s)
    }
}
