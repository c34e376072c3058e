use std::f64::consts::PI;
use std::path::PathBuf;

use fnorp::rough_path::Word;
use fnorp::{FbmModel, FrequencyGrid, Mode, RegularizationConfig};
use serde::{Deserialize, Serialize};

fn dyadic(from: i32, to: i32) -> Vec<f64> {
    (from..=to).map(|k| 2f64.powi(-k)).collect()
}

/// Everything a command may read. Missing keys take the defaults below;
/// unknown keys are an error.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    pub alpha: f64,
    pub eta: f64,
    pub d: usize,
    #[serde(rename = "K")]
    pub k: usize,
    pub delta_xi: f64,
    pub c_reg: f64,
    pub mode: Mode,
    #[serde(rename = "N")]
    pub n: usize,
    pub seed: u64,
    #[serde(rename = "M")]
    pub m: usize,
    /// Interval `(s, t)` for `build` and the scans.
    pub s: f64,
    pub t: f64,
    /// Time grid of `covariance-check`.
    pub times: Vec<f64>,
    pub gaps: Vec<f64>,
    pub etas: Vec<f64>,
    pub deltas: Vec<f64>,
    /// Word of `holder-scan` and `rate-scan`; `(1,2)` if absent.
    pub word: Option<Word>,
    /// Random `(t,u,s)` triples of `verify-chen`.
    pub trials: usize,
    pub atoms_per_component: usize,
    /// Couple components 1 and 2 as the antisymmetric fBm.
    pub antisymmetric: bool,
    /// Persisted spectrum to use instead of sampling (`build`, `verify-*`).
    pub spectrum: Option<PathBuf>,
    pub budget: f64,
    pub identity_tolerance: f64,
    /// Half-width of the accepted slope band; the command's own default if absent.
    pub slope_tolerance: Option<f64>,
    pub covariance_tolerance: f64,
    pub se_tolerance: f64,
}

impl Default for RunConfig {
    fn default() -> Self {
        RunConfig {
            alpha: 0.3,
            eta: 0.01,
            d: 2,
            k: 1024,
            delta_xi: 2.0 * PI / 8.0,
            c_reg: 0.5,
            mode: Mode::Regularized,
            n: 2,
            seed: 0,
            m: 1000,
            s: 0.0,
            t: 1.0,
            times: vec![0.2, 0.4, 0.6, 0.8, 1.0],
            gaps: dyadic(1, 6),
            etas: dyadic(2, 8),
            deltas: dyadic(3, 7),
            word: None,
            trials: 20,
            atoms_per_component: 3,
            antisymmetric: false,
            spectrum: None,
            budget: 1e9,
            identity_tolerance: 1e-8,
            slope_tolerance: None,
            covariance_tolerance: 0.02,
            se_tolerance: 5.0,
        }
    }
}

impl RunConfig {
    /// Parses without validating, so command-line overrides can apply first.
    pub fn parse(text: &str) -> Result<Self, String> {
        serde_json::from_str(text).map_err(|e| format!("bad config: {e}"))
    }

    pub fn validate(&self) -> Result<(), String> {
        self.model()?;
        self.grid()?;
        self.regularization()?;
        if !(1..=fnorp::rough_path::MAX_LEVEL).contains(&self.n) {
            return Err(format!("N must be in 1..={}", fnorp::rough_path::MAX_LEVEL));
        }
        if !(self.s.is_finite() && self.t.is_finite()) {
            return Err("s and t must be finite".into());
        }
        if let Some(w) = &self.word {
            if w.max_letter() > self.d {
                return Err(format!("word {w} uses letters beyond d = {}", self.d));
            }
        }
        if self.budget.is_nan() || self.budget <= 0.0 {
            return Err("budget must be positive".into());
        }
        for (name, v) in [
            ("identity_tolerance", self.identity_tolerance),
            ("covariance_tolerance", self.covariance_tolerance),
            ("se_tolerance", self.se_tolerance),
        ] {
            if !(v > 0.0 && v.is_finite()) {
                return Err(format!("{name} must be positive"));
            }
        }
        if self.atoms_per_component == 0 || self.trials == 0 {
            return Err("atoms_per_component and trials must be at least 1".into());
        }
        Ok(())
    }

    pub fn model(&self) -> Result<FbmModel, String> {
        let m = if self.antisymmetric {
            if self.d != 2 {
                return Err("the antisymmetric model needs d = 2".into());
            }
            FbmModel::antisymmetric(self.alpha, self.eta)
        } else {
            FbmModel::new(self.alpha, self.eta, self.d)
        };
        m.map_err(|e| e.to_string())
    }

    pub fn grid(&self) -> Result<FrequencyGrid, String> {
        FrequencyGrid::new(self.k, self.delta_xi).map_err(|e| e.to_string())
    }

    pub fn regularization(&self) -> Result<RegularizationConfig, String> {
        RegularizationConfig::new(self.c_reg, self.mode).map_err(|e| e.to_string())
    }

    pub fn word_or_default(&self) -> Result<Word, String> {
        match &self.word {
            Some(w) => Ok(w.clone()),
            None if self.d >= 2 => Word::new(vec![1, 2]).map_err(|e| e.to_string()),
            None => Word::new(vec![1]).map_err(|e| e.to_string()),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn load(text: &str) -> Result<RunConfig, String> {
        let c = RunConfig::parse(text)?;
        c.validate()?;
        Ok(c)
    }

    #[test]
    fn empty_object_is_the_default() {
        assert_eq!(load("{}").unwrap(), RunConfig::default());
    }

    #[test]
    fn unknown_keys_and_bad_values_are_rejected() {
        assert!(load(r#"{"alpah": 0.3}"#).is_err());
        assert!(load(r#"{"alpha": 1.2}"#).is_err());
        assert!(load(r#"{"c_reg": 1.0}"#).is_err());
        assert!(load(r#"{"N": 9}"#).is_err());
        assert!(load(r#"{"d": 1, "word": "1,2"}"#).is_err());
    }

    #[test]
    fn renamed_keys() {
        let c = load(r#"{"K": 16, "N": 3, "M": 200, "mode": "trivial", "word": "2,1"}"#).unwrap();
        assert_eq!((c.k, c.n, c.m, c.mode), (16, 3, 200, Mode::Trivial));
        assert_eq!(c.word.unwrap().letters(), &[2, 1]);
    }
}
