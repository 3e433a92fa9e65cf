//! Strict JSON experiment configuration.
//!
//! ```json
//! {
//!   "scenario": {
//!     "system": { "type": "system2", "p_av": 0.3333333333333333 },
//!     "schedule": [ { "start_task": 1, "distribution": 1 } ]
//!   },
//!   "algorithm": { "type": "adaptive", "v": 50, "alpha": "tuned", "q": "auto", "slater_s": 2.5 },
//!   "horizon": 5000,
//!   "replications": 40,
//!   "seed": 1
//! }
//! ```
//!
//! Unknown keys are rejected at every level.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::constants::{constraint_cap, derive_constants, tune_alpha, DerivedConstants};
use crate::error::{Error, Result};
use crate::harness::{fingerprint_of, Algorithm, Experiment, GreedyFilter};
use crate::model::{AlgoParams, Bounds};
use crate::scenarios::ScenarioSpec;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Keyword {
    Tuned,
    Auto,
}

/// A number or a keyword.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum AlphaSpec {
    Value(f64),
    Keyword(Keyword),
}

impl Default for AlphaSpec {
    fn default() -> Self {
        AlphaSpec::Keyword(Keyword::Tuned)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum QSpec {
    Values(Vec<f64>),
    Keyword(Keyword),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case", deny_unknown_fields)]
pub enum AlgorithmSpec {
    Adaptive {
        v: f64,
        /// A positive number or `"tuned"`.
        #[serde(default)]
        alpha: AlphaSpec,
        /// Per-penalty cap multipliers, or `"auto"` for `2 d0 / s` (needs
        /// `slater_s`). May be omitted when there are no penalties.
        #[serde(default, skip_serializing_if = "Option::is_none")]
        q: Option<QSpec>,
        #[serde(default = "unit")]
        w: f64,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        slater_s: Option<f64>,
    },
    Greedy {
        #[serde(default)]
        filter: GreedyFilter,
    },
    RobbinsMonro {},
    DppRatio {
        v: f64,
    },
}

fn unit() -> f64 {
    1.0
}

fn default_replications() -> u64 {
    1
}

fn default_window() -> usize {
    200
}

fn default_window_checks() -> usize {
    100
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Config {
    pub scenario: ScenarioSpec,
    pub algorithm: AlgorithmSpec,
    pub horizon: u64,
    #[serde(default = "default_replications")]
    pub replications: u64,
    #[serde(default)]
    pub seed: u64,
    #[serde(default = "default_window")]
    pub window: usize,
    /// Default CSV destination for `simulate`.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub output: Option<PathBuf>,
    /// Worker threads; all cores when absent. Results do not depend on it.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub threads: Option<usize>,
    /// Random `(k0, m)` windows per replication for `check`.
    #[serde(default = "default_window_checks")]
    pub window_checks: usize,
}

impl Config {
    pub fn from_json(text: &str) -> Result<Self> {
        let cfg: Config = serde_json::from_str(text).map_err(|e| Error::Config(e.to_string()))?;
        cfg.scenario.validate()?;
        if cfg.threads == Some(0) {
            return Err(Error::Config("threads must be at least 1".into()));
        }
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|source| Error::Io {
            path: path.to_path_buf(),
            source,
        })?;
        Self::from_json(&text)
    }

    /// Hex SHA-256 of the normalized configuration.
    pub fn fingerprint(&self) -> String {
        fingerprint_of(&serde_json::to_vec(self).expect("config serializes"))
    }

    fn bounds(&self) -> Bounds {
        self.scenario.bounds()
    }

    /// Controller knobs with `"tuned"` and `"auto"` resolved.
    pub fn adaptive_params(&self) -> Result<Option<(AlgoParams, Option<f64>)>> {
        let AlgorithmSpec::Adaptive {
            v,
            alpha,
            q,
            w,
            slater_s,
        } = &self.algorithm
        else {
            return Ok(None);
        };
        let bounds = self.bounds();
        let alpha = match alpha {
            AlphaSpec::Value(a) => *a,
            AlphaSpec::Keyword(Keyword::Tuned) => tune_alpha(&bounds)?,
            AlphaSpec::Keyword(k) => return Err(Error::Config(format!("alpha cannot be {k:?}"))),
        };
        let n = bounds.n();
        let q = match q {
            Some(QSpec::Values(q)) => q.clone(),
            Some(QSpec::Keyword(Keyword::Auto)) => {
                let s = slater_s.ok_or_else(|| Error::Config("q = \"auto\" needs slater_s".into()))?;
                constraint_cap(&bounds, *v, alpha, *w, s)?
            }
            Some(QSpec::Keyword(k)) => return Err(Error::Config(format!("q cannot be {k:?}"))),
            None if n == 0 => Vec::new(),
            None => return Err(Error::Config("q is required when penalties are present".into())),
        };
        let params = AlgoParams::new(*v, alpha, q).with_weight(*w);
        params.validate(n)?;
        Ok(Some((params, *slater_s)))
    }

    pub fn experiment(&self) -> Result<Experiment> {
        let algorithm = match &self.algorithm {
            AlgorithmSpec::Adaptive { .. } => {
                Algorithm::Adaptive(self.adaptive_params()?.expect("adaptive").0)
            }
            AlgorithmSpec::Greedy { filter } => Algorithm::Greedy { filter: *filter },
            AlgorithmSpec::RobbinsMonro {} => Algorithm::RobbinsMonro,
            AlgorithmSpec::DppRatio { v } => Algorithm::DppRatio { v: *v },
        };
        let exp = Experiment {
            scenario: self.scenario.clone(),
            algorithm,
            horizon: self.horizon,
            replications: self.replications,
            seed: self.seed,
            window: self.window,
        };
        exp.validate()?;
        Ok(exp)
    }

    /// Derived constants of the adaptive controller.
    pub fn constants(&self) -> Result<DerivedConstants> {
        let (params, s) = self
            .adaptive_params()?
            .ok_or_else(|| Error::Unsupported("constants are defined for the adaptive algorithm".into()))?;
        derive_constants(&self.bounds(), &params, s)
    }
}
