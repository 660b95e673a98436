//! Experiment configuration, read from JSON.
//!
//! ```json
//! {
//!   "problem": { "kind": "strict_saddle" },
//!   "algorithm": "cubic_gda",
//!   "eps": 0.05,
//!   "seed": 7,
//!   "run": { "max_iters": 5000 }
//! }
//! ```
//!
//! Everything except `problem` is optional. Fields under `run`, `stoch` and
//! `gda` override the defaults derived from the problem profile and `eps`.

use std::path::{Path, PathBuf};

use cubic_gda::driver_det::{CubicSolver, RunConfig};
use cubic_gda::driver_stoch::StochConfig;
use cubic_gda::oracle::SmoothnessProfile;
use cubic_gda::testbed::{QuadraticSpec, QuadraticVariant};
use serde::{Deserialize, Serialize};

use crate::HarnessError;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Algorithm {
    CubicGda,
    StochasticCubicGda,
    GdaBaseline,
}

impl Algorithm {
    pub fn parse(name: &str) -> Result<Self, HarnessError> {
        match name {
            "cubic_gda" | "cubic-gda" => Ok(Self::CubicGda),
            "stochastic_cubic_gda" | "stochastic-cubic-gda" | "stochastic" => Ok(Self::StochasticCubicGda),
            "gda_baseline" | "gda-baseline" | "gda" => Ok(Self::GdaBaseline),
            other => Err(HarnessError::Usage(format!("unknown algorithm '{other}'"))),
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            Self::CubicGda => "cubic_gda",
            Self::StochasticCubicGda => "stochastic_cubic_gda",
            Self::GdaBaseline => "gda_baseline",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum ProblemSpec {
    StrictSaddle,
    Quadratic {
        m: usize,
        n: usize,
        #[serde(default)]
        seed: u64,
        #[serde(default = "default_conditioning")]
        conditioning: f64,
        #[serde(default = "default_variant")]
        variant: QuadraticVariant,
    },
    QuadraticInline {
        spec: QuadraticSpec,
    },
    RobustSum {
        n_samples: usize,
        d: usize,
        #[serde(default)]
        seed: u64,
        #[serde(default = "default_lambda")]
        lambda: f64,
        #[serde(default)]
        saddle_penalty: f64,
    },
}

fn default_conditioning() -> f64 {
    4.0
}
fn default_variant() -> QuadraticVariant {
    QuadraticVariant::Convex
}
fn default_lambda() -> f64 {
    1.0
}

impl ProblemSpec {
    /// Named presets accepted by `--problem`.
    pub fn preset(name: &str) -> Result<Self, HarnessError> {
        match name {
            "strict_saddle" | "strict-saddle" => Ok(Self::StrictSaddle),
            "quadratic" | "convex_quadratic" => Ok(Self::Quadratic {
                m: 5,
                n: 5,
                seed: 0,
                conditioning: 4.0,
                variant: QuadraticVariant::Convex,
            }),
            "saddle_quadratic" => Ok(Self::Quadratic {
                m: 5,
                n: 5,
                seed: 0,
                conditioning: 4.0,
                variant: QuadraticVariant::Saddle,
            }),
            "robust_sum" | "robust" => Ok(Self::RobustSum {
                n_samples: 1000,
                d: 20,
                seed: 0,
                lambda: 1.0,
                saddle_penalty: 0.0,
            }),
            other => Err(HarnessError::Usage(format!("unknown problem '{other}'"))),
        }
    }
}

/// Optional overrides of [`RunConfig`] fields.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunOverrides {
    pub eta_x: Option<f64>,
    pub eta_y: Option<f64>,
    pub eps_prime: Option<f64>,
    pub alpha: Option<f64>,
    pub beta: Option<f64>,
    pub max_iters: Option<usize>,
    pub n_max: Option<usize>,
    pub cubic_tol: Option<f64>,
    pub cubic_max_iter: Option<usize>,
    pub cg_tol: Option<f64>,
    pub diag_tol: Option<f64>,
    pub diag_every: Option<usize>,
    pub solver: Option<CubicSolver>,
    pub allow_invalid: Option<bool>,
    pub record_wall_time: Option<bool>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct StochOverrides {
    #[serde(default = "default_delta")]
    pub delta: f64,
    pub sga_constant: Option<f64>,
    pub sga_cap: Option<usize>,
    pub batch_cap: Option<usize>,
}

fn default_delta() -> f64 {
    0.1
}

impl Default for StochOverrides {
    fn default() -> Self {
        Self {
            delta: default_delta(),
            sga_constant: None,
            sga_cap: None,
            batch_cap: None,
        }
    }
}

/// Plain GDA settings. Steps default to `1/L_Φ` and `1/L1`.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GdaOverrides {
    pub step_x: Option<f64>,
    pub step_y: Option<f64>,
    pub max_iters: Option<usize>,
    #[serde(default)]
    pub stop_tol: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub problem: ProblemSpec,
    #[serde(default = "default_algorithm")]
    pub algorithm: Algorithm,
    #[serde(default = "default_eps")]
    pub eps: f64,
    #[serde(default)]
    pub seed: u64,
    pub x0: Option<Vec<f64>>,
    pub y0: Option<Vec<f64>>,
    /// Accuracy grid for scaling studies.
    pub eps_grid: Option<Vec<f64>>,
    pub out_dir: Option<PathBuf>,
    #[serde(default)]
    pub run: RunOverrides,
    #[serde(default)]
    pub stoch: StochOverrides,
    #[serde(default)]
    pub gda: GdaOverrides,
}

fn default_algorithm() -> Algorithm {
    Algorithm::CubicGda
}
fn default_eps() -> f64 {
    0.05
}

impl ExperimentConfig {
    pub fn new(problem: ProblemSpec, algorithm: Algorithm, eps: f64) -> Self {
        Self {
            problem,
            algorithm,
            eps,
            seed: 0,
            x0: None,
            y0: None,
            eps_grid: None,
            out_dir: None,
            run: RunOverrides::default(),
            stoch: StochOverrides::default(),
            gda: GdaOverrides::default(),
        }
    }

    pub fn from_json(text: &str) -> Result<Self, HarnessError> {
        serde_json::from_str(text).map_err(|e| HarnessError::Usage(format!("malformed config: {e}")))
    }

    pub fn load(path: &Path) -> Result<Self, HarnessError> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| HarnessError::Usage(format!("cannot read config {}: {e}", path.display())))?;
        Self::from_json(&text)
    }

    /// Deterministic driver settings for this experiment.
    pub fn run_config(&self, profile: &SmoothnessProfile, eps: f64) -> Result<RunConfig, HarnessError> {
        if !(eps > 0.0) || !eps.is_finite() {
            return Err(HarnessError::Usage(format!("eps must be positive, got {eps}")));
        }
        let mut c = RunConfig::for_accuracy(profile, eps);
        let o = &self.run;
        c.seed = self.seed;
        if let Some(v) = o.alpha {
            c.alpha = v;
        }
        if let Some(v) = o.beta {
            c.beta = v;
        }
        if let Some(v) = o.eps_prime {
            c.eps_prime = v;
        }
        if o.alpha.is_some() || o.beta.is_some() || o.eps_prime.is_some() {
            c.n_max = cubic_gda::driver_det::default_n_max(profile, c.alpha, c.beta, c.eps_prime);
        }
        macro_rules! set {
            ($($f:ident),*) => { $( if let Some(v) = o.$f { c.$f = v; } )* };
        }
        set!(eta_x, eta_y, max_iters, n_max, cubic_tol, cubic_max_iter, cg_tol, diag_tol, diag_every, solver, allow_invalid, record_wall_time);
        c.validate(profile)?;
        Ok(c)
    }

    pub fn stoch_config(&self, profile: &SmoothnessProfile, eps: f64) -> Result<StochConfig, HarnessError> {
        let base = self.run_config(profile, eps)?;
        let s = &self.stoch;
        let mut c = StochConfig::for_accuracy(profile, eps, s.delta);
        c.base = base;
        if let Some(v) = s.sga_constant {
            c.sga_constant = v;
        }
        if let Some(v) = s.sga_cap {
            c.sga_cap = v;
        }
        c.batch_cap = s.batch_cap;
        c.validate(profile)?;
        Ok(c)
    }
}
