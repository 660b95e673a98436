//! Single runs and accuracy sweeps, with their on-disk artifacts.

use std::fs;
use std::path::{Path, PathBuf};

use cubic_gda::driver_det::{run_cubic_gda, run_gda_baseline, RunResult, TerminationReason};
use cubic_gda::driver_stoch::run_stochastic_cubic_gda;
use cubic_gda::oracle::{MinimaxOracle, VectorX};
use rayon::prelude::*;
use serde::Serialize;
use serde_json::json;

use crate::config::{Algorithm, ExperimentConfig};
use crate::output::{convergence_svg, format_f64, line_plot, trace_csv, Series};
use crate::problems::problem_for;
use crate::HarnessError;

/// Iteration budget `⌈√(33·L_Φ)·(33(Φ(x₀) − Φ*) + 8ε²)/(3ε³)⌉`, when `Φ` and
/// `Φ*` are known in closed form.
pub fn iteration_budget(oracle: &dyn MinimaxOracle, x0: &VectorX, eps: f64) -> Option<u64> {
    let cf = oracle.closed_form()?;
    let gap = cf.phi(x0) - cf.phi_star()?;
    let lp = oracle.profile().l_phi;
    let v = ((33.0 * lp).sqrt() * (33.0 * gap + 8.0 * eps * eps) / (3.0 * eps.powi(3))).ceil();
    (v.is_finite() && v >= 0.0).then_some(v as u64)
}

#[derive(Debug, Clone, Serialize)]
pub struct FinalReport {
    pub phi: Option<f64>,
    pub grad_phi_norm: Option<f64>,
    pub min_eig: Option<f64>,
    pub mu_measure: Option<f64>,
}

#[derive(Debug, Clone)]
pub struct ExperimentOutcome {
    pub result: RunResult,
    pub summary: serde_json::Value,
    pub budget: Option<u64>,
}

impl ExperimentOutcome {
    /// 0 unless the run ended in numerical failure or left its box.
    pub fn exit_code(&self) -> i32 {
        match self.result.termination {
            TerminationReason::ThresholdMet | TerminationReason::BudgetExhausted => 0,
            TerminationReason::BoxExit | TerminationReason::NumericFailure => 1,
        }
    }
}

/// Validates the configuration and runs it without touching the disk.
pub fn execute(config: &ExperimentConfig, eps: f64) -> Result<ExperimentOutcome, HarnessError> {
    let problem = problem_for(config)?;
    let oracle = problem.oracle.as_ref();
    let profile = *oracle.profile();
    let (result, resolved) = match config.algorithm {
        Algorithm::CubicGda => {
            let c = config.run_config(&profile, eps)?;
            (run_cubic_gda(oracle, &problem.x0, &problem.y0, &c)?, serde_json::to_value(&c)?)
        }
        Algorithm::StochasticCubicGda => {
            if oracle.finite_sum().is_none() {
                return Err(HarnessError::Usage(format!(
                    "{} is not a finite-sum problem",
                    problem.name
                )));
            }
            let c = config.stoch_config(&profile, eps)?;
            (
                run_stochastic_cubic_gda(oracle, &problem.x0, &problem.y0, &c)?,
                serde_json::to_value(&c)?,
            )
        }
        Algorithm::GdaBaseline => {
            let g = &config.gda;
            let step_x = g.step_x.unwrap_or(1.0 / profile.l_phi);
            let step_y = g.step_y.unwrap_or(1.0 / profile.l1);
            let iters = g.max_iters.unwrap_or(10_000);
            if !(g.stop_tol >= 0.0) {
                return Err(HarnessError::Usage("gda.stop_tol must be non-negative".into()));
            }
            (
                run_gda_baseline(oracle, &problem.x0, &problem.y0, step_x, step_y, iters, g.stop_tol)?,
                json!({ "step_x": step_x, "step_y": step_y, "max_iters": iters, "stop_tol": g.stop_tol }),
            )
        }
    };
    let budget = iteration_budget(oracle, &problem.x0, eps);
    let last = result.final_record();
    let out_rec = &result.records[result.x_out_index.min(result.records.len() - 1)];
    let report = FinalReport {
        phi: out_rec.phi.or(last.phi),
        grad_phi_norm: out_rec.grad_phi_norm.or(last.grad_phi_norm),
        min_eig: out_rec.min_eig.or(last.min_eig),
        mu_measure: out_rec.mu_measure.or(last.mu_measure),
    };
    let summary = json!({
        "version": env!("CARGO_PKG_VERSION"),
        "problem": problem.name,
        "algorithm": config.algorithm.name(),
        "eps": eps,
        "termination": result.termination.as_str(),
        "message": result.message,
        "t_prime": result.t_prime,
        "iterations": result.records.len() - 1,
        "iteration_budget": budget,
        "effectively_deterministic": result.effectively_deterministic,
        "x_out": result.x_out.as_slice(),
        "final": report,
        "profile": profile,
        "config": config,
        "resolved": resolved,
    });
    Ok(ExperimentOutcome { result, summary, budget })
}

pub fn write_artifacts(dir: &Path, outcome: &ExperimentOutcome, title: &str) -> Result<(), HarnessError> {
    fs::create_dir_all(dir)?;
    fs::write(dir.join("trace.csv"), trace_csv(&outcome.result))?;
    let mut text = serde_json::to_string_pretty(&outcome.summary)?;
    text.push('\n');
    fs::write(dir.join("summary.json"), text)?;
    fs::write(dir.join("convergence.svg"), convergence_svg(&outcome.result, title))?;
    Ok(())
}

/// Runs `config` at its `eps`, writing artifacts when `out_dir` is set.
pub fn run_experiment(config: &ExperimentConfig) -> Result<ExperimentOutcome, HarnessError> {
    let outcome = execute(config, config.eps)?;
    if let Some(dir) = &config.out_dir {
        let title = format!("{} on {}", config.algorithm.name(), outcome.summary["problem"].as_str().unwrap_or(""));
        write_artifacts(dir, &outcome, &title)?;
    }
    Ok(outcome)
}

#[derive(Debug, Clone, Serialize)]
pub struct ScalingRow {
    pub eps: f64,
    pub t_prime: Option<usize>,
    pub budget: Option<u64>,
    pub within_budget: Option<bool>,
    pub termination: &'static str,
    pub mu_measure: Option<f64>,
}

pub const SCALING_COLUMNS: [&str; 6] = ["eps", "t_prime", "budget", "within_budget", "termination", "mu_measure"];

pub fn scaling_csv(rows: &[ScalingRow]) -> String {
    let mut out = SCALING_COLUMNS.join(",");
    out.push('\n');
    for r in rows {
        let cells = [
            format_f64(r.eps),
            r.t_prime.map(|v| v.to_string()).unwrap_or_default(),
            r.budget.map(|v| v.to_string()).unwrap_or_default(),
            r.within_budget.map(|v| v.to_string()).unwrap_or_default(),
            r.termination.to_string(),
            r.mu_measure.map(format_f64).unwrap_or_default(),
        ];
        out.push_str(&cells.join(","));
        out.push('\n');
    }
    out
}

pub struct ScalingOutcome {
    pub rows: Vec<ScalingRow>,
    pub runs: Vec<ExperimentOutcome>,
}

impl ScalingOutcome {
    pub fn exit_code(&self) -> i32 {
        self.runs.iter().map(ExperimentOutcome::exit_code).max().unwrap_or(0)
    }
}

fn eps_dir(root: &Path, index: usize, eps: f64) -> PathBuf {
    root.join(format!("eps_{index:02}_{eps}"))
}

/// Runs every `ε` in `eps_grid` and tabulates `T′` against the budget.
pub fn run_scaling_study(config: &ExperimentConfig) -> Result<ScalingOutcome, HarnessError> {
    let grid = config
        .eps_grid
        .as_ref()
        .ok_or_else(|| HarnessError::Usage("scaling study needs eps_grid".into()))?;
    if grid.len() < 3 {
        return Err(HarnessError::Usage(format!(
            "scaling study needs at least 3 eps values, got {}",
            grid.len()
        )));
    }
    if grid.iter().any(|&e| !(e > 0.0) || !e.is_finite()) {
        return Err(HarnessError::Usage("eps values must be positive".into()));
    }
    // Fail on configuration errors before any run starts.
    let problem = problem_for(config)?;
    for &e in grid {
        match config.algorithm {
            Algorithm::StochasticCubicGda => {
                config.stoch_config(problem.oracle.profile(), e)?;
            }
            _ => {
                config.run_config(problem.oracle.profile(), e)?;
            }
        }
    }
    let runs: Vec<ExperimentOutcome> = grid
        .par_iter()
        .map(|&e| execute(config, e))
        .collect::<Result<_, _>>()?;
    let rows: Vec<ScalingRow> = grid
        .iter()
        .zip(&runs)
        .map(|(&eps, o)| ScalingRow {
            eps,
            t_prime: o.result.t_prime,
            budget: o.budget,
            within_budget: o.budget.zip(o.result.t_prime).map(|(b, t)| t as u64 <= b),
            termination: o.result.termination.as_str(),
            mu_measure: o.summary["final"]["mu_measure"].as_f64(),
        })
        .collect();
    if let Some(dir) = &config.out_dir {
        fs::create_dir_all(dir)?;
        fs::write(dir.join("scaling.csv"), scaling_csv(&rows))?;
        let inv = |r: &ScalingRow| 1.0 / r.eps;
        let series = [
            Series {
                name: "T'".into(),
                color: "#1f77b4",
                points: rows.iter().map(|r| (inv(r), r.t_prime.map(|t| t as f64))).collect(),
            },
            Series {
                name: "budget".into(),
                color: "#ff7f0e",
                points: rows.iter().map(|r| (inv(r), r.budget.map(|b| b as f64))).collect(),
            },
        ];
        fs::write(dir.join("scaling.svg"), line_plot("iterations against 1/eps", "1/eps", true, &series))?;
        for (i, (o, &eps)) in runs.iter().zip(grid).enumerate() {
            write_artifacts(&eps_dir(dir, i, eps), o, &format!("eps = {eps}"))?;
        }
    }
    Ok(ScalingOutcome { rows, runs })
}
