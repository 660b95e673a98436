//! Cubic-GDA and a plain GDA baseline.
//!
//! Each outer iteration runs `N_t` gradient-ascent steps on `y` at fixed
//! `x_t`, then takes the cubic-regularised step on `x` with gradient
//! `∇₁f(x_t, y_{t+1})` and Hessian surrogate `G(x_t, y_{t+1})`. The run stops
//! at the first `T′` with `max(‖s_{T′−1}‖, ‖s_{T′}‖) ≤ ε′`, where `‖s₀‖ = ε′`.

use std::time::Instant;

use serde::{Deserialize, Serialize};

use crate::cubic::{solve_cubic_exact, solve_cubic_iterative, CubicStep, IterativeOptions, KktReport};
use crate::diagnostics::{self, potential_coefficient};
use crate::driver_stoch::BatchSizes;
use crate::error::{Error, Result};
use crate::linalg::DENSE_CAP;
use crate::oracle::{MinimaxOracle, SmoothnessProfile, VectorX, VectorY};
use crate::schur::{GOperator, DEFAULT_CG_TOL};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum CubicSolver {
    /// Exact solver up to the dense cap, iterative beyond it.
    Auto,
    Exact,
    Iterative,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunConfig {
    /// Target accuracy `ε` the other fields were derived from, if any.
    pub eps: Option<f64>,
    pub eta_x: f64,
    pub eta_y: f64,
    pub eps_prime: f64,
    pub alpha: f64,
    pub beta: f64,
    /// Outer iteration budget `T`.
    pub max_iters: usize,
    /// Cap on inner ascent steps per iteration.
    pub n_max: usize,
    pub cubic_tol: f64,
    pub cubic_max_iter: usize,
    pub cg_tol: f64,
    pub seed: u64,
    pub diag_tol: f64,
    /// Diagnostics every this many iterations; zero keeps only the final one.
    pub diag_every: usize,
    pub solver: CubicSolver,
    /// Skip the step-size and threshold conditions in [`RunConfig::validate`].
    pub allow_invalid: bool,
    pub record_wall_time: bool,
}

impl RunConfig {
    /// Defaults for target accuracy `ε`: `α = β = L_Φ`, `η_x = 1/(55·L_Φ)`,
    /// `ε′ = ε/√(33·L_Φ)`, `η_y = 2/(L1+μ)`.
    pub fn for_accuracy(profile: &SmoothnessProfile, eps: f64) -> Self {
        let alpha = profile.l_phi;
        let beta = profile.l_phi;
        let eps_prime = eps / (33.0 * profile.l_phi).sqrt();
        Self {
            eps: Some(eps),
            eta_x: 1.0 / (55.0 * profile.l_phi),
            eta_y: 2.0 / (profile.l1 + profile.mu),
            eps_prime,
            alpha,
            beta,
            max_iters: 100_000,
            n_max: default_n_max(profile, alpha, beta, eps_prime),
            cubic_tol: (0.01 * eps_prime * eps_prime).min(1e-8),
            cubic_max_iter: 1_000_000,
            cg_tol: DEFAULT_CG_TOL,
            seed: 0,
            diag_tol: 1e-10,
            diag_every: 1,
            solver: CubicSolver::Auto,
            allow_invalid: false,
            record_wall_time: false,
        }
    }

    pub fn validate(&self, profile: &SmoothnessProfile) -> Result<()> {
        let positive = [
            ("eta_x", self.eta_x),
            ("eta_y", self.eta_y),
            ("eps_prime", self.eps_prime),
            ("alpha", self.alpha),
            ("beta", self.beta),
            ("cubic_tol", self.cubic_tol),
            ("cg_tol", self.cg_tol),
            ("diag_tol", self.diag_tol),
        ];
        for (name, v) in positive {
            if !(v > 0.0) || !v.is_finite() {
                return Err(Error::Config(format!("{name} must be positive and finite, got {v}")));
            }
        }
        if self.max_iters == 0 || self.n_max == 0 || self.cubic_max_iter == 0 {
            return Err(Error::Config("iteration limits must be positive".into()));
        }
        if self.allow_invalid {
            return Ok(());
        }
        let slack = 1.0 + 1e-12;
        let eta_bound = 1.0 / (9.0 * profile.l_phi + 18.0 * self.alpha + 28.0 * self.beta);
        if self.eta_x > eta_bound * slack {
            return Err(Error::Config(format!(
                "eta_x = {} exceeds 1/(9 L_Phi + 18 alpha + 28 beta) = {eta_bound}",
                self.eta_x
            )));
        }
        let eps_bound = self.alpha * profile.l1 / (self.beta * profile.l_g);
        if self.eps_prime > eps_bound * slack {
            return Err(Error::Config(format!(
                "eps_prime = {} exceeds alpha L1 / (beta L_G) = {eps_bound}",
                self.eps_prime
            )));
        }
        Ok(())
    }
}

/// `10·⌈κ·ln(1/ε′²) + κ·ln(10·L1·(α + L_G·κ)/(L_G·β))⌉`, at least 1.
pub fn default_n_max(profile: &SmoothnessProfile, alpha: f64, beta: f64, eps_prime: f64) -> usize {
    let k = profile.kappa;
    let inner = k * (1.0 / (eps_prime * eps_prime)).ln()
        + k * (10.0 * profile.l1 * (alpha + profile.l_g * k) / (profile.l_g * beta)).ln();
    let v = 10.0 * inner.ceil();
    if v.is_finite() && v >= 1.0 {
        v as usize
    } else {
        1
    }
}

/// Inner ascent steps for iteration `t`.
///
/// With `init_gap` (t = 0): `⌈κ·ln(L1·gap/(2β·ε′²))⌉`. Otherwise
/// `⌈κ·ln((2·L1·α·‖s_{t−1}‖ + L1·(α + L_G·κ)·‖s_t‖)/(L_G·β·ε′²))⌉`. Both are
/// clamped to `[1, n_max]`.
#[allow(clippy::too_many_arguments)]
pub fn nt_schedule(
    profile: &SmoothnessProfile,
    alpha: f64,
    beta: f64,
    eps_prime: f64,
    s_prev_norm: f64,
    s_curr_norm: f64,
    init_gap: Option<f64>,
    n_max: usize,
) -> usize {
    let p = profile;
    let e2 = eps_prime * eps_prime;
    let arg = match init_gap {
        Some(gap) => p.l1 * gap / (2.0 * beta * e2),
        None => {
            (2.0 * p.l1 * alpha * s_prev_norm + p.l1 * (alpha + p.l_g * p.kappa) * s_curr_norm)
                / (p.l_g * beta * e2)
        }
    };
    let n_max = n_max.max(1);
    if !(arg > 1.0) {
        return 1;
    }
    let n = (p.kappa * arg.ln()).ceil();
    if n.is_finite() {
        (n as usize).clamp(1, n_max)
    } else {
        n_max
    }
}

/// `N` gradient-ascent steps `y ← y + η_y·∇₂f(x, y)` at fixed `x`.
pub fn inner_ga(oracle: &dyn MinimaxOracle, x: &VectorX, y0: &VectorY, eta_y: f64, n: usize) -> Result<VectorY> {
    let mut y = y0.clone();
    for _ in 0..n {
        let g = oracle.gradient_y(x, &y);
        y.axpy(eta_y, &g, 1.0);
    }
    if y.iter().any(|v| !v.is_finite()) {
        return Err(Error::NonFinite("inner ascent"));
    }
    Ok(y)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TerminationReason {
    ThresholdMet,
    BudgetExhausted,
    BoxExit,
    NumericFailure,
}

impl TerminationReason {
    pub fn as_str(self) -> &'static str {
        match self {
            Self::ThresholdMet => "threshold_met",
            Self::BudgetExhausted => "budget_exhausted",
            Self::BoxExit => "box_exit",
            Self::NumericFailure => "numeric_failure",
        }
    }
}

/// State and diagnostics at outer index `t`.
///
/// `s_norm` is `‖s_t‖`, the step that produced `x_t` (`ε′` at `t = 0`), and
/// `kkt` belongs to that step. `n_t` counts the inner steps run from `y_t`
/// to produce `y_{t+1}`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct IterateRecord {
    pub t: usize,
    pub x: VectorX,
    pub y: VectorY,
    pub s_norm: f64,
    pub n_t: Option<usize>,
    pub h_t: Option<f64>,
    pub phi: Option<f64>,
    pub grad_phi_norm: Option<f64>,
    pub min_eig: Option<f64>,
    pub mu_measure: Option<f64>,
    pub kkt: Option<KktReport>,
    pub batches: Option<BatchSizes>,
    pub wall_ms: Option<f64>,
}

impl IterateRecord {
    pub fn new(t: usize, x: VectorX, y: VectorY, s_norm: f64) -> Self {
        Self {
            t,
            x,
            y,
            s_norm,
            n_t: None,
            h_t: None,
            phi: None,
            grad_phi_norm: None,
            min_eig: None,
            mu_measure: None,
            kkt: None,
            batches: None,
            wall_ms: None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunResult {
    pub records: Vec<IterateRecord>,
    /// Output index `T′`; absent unless the threshold was met.
    pub t_prime: Option<usize>,
    pub x_out: VectorX,
    pub y_out: VectorY,
    pub x_out_index: usize,
    pub y_out_index: usize,
    pub termination: TerminationReason,
    pub message: Option<String>,
    /// Stochastic runs only: every batch was the full index set.
    pub effectively_deterministic: Option<bool>,
}

impl RunResult {
    pub fn final_record(&self) -> &IterateRecord {
        self.records.last().expect("runs record at least the initial point")
    }
}

pub(crate) struct Diagnoser<'a> {
    pub oracle: &'a dyn MinimaxOracle,
    pub alpha: f64,
    pub beta: f64,
    pub tol: f64,
    pub every: usize,
}

impl Diagnoser<'_> {
    pub fn due(&self, t: usize) -> bool {
        self.every > 0 && t.is_multiple_of(self.every)
    }

    pub fn fill(&self, rec: &mut IterateRecord) {
        if let Ok((phi, _)) = diagnostics::phi_eval(self.oracle, &rec.x, self.tol) {
            rec.phi = Some(phi);
            let coef = potential_coefficient(self.oracle.profile(), self.alpha, self.beta);
            rec.h_t = Some(phi + coef * rec.s_norm.powi(3));
        }
        if let Ok(rep) = diagnostics::stationarity(self.oracle, &rec.x, self.tol) {
            rec.grad_phi_norm = Some(rep.grad_phi_norm);
            rec.min_eig = Some(rep.min_eig);
            rec.mu_measure = Some(rep.mu_measure);
        }
    }
}

pub(crate) fn in_box(oracle: &dyn MinimaxOracle, x: &VectorX, y: &VectorY) -> bool {
    oracle.operating_box().is_none_or(|b| b.contains(x, y))
}

pub(crate) fn check_start(oracle: &dyn MinimaxOracle, x0: &VectorX, y0: &VectorY) -> Result<()> {
    if x0.len() != oracle.dim_x() {
        return Err(Error::Dimension {
            what: "x0",
            expected: oracle.dim_x(),
            got: x0.len(),
        });
    }
    if y0.len() != oracle.dim_y() {
        return Err(Error::Dimension {
            what: "y0",
            expected: oracle.dim_y(),
            got: y0.len(),
        });
    }
    if x0.iter().chain(y0.iter()).any(|v| !v.is_finite()) {
        return Err(Error::Usage("initial point must be finite".into()));
    }
    if !in_box(oracle, x0, y0) {
        return Err(Error::Usage("initial point lies outside the operating box".into()));
    }
    Ok(())
}

/// Cubic step for a given gradient and Hessian operator.
pub(crate) fn cubic_step(
    g: &VectorX,
    op: &GOperator<'_>,
    config: &RunConfig,
    profile: &SmoothnessProfile,
    iteration: u64,
) -> Result<CubicStep> {
    let exact = match config.solver {
        CubicSolver::Exact => true,
        CubicSolver::Iterative => false,
        CubicSolver::Auto => g.len() <= DENSE_CAP,
    };
    if exact {
        let h = op.dense()?;
        solve_cubic_exact(g, &h, config.eta_x, config.cubic_tol)
    } else {
        let opts = IterativeOptions::new(profile.g_bound(), config.seed ^ iteration.wrapping_mul(0x9e37_79b9));
        let step = solve_cubic_iterative(g, op, config.eta_x, config.cubic_tol, config.cubic_max_iter, &opts);
        if let Some(e) = op.take_failure() {
            return Err(e);
        }
        step
    }
}

pub(crate) struct Outcome {
    pub termination: TerminationReason,
    pub message: Option<String>,
    pub t_prime: Option<usize>,
}

pub(crate) fn finish_run(
    mut records: Vec<IterateRecord>,
    outcome: Outcome,
    diag: &Diagnoser<'_>,
    effectively_deterministic: Option<bool>,
) -> RunResult {
    let last = records.len() - 1;
    if records[last].phi.is_none() {
        diag.fill(&mut records[last]);
    }
    let out = outcome.t_prime.unwrap_or(last).min(last);
    RunResult {
        x_out: records[out].x.clone(),
        y_out: records[out].y.clone(),
        x_out_index: records[out].t,
        y_out_index: records[out].t,
        records,
        t_prime: outcome.t_prime,
        termination: outcome.termination,
        message: outcome.message,
        effectively_deterministic,
    }
}

/// Cubic-GDA from `(x0, y0)`.
///
/// Configuration errors are returned as `Err`. Numerical trouble and box
/// exits end the run early and are reported in
/// [`RunResult::termination`].
pub fn run_cubic_gda(
    oracle: &dyn MinimaxOracle,
    x0: &VectorX,
    y0: &VectorY,
    config: &RunConfig,
) -> Result<RunResult> {
    let profile = *oracle.profile();
    config.validate(&profile)?;
    check_start(oracle, x0, y0)?;
    let diag = Diagnoser {
        oracle,
        alpha: config.alpha,
        beta: config.beta,
        tol: config.diag_tol,
        every: config.diag_every,
    };
    let start = Instant::now();
    let stamp = |rec: &mut IterateRecord| {
        if config.record_wall_time {
            rec.wall_ms = Some(start.elapsed().as_secs_f64() * 1e3);
        }
    };
    let init_gap = match oracle.closed_form() {
        Some(cf) => (y0 - cf.y_star(x0)).norm(),
        None => oracle.gradient_y(x0, y0).norm() / profile.mu,
    };

    let mut records = vec![IterateRecord::new(0, x0.clone(), y0.clone(), config.eps_prime)];
    if diag.due(0) {
        diag.fill(&mut records[0]);
    }
    stamp(&mut records[0]);

    let mut outcome = Outcome {
        termination: TerminationReason::BudgetExhausted,
        message: None,
        t_prime: None,
    };
    for t in 0..config.max_iters {
        let n_t = if t == 0 {
            nt_schedule(&profile, config.alpha, config.beta, config.eps_prime, 0.0, 0.0, Some(init_gap), config.n_max)
        } else {
            nt_schedule(
                &profile,
                config.alpha,
                config.beta,
                config.eps_prime,
                records[t - 1].s_norm,
                records[t].s_norm,
                None,
                config.n_max,
            )
        };
        records[t].n_t = Some(n_t);
        let x_t = records[t].x.clone();
        let step = inner_ga(oracle, &x_t, &records[t].y, config.eta_y, n_t).and_then(|y_next| {
            let g = oracle.gradient_x(&x_t, &y_next);
            let op = GOperator::new(oracle, &x_t, &y_next, config.cg_tol);
            let step = cubic_step(&g, &op, config, &profile, t as u64)?;
            Ok((y_next, step))
        });
        let (y_next, step) = match step {
            Ok(v) => v,
            Err(e) => {
                outcome.termination = TerminationReason::NumericFailure;
                outcome.message = Some(e.to_string());
                break;
            }
        };
        let x_next = &x_t + &step.s;
        let s_norm = step.s.norm();
        let mut rec = IterateRecord::new(t + 1, x_next, y_next, s_norm);
        rec.kkt = Some(step.kkt);
        let finite = rec.x.iter().chain(rec.y.iter()).all(|v| v.is_finite());
        let inside = finite && in_box(oracle, &rec.x, &rec.y);
        if finite && diag.due(t + 1) {
            diag.fill(&mut rec);
        }
        stamp(&mut rec);
        records.push(rec);
        if !finite {
            outcome.termination = TerminationReason::NumericFailure;
            outcome.message = Some("non-finite iterate".into());
            break;
        }
        if !inside {
            outcome.termination = TerminationReason::BoxExit;
            outcome.message = Some(format!("iterate left the operating box at t = {}", t + 1));
            break;
        }
        if records[t].s_norm.max(s_norm) <= config.eps_prime {
            outcome.termination = TerminationReason::ThresholdMet;
            outcome.t_prime = Some(t + 1);
            break;
        }
    }
    Ok(finish_run(records, outcome, &diag, None))
}

/// Simultaneous GDA: `x ← x − step_x·∇₁f`, `y ← y + step_y·∇₂f`.
///
/// Stops with `threshold_met` once `‖∇₁f‖ + ‖∇₂f‖ < stop_tol`, and reports
/// divergence when an iterate grows past `1e8·(1 + ‖x₀‖ + ‖y₀‖)`.
#[allow(clippy::too_many_arguments)]
pub fn run_gda_baseline(
    oracle: &dyn MinimaxOracle,
    x0: &VectorX,
    y0: &VectorY,
    step_x: f64,
    step_y: f64,
    max_iters: usize,
    stop_tol: f64,
) -> Result<RunResult> {
    if !(step_x > 0.0) || !(step_y > 0.0) {
        return Err(Error::Config("GDA steps must be positive".into()));
    }
    check_start(oracle, x0, y0)?;
    let every = (max_iters / 1000).max(1);
    let diag = Diagnoser {
        oracle,
        alpha: oracle.profile().l_phi,
        beta: oracle.profile().l_phi,
        tol: 1e-10,
        every,
    };
    let limit = 1e8 * (1.0 + x0.norm() + y0.norm());
    let mut records = vec![IterateRecord::new(0, x0.clone(), y0.clone(), 0.0)];
    diag.fill(&mut records[0]);
    let mut outcome = Outcome {
        termination: TerminationReason::BudgetExhausted,
        message: None,
        t_prime: None,
    };
    let mut x = x0.clone();
    let mut y = y0.clone();
    for t in 0..max_iters {
        let gx = oracle.gradient_x(&x, &y);
        let gy = oracle.gradient_y(&x, &y);
        if gx.norm() + gy.norm() < stop_tol {
            outcome.termination = TerminationReason::ThresholdMet;
            outcome.t_prime = Some(t);
            break;
        }
        let x_next = &x - &gx * step_x;
        y += &gy * step_y;
        let s_norm = (&x_next - &x).norm();
        x = x_next;
        let mut rec = IterateRecord::new(t + 1, x.clone(), y.clone(), s_norm);
        let finite = x.iter().chain(y.iter()).all(|v| v.is_finite());
        let diverged = !finite || x.norm() + y.norm() > limit;
        if !diverged && diag.due(t + 1) {
            diag.fill(&mut rec);
        }
        records.push(rec);
        if diverged {
            outcome.termination = TerminationReason::NumericFailure;
            outcome.message = Some(format!("GDA diverged at t = {}", t + 1));
            break;
        }
        if !in_box(oracle, &x, &y) {
            outcome.termination = TerminationReason::BoxExit;
            outcome.message = Some(format!("iterate left the operating box at t = {}", t + 1));
            break;
        }
    }
    Ok(finish_run(records, outcome, &diag, None))
}

/// `‖x_t − x₀‖` over a run, for escape comparisons.
pub fn max_displacement(result: &RunResult) -> f64 {
    let x0 = &result.records[0].x;
    result
        .records
        .iter()
        .map(|r| (&r.x - x0).norm())
        .fold(0.0, f64::max)
}
