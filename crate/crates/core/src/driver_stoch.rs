//! Stochastic Cubic-GDA for finite-sum objectives.
//!
//! The inner loop is single-sample stochastic gradient ascent with steps
//! `2/(μ(k+1))` and weights `2k/(N(N−1))`. The outer step solves the cubic
//! model built from mini-batch estimates of `∇₁f` and of each Jacobian block.
//! Batch sizes shrink or grow with the previous step length.

use nalgebra::DVector;
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::driver_det::{
    check_start, cubic_step, finish_run, in_box, Diagnoser, IterateRecord, Outcome, RunConfig, RunResult,
    TerminationReason,
};
use crate::error::{Error, Result};
use crate::oracle::{MinimaxOracle, SmoothnessProfile, VectorX, VectorY};
use crate::rng::{substream, Block};
use crate::schur::{stoch_grad_x, BatchSet, GOperator};

/// Default cap on inner ascent steps; the schedule formula almost always binds it.
pub const DEFAULT_SGA_CAP: usize = 200;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StochConfig {
    pub base: RunConfig,
    /// Failure probability `δ` per iteration.
    pub delta: f64,
    /// Multiplier on the inner-step schedule.
    pub sga_constant: f64,
    pub sga_cap: usize,
    /// Optional cap on every batch below the sample count.
    pub batch_cap: Option<usize>,
}

impl StochConfig {
    pub fn for_accuracy(profile: &SmoothnessProfile, eps: f64, delta: f64) -> Self {
        Self {
            base: RunConfig::for_accuracy(profile, eps),
            delta,
            sga_constant: 1.0,
            sga_cap: DEFAULT_SGA_CAP,
            batch_cap: None,
        }
    }

    pub fn eps(&self) -> Result<f64> {
        self.base
            .eps
            .ok_or_else(|| Error::Config("stochastic runs need the target accuracy eps".into()))
    }

    pub fn validate(&self, profile: &SmoothnessProfile) -> Result<()> {
        self.base.validate(profile)?;
        if !(self.delta > 0.0 && self.delta < 1.0) {
            return Err(Error::Config(format!("delta must lie in (0, 1), got {}", self.delta)));
        }
        if !(self.sga_constant >= 0.0) || !self.sga_constant.is_finite() {
            return Err(Error::Config("sga_constant must be non-negative".into()));
        }
        if self.sga_cap < 2 || self.batch_cap == Some(0) {
            return Err(Error::Config("sga_cap must be at least 2 and batch_cap positive".into()));
        }
        let eps = self.eps()?;
        if !(eps > 0.0) {
            return Err(Error::Config("eps must be positive".into()));
        }
        let bound = profile.l1 * (33.0 * profile.l_phi).sqrt() / profile.l_g;
        if !self.base.allow_invalid && eps > bound * (1.0 + 1e-12) {
            return Err(Error::Config(format!("eps = {eps} exceeds L1 sqrt(33 L_Phi)/L_G = {bound}")));
        }
        Ok(())
    }
}

/// Batch sizes for one iteration, ordered `b1, b11, b12, b21, b22` in arrays.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct BatchSizes {
    pub b1: usize,
    pub b11: usize,
    pub b12: usize,
    pub b21: usize,
    pub b22: usize,
    /// Uncapped formula values, saturating at `usize::MAX`.
    pub formula: [usize; 5],
    /// Set where the sample-count cap binds and the batch is the full set.
    pub exact: [bool; 5],
}

impl BatchSizes {
    pub fn as_array(&self) -> [usize; 5] {
        [self.b1, self.b11, self.b12, self.b21, self.b22]
    }

    pub fn all_exact(&self) -> bool {
        self.exact.iter().all(|&e| e)
    }

    /// Largest Jacobian-block batch.
    pub fn max_jacobian(&self) -> usize {
        self.b11.max(self.b12).max(self.b21).max(self.b22)
    }
}

/// `(ε₁, ε₂)` for the previous step length `s_norm` and target accuracy `eps`.
pub fn adaptive_inexactness(profile: &SmoothnessProfile, s_norm: f64, eps: f64) -> Result<(f64, f64)> {
    let l0 = profile.require_l0()?;
    let lp = profile.l_phi;
    let e1 = (0.5 * lp * (s_norm * s_norm + eps * eps / (33.0 * lp))).min(2.0 * l0);
    let k1 = profile.kappa + 1.0;
    let e2 = (lp / (2.0 * k1 * k1) * (s_norm + eps / (33.0 * lp).sqrt())).min(4.0 * profile.l1);
    Ok((e1, e2))
}

fn ceil_count(v: f64) -> usize {
    if v.is_nan() || v >= usize::MAX as f64 {
        usize::MAX
    } else {
        (v.ceil() as usize).max(1)
    }
}

/// Mini-batch sizes reaching accuracies `eps1` (gradient) and `eps2` (each
/// Jacobian block) with probability `1 − δ`, capped at `n_samples`.
pub fn batch_sizes(
    profile: &SmoothnessProfile,
    eps1: f64,
    eps2: f64,
    delta: f64,
    m: usize,
    n: usize,
    n_samples: usize,
) -> Result<BatchSizes> {
    let l0 = profile.require_l0()?;
    if !(eps1 > 0.0) || !(eps2 > 0.0) {
        return Err(Error::Usage("batch accuracies must be positive".into()));
    }
    if n_samples == 0 {
        return Err(Error::Usage("finite sum has no samples".into()));
    }
    let b1 = ceil_count(32.0 * l0 * l0 * ((10.0 * m as f64 / delta).ln() + 0.25) / (eps1 * eps1));
    let l1 = profile.l1;
    let bk = ceil_count(16.0 * l1 * l1 * (10.0 * m.max(n) as f64 / delta).ln() / (eps2 * eps2));
    let formula = [b1, bk, bk, bk, bk];
    let capped = formula.map(|b| b.min(n_samples));
    Ok(BatchSizes {
        b1: capped[0],
        b11: capped[1],
        b12: capped[2],
        b21: capped[3],
        b22: capped[4],
        formula,
        exact: capped.map(|b| b == n_samples),
    })
}

/// Inner ascent steps: `max(2, min(cap, ⌈c·(L0·ln(1/δ) + L0²)/D⌉))` with
/// `D = min(κ⁻²(L_Φ²‖s‖⁴ + ε⁴), L1²(‖s‖² + ε²/L_Φ))`.
pub fn sga_count(
    profile: &SmoothnessProfile,
    s_norm: f64,
    eps: f64,
    delta: f64,
    sga_constant: f64,
    cap: usize,
) -> Result<usize> {
    let l0 = profile.require_l0()?;
    let p = profile;
    let s2 = s_norm * s_norm;
    let d1 = (p.l_phi * p.l_phi * s2 * s2 + eps.powi(4)) / (p.kappa * p.kappa);
    let d2 = p.l1 * p.l1 * (s2 + eps * eps / p.l_phi);
    let num = sga_constant * (l0 * (1.0 / delta).ln() + l0 * l0);
    let raw = if num == 0.0 { 0.0 } else { num / d1.min(d2) };
    let n = if raw.is_nan() || raw >= usize::MAX as f64 {
        usize::MAX
    } else {
        raw.ceil() as usize
    };
    Ok(n.min(cap).max(2))
}

/// Weight of `ỹ_k` in the inner average.
pub fn sga_weight(k: usize, n: usize) -> f64 {
    2.0 * k as f64 / (n as f64 * (n as f64 - 1.0))
}

/// Single-sample ascent from `y0` returning `Σ_{k<N} w_k·ỹ_k`.
///
/// Only `ỹ_0 … ỹ_{N−1}` enter the average, so the step that would produce
/// `ỹ_N` is skipped.
pub fn inner_sga<R: Rng + ?Sized>(
    oracle: &dyn MinimaxOracle,
    x: &VectorX,
    y0: &VectorY,
    mu: f64,
    n: usize,
    rng: &mut R,
) -> Result<VectorY> {
    if n < 2 {
        return Err(Error::Usage(format!("inner ascent needs at least 2 steps, got {n}")));
    }
    let sum = oracle
        .finite_sum()
        .ok_or_else(|| Error::Usage("oracle is not a finite sum".into()))?;
    let samples = sum.n_samples();
    let mut y = y0.clone();
    let mut avg = DVector::zeros(y0.len());
    for k in 0..n {
        avg.axpy(sga_weight(k, n), &y, 1.0);
        if k + 1 == n {
            break;
        }
        let i = rng.random_range(0..samples);
        let g = sum.sample_gradient_y(i, x, &y);
        y.axpy(2.0 / (mu * (k as f64 + 1.0)), &g, 1.0);
    }
    if avg.iter().any(|v| !v.is_finite()) {
        return Err(Error::NonFinite("inner stochastic ascent"));
    }
    Ok(avg)
}

/// Stochastic Cubic-GDA from `(x0, y0)` on a finite-sum oracle.
pub fn run_stochastic_cubic_gda(
    oracle: &dyn MinimaxOracle,
    x0: &VectorX,
    y0: &VectorY,
    config: &StochConfig,
) -> Result<RunResult> {
    let profile = *oracle.profile();
    config.validate(&profile)?;
    check_start(oracle, x0, y0)?;
    let sum = oracle
        .finite_sum()
        .ok_or_else(|| Error::Usage("stochastic runs need a finite-sum oracle".into()))?;
    let n_samples = sum.n_samples();
    let eps = config.eps()?;
    let base = &config.base;
    let diag = Diagnoser {
        oracle,
        alpha: base.alpha,
        beta: base.beta,
        tol: base.diag_tol,
        every: base.diag_every,
    };
    let start = std::time::Instant::now();
    let stamp = |rec: &mut IterateRecord| {
        if base.record_wall_time {
            rec.wall_ms = Some(start.elapsed().as_secs_f64() * 1e3);
        }
    };

    let mut records = vec![IterateRecord::new(0, x0.clone(), y0.clone(), base.eps_prime)];
    if diag.due(0) {
        diag.fill(&mut records[0]);
    }
    stamp(&mut records[0]);
    let mut outcome = Outcome {
        termination: TerminationReason::BudgetExhausted,
        message: None,
        t_prime: None,
    };
    let mut all_exact = true;
    for t in 0..base.max_iters {
        let s_t = records[t].s_norm;
        let x_t = records[t].x.clone();
        let it = t as u64;
        let step = (|| {
            let (e1, e2) = adaptive_inexactness(&profile, s_t, eps)?;
            let mut sizes = batch_sizes(&profile, e1, e2, config.delta, oracle.dim_x(), oracle.dim_y(), n_samples)?;
            if let Some(cap) = config.batch_cap {
                for (slot, v) in [&mut sizes.b1, &mut sizes.b11, &mut sizes.b12, &mut sizes.b21, &mut sizes.b22]
                    .into_iter()
                    .enumerate()
                {
                    if *v > cap {
                        *v = cap;
                        sizes.exact[slot] = cap >= n_samples;
                    }
                }
            }
            let n_t = sga_count(&profile, s_t, eps, config.delta, config.sga_constant, config.sga_cap)?;
            let mut rng = substream(base.seed, it, Block::Sga);
            let y_next = inner_sga(oracle, &x_t, &records[t].y, profile.mu, n_t, &mut rng)?;
            let batches = BatchSet::draw(sizes.as_array(), n_samples, base.seed, it)?;
            let g = stoch_grad_x(oracle, &x_t, &y_next, &batches.b1)?;
            let op = GOperator::sampled(oracle, &x_t, &y_next, &batches, base.cg_tol);
            let step = cubic_step(&g, &op, base, &profile, it)?;
            Ok::<_, Error>((n_t, sizes, y_next, step))
        })();
        let (n_t, sizes, y_next, step) = match step {
            Ok(v) => v,
            Err(e) => {
                outcome.termination = TerminationReason::NumericFailure;
                outcome.message = Some(e.to_string());
                break;
            }
        };
        all_exact &= sizes.all_exact();
        records[t].n_t = Some(n_t);
        records[t].batches = Some(sizes);
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
        if s_t.max(s_norm) <= base.eps_prime {
            outcome.termination = TerminationReason::ThresholdMet;
            outcome.t_prime = Some(t + 1);
            break;
        }
    }
    Ok(finish_run(records, outcome, &diag, Some(all_exact)))
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    fn profile() -> SmoothnessProfile {
        // κ = 2, L1 = 2, L_Φ = 27 needs L2 = 1.
        SmoothnessProfile::new(Some(5.0), 2.0, 1.0, 1.0).unwrap()
    }

    #[test]
    fn inexactness_worked_example() {
        let p = profile();
        assert_relative_eq!(p.l_phi, 27.0);
        let (e1, e2) = adaptive_inexactness(&p, 0.2, 0.3).unwrap();
        assert_relative_eq!(e1, 13.5 * (0.04 + 0.09 / 891.0), epsilon = 1e-14);
        assert_relative_eq!(e2, 1.5 * (0.2 + 0.3 / 891f64.sqrt()), epsilon = 1e-14);
        assert_eq!(adaptive_inexactness(&p, 1e6, 0.3).unwrap(), (10.0, 8.0));
        assert_eq!(adaptive_inexactness(&p, 0.0, 0.0).unwrap(), (0.0, 0.0));
    }

    #[test]
    fn batch_worked_example_and_cap() {
        let p = profile();
        let b = batch_sizes(&p, 0.5, 1.0, 0.1, 10, 10, 1_000_000).unwrap();
        assert_eq!(b.b1, 22905);
        assert!(!b.exact[0]);
        let b = batch_sizes(&p, 0.5, 1.0, 0.1, 10, 10, 100).unwrap();
        assert_eq!(b.b1, 100);
        assert!(b.exact[0]);
        assert_eq!(b.formula[0], 22905);
        let big = 4.0 * 2f64.sqrt() * 5.0 * ((1000f64).ln() + 0.25).sqrt() * (1.0 + 1e-9);
        assert_eq!(batch_sizes(&p, big, 1.0, 0.1, 10, 10, 100).unwrap().b1, 1);
    }

    #[test]
    fn sga_count_worked_example() {
        let p = profile();
        assert_eq!(sga_count(&p, 0.0, 0.3, 0.1, 1.0, usize::MAX).unwrap(), 18032);
        assert_eq!(sga_count(&p, 0.0, 0.3, 0.1, 1.0, 500).unwrap(), 500);
        assert_eq!(sga_count(&p, 0.0, 0.3, 0.1, 0.0, 500).unwrap(), 2);
    }

    #[test]
    fn weights_for_three_steps() {
        let w: Vec<f64> = (0..3).map(|k| sga_weight(k, 3)).collect();
        assert_eq!(w, vec![0.0, 1.0 / 3.0, 2.0 / 3.0]);
    }
}
