//! The cubic-regularised subproblem
//!
//! ```text
//! min_s  ⟨g, s⟩ + ½ sᵀHs + (M/6)‖s‖³,   M = 1/η_x
//! ```
//!
//! [`solve_cubic_exact`] finds the global minimiser of small dense instances
//! through an eigendecomposition and a scalar root-find.
//! [`solve_cubic_iterative`] runs gradient descent on the model using only
//! products with `H`. Both attach a [`KktReport`] that measures the three
//! optimality conditions of the global solution.

use nalgebra::{DMatrix, DVector};
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg::{min_eigenvalue, sorted_eigen, FnOperator, LinearOperator};
use crate::rng::{substream, Block};

/// Root-find iteration cap.
pub const MAX_ROOT_ITER: usize = 200;

/// Relative size of `⟨g, v_min⟩` below which the hard case is assumed.
pub const HARD_CASE_THRESHOLD: f64 = 1e-10;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct KktReport {
    /// `‖g + H·s + (M/2)‖s‖·s‖`.
    pub stationarity_residual: f64,
    /// `λ_min(H + (M/2)‖s‖·I)`.
    pub curvature_margin: f64,
    /// `⟨g, s⟩ + ½ sᵀHs`.
    pub model_decrease: f64,
}

impl KktReport {
    /// Slack by which the decrease condition `model_decrease ≤ −(M/4)‖s‖³`
    /// holds; negative when it fails.
    pub fn decrease_slack(&self, s_norm: f64, eta_x: f64) -> f64 {
        -s_norm.powi(3) / (4.0 * eta_x) - self.model_decrease
    }

    pub fn accepts(&self, s_norm: f64, eta_x: f64, tol: f64) -> bool {
        self.stationarity_residual <= tol
            && self.curvature_margin >= -tol
            && self.decrease_slack(s_norm, eta_x) >= -tol
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CubicStep {
    pub s: DVector<f64>,
    pub model_value: f64,
    pub kkt: KktReport,
}

fn check_inputs(g: &DVector<f64>, dim: usize, eta_x: f64) -> Result<()> {
    if g.len() != dim {
        return Err(Error::Dimension {
            what: "cubic gradient",
            expected: dim,
            got: g.len(),
        });
    }
    if !(eta_x > 0.0) || !eta_x.is_finite() {
        return Err(Error::Usage(format!("eta_x must be positive, got {eta_x}")));
    }
    if g.iter().any(|v| !v.is_finite()) {
        return Err(Error::NonFinite("cubic gradient"));
    }
    Ok(())
}

/// Model value `⟨g, s⟩ + ½ sᵀHs + ‖s‖³/(6η_x)`.
pub fn cubic_model(g: &DVector<f64>, h: &dyn LinearOperator, eta_x: f64, s: &DVector<f64>) -> f64 {
    let hs = h.apply(s);
    g.dot(s) + 0.5 * s.dot(&hs) + s.norm().powi(3) / (6.0 * eta_x)
}

/// Measures the three optimality conditions at `s`. Does not judge them.
pub fn verify_kkt(
    g: &DVector<f64>,
    h: &dyn LinearOperator,
    eta_x: f64,
    s: &DVector<f64>,
    tol: f64,
) -> KktReport {
    let m = 1.0 / eta_x;
    let r = s.norm();
    let hs = h.apply(s);
    let stationarity_residual = (g + &hs + s * (0.5 * m * r)).norm();
    let shifted = FnOperator::new(h.dim(), |v: &DVector<f64>| h.apply(v) + v * (0.5 * m * r));
    let bound = operator_bound(h) + 0.5 * m * r;
    let curvature_margin = min_eigenvalue(&shifted, tol, bound).unwrap_or(f64::NAN);
    KktReport {
        stationarity_residual,
        curvature_margin,
        model_decrease: g.dot(s) + 0.5 * s.dot(&hs),
    }
}

/// Rough upper bound on `‖H‖` from a few power iterations.
fn operator_bound(h: &dyn LinearOperator) -> f64 {
    let n = h.dim();
    let mut v = DVector::from_fn(n, |i, _| 1.0 + (i as f64 * 0.618).fract());
    v /= v.norm();
    let mut est: f64 = 0.0;
    for _ in 0..30 {
        let w = h.apply(&v);
        let nw = w.norm();
        if nw == 0.0 || !nw.is_finite() {
            break;
        }
        est = est.max(nw);
        v = w / nw;
    }
    2.0 * est + 1.0
}

/// Tolerance scale so acceptance is insensitive to the magnitude of the data.
fn kkt_scale(g: &DVector<f64>, hs_norm: f64, eta_x: f64, r: f64) -> f64 {
    1.0_f64
        .max(g.norm())
        .max(hs_norm)
        .max(r * r / eta_x)
}

fn finish(
    g: &DVector<f64>,
    h: &DMatrix<f64>,
    eta_x: f64,
    s: DVector<f64>,
    tol: f64,
) -> Result<CubicStep> {
    let kkt = verify_kkt(g, h, eta_x, &s, tol);
    let r = s.norm();
    let scale = kkt_scale(g, (h * &s).norm(), eta_x, r);
    if !kkt.accepts(r, eta_x, tol * scale) {
        return Err(Error::Kkt(kkt));
    }
    let model_value = cubic_model(g, h, eta_x, &s);
    Ok(CubicStep { s, model_value, kkt })
}

/// Sign choice for the hard case: the last nonzero coordinate is positive.
fn orient(base: &DVector<f64>, dir: &DVector<f64>, tau: f64) -> DVector<f64> {
    let plus = base + dir * tau;
    let scale = plus.amax();
    let last = plus.iter().rev().find(|v| v.abs() > 1e-14 * scale);
    match last {
        Some(v) if *v < 0.0 => base - dir * tau,
        _ => plus,
    }
}

/// Global minimiser of the cubic model for a dense symmetric `H`.
///
/// With `H = QΛQᵀ` and `ĝ = Qᵀg` the solution is `s = −Q(Λ + (r/(2η_x))I)⁻¹ĝ`
/// where `r = ‖s‖` solves the secular equation on
/// `r > max(0, −2η_x·λ_min)`. When `ĝ` has no weight on the bottom
/// eigenspace and that equation has no root, the solution sits on the
/// boundary `r = −2η_x·λ_min` and gains a bottom-eigenvector component.
pub fn solve_cubic_exact(
    g: &DVector<f64>,
    h: &DMatrix<f64>,
    eta_x: f64,
    tol: f64,
) -> Result<CubicStep> {
    check_inputs(g, h.nrows(), eta_x)?;
    if h.iter().any(|v| !v.is_finite()) {
        return Err(Error::NonFinite("cubic Hessian"));
    }
    let dim = g.len();
    let half_m = 0.5 / eta_x;
    let (lam, q) = sorted_eigen(h);
    let gh = q.transpose() * g;
    let gn = g.norm();
    let lam_min = lam[0];
    let spread = lam.amax().max(1.0);
    let bottom: Vec<usize> = (0..dim)
        .filter(|&i| lam[i] <= lam_min + 1e-12 * spread)
        .collect();
    let bottom_weight = bottom.iter().map(|&i| gh[i] * gh[i]).sum::<f64>().sqrt();

    if gn == 0.0 && lam_min >= 0.0 {
        return finish(g, h, eta_x, DVector::zeros(dim), tol);
    }

    let mut gh_eff = gh.clone();
    let mut lo = (-lam_min / half_m).max(0.0);
    if lam_min < 0.0 && bottom_weight <= HARD_CASE_THRESHOLD * gn {
        for &i in &bottom {
            gh_eff[i] = 0.0;
        }
        let sigma = -lam_min;
        let r_hard = sigma / half_m;
        let p = DVector::from_fn(dim, |i, _| {
            if bottom.contains(&i) {
                0.0
            } else {
                -gh[i] / (lam[i] + sigma)
            }
        });
        let pn = p.norm();
        if pn < r_hard {
            let tau = (r_hard * r_hard - pn * pn).sqrt();
            let base = &q * &p;
            let dir = q.column(bottom[0]).into_owned();
            return finish(g, h, eta_x, orient(&base, &dir, tau), tol);
        }
        lo = r_hard;
    }

    let w_of = |r: f64| -> Option<DVector<f64>> {
        let mut w = DVector::zeros(dim);
        for i in 0..dim {
            if gh_eff[i] == 0.0 {
                continue;
            }
            let d = lam[i] + half_m * r;
            if d <= 0.0 {
                return None;
            }
            w[i] = gh_eff[i] / d;
        }
        Some(w)
    };
    let psi = |r: f64| -> f64 {
        match w_of(r) {
            Some(w) => w.norm() - r,
            None => f64::INFINITY,
        }
    };
    let dpsi = |r: f64, w: &DVector<f64>| -> f64 {
        let wn = w.norm();
        if wn == 0.0 {
            return -1.0;
        }
        let mut acc = 0.0;
        for i in 0..dim {
            let d = lam[i] + half_m * r;
            if gh_eff[i] != 0.0 {
                acc += w[i] * w[i] / d;
            }
        }
        -half_m * acc / wn - 1.0
    };

    let upper = eta_x * (-lam_min + (lam_min * lam_min + 2.0 * gn / eta_x).sqrt());
    let mut hi = upper.max(lo * (1.0 + 1e-12) + f64::MIN_POSITIVE);
    let mut expansions = 0;
    while psi(hi) > 0.0 {
        hi *= 2.0;
        expansions += 1;
        if expansions > 2000 || !hi.is_finite() {
            return Err(Error::RootFind { lo, hi });
        }
    }
    let mut r = 0.5 * (lo + hi);
    let mut converged = false;
    for _ in 0..MAX_ROOT_ITER {
        let w = match w_of(r) {
            Some(w) => w,
            None => {
                lo = r;
                r = 0.5 * (lo + hi);
                continue;
            }
        };
        let f = w.norm() - r;
        if f == 0.0 {
            converged = true;
            break;
        }
        if f > 0.0 {
            lo = r;
        } else {
            hi = r;
        }
        if hi - lo <= 4.0 * f64::EPSILON * hi {
            converged = true;
            break;
        }
        let newton = r - f / dpsi(r, &w);
        r = if newton > lo && newton < hi {
            newton
        } else {
            0.5 * (lo + hi)
        };
    }
    if !converged {
        let f = psi(r);
        if !(f.abs() <= 1e-12 * (1.0 + r)) {
            return Err(Error::RootFind { lo, hi });
        }
    }
    let w = w_of(r).ok_or(Error::RootFind { lo, hi })?;
    let s = -(&q * w);
    finish(g, h, eta_x, s, tol)
}

/// Settings for [`solve_cubic_iterative`].
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct IterativeOptions {
    /// Declared upper bound `U` on `‖H‖`.
    pub h_bound: f64,
    pub seed: u64,
    /// Initial perturbation size relative to the Cauchy radius.
    pub perturbation: f64,
    /// Restarts allowed when a stationary point fails the curvature
    /// condition.
    pub max_restarts: usize,
}

impl IterativeOptions {
    pub fn new(h_bound: f64, seed: u64) -> Self {
        Self {
            h_bound,
            seed,
            perturbation: 1e-2,
            max_restarts: 20,
        }
    }
}

fn random_direction(dim: usize, seed: u64, restart: u64) -> DVector<f64> {
    let mut rng = substream(seed, restart, Block::Solver);
    let v: DVector<f64> = DVector::from_fn(dim, |_, _| StandardNormal.sample(&mut rng));
    let n = v.norm();
    if n == 0.0 {
        DVector::from_element(dim, 1.0 / (dim as f64).sqrt())
    } else {
        v / n
    }
}

/// Approximate bottom eigenvector of `H` by power iteration on `c·I − H`.
fn bottom_eigenvector(h: &dyn LinearOperator, h_bound: f64, dim: usize, seed: u64, restart: u64) -> DVector<f64> {
    let c = h_bound.max(operator_bound(h));
    let mut v = random_direction(dim, seed ^ 0x5eed, restart);
    for _ in 0..(50 * dim).clamp(200, 5000) {
        let w = &v * c - h.apply(&v);
        let n = w.norm();
        if n == 0.0 || !n.is_finite() {
            break;
        }
        v = w / n;
    }
    v
}

/// Gradient descent on the cubic model using products with `H` only.
///
/// The step is `1/(8(U + √(‖g‖/η_x)))`. The start is the Cauchy point along
/// `−g` plus a seeded perturbation. Iteration stops when
/// `‖∇m(s)‖ ≤ tol·(1 + ‖g‖)`. A stationary point with negative curvature
/// margin is reflected across the bottom eigenvector and the descent resumed;
/// after `max_restarts` such points the solve fails with its KKT report.
pub fn solve_cubic_iterative(
    g: &DVector<f64>,
    h: &dyn LinearOperator,
    eta_x: f64,
    tol: f64,
    max_iter: usize,
    opts: &IterativeOptions,
) -> Result<CubicStep> {
    check_inputs(g, h.dim(), eta_x)?;
    let dim = g.len();
    let m = 1.0 / eta_x;
    let gn = g.norm();
    let step = 1.0 / (8.0 * (opts.h_bound + (gn / eta_x).sqrt()));
    let target = tol * (1.0 + gn);

    let mut s = if gn > 0.0 {
        let hg = h.apply(g);
        let kg = g.dot(&hg) / (gn * gn);
        let t = (-kg + (kg * kg + 2.0 * m * gn).sqrt()) / m;
        g * (-t / gn)
    } else {
        DVector::zeros(dim)
    };
    let radius = if gn > 0.0 {
        s.norm()
    } else {
        let lam = min_eigenvalue(h, tol, opts.h_bound)?;
        if lam >= -tol {
            let zero = DVector::zeros(dim);
            let kkt = verify_kkt(g, h, eta_x, &zero, tol);
            return Ok(CubicStep {
                s: zero,
                model_value: 0.0,
                kkt,
            });
        }
        2.0 * eta_x * (-lam)
    };
    s += random_direction(dim, opts.seed, 0) * (opts.perturbation * radius);

    let mut restarts = 0u64;
    let mut best = s.clone();
    let mut best_grad = f64::INFINITY;
    for _ in 0..max_iter {
        let hs = h.apply(&s);
        let grad = g + &hs + &s * (0.5 * m * s.norm());
        let gnorm = grad.norm();
        if !gnorm.is_finite() {
            return Err(Error::NonFinite("cubic iteration"));
        }
        if gnorm < best_grad {
            best_grad = gnorm;
            best.copy_from(&s);
        }
        if gnorm <= target {
            let kkt = verify_kkt(g, h, eta_x, &s, tol);
            if kkt.curvature_margin >= -tol {
                let model_value = cubic_model(g, h, eta_x, &s);
                return Ok(CubicStep { s, model_value, kkt });
            }
            if restarts as usize >= opts.max_restarts {
                return Err(Error::Kkt(kkt));
            }
            restarts += 1;
            // A stationary point with negative margin is a local minimiser
            // whose component along the bottom eigenvector has the wrong
            // sign. Reflecting that component strictly lowers the model.
            let v = bottom_eigenvector(h, opts.h_bound, dim, opts.seed, restarts);
            s.axpy(-2.0 * s.dot(&v), &v, 1.0);
            s += random_direction(dim, opts.seed, restarts) * (1e-3 * s.norm().max(radius));
            best_grad = f64::INFINITY;
            continue;
        }
        s.axpy(-step, &grad, 1.0);
    }
    let kkt = verify_kkt(g, h, eta_x, &best, tol);
    let model_value = cubic_model(g, h, eta_x, &best);
    Err(Error::CubicNotConverged {
        iterations: max_iter,
        best: Box::new(CubicStep {
            s: best,
            model_value,
            kkt,
        }),
    })
}
