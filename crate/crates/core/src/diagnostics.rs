//! Ground-truth quantities for checking runs: `Φ`, `∇Φ`, `λ_min(∇²Φ)`, the
//! stationarity measure `μ(x)`, the potential `H_t` and finite-difference
//! validators.
//!
//! Diagnostics never reuse an algorithm's `y` iterate. They take `y*(x)` from
//! the closed form when one exists and otherwise run their own certified
//! gradient ascent.

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg::min_eigenvalue;
use crate::oracle::{JacobianBlock, MinimaxOracle, SmoothnessProfile, VectorX, VectorY};
use crate::schur::GOperator;

/// Iteration cap of the diagnostic inner maximisation.
pub const INNER_MAX_ITER: usize = 1_000_000;

/// Inner-solve tolerance used whenever diagnostics apply `G`.
pub const DIAG_CG_TOL: f64 = 1e-10;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StationarityReport {
    pub grad_phi_norm: f64,
    pub min_eig: f64,
    pub mu_measure: f64,
    pub y_star_used: VectorY,
    pub inner_tol_used: f64,
}

/// `μ(x) = max(√‖∇Φ(x)‖, −λ_min(∇²Φ(x))/√(33·L_Φ))`.
pub fn mu_measure(grad_phi_norm: f64, min_eig: f64, l_phi: f64) -> f64 {
    grad_phi_norm.sqrt().max(-min_eig / (33.0 * l_phi).sqrt())
}

/// Gradient ascent on `f(x, ·)` with step `2/(L1+μ)` until
/// `‖∇₂f(x, y)‖ ≤ μ·tol`, which certifies `‖y − y*(x)‖ ≤ tol`.
pub fn inner_max(oracle: &dyn MinimaxOracle, x: &VectorX, y0: &VectorY, tol: f64) -> Result<VectorY> {
    let p = oracle.profile();
    let step = 2.0 / (p.l1 + p.mu);
    let target = p.mu * tol;
    let mut y = y0.clone();
    for _ in 0..INNER_MAX_ITER {
        let g = oracle.gradient_y(x, &y);
        let gn = g.norm();
        if !gn.is_finite() {
            return Err(Error::NonFinite("diagnostic inner maximisation"));
        }
        if gn <= target {
            return Ok(y);
        }
        y.axpy(step, &g, 1.0);
    }
    Err(Error::NotConverged {
        what: "diagnostic inner maximisation",
        iterations: INNER_MAX_ITER,
        residual: oracle.gradient_y(x, &y).norm(),
    })
}

fn check_x(oracle: &dyn MinimaxOracle, x: &VectorX, tol: f64) -> Result<()> {
    if x.len() != oracle.dim_x() {
        return Err(Error::Dimension {
            what: "x",
            expected: oracle.dim_x(),
            got: x.len(),
        });
    }
    if !(tol > 0.0) {
        return Err(Error::Usage(format!("diagnostic tolerance must be positive, got {tol}")));
    }
    Ok(())
}

fn y_star(oracle: &dyn MinimaxOracle, x: &VectorX, tol: f64) -> Result<VectorY> {
    match oracle.closed_form() {
        Some(cf) => Ok(cf.y_star(x)),
        None => inner_max(oracle, x, &DVector::zeros(oracle.dim_y()), tol),
    }
}

/// `(Φ(x), ŷ)` with `ŷ` the maximiser used.
pub fn phi_eval(oracle: &dyn MinimaxOracle, x: &VectorX, tol: f64) -> Result<(f64, VectorY)> {
    check_x(oracle, x, tol)?;
    if let Some(cf) = oracle.closed_form() {
        return Ok((cf.phi(x), cf.y_star(x)));
    }
    let y = inner_max(oracle, x, &DVector::zeros(oracle.dim_y()), tol)?;
    Ok((oracle.value(x, &y), y))
}

/// `∇Φ(x) = ∇₁f(x, y*(x))`, accurate to `L1·tol` without a closed form.
pub fn grad_phi(oracle: &dyn MinimaxOracle, x: &VectorX, tol: f64) -> Result<VectorX> {
    check_x(oracle, x, tol)?;
    if let Some(cf) = oracle.closed_form() {
        return Ok(cf.grad_phi(x));
    }
    let y = y_star(oracle, x, tol)?;
    Ok(oracle.gradient_x(x, &y))
}

fn min_eig_at(oracle: &dyn MinimaxOracle, x: &VectorX, y: &VectorY, tol: f64) -> Result<f64> {
    let op = GOperator::new(oracle, x, y, DIAG_CG_TOL);
    let lam = min_eigenvalue(&op, tol, oracle.profile().g_bound());
    if let Some(e) = op.take_failure() {
        return Err(e);
    }
    lam
}

/// `λ_min(∇²Φ(x))` as the smallest eigenvalue of `G(x, ŷ)`.
pub fn hess_phi_min_eig(oracle: &dyn MinimaxOracle, x: &VectorX, tol: f64) -> Result<f64> {
    check_x(oracle, x, tol)?;
    let y = y_star(oracle, x, tol)?;
    min_eig_at(oracle, x, &y, tol)
}

pub fn stationarity(oracle: &dyn MinimaxOracle, x: &VectorX, tol: f64) -> Result<StationarityReport> {
    check_x(oracle, x, tol)?;
    let y = y_star(oracle, x, tol)?;
    let grad = match oracle.closed_form() {
        Some(cf) => cf.grad_phi(x),
        None => oracle.gradient_x(x, &y),
    };
    let grad_phi_norm = grad.norm();
    let min_eig = min_eig_at(oracle, x, &y, tol)?;
    Ok(StationarityReport {
        grad_phi_norm,
        min_eig,
        mu_measure: mu_measure(grad_phi_norm, min_eig, oracle.profile().l_phi),
        y_star_used: y,
        inner_tol_used: tol,
    })
}

/// Weight `L_Φ + 2α + 3β` of `‖s_t‖³` in the potential.
pub fn potential_coefficient(profile: &SmoothnessProfile, alpha: f64, beta: f64) -> f64 {
    profile.l_phi + 2.0 * alpha + 3.0 * beta
}

/// `H_t = Φ(x_t) + (L_Φ + 2α + 3β)·‖s_t‖³`.
pub fn potential(
    oracle: &dyn MinimaxOracle,
    x_t: &VectorX,
    s_t_norm: f64,
    alpha: f64,
    beta: f64,
    tol: f64,
) -> Result<f64> {
    let (phi, _) = phi_eval(oracle, x_t, tol)?;
    Ok(phi + potential_coefficient(oracle.profile(), alpha, beta) * s_t_norm.powi(3))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum FdKind {
    /// Central differences of the value against the gradient.
    Grad,
    /// Central differences of the gradient against the Hessian.
    Hess,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FdReport {
    pub kind: FdKind,
    pub max_error: f64,
    pub passed: bool,
}

/// A scalar function with analytic first and second derivatives.
pub trait FdTarget {
    fn dim(&self) -> usize;
    fn value(&self, x: &VectorX) -> Result<f64>;
    fn gradient(&self, x: &VectorX) -> Result<VectorX>;
    fn hessian(&self, x: &VectorX) -> Result<DMatrix<f64>>;
}

/// The envelope `Φ` of an oracle, evaluated through diagnostics.
pub struct EnvelopeTarget<'a> {
    pub oracle: &'a dyn MinimaxOracle,
    pub tol: f64,
}

impl FdTarget for EnvelopeTarget<'_> {
    fn dim(&self) -> usize {
        self.oracle.dim_x()
    }
    fn value(&self, x: &VectorX) -> Result<f64> {
        phi_eval(self.oracle, x, self.tol).map(|(v, _)| v)
    }
    fn gradient(&self, x: &VectorX) -> Result<VectorX> {
        grad_phi(self.oracle, x, self.tol)
    }
    fn hessian(&self, x: &VectorX) -> Result<DMatrix<f64>> {
        let y = y_star(self.oracle, x, self.tol)?;
        GOperator::new(self.oracle, x, &y, DIAG_CG_TOL).dense()
    }
}

/// Closure-backed [`FdTarget`].
pub struct FnTarget<F, G, H> {
    pub dim: usize,
    pub value: F,
    pub gradient: G,
    pub hessian: H,
}

impl<F, G, H> FdTarget for FnTarget<F, G, H>
where
    F: Fn(&VectorX) -> f64,
    G: Fn(&VectorX) -> VectorX,
    H: Fn(&VectorX) -> DMatrix<f64>,
{
    fn dim(&self) -> usize {
        self.dim
    }
    fn value(&self, x: &VectorX) -> Result<f64> {
        Ok((self.value)(x))
    }
    fn gradient(&self, x: &VectorX) -> Result<VectorX> {
        Ok((self.gradient)(x))
    }
    fn hessian(&self, x: &VectorX) -> Result<DMatrix<f64>> {
        Ok((self.hessian)(x))
    }
}

fn basis(dim: usize, j: usize, h: f64) -> DVector<f64> {
    let mut e = DVector::zeros(dim);
    e[j] = h;
    e
}

fn failed(kind: FdKind) -> FdReport {
    FdReport {
        kind,
        max_error: f64::INFINITY,
        passed: false,
    }
}

/// Compares central differences of the lower-order quantity with the
/// analytic higher-order one and reports the largest componentwise error.
pub fn fd_check(target: &dyn FdTarget, x: &VectorX, kind: FdKind, h: f64, tol: f64) -> FdReport {
    let run = || -> Result<f64> {
        if !(h > 0.0) {
            return Err(Error::Usage("finite-difference step must be positive".into()));
        }
        let n = target.dim();
        let mut err: f64 = 0.0;
        match kind {
            FdKind::Grad => {
                let g = target.gradient(x)?;
                for j in 0..n {
                    let e = basis(n, j, h);
                    let fd = (target.value(&(x + &e))? - target.value(&(x - &e))?) / (2.0 * h);
                    err = err.max((fd - g[j]).abs());
                }
            }
            FdKind::Hess => {
                let hm = target.hessian(x)?;
                for j in 0..n {
                    let e = basis(n, j, h);
                    let fd = (target.gradient(&(x + &e))? - target.gradient(&(x - &e))?) / (2.0 * h);
                    err = err.max((fd - hm.column(j)).amax());
                }
            }
        }
        Ok(err)
    };
    match run() {
        Ok(max_error) => FdReport {
            kind,
            max_error,
            passed: max_error <= tol,
        },
        Err(_) => failed(kind),
    }
}

/// Checks both partial gradients against `f` and every Jacobian block
/// against differences of the matching gradient, at `(x, y)`.
pub fn fd_check_oracle(oracle: &dyn MinimaxOracle, x: &VectorX, y: &VectorY, h: f64, tol: f64) -> FdReport {
    let (m, n) = (oracle.dim_x(), oracle.dim_y());
    let mut err: f64 = 0.0;
    let gx = oracle.gradient_x(x, y);
    let gy = oracle.gradient_y(x, y);
    for j in 0..m {
        let e = basis(m, j, h);
        let fd = (oracle.value(&(x + &e), y) - oracle.value(&(x - &e), y)) / (2.0 * h);
        err = err.max((fd - gx[j]).abs());
    }
    for j in 0..n {
        let e = basis(n, j, h);
        let fd = (oracle.value(x, &(y + &e)) - oracle.value(x, &(y - &e))) / (2.0 * h);
        err = err.max((fd - gy[j]).abs());
    }
    for block in JacobianBlock::ALL {
        let inputs = block.input_dim(m, n);
        for j in 0..inputs {
            let e = basis(inputs, j, h);
            let fd = match block {
                JacobianBlock::B11 => oracle.gradient_x(&(x + &e), y) - oracle.gradient_x(&(x - &e), y),
                JacobianBlock::B12 => oracle.gradient_x(x, &(y + &e)) - oracle.gradient_x(x, &(y - &e)),
                JacobianBlock::B21 => oracle.gradient_y(&(x + &e), y) - oracle.gradient_y(&(x - &e), y),
                JacobianBlock::B22 => oracle.gradient_y(x, &(y + &e)) - oracle.gradient_y(x, &(y - &e)),
            } / (2.0 * h);
            let exact = oracle.jacobian_product(block, x, y, &basis(inputs, j, 1.0));
            err = err.max((fd - exact).amax());
        }
    }
    FdReport {
        kind: FdKind::Hess,
        max_error: err,
        passed: err <= tol,
    }
}
