//! Problem oracles for `min_x max_y f(x, y)`.
//!
//! An oracle exposes values, partial gradients and the four second-order
//! blocks of `f` through Jacobian-vector products. Problems with known
//! envelopes additionally implement [`ClosedForm`], and finite sums
//! `f = (1/N) Σ f_i` implement [`FiniteSum`].
//!
//! The trait methods assume correctly sized inputs. The free functions
//! [`eval`], [`grad_x`], [`grad_y`] and [`jvp`] validate dimensions first.

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg::chunked_sum;

pub type VectorX = DVector<f64>;
pub type VectorY = DVector<f64>;

/// Smallest Jacobian-Lipschitz constant used to derive `L_G` and `L_Φ`.
pub const L2_FLOOR: f64 = 1e-6;

/// Smoothness constants of a problem and the quantities derived from them.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SmoothnessProfile {
    /// Per-sample Lipschitz constant of `f_i(·, y)`; finite sums only.
    pub l0: Option<f64>,
    pub l1: f64,
    /// Effective `L2` after the floor.
    pub l2: f64,
    /// `L2` as declared by the problem.
    pub l2_declared: f64,
    pub mu: f64,
    pub kappa: f64,
    pub l_g: f64,
    pub l_phi: f64,
}

impl SmoothnessProfile {
    pub fn new(l0: Option<f64>, l1: f64, l2: f64, mu: f64) -> Result<Self> {
        Self::with_floor(l0, l1, l2, mu, L2_FLOOR)
    }

    pub fn with_floor(l0: Option<f64>, l1: f64, l2: f64, mu: f64, floor: f64) -> Result<Self> {
        let finite = [l1, l2, mu, floor].iter().all(|v| v.is_finite())
            && l0.is_none_or(|v| v.is_finite() && v >= 0.0);
        if !finite || mu <= 0.0 || l2 < 0.0 || floor <= 0.0 {
            return Err(Error::Usage(format!(
                "invalid smoothness constants (l1={l1}, l2={l2}, mu={mu}, floor={floor})"
            )));
        }
        if l1 < mu {
            return Err(Error::Usage(format!("l1={l1} must be at least mu={mu}")));
        }
        let kappa = l1 / mu;
        let l2_eff = l2.max(floor);
        Ok(Self {
            l0,
            l1,
            l2: l2_eff,
            l2_declared: l2,
            mu,
            kappa,
            l_g: l2_eff * (1.0 + kappa).powi(2),
            l_phi: l2_eff * (1.0 + kappa).powi(3),
        })
    }

    /// Declared bound `L1(1+κ)` on the spectral norm of `G(x, y)`.
    pub fn g_bound(&self) -> f64 {
        self.l1 * (1.0 + self.kappa)
    }

    pub fn require_l0(&self) -> Result<f64> {
        self.l0
            .ok_or_else(|| Error::Usage("problem declares no L0 constant".into()))
    }
}

/// Selects one of the second-order blocks of `f`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum JacobianBlock {
    /// `∇₁₁f`, maps `R^m → R^m`.
    B11,
    /// `∇₁₂f`, maps `R^n → R^m`.
    B12,
    /// `∇₂₁f`, maps `R^m → R^n`.
    B21,
    /// `∇₂₂f`, maps `R^n → R^n`.
    B22,
}

impl JacobianBlock {
    pub const ALL: [JacobianBlock; 4] = [Self::B11, Self::B12, Self::B21, Self::B22];

    pub fn input_dim(self, m: usize, n: usize) -> usize {
        match self {
            Self::B11 | Self::B21 => m,
            Self::B12 | Self::B22 => n,
        }
    }

    pub fn output_dim(self, m: usize, n: usize) -> usize {
        match self {
            Self::B11 | Self::B12 => m,
            Self::B21 | Self::B22 => n,
        }
    }
}

/// Sup-norm box on which the declared constants hold.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct OperatingBox {
    pub x_center: f64,
    pub x_radius: f64,
    pub y_center: f64,
    pub y_radius: f64,
}

impl OperatingBox {
    pub fn contains(&self, x: &VectorX, y: &VectorY) -> bool {
        x.iter().all(|v| (v - self.x_center).abs() <= self.x_radius)
            && y.iter().all(|v| (v - self.y_center).abs() <= self.y_radius)
    }
}

/// Access to `f(x, y)` and its derivatives.
///
/// Implementations must be pure: equal inputs give bit-identical outputs.
pub trait MinimaxOracle: Send + Sync {
    fn dim_x(&self) -> usize;
    fn dim_y(&self) -> usize;
    fn profile(&self) -> &SmoothnessProfile;

    fn operating_box(&self) -> Option<OperatingBox> {
        None
    }

    fn value(&self, x: &VectorX, y: &VectorY) -> f64;
    fn gradient_x(&self, x: &VectorX, y: &VectorY) -> VectorX;
    fn gradient_y(&self, x: &VectorX, y: &VectorY) -> VectorY;

    /// Product of the selected block with `v`.
    fn jacobian_product(
        &self,
        block: JacobianBlock,
        x: &VectorX,
        y: &VectorY,
        v: &DVector<f64>,
    ) -> DVector<f64>;

    fn closed_form(&self) -> Option<&dyn ClosedForm> {
        None
    }

    fn finite_sum(&self) -> Option<&dyn FiniteSum> {
        None
    }
}

/// Exact envelope quantities `y*(x)`, `Φ(x)`, `∇Φ(x)` and `∇²Φ(x)`.
pub trait ClosedForm: Send + Sync {
    fn y_star(&self, x: &VectorX) -> VectorY;
    fn phi(&self, x: &VectorX) -> f64;
    fn grad_phi(&self, x: &VectorX) -> VectorX;
    fn hess_phi(&self, x: &VectorX) -> DMatrix<f64>;

    /// Global minimum of `Φ`, when known.
    fn phi_star(&self) -> Option<f64> {
        None
    }
}

/// Per-sample access for `f = (1/N) Σ_i f_i`.
///
/// The batch methods average over an index list that may repeat indices. The
/// defaults reduce in fixed chunks so results do not depend on thread count;
/// problems with cheaper structure may override them.
pub trait FiniteSum: Send + Sync {
    fn n_samples(&self) -> usize;
    fn sample_value(&self, i: usize, x: &VectorX, y: &VectorY) -> f64;
    fn sample_gradient_x(&self, i: usize, x: &VectorX, y: &VectorY) -> VectorX;
    fn sample_gradient_y(&self, i: usize, x: &VectorX, y: &VectorY) -> VectorY;
    fn sample_jacobian_product(
        &self,
        i: usize,
        block: JacobianBlock,
        x: &VectorX,
        y: &VectorY,
        v: &DVector<f64>,
    ) -> DVector<f64>;

    fn batch_gradient_x(&self, batch: &[usize], x: &VectorX, y: &VectorY) -> VectorX {
        let sum = chunked_sum(batch.len(), x.len(), |k, acc| {
            *acc += self.sample_gradient_x(batch[k], x, y);
        });
        sum / batch.len() as f64
    }

    fn batch_gradient_y(&self, batch: &[usize], x: &VectorX, y: &VectorY) -> VectorY {
        let sum = chunked_sum(batch.len(), y.len(), |k, acc| {
            *acc += self.sample_gradient_y(batch[k], x, y);
        });
        sum / batch.len() as f64
    }

    fn batch_jacobian_product(
        &self,
        batch: &[usize],
        block: JacobianBlock,
        x: &VectorX,
        y: &VectorY,
        v: &DVector<f64>,
    ) -> DVector<f64> {
        let out = block.output_dim(x.len(), y.len());
        let sum = chunked_sum(batch.len(), out, |k, acc| {
            *acc += self.sample_jacobian_product(batch[k], block, x, y, v);
        });
        sum / batch.len() as f64
    }
}

fn check_dim(what: &'static str, expected: usize, got: usize) -> Result<()> {
    if expected == got {
        Ok(())
    } else {
        Err(Error::Dimension {
            what,
            expected,
            got,
        })
    }
}

fn check_xy(oracle: &dyn MinimaxOracle, x: &VectorX, y: &VectorY) -> Result<()> {
    check_dim("x", oracle.dim_x(), x.len())?;
    check_dim("y", oracle.dim_y(), y.len())
}

pub fn eval(oracle: &dyn MinimaxOracle, x: &VectorX, y: &VectorY) -> Result<f64> {
    check_xy(oracle, x, y)?;
    Ok(oracle.value(x, y))
}

pub fn grad_x(oracle: &dyn MinimaxOracle, x: &VectorX, y: &VectorY) -> Result<VectorX> {
    check_xy(oracle, x, y)?;
    Ok(oracle.gradient_x(x, y))
}

pub fn grad_y(oracle: &dyn MinimaxOracle, x: &VectorX, y: &VectorY) -> Result<VectorY> {
    check_xy(oracle, x, y)?;
    Ok(oracle.gradient_y(x, y))
}

pub fn jvp(
    oracle: &dyn MinimaxOracle,
    block: JacobianBlock,
    x: &VectorX,
    y: &VectorY,
    v: &DVector<f64>,
) -> Result<DVector<f64>> {
    check_xy(oracle, x, y)?;
    check_dim(
        "jvp input",
        block.input_dim(oracle.dim_x(), oracle.dim_y()),
        v.len(),
    )?;
    Ok(oracle.jacobian_product(block, x, y, v))
}

/// Jacobian-vector product by central differences of the matching gradient.
///
/// Intended for user problems without analytic second derivatives. The
/// displacement along `v / ‖v‖` has length `1e-6·(1 + ‖v‖)`.
pub fn fd_jvp(
    oracle: &dyn MinimaxOracle,
    block: JacobianBlock,
    x: &VectorX,
    y: &VectorY,
    v: &DVector<f64>,
) -> DVector<f64> {
    let norm = v.norm();
    let out = block.output_dim(x.len(), y.len());
    if norm == 0.0 {
        return DVector::zeros(out);
    }
    let h = 1e-6 * (1.0 + norm);
    let dir = v * (h / norm);
    let diff = match block {
        JacobianBlock::B11 => oracle.gradient_x(&(x + &dir), y) - oracle.gradient_x(&(x - &dir), y),
        JacobianBlock::B12 => oracle.gradient_x(x, &(y + &dir)) - oracle.gradient_x(x, &(y - &dir)),
        JacobianBlock::B21 => oracle.gradient_y(&(x + &dir), y) - oracle.gradient_y(&(x - &dir), y),
        JacobianBlock::B22 => oracle.gradient_y(x, &(y + &dir)) - oracle.gradient_y(x, &(y - &dir)),
    };
    diff * (norm / (2.0 * h))
}

/// A single summand `f_i` of a finite-sum oracle, viewed as an oracle.
pub struct SampleView<'a> {
    parent: &'a dyn MinimaxOracle,
    sum: &'a dyn FiniteSum,
    index: usize,
}

impl SampleView<'_> {
    pub fn index(&self) -> usize {
        self.index
    }
}

pub fn per_sample_oracles(oracle: &dyn MinimaxOracle, index: usize) -> Result<SampleView<'_>> {
    let sum = oracle
        .finite_sum()
        .ok_or_else(|| Error::Usage("oracle is not a finite sum".into()))?;
    if index >= sum.n_samples() {
        return Err(Error::SampleIndex {
            index,
            len: sum.n_samples(),
        });
    }
    Ok(SampleView {
        parent: oracle,
        sum,
        index,
    })
}

impl MinimaxOracle for SampleView<'_> {
    fn dim_x(&self) -> usize {
        self.parent.dim_x()
    }
    fn dim_y(&self) -> usize {
        self.parent.dim_y()
    }
    fn profile(&self) -> &SmoothnessProfile {
        self.parent.profile()
    }
    fn operating_box(&self) -> Option<OperatingBox> {
        self.parent.operating_box()
    }
    fn value(&self, x: &VectorX, y: &VectorY) -> f64 {
        self.sum.sample_value(self.index, x, y)
    }
    fn gradient_x(&self, x: &VectorX, y: &VectorY) -> VectorX {
        self.sum.sample_gradient_x(self.index, x, y)
    }
    fn gradient_y(&self, x: &VectorX, y: &VectorY) -> VectorY {
        self.sum.sample_gradient_y(self.index, x, y)
    }
    fn jacobian_product(
        &self,
        block: JacobianBlock,
        x: &VectorX,
        y: &VectorY,
        v: &DVector<f64>,
    ) -> DVector<f64> {
        self.sum.sample_jacobian_product(self.index, block, x, y, v)
    }
}
