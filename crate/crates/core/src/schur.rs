//! The Schur-complement operator `G(x, y) = ∇₁₁f − ∇₁₂f (∇₂₂f)⁻¹ ∇₂₁f`.
//!
//! `G·u` is formed from four Jacobian-vector products and one inner
//! conjugate-gradient solve against `−∇₂₂f`, which is positive definite under
//! strong concavity. The sub-sampled variant replaces each block by its mean
//! over an independent with-replacement batch.

use std::sync::Mutex;

use nalgebra::{DMatrix, DVector};
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg::{assemble_dense, cg_solve, CgReport, FnOperator, LinearOperator};
use crate::oracle::{FiniteSum, JacobianBlock, MinimaxOracle, VectorX, VectorY};
use crate::rng::{substream, Block};

/// Default relative tolerance of the inner solve.
pub const DEFAULT_CG_TOL: f64 = 1e-10;

fn cg_max_iter(n: usize) -> usize {
    2 * n + 100
}

/// Sample indices drawn with replacement, or the full index set.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Batch {
    indices: Vec<usize>,
    requested: usize,
    exact: bool,
}

impl Batch {
    pub fn full(n: usize) -> Self {
        Self {
            indices: (0..n).collect(),
            requested: n,
            exact: true,
        }
    }

    /// Draws `requested` indices uniformly from `0..n`; a request of at least
    /// `n` yields the full set flagged exact.
    pub fn sample<R: Rng + ?Sized>(requested: usize, n: usize, rng: &mut R) -> Result<Self> {
        if requested == 0 || n == 0 {
            return Err(Error::Usage("batches must be non-empty".into()));
        }
        if requested >= n {
            let mut b = Self::full(n);
            b.requested = requested;
            return Ok(b);
        }
        let indices = (0..requested).map(|_| rng.random_range(0..n)).collect();
        Ok(Self {
            indices,
            requested,
            exact: false,
        })
    }

    pub fn from_indices(indices: Vec<usize>, n: usize) -> Result<Self> {
        if indices.is_empty() {
            return Err(Error::Usage("batches must be non-empty".into()));
        }
        if let Some(&bad) = indices.iter().find(|&&i| i >= n) {
            return Err(Error::SampleIndex { index: bad, len: n });
        }
        Ok(Self {
            requested: indices.len(),
            indices,
            exact: false,
        })
    }

    pub fn indices(&self) -> &[usize] {
        &self.indices
    }
    pub fn len(&self) -> usize {
        self.indices.len()
    }
    pub fn is_empty(&self) -> bool {
        self.indices.is_empty()
    }
    pub fn is_exact(&self) -> bool {
        self.exact
    }
    pub fn requested(&self) -> usize {
        self.requested
    }
}

/// The five batches used by one stochastic iteration.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct BatchSet {
    pub b1: Batch,
    pub b11: Batch,
    pub b12: Batch,
    pub b21: Batch,
    pub b22: Batch,
}

impl BatchSet {
    pub fn exact(n: usize) -> Self {
        let b = Batch::full(n);
        Self {
            b1: b.clone(),
            b11: b.clone(),
            b12: b.clone(),
            b21: b.clone(),
            b22: b,
        }
    }

    /// Draws each batch from its own substream keyed by `(iteration, block)`.
    /// `requested` is ordered `[b1, b11, b12, b21, b22]`.
    pub fn draw(requested: [usize; 5], n: usize, seed: u64, iteration: u64) -> Result<Self> {
        let blocks = [Block::B1, Block::B11, Block::B12, Block::B21, Block::B22];
        let mut out = Vec::with_capacity(5);
        for (size, block) in requested.into_iter().zip(blocks) {
            let mut rng = substream(seed, iteration, block);
            out.push(Batch::sample(size, n, &mut rng)?);
        }
        let mut it = out.into_iter();
        Ok(Self {
            b1: it.next().unwrap(),
            b11: it.next().unwrap(),
            b12: it.next().unwrap(),
            b21: it.next().unwrap(),
            b22: it.next().unwrap(),
        })
    }

    pub fn sizes(&self) -> [usize; 5] {
        [
            self.b1.len(),
            self.b11.len(),
            self.b12.len(),
            self.b21.len(),
            self.b22.len(),
        ]
    }

    pub fn all_exact(&self) -> bool {
        [&self.b1, &self.b11, &self.b12, &self.b21, &self.b22]
            .iter()
            .all(|b| b.is_exact())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GApplyReport {
    pub result: VectorX,
    pub cg: CgReport,
}

fn schur_chain<F>(blocks: F, u: &VectorX, n: usize, cg_tol: f64) -> Result<GApplyReport>
where
    F: Fn(JacobianBlock, &DVector<f64>) -> DVector<f64> + Sync,
{
    let z1 = blocks(JacobianBlock::B11, u);
    let z2 = blocks(JacobianBlock::B21, u);
    let neg_b22 = FnOperator::new(n, |v: &DVector<f64>| -blocks(JacobianBlock::B22, v));
    let cg = cg_solve(&neg_b22, &(-z2), cg_tol, cg_max_iter(n))?;
    if !cg.converged {
        return Err(Error::CgNotConverged(Box::new(cg)));
    }
    let z4 = blocks(JacobianBlock::B12, &cg.solution);
    let result = z1 - z4;
    if result.iter().any(|v| !v.is_finite()) {
        return Err(Error::NonFinite("g_apply"));
    }
    Ok(GApplyReport { result, cg })
}

fn check_u(oracle: &dyn MinimaxOracle, u: &VectorX) -> Result<()> {
    if u.len() != oracle.dim_x() {
        return Err(Error::Dimension {
            what: "u",
            expected: oracle.dim_x(),
            got: u.len(),
        });
    }
    Ok(())
}

/// `G(x, y)·u` through the Jacobian-vector-product chain.
pub fn g_apply(
    oracle: &dyn MinimaxOracle,
    x: &VectorX,
    y: &VectorY,
    u: &VectorX,
    cg_tol: f64,
) -> Result<GApplyReport> {
    check_u(oracle, u)?;
    schur_chain(
        |b, v| oracle.jacobian_product(b, x, y, v),
        u,
        oracle.dim_y(),
        cg_tol,
    )
}

fn finite_sum(oracle: &dyn MinimaxOracle) -> Result<&dyn FiniteSum> {
    oracle
        .finite_sum()
        .ok_or_else(|| Error::Usage("oracle is not a finite sum".into()))
}

fn batch_product(
    oracle: &dyn MinimaxOracle,
    sum: &dyn FiniteSum,
    batch: &Batch,
    block: JacobianBlock,
    x: &VectorX,
    y: &VectorY,
    v: &DVector<f64>,
) -> DVector<f64> {
    if batch.is_exact() {
        oracle.jacobian_product(block, x, y, v)
    } else {
        sum.batch_jacobian_product(batch.indices(), block, x, y, v)
    }
}

/// Sub-sampled `Ĝ(x, y)·u`, each block averaged over its own batch.
pub fn stoch_g_apply(
    oracle: &dyn MinimaxOracle,
    x: &VectorX,
    y: &VectorY,
    u: &VectorX,
    batches: &BatchSet,
    cg_tol: f64,
) -> Result<GApplyReport> {
    check_u(oracle, u)?;
    let sum = finite_sum(oracle)?;
    schur_chain(
        |b, v| {
            let batch = match b {
                JacobianBlock::B11 => &batches.b11,
                JacobianBlock::B12 => &batches.b12,
                JacobianBlock::B21 => &batches.b21,
                JacobianBlock::B22 => &batches.b22,
            };
            batch_product(oracle, sum, batch, b, x, y, v)
        },
        u,
        oracle.dim_y(),
        cg_tol,
    )
}

/// Mini-batch estimate of `∇₁f(x, y)`.
pub fn stoch_grad_x(oracle: &dyn MinimaxOracle, x: &VectorX, y: &VectorY, b1: &Batch) -> Result<VectorX> {
    let sum = finite_sum(oracle)?;
    if b1.is_empty() {
        return Err(Error::Usage("empty gradient batch".into()));
    }
    if b1.is_exact() {
        Ok(oracle.gradient_x(x, y))
    } else {
        Ok(sum.batch_gradient_x(b1.indices(), x, y))
    }
}

/// `G(x, y)` (or `Ĝ` when batches are given) as a [`LinearOperator`].
///
/// Inner-solve failures cannot surface through [`LinearOperator::apply`], so
/// they are stored and must be collected with [`GOperator::take_failure`].
pub struct GOperator<'a> {
    oracle: &'a dyn MinimaxOracle,
    x: &'a VectorX,
    y: &'a VectorY,
    batches: Option<&'a BatchSet>,
    cg_tol: f64,
    failure: Mutex<Option<Error>>,
}

impl<'a> GOperator<'a> {
    pub fn new(oracle: &'a dyn MinimaxOracle, x: &'a VectorX, y: &'a VectorY, cg_tol: f64) -> Self {
        Self {
            oracle,
            x,
            y,
            batches: None,
            cg_tol,
            failure: Mutex::new(None),
        }
    }

    pub fn sampled(
        oracle: &'a dyn MinimaxOracle,
        x: &'a VectorX,
        y: &'a VectorY,
        batches: &'a BatchSet,
        cg_tol: f64,
    ) -> Self {
        let mut op = Self::new(oracle, x, y, cg_tol);
        op.batches = Some(batches);
        op
    }

    pub fn apply_checked(&self, u: &VectorX) -> Result<GApplyReport> {
        match self.batches {
            None => g_apply(self.oracle, self.x, self.y, u, self.cg_tol),
            Some(b) => stoch_g_apply(self.oracle, self.x, self.y, u, b, self.cg_tol),
        }
    }

    pub fn take_failure(&self) -> Option<Error> {
        self.failure.lock().unwrap().take()
    }

    pub fn dense(&self) -> Result<DMatrix<f64>> {
        let m = assemble_dense(self);
        if let Some(e) = self.take_failure() {
            return Err(e);
        }
        m
    }
}

impl LinearOperator for GOperator<'_> {
    fn dim(&self) -> usize {
        self.oracle.dim_x()
    }

    fn apply(&self, v: &DVector<f64>) -> DVector<f64> {
        match self.apply_checked(v) {
            Ok(r) => r.result,
            Err(e) => {
                self.failure.lock().unwrap().get_or_insert(e);
                DVector::from_element(v.len(), f64::NAN)
            }
        }
    }
}

/// Dense `G(x, y)` assembled column by column from [`g_apply`].
pub fn g_dense(oracle: &dyn MinimaxOracle, x: &VectorX, y: &VectorY, cg_tol: f64) -> Result<DMatrix<f64>> {
    GOperator::new(oracle, x, y, cg_tol).dense()
}

/// Dense `Ĝ(x, y)` for the given batches.
pub fn stoch_g_dense(
    oracle: &dyn MinimaxOracle,
    x: &VectorX,
    y: &VectorY,
    batches: &BatchSet,
    cg_tol: f64,
) -> Result<DMatrix<f64>> {
    GOperator::sampled(oracle, x, y, batches, cg_tol).dense()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::testbed::{make_robust_sum, QuadraticProblem};
    use approx::assert_relative_eq;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn v(xs: &[f64]) -> DVector<f64> {
        DVector::from_column_slice(xs)
    }

    #[test]
    fn scalar_schur_complement() {
        let p = QuadraticProblem::scalar(2.0, 0.0, 1.0, 1.0, 0.0).unwrap();
        let (x, y) = (v(&[0.4]), v(&[-0.3]));
        let r = g_apply(&p, &x, &y, &v(&[1.0]), 1e-12).unwrap();
        assert_relative_eq!(r.result[0], 3.0, epsilon = 1e-12);
        assert_eq!(g_apply(&p, &x, &y, &v(&[0.0]), 1e-12).unwrap().result[0], 0.0);
        let g = g_dense(&p, &x, &y, 1e-12).unwrap();
        assert_relative_eq!(g[(0, 0)], 3.0, epsilon = 1e-12);
    }

    #[test]
    fn zero_coupling_reduces_to_b11() {
        let p = QuadraticProblem::scalar(2.5, 0.1, 0.0, 2.0, 0.3).unwrap();
        let (x, y) = (v(&[1.0]), v(&[1.0]));
        let r = g_apply(&p, &x, &y, &v(&[2.0]), 1e-12).unwrap();
        assert_eq!(r.result[0], 5.0);
    }

    #[test]
    fn batch_sampling_rules() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let b = Batch::sample(5, 10, &mut rng).unwrap();
        assert_eq!(b.len(), 5);
        assert!(!b.is_exact());
        assert!(b.indices().iter().all(|&i| i < 10));
        let full = Batch::sample(25, 10, &mut rng).unwrap();
        assert!(full.is_exact());
        assert_eq!(full.indices(), (0..10).collect::<Vec<_>>().as_slice());
        assert_eq!(full.requested(), 25);
        assert!(Batch::sample(0, 10, &mut rng).is_err());
        assert!(Batch::from_indices(vec![3, 10], 10).is_err());
    }

    #[test]
    fn batch_draws_are_keyed() {
        let a = BatchSet::draw([4, 5, 6, 7, 8], 100, 9, 3).unwrap();
        let b = BatchSet::draw([4, 5, 6, 7, 8], 100, 9, 3).unwrap();
        let c = BatchSet::draw([4, 5, 6, 7, 8], 100, 9, 4).unwrap();
        assert_eq!(a, b);
        assert_ne!(a, c);
        assert_eq!(a.sizes(), [4, 5, 6, 7, 8]);
    }

    #[test]
    fn exact_batches_match_full_operator() {
        let p = make_robust_sum(40, 3, 2, 1.0);
        let x = v(&[0.1, -0.2, 0.05]);
        let y = DVector::from_element(40, 1.1);
        let u = v(&[0.3, 1.0, -0.4]);
        let exact = BatchSet::exact(40);
        let full = g_apply(&p, &x, &y, &u, 1e-12).unwrap().result;
        let est = stoch_g_apply(&p, &x, &y, &u, &exact, 1e-12).unwrap().result;
        assert_relative_eq!(full, est, epsilon = 1e-8);
        let g = stoch_grad_x(&p, &x, &y, &exact.b1).unwrap();
        assert_relative_eq!(g, p.gradient_x(&x, &y), epsilon = 1e-12);
    }

    #[test]
    fn goperator_flags_inner_failure() {
        let p = QuadraticProblem::scalar(1.0, 0.0, 1.0, 1.0, 0.0).unwrap();
        let (x, y) = (v(&[0.0]), v(&[0.0]));
        let op = GOperator::new(&p, &x, &y, 1e-10);
        assert!(op.take_failure().is_none());
        assert!(op.dense().is_ok());
    }
}
