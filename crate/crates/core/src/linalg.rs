//! Small linear-algebra kit: operators, conjugate gradients, dense assembly
//! and smallest-eigenvalue estimation.

use nalgebra::{DMatrix, DVector, SymmetricEigen};
use rand_distr::{Distribution, StandardNormal};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::rng::{substream, Block};

/// Largest dimension [`assemble_dense`] accepts by default.
pub const DENSE_CAP: usize = 512;

/// Items per chunk in [`chunked_sum`].
pub const REDUCTION_CHUNK: usize = 256;

/// A symmetric linear map given only through products.
pub trait LinearOperator: Sync {
    fn dim(&self) -> usize;
    fn apply(&self, v: &DVector<f64>) -> DVector<f64>;
}

impl LinearOperator for DMatrix<f64> {
    fn dim(&self) -> usize {
        self.nrows()
    }
    fn apply(&self, v: &DVector<f64>) -> DVector<f64> {
        self * v
    }
}

/// Wraps a closure as a [`LinearOperator`].
pub struct FnOperator<F> {
    dim: usize,
    f: F,
}

impl<F: Fn(&DVector<f64>) -> DVector<f64> + Sync> FnOperator<F> {
    pub fn new(dim: usize, f: F) -> Self {
        Self { dim, f }
    }
}

impl<F: Fn(&DVector<f64>) -> DVector<f64> + Sync> LinearOperator for FnOperator<F> {
    fn dim(&self) -> usize {
        self.dim
    }
    fn apply(&self, v: &DVector<f64>) -> DVector<f64> {
        (self.f)(v)
    }
}

/// Sums `count` contributions into a vector of length `dim`.
///
/// Chunks of [`REDUCTION_CHUNK`] items are accumulated in parallel and the
/// chunk results are then added sequentially in chunk order, so the result is
/// bit-identical for any number of worker threads.
pub fn chunked_sum<F>(count: usize, dim: usize, f: F) -> DVector<f64>
where
    F: Fn(usize, &mut DVector<f64>) + Sync,
{
    let run = |c: usize| {
        let mut acc = DVector::zeros(dim);
        for k in c * REDUCTION_CHUNK..((c + 1) * REDUCTION_CHUNK).min(count) {
            f(k, &mut acc);
        }
        acc
    };
    let chunks = count.div_ceil(REDUCTION_CHUNK);
    if chunks <= 1 {
        return run(0);
    }
    let partials: Vec<DVector<f64>> = (0..chunks).into_par_iter().map(run).collect();
    let mut total = DVector::zeros(dim);
    for p in &partials {
        total += p;
    }
    total
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CgReport {
    pub solution: DVector<f64>,
    pub residual_norm: f64,
    pub iterations: usize,
    pub converged: bool,
}

/// Conjugate gradients from a zero start.
///
/// Stops once `‖A·x − rhs‖ ≤ tol·(1 + ‖rhs‖)`. The reported residual is
/// recomputed from the final iterate.
pub fn cg_solve(
    a: &dyn LinearOperator,
    rhs: &DVector<f64>,
    tol: f64,
    max_iter: usize,
) -> Result<CgReport> {
    if a.dim() != rhs.len() {
        return Err(Error::Dimension {
            what: "cg rhs",
            expected: a.dim(),
            got: rhs.len(),
        });
    }
    if !(tol > 0.0) {
        return Err(Error::Usage(format!("cg tolerance must be positive, got {tol}")));
    }
    let target = tol * (1.0 + rhs.norm());
    let mut x = DVector::zeros(rhs.len());
    let mut r = rhs.clone();
    let mut p = r.clone();
    let mut rr = r.norm_squared();
    let mut iterations = 0;
    while rr.sqrt() > target && iterations < max_iter {
        let ap = a.apply(&p);
        let pap = p.dot(&ap);
        if !pap.is_finite() || !rr.is_finite() {
            return Err(Error::NonFinite("cg_solve"));
        }
        if pap <= 0.0 {
            return Err(Error::Usage("cg operator is not positive definite".into()));
        }
        let step = rr / pap;
        x.axpy(step, &p, 1.0);
        r.axpy(-step, &ap, 1.0);
        let rr_next = r.norm_squared();
        p = &r + &p * (rr_next / rr);
        rr = rr_next;
        iterations += 1;
    }
    let residual_norm = (a.apply(&x) - rhs).norm();
    if !residual_norm.is_finite() {
        return Err(Error::NonFinite("cg_solve"));
    }
    Ok(CgReport {
        solution: x,
        residual_norm,
        iterations,
        converged: residual_norm <= target,
    })
}

pub fn assemble_dense(a: &dyn LinearOperator) -> Result<DMatrix<f64>> {
    assemble_dense_with_cap(a, DENSE_CAP)
}

/// Columns `A·e_j`, symmetrised after checking the asymmetry is below
/// `1e-8·max(1, max|A_ij|)`.
pub fn assemble_dense_with_cap(a: &dyn LinearOperator, cap: usize) -> Result<DMatrix<f64>> {
    let dim = a.dim();
    if dim > cap {
        return Err(Error::DenseCap { dim, cap });
    }
    let mut m = DMatrix::zeros(dim, dim);
    for j in 0..dim {
        let mut e = DVector::zeros(dim);
        e[j] = 1.0;
        m.set_column(j, &a.apply(&e));
    }
    if m.iter().any(|v| !v.is_finite()) {
        return Err(Error::NonFinite("assemble_dense"));
    }
    let scale = m.amax().max(1.0);
    let asymmetry = (&m - m.transpose()).amax();
    if asymmetry > 1e-8 * scale {
        return Err(Error::Asymmetric { asymmetry });
    }
    Ok((&m + m.transpose()) * 0.5)
}

/// Eigenvalues in ascending order with matching eigenvector columns.
pub fn sorted_eigen(m: &DMatrix<f64>) -> (DVector<f64>, DMatrix<f64>) {
    let eig = SymmetricEigen::new(m.clone());
    let n = m.nrows();
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&i, &j| eig.eigenvalues[i].total_cmp(&eig.eigenvalues[j]));
    let vals = DVector::from_iterator(n, order.iter().map(|&i| eig.eigenvalues[i]));
    let mut vecs = DMatrix::zeros(n, n);
    for (k, &i) in order.iter().enumerate() {
        vecs.set_column(k, &eig.eigenvectors.column(i));
    }
    (vals, vecs)
}

pub fn dense_min_eigenvalue(m: &DMatrix<f64>) -> f64 {
    SymmetricEigen::new(m.clone())
        .eigenvalues
        .iter()
        .copied()
        .fold(f64::INFINITY, f64::min)
}

/// Smallest eigenvalue of a symmetric operator.
///
/// Uses a dense eigensolve up to [`DENSE_CAP`] and Lanczos on `c·I − A`
/// beyond it, with `c = upper_bound`.
pub fn min_eigenvalue(a: &dyn LinearOperator, tol: f64, upper_bound: f64) -> Result<f64> {
    if a.dim() == 0 {
        return Err(Error::Usage("empty operator".into()));
    }
    if a.dim() <= DENSE_CAP {
        Ok(dense_min_eigenvalue(&assemble_dense(a)?))
    } else {
        lanczos_min_eigenvalue(a, tol, upper_bound, a.dim())
    }
}

/// Lanczos with full reorthogonalisation on the shifted operator `c·I − A`.
///
/// Starts from the normalised all-ones vector. On breakdown before the space
/// is exhausted a seeded random vector, orthogonalised against the basis,
/// continues the recurrence. Converges when the Ritz residual of the top
/// shifted pair is at most `tol`.
pub fn lanczos_min_eigenvalue(
    a: &dyn LinearOperator,
    tol: f64,
    shift: f64,
    max_steps: usize,
) -> Result<f64> {
    let n = a.dim();
    let max_steps = max_steps.min(n).max(1);
    let apply = |v: &DVector<f64>| v * shift - a.apply(v);
    let mut basis: Vec<DVector<f64>> = Vec::with_capacity(max_steps);
    let mut alphas: Vec<f64> = Vec::new();
    let mut betas: Vec<f64> = Vec::new();
    let mut q = DVector::from_element(n, 1.0 / (n as f64).sqrt());
    let mut restarts = 0u64;
    let mut estimate = f64::NAN;
    let mut residual = f64::INFINITY;
    let scale = shift.abs().max(1.0);
    for k in 0..max_steps {
        basis.push(q.clone());
        let mut w = apply(&q);
        let alpha = q.dot(&w);
        alphas.push(alpha);
        for b in &basis {
            let c = b.dot(&w);
            w.axpy(-c, b, 1.0);
        }
        for b in &basis {
            let c = b.dot(&w);
            w.axpy(-c, b, 1.0);
        }
        let beta = w.norm();
        if !beta.is_finite() || !alpha.is_finite() {
            return Err(Error::NonFinite("lanczos"));
        }
        let dim = alphas.len();
        let t = DMatrix::from_fn(dim, dim, |i, j| {
            if i == j {
                alphas[i]
            } else if i + 1 == j {
                betas[i]
            } else if j + 1 == i {
                betas[j]
            } else {
                0.0
            }
        });
        let (vals, vecs) = sorted_eigen(&t);
        let theta = vals[dim - 1];
        estimate = shift - theta;
        residual = (beta * vecs[(dim - 1, dim - 1)]).abs();
        if k + 1 == n {
            return Ok(estimate);
        }
        let breakdown = beta <= 1e-12 * scale;
        if residual <= tol && !breakdown {
            return Ok(estimate);
        }
        if breakdown {
            restarts += 1;
            let mut rng = substream(0x1a2c_205f, restarts, Block::Aux);
            let mut r = DVector::from_fn(n, |_, _| StandardNormal.sample(&mut rng));
            for _ in 0..2 {
                for b in &basis {
                    let c = b.dot(&r);
                    r.axpy(-c, b, 1.0);
                }
            }
            q = &r / r.norm();
            betas.push(0.0);
        } else {
            q = w / beta;
            betas.push(beta);
        }
    }
    Err(Error::LanczosNotConverged { estimate, residual })
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    #[test]
    fn cg_identity_single_iteration() {
        let a = DMatrix::<f64>::identity(3, 3);
        let rhs = DVector::from_vec(vec![1.0, 2.0, 3.0]);
        let rep = cg_solve(&a, &rhs, 1e-12, 10).unwrap();
        assert!(rep.converged);
        assert_eq!(rep.iterations, 1);
        assert_relative_eq!(rep.solution, rhs, epsilon = 1e-14);
    }

    #[test]
    fn cg_diagonal_and_zero_rhs() {
        let a = DMatrix::from_diagonal(&DVector::from_vec(vec![1.0, 2.0]));
        let rep = cg_solve(&a, &DVector::from_vec(vec![1.0, 2.0]), 1e-12, 10).unwrap();
        assert_relative_eq!(rep.solution, DVector::from_element(2, 1.0), epsilon = 1e-12);
        let zero = cg_solve(&a, &DVector::zeros(2), 1e-12, 10).unwrap();
        assert_eq!(zero.solution, DVector::zeros(2));
        assert_eq!(zero.residual_norm, 0.0);
        assert_eq!(zero.iterations, 0);
    }

    #[test]
    fn cg_nan_is_an_error() {
        let a = FnOperator::new(2, |v: &DVector<f64>| v * f64::NAN);
        assert!(matches!(
            cg_solve(&a, &DVector::from_element(2, 1.0), 1e-10, 5),
            Err(Error::NonFinite(_))
        ));
    }

    #[test]
    fn cg_reports_non_convergence() {
        let a = DMatrix::from_diagonal(&DVector::from_vec(vec![1.0, 10.0, 100.0]));
        let rep = cg_solve(&a, &DVector::from_element(3, 1.0), 1e-14, 1).unwrap();
        assert!(!rep.converged);
    }

    #[test]
    fn assemble_scaled_identity() {
        let a = FnOperator::new(2, |v: &DVector<f64>| v * 2.0);
        let m = assemble_dense(&a).unwrap();
        assert_eq!(m, DMatrix::from_diagonal_element(2, 2, 2.0));
    }

    #[test]
    fn assemble_rejects_asymmetric_and_oversized() {
        let skew = DMatrix::from_row_slice(2, 2, &[0.0, 1.0, 0.0, 0.0]);
        assert!(matches!(assemble_dense(&skew), Err(Error::Asymmetric { .. })));
        let big = FnOperator::new(DENSE_CAP + 1, |v: &DVector<f64>| v.clone());
        assert!(matches!(assemble_dense(&big), Err(Error::DenseCap { .. })));
    }

    #[test]
    fn min_eigenvalue_diagonal() {
        let a = DMatrix::from_diagonal(&DVector::from_vec(vec![1.0, -2.0]));
        assert_relative_eq!(min_eigenvalue(&a, 1e-10, 3.0).unwrap(), -2.0, epsilon = 1e-12);
        assert_relative_eq!(
            lanczos_min_eigenvalue(&a, 1e-10, 3.0, 2).unwrap(),
            -2.0,
            epsilon = 1e-10
        );
    }

    #[test]
    fn lanczos_recovers_from_breakdown() {
        // The all-ones start lies in an eigenspace, so the recurrence breaks
        // down after one step.
        let a = DMatrix::from_element(3, 3, 1.0) - DMatrix::from_diagonal_element(3, 3, 2.0);
        let lz = lanczos_min_eigenvalue(&a, 1e-10, 5.0, 3).unwrap();
        assert_relative_eq!(lz, -2.0, epsilon = 1e-9);
    }

    #[test]
    fn chunked_sum_independent_of_threads() {
        let f = |k: usize, acc: &mut DVector<f64>| {
            acc[0] += (k as f64).sqrt().sin();
            acc[1] += 1.0 / (1.0 + k as f64);
        };
        let a = chunked_sum(10_000, 2, f);
        let pool = rayon::ThreadPoolBuilder::new().num_threads(1).build().unwrap();
        let b = pool.install(|| chunked_sum(10_000, 2, f));
        assert_eq!(a, b);
    }
}
