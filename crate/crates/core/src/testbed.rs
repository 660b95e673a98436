//! Test problems with closed-form envelopes.
//!
//! * [`QuadraticProblem`]: `f = ½xᵀAx + bᵀx + xᵀBy − ½yᵀCy + cᵀy`.
//! * [`StrictSaddle`]: `f = ¼x₂⁴ − x₂² + ½x₁² + x₂y − ½y²`, whose envelope has a
//!   strict saddle at the origin and minima at `(0, ±1)`.
//! * [`RobustSum`]: a reweighted least-squares finite sum with exact `y*`.
//!
//! Declared constants hold on each problem's operating box.

use nalgebra::{DMatrix, DVector, SymmetricEigen};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::oracle::{
    ClosedForm, FiniteSum, JacobianBlock, MinimaxOracle, OperatingBox, SmoothnessProfile, VectorX,
    VectorY,
};

fn spectral_radius(m: &DMatrix<f64>) -> f64 {
    SymmetricEigen::new(m.clone()).eigenvalues.amax()
}

fn gaussian_matrix(rng: &mut ChaCha8Rng, rows: usize, cols: usize) -> DMatrix<f64> {
    DMatrix::from_fn(rows, cols, |_, _| StandardNormal.sample(rng))
}

fn random_orthogonal(rng: &mut ChaCha8Rng, n: usize) -> DMatrix<f64> {
    gaussian_matrix(rng, n, n).qr().q()
}

fn with_spectrum(q: &DMatrix<f64>, eig: &[f64]) -> DMatrix<f64> {
    let d = DMatrix::from_diagonal(&DVector::from_column_slice(eig));
    let m = q * d * q.transpose();
    (&m + m.transpose()) * 0.5
}

/// Data of a quadratic minimax problem.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct QuadraticSpec {
    pub a: DMatrix<f64>,
    pub b: DVector<f64>,
    pub coupling: DMatrix<f64>,
    pub c_mat: DMatrix<f64>,
    pub c: DVector<f64>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum QuadraticVariant {
    /// `A + BC⁻¹Bᵀ ≻ 0`.
    Convex,
    /// `A + BC⁻¹Bᵀ` has exactly one negative eigenvalue.
    Saddle,
}

#[derive(Debug, Clone)]
pub struct QuadraticProblem {
    spec: QuadraticSpec,
    c_inv: DMatrix<f64>,
    hess: DMatrix<f64>,
    shift: DVector<f64>,
    constant: f64,
    profile: SmoothnessProfile,
}

impl QuadraticProblem {
    pub fn from_spec(spec: QuadraticSpec) -> Result<Self> {
        let (m, n) = (spec.a.nrows(), spec.c_mat.nrows());
        if spec.a.ncols() != m || spec.b.len() != m || spec.coupling.shape() != (m, n) {
            return Err(Error::Usage("inconsistent quadratic dimensions".into()));
        }
        if spec.c_mat.ncols() != n || spec.c.len() != n || m == 0 || n == 0 {
            return Err(Error::Usage("inconsistent quadratic dimensions".into()));
        }
        let sym = |x: &DMatrix<f64>| (x - x.transpose()).amax() <= 1e-12 * x.amax().max(1.0);
        if !sym(&spec.a) || !sym(&spec.c_mat) {
            return Err(Error::Usage("A and C must be symmetric".into()));
        }
        let c_eig = SymmetricEigen::new(spec.c_mat.clone()).eigenvalues;
        let mu = c_eig.min();
        if !(mu > 0.0) {
            return Err(Error::Usage("C must be positive definite".into()));
        }
        let c_inv = spec
            .c_mat
            .clone()
            .cholesky()
            .ok_or_else(|| Error::Usage("C must be positive definite".into()))?
            .inverse();
        let bc = &spec.coupling * &c_inv;
        let hess = &spec.a + &bc * spec.coupling.transpose();
        let hess = (&hess + hess.transpose()) * 0.5;
        let shift = &spec.b + &bc * &spec.c;
        let constant = 0.5 * spec.c.dot(&(&c_inv * &spec.c));
        let mut joint = DMatrix::zeros(m + n, m + n);
        joint.view_mut((0, 0), (m, m)).copy_from(&spec.a);
        joint.view_mut((0, m), (m, n)).copy_from(&spec.coupling);
        joint.view_mut((m, 0), (n, m)).copy_from(&spec.coupling.transpose());
        joint.view_mut((m, m), (n, n)).copy_from(&(-&spec.c_mat));
        let l1 = spectral_radius(&joint).max(mu);
        let profile = SmoothnessProfile::new(None, l1, 0.0, mu)?;
        Ok(Self {
            spec,
            c_inv,
            hess,
            shift,
            constant,
            profile,
        })
    }

    /// One-dimensional `f = ½a·x² + b·x + k·xy − ½c·y² + d·y`.
    pub fn scalar(a: f64, b: f64, k: f64, c: f64, d: f64) -> Result<Self> {
        let one = |v| DMatrix::from_element(1, 1, v);
        Self::from_spec(QuadraticSpec {
            a: one(a),
            b: DVector::from_element(1, b),
            coupling: one(k),
            c_mat: one(c),
            c: DVector::from_element(1, d),
        })
    }

    pub fn spec(&self) -> &QuadraticSpec {
        &self.spec
    }

    /// `A + BC⁻¹Bᵀ`.
    pub fn envelope_hessian(&self) -> &DMatrix<f64> {
        &self.hess
    }

    /// Unique minimiser of `Φ` when the envelope is strictly convex.
    pub fn minimizer(&self) -> Option<VectorX> {
        let chol = self.hess.clone().cholesky()?;
        Some(-chol.solve(&self.shift))
    }
}

/// Random quadratic with `C`'s spectrum spread over `[1, conditioning]`.
pub fn make_quadratic(m: usize, n: usize, seed: u64, conditioning: f64) -> QuadraticProblem {
    make_quadratic_with(m, n, seed, conditioning, QuadraticVariant::Convex)
}

pub fn make_quadratic_with(
    m: usize,
    n: usize,
    seed: u64,
    conditioning: f64,
    variant: QuadraticVariant,
) -> QuadraticProblem {
    assert!(m >= 1 && n >= 1, "quadratic dimensions must be positive");
    let conditioning = conditioning.max(1.0);
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let qc = random_orthogonal(&mut rng, n);
    let c_spec: Vec<f64> = (0..n)
        .map(|i| {
            if n == 1 {
                1.0
            } else {
                1.0 + (conditioning - 1.0) * i as f64 / (n - 1) as f64
            }
        })
        .collect();
    let c_mat = with_spectrum(&qc, &c_spec);
    let coupling = gaussian_matrix(&mut rng, m, n) / (n as f64).sqrt();
    let qp = random_orthogonal(&mut rng, m);
    let mut p_spec: Vec<f64> = (0..m).map(|_| rng.random_range(0.5..2.0)).collect();
    if variant == QuadraticVariant::Saddle {
        p_spec[0] = -1.0;
    }
    let p = with_spectrum(&qp, &p_spec);
    let c_inv = c_mat.clone().cholesky().expect("C is positive definite").inverse();
    let a = &p - &coupling * c_inv * coupling.transpose();
    let a = (&a + a.transpose()) * 0.5;
    let b = DVector::from_fn(m, |_, _| StandardNormal.sample(&mut rng));
    let c = DVector::from_fn(n, |_, _| StandardNormal.sample(&mut rng));
    QuadraticProblem::from_spec(QuadraticSpec {
        a,
        b,
        coupling,
        c_mat,
        c,
    })
    .expect("generated quadratic is valid")
}

impl MinimaxOracle for QuadraticProblem {
    fn dim_x(&self) -> usize {
        self.spec.a.nrows()
    }
    fn dim_y(&self) -> usize {
        self.spec.c_mat.nrows()
    }
    fn profile(&self) -> &SmoothnessProfile {
        &self.profile
    }
    fn value(&self, x: &VectorX, y: &VectorY) -> f64 {
        let s = &self.spec;
        0.5 * x.dot(&(&s.a * x)) + s.b.dot(x) + x.dot(&(&s.coupling * y)) - 0.5 * y.dot(&(&s.c_mat * y))
            + s.c.dot(y)
    }
    fn gradient_x(&self, x: &VectorX, y: &VectorY) -> VectorX {
        let s = &self.spec;
        &s.a * x + &s.b + &s.coupling * y
    }
    fn gradient_y(&self, x: &VectorX, y: &VectorY) -> VectorY {
        let s = &self.spec;
        s.coupling.tr_mul(x) - &s.c_mat * y + &s.c
    }
    fn jacobian_product(&self, block: JacobianBlock, _x: &VectorX, _y: &VectorY, v: &DVector<f64>) -> DVector<f64> {
        let s = &self.spec;
        match block {
            JacobianBlock::B11 => &s.a * v,
            JacobianBlock::B12 => &s.coupling * v,
            JacobianBlock::B21 => s.coupling.tr_mul(v),
            JacobianBlock::B22 => -(&s.c_mat * v),
        }
    }
    fn closed_form(&self) -> Option<&dyn ClosedForm> {
        Some(self)
    }
}

impl ClosedForm for QuadraticProblem {
    fn y_star(&self, x: &VectorX) -> VectorY {
        &self.c_inv * (self.spec.coupling.tr_mul(x) + &self.spec.c)
    }
    fn phi(&self, x: &VectorX) -> f64 {
        let w = self.spec.coupling.tr_mul(x);
        0.5 * x.dot(&(&self.spec.a * x))
            + self.spec.b.dot(x)
            + 0.5 * w.dot(&(&self.c_inv * &w))
            + w.dot(&(&self.c_inv * &self.spec.c))
            + self.constant
    }
    fn grad_phi(&self, x: &VectorX) -> VectorX {
        &self.hess * x + &self.shift
    }
    fn hess_phi(&self, _x: &VectorX) -> DMatrix<f64> {
        self.hess.clone()
    }
    fn phi_star(&self) -> Option<f64> {
        self.minimizer().map(|x| self.phi(&x))
    }
}

/// `f(x, y) = ¼x₂⁴ − x₂² + ½x₁² + x₂y − ½y²` on `|x|∞ ≤ 2`, `|y| ≤ 3`.
#[derive(Debug, Clone)]
pub struct StrictSaddle {
    profile: SmoothnessProfile,
}

impl StrictSaddle {
    pub const X_RADIUS: f64 = 2.0;
    pub const Y_RADIUS: f64 = 3.0;

    /// Spectral bound of the joint Hessian on the box, attained at `|x₂| = 2`.
    pub fn l1() -> f64 {
        (9.0 + 125f64.sqrt()) / 2.0
    }
}

impl Default for StrictSaddle {
    fn default() -> Self {
        make_strict_saddle()
    }
}

pub fn make_strict_saddle() -> StrictSaddle {
    // |∂³f/∂x₂³| = 6|x₂| ≤ 12; |∇₁f| ≤ √(2² + 7²) on the box.
    let profile = SmoothnessProfile::new(Some(53f64.sqrt()), StrictSaddle::l1(), 12.0, 1.0)
        .expect("valid constants");
    StrictSaddle { profile }
}

impl MinimaxOracle for StrictSaddle {
    fn dim_x(&self) -> usize {
        2
    }
    fn dim_y(&self) -> usize {
        1
    }
    fn profile(&self) -> &SmoothnessProfile {
        &self.profile
    }
    fn operating_box(&self) -> Option<OperatingBox> {
        Some(OperatingBox {
            x_center: 0.0,
            x_radius: Self::X_RADIUS,
            y_center: 0.0,
            y_radius: Self::Y_RADIUS,
        })
    }
    fn value(&self, x: &VectorX, y: &VectorY) -> f64 {
        let (x1, x2, y) = (x[0], x[1], y[0]);
        0.25 * x2.powi(4) - x2 * x2 + 0.5 * x1 * x1 + x2 * y - 0.5 * y * y
    }
    fn gradient_x(&self, x: &VectorX, y: &VectorY) -> VectorX {
        DVector::from_vec(vec![x[0], x[1].powi(3) - 2.0 * x[1] + y[0]])
    }
    fn gradient_y(&self, x: &VectorX, y: &VectorY) -> VectorY {
        DVector::from_element(1, x[1] - y[0])
    }
    fn jacobian_product(&self, block: JacobianBlock, x: &VectorX, _y: &VectorY, v: &DVector<f64>) -> DVector<f64> {
        match block {
            JacobianBlock::B11 => DVector::from_vec(vec![v[0], (3.0 * x[1] * x[1] - 2.0) * v[1]]),
            JacobianBlock::B12 => DVector::from_vec(vec![0.0, v[0]]),
            JacobianBlock::B21 => DVector::from_element(1, v[1]),
            JacobianBlock::B22 => -v,
        }
    }
    fn closed_form(&self) -> Option<&dyn ClosedForm> {
        Some(self)
    }
}

impl ClosedForm for StrictSaddle {
    fn y_star(&self, x: &VectorX) -> VectorY {
        DVector::from_element(1, x[1])
    }
    fn phi(&self, x: &VectorX) -> f64 {
        0.25 * x[1].powi(4) - 0.5 * x[1] * x[1] + 0.5 * x[0] * x[0]
    }
    fn grad_phi(&self, x: &VectorX) -> VectorX {
        DVector::from_vec(vec![x[0], x[1].powi(3) - x[1]])
    }
    fn hess_phi(&self, x: &VectorX) -> DMatrix<f64> {
        DMatrix::from_diagonal(&DVector::from_vec(vec![1.0, 3.0 * x[1] * x[1] - 1.0]))
    }
    fn phi_star(&self) -> Option<f64> {
        Some(-0.25)
    }
}

/// Data of the reweighted least-squares finite sum.
///
/// With residuals `r_i = a_iᵀx − b_i` and losses `ℓ_i = ½r_i²`,
///
/// ```text
/// f_i(x, z) = z_i·ℓ_i(x) − (λ/2)‖z − 1‖² + w·Σ_j (¼x_j⁴ − ½x_j²)
/// ```
///
/// so `f = (1/N) Σ f_i` has `z*(x) = 1 + ℓ(x)/(λN)`. The weight vector `z`
/// plays the role of `y` and is centred at the all-ones vector.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RobustSumSpec {
    pub a: DMatrix<f64>,
    pub b: DVector<f64>,
    pub lambda: f64,
    pub x_radius: f64,
    /// Weight `w` of the nonconvex penalty; zero for the convex default.
    pub penalty: f64,
}

#[derive(Debug, Clone)]
pub struct RobustSum {
    spec: RobustSumSpec,
    z_radius: f64,
    profile: SmoothnessProfile,
}

/// Draws `N` unit-norm rows `a_i`, a planted `x ~ U(−¼, ¼)^d` and
/// `b = A·x + 0.3·noise`.
pub fn make_robust_sum(n_samples: usize, d: usize, seed: u64, lambda: f64) -> RobustSum {
    assert!(n_samples >= 1 && d >= 1, "robust sum needs N ≥ 1 and d ≥ 1");
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut a = gaussian_matrix(&mut rng, n_samples, d);
    for mut row in a.row_iter_mut() {
        let n = row.norm();
        row /= n;
    }
    let planted = DVector::from_fn(d, |_, _| rng.random_range(-0.25..0.25));
    let noise = DVector::from_fn(n_samples, |_, _| StandardNormal.sample(&mut rng));
    let b = &a * planted + noise * 0.3;
    RobustSum::from_spec(RobustSumSpec {
        a,
        b,
        lambda,
        x_radius: 0.5,
        penalty: 0.0,
    })
    .expect("generated robust sum is valid")
}

impl RobustSum {
    pub fn from_spec(spec: RobustSumSpec) -> Result<Self> {
        let (n, d) = spec.a.shape();
        if n == 0 || d == 0 || spec.b.len() != n {
            return Err(Error::Usage("inconsistent robust-sum data".into()));
        }
        if !(spec.lambda > 0.0) || !(spec.x_radius > 0.0) || spec.penalty < 0.0 {
            return Err(Error::Usage("lambda and radius must be positive".into()));
        }
        let xr = spec.x_radius;
        let lam = spec.lambda;
        let w = spec.penalty;
        let rows: Vec<(f64, f64)> = (0..n)
            .map(|i| {
                let row = spec.a.row(i);
                let r_max = row.iter().map(|v| v.abs()).sum::<f64>() * xr + spec.b[i].abs();
                (r_max, row.norm())
            })
            .collect();
        let l_max = rows.iter().map(|(r, _)| 0.5 * r * r).fold(0.0, f64::max);
        let z_radius = 2.0 * l_max / lam + 0.5;
        let pen_h = w * (3.0 * xr * xr - 1.0).abs().max(1.0);
        let pen_g = w * (d as f64).sqrt() * (xr.powi(3) - xr).abs().max(2.0 / (3.0 * 3f64.sqrt()));
        let mut l1 = lam;
        let mut l0: f64 = 0.0;
        let mut a2_max: f64 = 0.0;
        for &(r_max, an) in &rows {
            for z in [1.0 - z_radius, 1.0 + z_radius] {
                let p = z * an * an;
                let q = r_max * an;
                let mean = 0.5 * (p - lam);
                let rad = (0.25 * (p + lam).powi(2) + q * q).sqrt();
                l1 = l1.max((mean + rad).abs() + pen_h).max((mean - rad).abs() + pen_h);
            }
            l0 = l0.max((1.0 + z_radius) * r_max * an + pen_g);
            a2_max = a2_max.max(an * an);
        }
        let l2 = 2.0 / 3f64.sqrt() * a2_max + 6.0 * w * xr;
        let profile = SmoothnessProfile::new(Some(l0), l1, l2, lam)?;
        Ok(Self {
            spec,
            z_radius,
            profile,
        })
    }

    /// Adds the penalty `w·Σ_j (¼x_j⁴ − ½x_j²)` and recomputes the constants.
    pub fn with_saddle_penalty(self, weight: f64) -> Result<Self> {
        let mut spec = self.spec;
        spec.penalty = weight;
        Self::from_spec(spec)
    }

    pub fn spec(&self) -> &RobustSumSpec {
        &self.spec
    }

    pub fn z_radius(&self) -> f64 {
        self.z_radius
    }

    fn n(&self) -> usize {
        self.spec.a.nrows()
    }

    fn residuals(&self, x: &VectorX) -> DVector<f64> {
        &self.spec.a * x - &self.spec.b
    }

    fn residual(&self, i: usize, x: &VectorX) -> f64 {
        self.spec.a.row(i).transpose().dot(x) - self.spec.b[i]
    }

    fn penalty_value(&self, x: &VectorX) -> f64 {
        self.spec.penalty * x.iter().map(|v| 0.25 * v.powi(4) - 0.5 * v * v).sum::<f64>()
    }

    fn penalty_grad(&self, x: &VectorX) -> VectorX {
        x.map(|v| self.spec.penalty * (v.powi(3) - v))
    }

    fn penalty_hess(&self, x: &VectorX, u: &DVector<f64>) -> DVector<f64> {
        x.zip_map(u, |v, w| self.spec.penalty * (3.0 * v * v - 1.0) * w)
    }

    fn regulariser_grad(&self, z: &VectorY) -> VectorY {
        z.map(|v| -self.spec.lambda * (v - 1.0))
    }
}

impl MinimaxOracle for RobustSum {
    fn dim_x(&self) -> usize {
        self.spec.a.ncols()
    }
    fn dim_y(&self) -> usize {
        self.n()
    }
    fn profile(&self) -> &SmoothnessProfile {
        &self.profile
    }
    fn operating_box(&self) -> Option<OperatingBox> {
        Some(OperatingBox {
            x_center: 0.0,
            x_radius: self.spec.x_radius,
            y_center: 1.0,
            y_radius: self.z_radius,
        })
    }
    fn value(&self, x: &VectorX, z: &VectorY) -> f64 {
        let r = self.residuals(x);
        let weighted: f64 = r.iter().zip(z.iter()).map(|(r, z)| z * 0.5 * r * r).sum();
        let reg = z.iter().map(|v| (v - 1.0).powi(2)).sum::<f64>();
        weighted / self.n() as f64 - 0.5 * self.spec.lambda * reg + self.penalty_value(x)
    }
    fn gradient_x(&self, x: &VectorX, z: &VectorY) -> VectorX {
        let zr = self.residuals(x).component_mul(z);
        self.spec.a.tr_mul(&zr) / self.n() as f64 + self.penalty_grad(x)
    }
    fn gradient_y(&self, x: &VectorX, z: &VectorY) -> VectorY {
        let n = self.n() as f64;
        let l = self.residuals(x).map(|r| 0.5 * r * r / n);
        l + self.regulariser_grad(z)
    }
    fn jacobian_product(&self, block: JacobianBlock, x: &VectorX, z: &VectorY, v: &DVector<f64>) -> DVector<f64> {
        let n = self.n() as f64;
        let a = &self.spec.a;
        match block {
            JacobianBlock::B11 => {
                a.tr_mul(&(a * v).component_mul(z)) / n + self.penalty_hess(x, v)
            }
            JacobianBlock::B12 => a.tr_mul(&self.residuals(x).component_mul(v)) / n,
            JacobianBlock::B21 => (a * v).component_mul(&self.residuals(x)) / n,
            JacobianBlock::B22 => v * (-self.spec.lambda),
        }
    }
    fn closed_form(&self) -> Option<&dyn ClosedForm> {
        Some(self)
    }
    fn finite_sum(&self) -> Option<&dyn FiniteSum> {
        Some(self)
    }
}

impl ClosedForm for RobustSum {
    fn y_star(&self, x: &VectorX) -> VectorY {
        let scale = 1.0 / (self.spec.lambda * self.n() as f64);
        self.residuals(x).map(|r| 1.0 + 0.5 * r * r * scale)
    }
    fn phi(&self, x: &VectorX) -> f64 {
        let n = self.n() as f64;
        let l = self.residuals(x).map(|r| 0.5 * r * r);
        l.sum() / n + l.norm_squared() / (2.0 * self.spec.lambda * n * n) + self.penalty_value(x)
    }
    fn grad_phi(&self, x: &VectorX) -> VectorX {
        let z = self.y_star(x);
        self.gradient_x(x, &z)
    }
    fn hess_phi(&self, x: &VectorX) -> DMatrix<f64> {
        let n = self.n() as f64;
        let r = self.residuals(x);
        let z = self.y_star(x);
        let weights = z / n + r.map(|v| v * v) / (self.spec.lambda * n * n);
        let a = &self.spec.a;
        let mut weighted = a.clone();
        for (i, mut row) in weighted.row_iter_mut().enumerate() {
            row *= weights[i];
        }
        let mut h = a.tr_mul(&weighted);
        for j in 0..x.len() {
            h[(j, j)] += self.spec.penalty * (3.0 * x[j] * x[j] - 1.0);
        }
        (&h + h.transpose()) * 0.5
    }
}

impl FiniteSum for RobustSum {
    fn n_samples(&self) -> usize {
        self.n()
    }
    fn sample_value(&self, i: usize, x: &VectorX, z: &VectorY) -> f64 {
        let r = self.residual(i, x);
        let reg = z.iter().map(|v| (v - 1.0).powi(2)).sum::<f64>();
        z[i] * 0.5 * r * r - 0.5 * self.spec.lambda * reg + self.penalty_value(x)
    }
    fn sample_gradient_x(&self, i: usize, x: &VectorX, z: &VectorY) -> VectorX {
        let r = self.residual(i, x);
        self.spec.a.row(i).transpose() * (z[i] * r) + self.penalty_grad(x)
    }
    fn sample_gradient_y(&self, i: usize, x: &VectorX, z: &VectorY) -> VectorY {
        let r = self.residual(i, x);
        let mut g = self.regulariser_grad(z);
        g[i] += 0.5 * r * r;
        g
    }
    fn sample_jacobian_product(
        &self,
        i: usize,
        block: JacobianBlock,
        x: &VectorX,
        z: &VectorY,
        v: &DVector<f64>,
    ) -> DVector<f64> {
        let ai = self.spec.a.row(i).transpose();
        match block {
            JacobianBlock::B11 => &ai * (z[i] * ai.dot(v)) + self.penalty_hess(x, v),
            JacobianBlock::B12 => &ai * (self.residual(i, x) * v[i]),
            JacobianBlock::B21 => {
                let mut out = DVector::zeros(self.n());
                out[i] = self.residual(i, x) * ai.dot(v);
                out
            }
            JacobianBlock::B22 => v * (-self.spec.lambda),
        }
    }

    fn batch_gradient_x(&self, batch: &[usize], x: &VectorX, z: &VectorY) -> VectorX {
        let mut acc = DVector::zeros(self.dim_x());
        for &i in batch {
            let r = self.residual(i, x);
            acc.axpy(z[i] * r, &self.spec.a.row(i).transpose(), 1.0);
        }
        acc / batch.len() as f64 + self.penalty_grad(x)
    }

    fn batch_gradient_y(&self, batch: &[usize], x: &VectorX, z: &VectorY) -> VectorY {
        let mut acc = DVector::zeros(self.n());
        for &i in batch {
            let r = self.residual(i, x);
            acc[i] += 0.5 * r * r;
        }
        acc / batch.len() as f64 + self.regulariser_grad(z)
    }

    fn batch_jacobian_product(
        &self,
        batch: &[usize],
        block: JacobianBlock,
        x: &VectorX,
        z: &VectorY,
        v: &DVector<f64>,
    ) -> DVector<f64> {
        let k = batch.len() as f64;
        match block {
            JacobianBlock::B11 => {
                let mut acc = DVector::zeros(self.dim_x());
                for &i in batch {
                    let ai = self.spec.a.row(i).transpose();
                    acc.axpy(z[i] * ai.dot(v), &ai, 1.0);
                }
                acc / k + self.penalty_hess(x, v)
            }
            JacobianBlock::B12 => {
                let mut acc = DVector::zeros(self.dim_x());
                for &i in batch {
                    acc.axpy(self.residual(i, x) * v[i], &self.spec.a.row(i).transpose(), 1.0);
                }
                acc / k
            }
            JacobianBlock::B21 => {
                let mut acc = DVector::zeros(self.n());
                for &i in batch {
                    acc[i] += self.residual(i, x) * self.spec.a.row(i).transpose().dot(v);
                }
                acc / k
            }
            JacobianBlock::B22 => v * (-self.spec.lambda),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    fn v(xs: &[f64]) -> DVector<f64> {
        DVector::from_column_slice(xs)
    }

    #[test]
    fn scalar_quadratic_closed_forms() {
        let p = QuadraticProblem::scalar(2.0, 0.0, 1.0, 1.0, 0.0).unwrap();
        let x = v(&[0.7]);
        assert_relative_eq!(p.y_star(&x)[0], 0.7);
        assert_relative_eq!(p.phi(&x), 1.5 * 0.49, epsilon = 1e-15);
        assert_relative_eq!(p.hess_phi(&x)[(0, 0)], 3.0);
        assert_relative_eq!(p.grad_phi(&v(&[1.0]))[0], 3.0);
    }

    #[test]
    fn zero_coupling_decouples() {
        let p = QuadraticProblem::scalar(2.0, 1.0, 0.0, 2.0, 4.0).unwrap();
        assert_eq!(p.y_star(&v(&[1.0])), p.y_star(&v(&[-3.0])));
        assert_relative_eq!(p.phi(&v(&[1.0])), 1.0 + 1.0 + 4.0, epsilon = 1e-14);
    }

    #[test]
    fn generated_quadratic_variants() {
        let c = make_quadratic(6, 4, 3, 10.0);
        assert!(SymmetricEigen::new(c.envelope_hessian().clone()).eigenvalues.min() > 0.0);
        let mu = c.profile().mu;
        assert!((mu - 1.0).abs() < 1e-10);
        let s = make_quadratic_with(6, 4, 3, 10.0, QuadraticVariant::Saddle);
        let eig = SymmetricEigen::new(s.envelope_hessian().clone()).eigenvalues;
        assert_eq!(eig.iter().filter(|&&e| e < 0.0).count(), 1);
        assert!(s.phi_star().is_none());
    }

    #[test]
    fn quadratic_rejects_indefinite_c() {
        assert!(QuadraticProblem::scalar(1.0, 0.0, 1.0, -1.0, 0.0).is_err());
    }

    #[test]
    fn strict_saddle_landmarks() {
        let p = make_strict_saddle();
        assert_eq!(p.phi(&v(&[0.0, 1.0])), -0.25);
        assert_eq!(p.phi(&v(&[0.0, -1.0])), -0.25);
        assert_eq!(p.hess_phi(&v(&[0.0, 0.0]))[(1, 1)], -1.0);
        assert_eq!(p.y_star(&v(&[0.3, -0.8]))[0], -0.8);
        assert!(p.profile().kappa >= 1.0);
    }

    #[test]
    fn robust_full_is_mean_of_samples() {
        let p = make_robust_sum(7, 3, 11, 1.0);
        let x = v(&[0.1, -0.3, 0.2]);
        let z = DVector::from_fn(7, |i, _| 1.0 + 0.1 * i as f64);
        let mean: f64 = (0..7).map(|i| p.sample_value(i, &x, &z)).sum::<f64>() / 7.0;
        assert_relative_eq!(mean, p.value(&x, &z), epsilon = 1e-12);
    }

    #[test]
    fn robust_strong_concavity_is_exact() {
        let p = make_robust_sum(5, 2, 1, 0.7);
        let w = DVector::from_fn(5, |i, _| i as f64 - 2.0);
        let out = p.jacobian_product(JacobianBlock::B22, &v(&[0.1, 0.2]), &DVector::from_element(5, 1.0), &w);
        assert_eq!(out, w * -0.7);
    }
}
