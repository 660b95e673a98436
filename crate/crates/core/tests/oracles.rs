//! Oracle contracts and the smoothness constants of the test problems.

use cubic_gda::diagnostics::fd_check_oracle;
use cubic_gda::linalg::{assemble_dense, FnOperator};
use cubic_gda::oracle::{eval, grad_x, grad_y, jvp, per_sample_oracles, ClosedForm, JacobianBlock, MinimaxOracle};
use cubic_gda::schur::g_dense;
use cubic_gda::testbed::{make_quadratic, make_quadratic_with, make_robust_sum, make_strict_saddle, QuadraticProblem, QuadraticVariant};
use nalgebra::{dvector, DMatrix, DVector};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn scalar() -> QuadraticProblem {
    // f = x² + xy − ½y²
    QuadraticProblem::scalar(2.0, 0.0, 1.0, 1.0, 0.0).unwrap()
}

fn uniform(rng: &mut ChaCha8Rng, n: usize, center: f64, radius: f64) -> DVector<f64> {
    DVector::from_fn(n, |_, _| center + rng.random_range(-radius..radius))
}

#[test]
fn scalar_quadratic_hand_values() {
    let p = scalar();
    let (x, y) = (dvector![1.0], dvector![1.0]);
    assert_eq!(eval(&p, &x, &y).unwrap(), 1.5);
    assert_eq!(grad_x(&p, &x, &y).unwrap()[0], 3.0);
    assert_eq!(grad_y(&p, &x, &y).unwrap()[0], 0.0);
    assert_eq!(eval(&p, &dvector![0.0], &dvector![0.0]).unwrap(), 0.0);
    assert_eq!(jvp(&p, JacobianBlock::B22, &x, &y, &dvector![1.0]).unwrap()[0], -1.0);
    assert_eq!(jvp(&p, JacobianBlock::B12, &x, &y, &dvector![1.0]).unwrap()[0], 1.0);
}

#[test]
fn jvp_of_zero_is_zero() {
    let p = make_robust_sum(30, 4, 1, 1.0);
    let x = DVector::from_element(4, 0.2);
    let y = DVector::from_element(30, 1.1);
    for b in JacobianBlock::ALL {
        let v = DVector::zeros(b.input_dim(4, 30));
        assert_eq!(jvp(&p, b, &x, &y, &v).unwrap().norm(), 0.0);
    }
}

#[test]
fn mixed_blocks_are_adjoint() {
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    let p = make_robust_sum(25, 6, 2, 1.0).with_saddle_penalty(0.5).unwrap();
    let x = uniform(&mut rng, 6, 0.0, 0.4);
    let y = uniform(&mut rng, 25, 1.0, 0.5);
    for _ in 0..10 {
        let u = uniform(&mut rng, 6, 0.0, 1.0);
        let v = uniform(&mut rng, 25, 0.0, 1.0);
        let a = jvp(&p, JacobianBlock::B12, &x, &y, &v).unwrap().dot(&u);
        let b = jvp(&p, JacobianBlock::B21, &x, &y, &u).unwrap().dot(&v);
        assert!((a - b).abs() <= 1e-10);
    }
}

#[test]
fn inner_gradient_vanishes_at_maximiser() {
    let mut rng = ChaCha8Rng::seed_from_u64(4);
    let q = make_quadratic(4, 6, 9, 10.0);
    let s = make_strict_saddle();
    let r = make_robust_sum(40, 3, 0, 2.0);
    let problems: [&dyn MinimaxOracle; 3] = [&q, &s, &r];
    let closed: [&dyn ClosedForm; 3] = [&q, &s, &r];
    for (p, cf) in problems.iter().zip(closed) {
        let x = uniform(&mut rng, p.dim_x(), 0.0, 0.4);
        assert!(p.gradient_y(&x, &cf.y_star(&x)).norm() <= 1e-10);
    }
}

#[test]
fn finite_differences_agree_on_every_problem() {
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    let q = make_quadratic_with(3, 4, 11, 5.0, QuadraticVariant::Saddle);
    let s = make_strict_saddle();
    let r = make_robust_sum(20, 3, 7, 1.0).with_saddle_penalty(1.0).unwrap();
    let problems: [(&dyn MinimaxOracle, f64); 3] = [(&q, 0.0), (&s, 0.0), (&r, 1.0)];
    for (p, yc) in problems {
        for _ in 0..5 {
            let x = uniform(&mut rng, p.dim_x(), 0.0, 0.5);
            let y = uniform(&mut rng, p.dim_y(), yc, 0.5);
            let rep = fd_check_oracle(p, &x, &y, 1e-5, 1e-6);
            assert!(rep.passed, "max error {}", rep.max_error);
        }
    }
}

#[test]
fn finite_sum_means_match_full_oracle() {
    let mut rng = ChaCha8Rng::seed_from_u64(6);
    let p = make_robust_sum(50, 4, 3, 1.0);
    let x = uniform(&mut rng, 4, 0.0, 0.4);
    let y = uniform(&mut rng, 50, 1.0, 0.4);
    let v = uniform(&mut rng, 50, 0.0, 1.0);
    let views: Vec<_> = (0..50).map(|i| per_sample_oracles(&p, i).unwrap()).collect();
    let f: f64 = views.iter().map(|s| s.value(&x, &y)).sum::<f64>() / 50.0;
    assert!((f - p.value(&x, &y)).abs() <= 1e-12);
    let gx = views.iter().fold(DVector::zeros(4), |acc, s| acc + s.gradient_x(&x, &y)) / 50.0;
    assert!((gx - p.gradient_x(&x, &y)).norm() <= 1e-12);
    let b22 = views
        .iter()
        .fold(DVector::zeros(50), |acc, s| acc + s.jacobian_product(JacobianBlock::B22, &x, &y, &v))
        / 50.0;
    assert!((b22 - p.jacobian_product(JacobianBlock::B22, &x, &y, &v)).norm() <= 1e-12);
    assert!(per_sample_oracles(&p, 50).err().unwrap().is_usage());
}

#[test]
fn single_sample_view_is_the_full_oracle() {
    let p = make_robust_sum(1, 3, 2, 1.0);
    let s = per_sample_oracles(&p, 0).unwrap();
    let x = dvector![0.1, -0.2, 0.3];
    let y = dvector![1.2];
    assert!((s.value(&x, &y) - p.value(&x, &y)).abs() <= 1e-15);
    assert_eq!(s.gradient_x(&x, &y), p.gradient_x(&x, &y));
    assert_eq!(s.gradient_y(&x, &y), p.gradient_y(&x, &y));
}

#[test]
fn evaluation_is_pure() {
    let p = make_robust_sum(64, 5, 1, 1.0);
    let x = DVector::from_element(5, 0.05);
    let y = DVector::from_element(64, 0.9);
    let a = (p.value(&x, &y), p.gradient_x(&x, &y), p.gradient_y(&x, &y));
    for _ in 0..3 {
        let b = (p.value(&x, &y), p.gradient_x(&x, &y), p.gradient_y(&x, &y));
        assert_eq!(a.0.to_bits(), b.0.to_bits());
        assert_eq!(a.1, b.1);
        assert_eq!(a.2, b.2);
    }
}

fn block_matrix(p: &dyn MinimaxOracle, b: JacobianBlock, x: &DVector<f64>, y: &DVector<f64>) -> DMatrix<f64> {
    let (m, n) = (p.dim_x(), p.dim_y());
    let cols = b.input_dim(m, n);
    let mut out = DMatrix::zeros(b.output_dim(m, n), cols);
    for j in 0..cols {
        let mut e = DVector::zeros(cols);
        e[j] = 1.0;
        out.set_column(j, &p.jacobian_product(b, x, y, &e));
    }
    out
}

fn spectral_norm(a: &DMatrix<f64>) -> f64 {
    a.clone().svd(false, false).singular_values.max()
}

/// Declared constants bound the assembled blocks at random points of the box.
fn check_declared_bounds(p: &dyn MinimaxOracle, samples: usize, seed: u64) {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let boxed = p.operating_box().expect("test problems declare a box");
    let prof = *p.profile();
    for _ in 0..samples {
        let x = uniform(&mut rng, p.dim_x(), boxed.x_center, boxed.x_radius);
        let y = uniform(&mut rng, p.dim_y(), boxed.y_center, boxed.y_radius);
        let b11 = block_matrix(p, JacobianBlock::B11, &x, &y);
        let b12 = block_matrix(p, JacobianBlock::B12, &x, &y);
        let b21 = block_matrix(p, JacobianBlock::B21, &x, &y);
        let b22 = block_matrix(p, JacobianBlock::B22, &x, &y);
        let slack = 1.0 + 1e-9;
        assert!(spectral_norm(&b11) <= prof.l1 * slack);
        assert!(spectral_norm(&b12) <= prof.l1 * slack);
        assert!((spectral_norm(&b12) - spectral_norm(&b21)).abs() <= 1e-9 * (1.0 + prof.l1));
        let inv = (-&b22).try_inverse().expect("strongly concave in y");
        assert!(spectral_norm(&inv) <= slack / prof.mu);
        let g = g_dense(p, &x, &y, 1e-12).unwrap();
        assert!(spectral_norm(&g) <= prof.g_bound() * slack);
    }
}

#[test]
fn declared_constants_hold_on_the_box() {
    check_declared_bounds(&make_strict_saddle(), 200, 1);
    check_declared_bounds(&make_robust_sum(30, 4, 2, 1.0), 20, 2);
    check_declared_bounds(&make_robust_sum(30, 4, 3, 1.0).with_saddle_penalty(0.7).unwrap(), 20, 3);
}

#[test]
fn quadratic_constants_are_exact() {
    let q = make_quadratic(4, 5, 2, 8.0);
    let x = DVector::zeros(4);
    let y = DVector::zeros(5);
    let b22 = block_matrix(&q, JacobianBlock::B22, &x, &y);
    let c = -b22;
    let mu = c.clone().symmetric_eigen().eigenvalues.min();
    assert!((mu - q.profile().mu).abs() <= 1e-10);
    let inv = assemble_dense(&FnOperator::new(5, |v: &DVector<f64>| c.clone().lu().solve(v).unwrap())).unwrap();
    assert!(spectral_norm(&inv) <= 1.0 / q.profile().mu + 1e-10);
    assert_eq!(q.profile().l2_declared, 0.0);
    assert!(q.profile().l2 > 0.0);
}
