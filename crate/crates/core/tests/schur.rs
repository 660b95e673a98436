use cubic_gda::linalg::LinearOperator;
use cubic_gda::oracle::{MinimaxOracle, VectorX};
use cubic_gda::schur::{g_apply, g_dense, stoch_g_apply, stoch_grad_x, Batch, BatchSet, GOperator};
use cubic_gda::testbed::{make_quadratic, make_robust_sum, make_strict_saddle};
use nalgebra::{dvector, DVector};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn random(rng: &mut ChaCha8Rng, n: usize, c: f64, r: f64) -> DVector<f64> {
    DVector::from_fn(n, |_, _| c + rng.random_range(-r..r))
}

#[test]
fn chain_matches_dense_schur_complement() {
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    let p = make_robust_sum(40, 5, 4, 1.0).with_saddle_penalty(0.3).unwrap();
    let x = random(&mut rng, 5, 0.0, 0.3);
    let y = random(&mut rng, 40, 1.0, 0.5);
    let g = g_dense(&p, &x, &y, 1e-12).unwrap();
    assert!((&g - g.transpose()).norm() <= 1e-8 * g.norm());
    for _ in 0..5 {
        let u = random(&mut rng, 5, 0.0, 1.0);
        let chain = g_apply(&p, &x, &y, &u, 1e-12).unwrap();
        assert!(chain.cg.converged);
        assert!((chain.result - &g * &u).norm() <= 1e-8 * (1.0 + u.norm()));
    }
}

#[test]
fn strict_saddle_schur_complement_by_hand() {
    // One-dimensional y, so B22⁻¹ is a scalar division.
    let p = make_strict_saddle();
    let x = dvector![0.3, -0.7];
    let y = dvector![0.4];
    let g = g_dense(&p, &x, &y, 1e-14).unwrap();
    use cubic_gda::oracle::JacobianBlock::*;
    let col = |b, v: &DVector<f64>| p.jacobian_product(b, &x, &y, v);
    let e = |i: usize| {
        let mut v = DVector::zeros(2);
        v[i] = 1.0;
        v
    };
    let b22 = col(B22, &dvector![1.0])[0];
    for j in 0..2 {
        let b11 = col(B11, &e(j));
        let b21 = col(B21, &e(j))[0];
        let b12 = col(B12, &dvector![1.0]);
        let expect = b11 - b12 * (b21 / b22);
        assert!((g.column(j) - expect).norm() <= 1e-12);
    }
}

#[test]
fn lipschitz_spot_check() {
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    let p = make_strict_saddle();
    let lg = p.profile().l_g;
    for _ in 0..50 {
        let x1 = random(&mut rng, 2, 0.0, 1.5);
        let x2 = random(&mut rng, 2, 0.0, 1.5);
        let y1 = random(&mut rng, 1, 0.0, 2.0);
        let y2 = random(&mut rng, 1, 0.0, 2.0);
        let g1 = g_dense(&p, &x1, &y1, 1e-14).unwrap();
        let g2 = g_dense(&p, &x2, &y2, 1e-14).unwrap();
        let d = ((&x1 - &x2).norm_squared() + (&y1 - &y2).norm_squared()).sqrt();
        let gap = (g1 - g2).svd(false, false).singular_values.max();
        assert!(gap <= lg * d * (1.0 + 1e-9));
    }
}

#[test]
fn operator_wrapper_matches_function() {
    let q = make_quadratic(4, 6, 2, 5.0);
    let x = VectorX::from_element(4, 0.1);
    let y = DVector::from_element(6, -0.2);
    let op = GOperator::new(&q, &x, &y, 1e-12);
    let u = dvector![1.0, -2.0, 0.5, 0.0];
    assert_eq!(op.dim(), 4);
    assert!((op.apply(&u) - g_apply(&q, &x, &y, &u, 1e-12).unwrap().result).norm() <= 1e-12);
    assert!(op.take_failure().is_none());
}

#[test]
fn gradient_estimator_is_unbiased() {
    let p = make_robust_sum(200, 3, 5, 1.0);
    let x = dvector![0.1, -0.2, 0.15];
    let mut rng = ChaCha8Rng::seed_from_u64(8);
    let y = random(&mut rng, 200, 1.0, 0.8);
    let full = p.gradient_x(&x, &y);
    let trials = 10_000;
    let mut sum = DVector::zeros(3);
    let mut sq = DVector::zeros(3);
    for _ in 0..trials {
        let b = Batch::sample(5, 200, &mut rng).unwrap();
        let g = stoch_grad_x(&p, &x, &y, &b).unwrap();
        sq += g.component_mul(&g);
        sum += g;
    }
    let mean = &sum / trials as f64;
    for i in 0..3 {
        let var = sq[i] / trials as f64 - mean[i] * mean[i];
        let stderr = (var / trials as f64).sqrt();
        assert!((mean[i] - full[i]).abs() <= 3.0 * stderr + 1e-12, "coordinate {i}");
    }
}

#[test]
fn single_sample_estimators_are_exact() {
    let p = make_robust_sum(1, 4, 2, 1.0);
    let x = dvector![0.1, 0.0, -0.1, 0.2];
    let y = dvector![1.3];
    let b = Batch::sample(3, 1, &mut ChaCha8Rng::seed_from_u64(0)).unwrap();
    assert!(b.is_exact());
    assert_eq!(stoch_grad_x(&p, &x, &y, &b).unwrap(), p.gradient_x(&x, &y));
    let set = BatchSet::draw([1, 1, 1, 1, 1], 1, 4, 0).unwrap();
    assert!(set.all_exact());
    let u = dvector![1.0, 2.0, 3.0, 4.0];
    let s = stoch_g_apply(&p, &x, &y, &u, &set, 1e-12).unwrap().result;
    let d = g_apply(&p, &x, &y, &u, 1e-12).unwrap().result;
    assert_eq!(s, d);
}

#[test]
fn batch_draws_are_reproducible() {
    let a = BatchSet::draw([10, 20, 30, 40, 50], 1000, 7, 3).unwrap();
    let b = BatchSet::draw([10, 20, 30, 40, 50], 1000, 7, 3).unwrap();
    let c = BatchSet::draw([10, 20, 30, 40, 50], 1000, 7, 4).unwrap();
    assert_eq!(a.b1.indices(), b.b1.indices());
    assert_ne!(a.b1.indices(), c.b1.indices());
    assert_eq!(a.sizes(), [10, 20, 30, 40, 50]);
    assert!(BatchSet::draw([2000, 1, 1, 1, 1], 1000, 0, 0).unwrap().b1.is_exact());
}
