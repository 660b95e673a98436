use cubic_gda::driver_det::{max_displacement, run_cubic_gda, run_gda_baseline, RunConfig, TerminationReason};
use cubic_gda::driver_stoch::{batch_sizes, inner_sga, run_stochastic_cubic_gda, sga_weight, StochConfig};
use cubic_gda::oracle::{FiniteSum, JacobianBlock, MinimaxOracle, SmoothnessProfile, VectorX, VectorY};
use cubic_gda::rng::{substream, Block};
use cubic_gda::testbed::{make_quadratic, make_robust_sum, make_strict_saddle};
use nalgebra::{dvector, DVector};
use proptest::prelude::*;

/// `f(x, y) = x·y − ½y²` as a one-sample finite sum.
struct Bilinear {
    profile: SmoothnessProfile,
}

impl Bilinear {
    fn new() -> Self {
        Self { profile: SmoothnessProfile::new(None, 1.0, 0.0, 1.0).unwrap() }
    }
}

impl MinimaxOracle for Bilinear {
    fn dim_x(&self) -> usize {
        1
    }
    fn dim_y(&self) -> usize {
        1
    }
    fn profile(&self) -> &SmoothnessProfile {
        &self.profile
    }
    fn value(&self, x: &VectorX, y: &VectorY) -> f64 {
        x[0] * y[0] - 0.5 * y[0] * y[0]
    }
    fn gradient_x(&self, _x: &VectorX, y: &VectorY) -> VectorX {
        dvector![y[0]]
    }
    fn gradient_y(&self, x: &VectorX, y: &VectorY) -> VectorY {
        dvector![x[0] - y[0]]
    }
    fn jacobian_product(&self, block: JacobianBlock, _x: &VectorX, _y: &VectorY, v: &DVector<f64>) -> DVector<f64> {
        match block {
            JacobianBlock::B11 => v * 0.0,
            JacobianBlock::B12 | JacobianBlock::B21 => v.clone(),
            JacobianBlock::B22 => -v,
        }
    }
    fn finite_sum(&self) -> Option<&dyn FiniteSum> {
        Some(self)
    }
}

impl FiniteSum for Bilinear {
    fn n_samples(&self) -> usize {
        1
    }
    fn sample_value(&self, _i: usize, x: &VectorX, y: &VectorY) -> f64 {
        self.value(x, y)
    }
    fn sample_gradient_x(&self, _i: usize, x: &VectorX, y: &VectorY) -> VectorX {
        self.gradient_x(x, y)
    }
    fn sample_gradient_y(&self, _i: usize, x: &VectorX, y: &VectorY) -> VectorY {
        self.gradient_y(x, y)
    }
    fn sample_jacobian_product(&self, _i: usize, b: JacobianBlock, x: &VectorX, y: &VectorY, v: &DVector<f64>) -> DVector<f64> {
        self.jacobian_product(b, x, y, v)
    }
}

#[test]
fn inner_sga_hand_trace() {
    // x = 2, y₀ = 0, μ = 1, N = 3: y₁ = 0 + 2·2 = 4, y₂ = 4 + 1·(2 − 4) = 2,
    // average 0·y₀ + ⅓·y₁ + ⅔·y₂ = 8/3.
    let p = Bilinear::new();
    let mut rng = substream(0, 0, Block::Sga);
    let y = inner_sga(&p, &dvector![2.0], &dvector![0.0], 1.0, 3, &mut rng).unwrap();
    assert!((y[0] - 8.0 / 3.0).abs() <= 1e-15);
    // Started at the maximiser the iterates never move.
    let y = inner_sga(&p, &dvector![2.0], &dvector![2.0], 1.0, 5, &mut rng).unwrap();
    assert!((y[0] - 2.0).abs() <= 1e-15);
    assert!(inner_sga(&p, &dvector![2.0], &dvector![0.0], 1.0, 1, &mut rng).is_err());
}

#[test]
fn strict_saddle_escapes_from_origin() {
    let p = make_strict_saddle();
    let c = RunConfig::for_accuracy(p.profile(), 1e-3);
    let r = run_cubic_gda(&p, &dvector![0.0, 0.0], &dvector![0.0], &c).unwrap();
    assert_eq!(r.termination, TerminationReason::ThresholdMet);
    assert!(r.x_out[0].abs() <= 0.05, "x_out = {}", r.x_out);
    assert!((r.x_out[1].abs() - 1.0).abs() <= 0.05, "x_out = {}", r.x_out);
    let last = &r.records[r.x_out_index];
    assert!((last.phi.unwrap() + 0.25).abs() <= 1e-2);
    assert!(last.min_eig.unwrap() > 0.5);
}

#[test]
fn plain_gda_stays_at_the_saddle() {
    let p = make_strict_saddle();
    let lp = p.profile().l_phi;
    let r = run_gda_baseline(&p, &dvector![0.0, 0.0], &dvector![0.0], 1.0 / lp, 1.0 / p.profile().l1, 2000, 0.0).unwrap();
    assert_eq!(max_displacement(&r), 0.0);
}

#[test]
fn convex_quadratic_reaches_minimiser() {
    let q = make_quadratic(5, 5, 0, 4.0);
    let xstar = q.minimizer().unwrap();
    let x0 = DVector::from_element(5, 1.0);
    let y0 = DVector::zeros(5);
    let c = RunConfig::for_accuracy(q.profile(), 1e-3);
    let r = run_cubic_gda(&q, &x0, &y0, &c).unwrap();
    assert_eq!(r.termination, TerminationReason::ThresholdMet);
    assert!((&r.x_out - &xstar).norm() <= 1e-3, "distance {}", (&r.x_out - &xstar).norm());

    let prof = q.profile();
    let g = run_gda_baseline(&q, &x0, &y0, 0.1 / prof.l1 / (1.0 + prof.kappa), 1.0 / prof.l1, 200_000, 1e-10).unwrap();
    assert!((&g.x_out - &xstar).norm() <= 1e-6, "gda distance {}", (&g.x_out - &xstar).norm());
}

fn small_robust() -> cubic_gda::testbed::RobustSum {
    make_robust_sum(100, 4, 3, 1.0)
}

fn stoch_run(seed: u64) -> cubic_gda::driver_det::RunResult {
    let p = small_robust();
    let mut c = StochConfig::for_accuracy(p.profile(), 0.1, 0.1);
    c.base.seed = seed;
    c.base.max_iters = 300;
    run_stochastic_cubic_gda(&p, &DVector::from_element(4, 0.1), &DVector::from_element(100, 1.0), &c).unwrap()
}

#[test]
fn stochastic_runs_are_reproducible() {
    let a = stoch_run(11);
    let b = stoch_run(11);
    let c = stoch_run(12);
    assert_eq!(a, b);
    assert_ne!(a.records, c.records);
}

#[test]
fn single_sample_run_is_deterministic() {
    let p = make_robust_sum(1, 3, 0, 1.0);
    let mut c = StochConfig::for_accuracy(p.profile(), 0.1, 0.1);
    c.base.max_iters = 50;
    let x0 = DVector::from_element(3, 0.1);
    let y0 = dvector![1.0];
    let a = run_stochastic_cubic_gda(&p, &x0, &y0, &c).unwrap();
    assert_eq!(a.effectively_deterministic, Some(true));
    assert!(a.records.iter().filter_map(|r| r.batches).all(|b| b.all_exact()));
    c.base.seed = 99;
    let b = run_stochastic_cubic_gda(&p, &x0, &y0, &c).unwrap();
    assert_eq!(a.records, b.records);
}

#[test]
fn stochastic_potential_mostly_decreases() {
    let p = small_robust();
    let delta = 0.1;
    let c = StochConfig::for_accuracy(p.profile(), 0.1, delta);
    let coef = p.profile().l_phi + c.base.alpha + c.base.beta;
    let (mut steps, mut held) = (0usize, 0usize);
    for seed in 0..8 {
        let r = stoch_run(seed);
        for w in r.records.windows(2) {
            if let (Some(ha), Some(hb)) = (w[0].h_t, w[1].h_t) {
                steps += 1;
                let allowed = -coef * (w[1].s_norm.powi(3) + w[0].s_norm.powi(3)) + 1e-9 * (1.0 + ha.abs());
                if hb - ha <= allowed {
                    held += 1;
                }
            }
        }
    }
    assert!(steps > 0);
    assert!(held as f64 >= (1.0 - 2.0 * delta) * steps as f64, "{held}/{steps}");
}

#[test]
fn batches_shrink_as_accuracy_loosens() {
    let p = make_robust_sum(1000, 20, 0, 1.0);
    let prof = p.profile();
    let mut last = [usize::MAX; 5];
    for e in [0.05, 0.1, 0.2, 0.4] {
        let b = batch_sizes(prof, e, e, 0.1, 20, 1000, 1000).unwrap().formula;
        for k in 0..5 {
            assert!(b[k] <= last[k]);
        }
        last = b;
    }
}

proptest! {
    #[test]
    fn sga_weights_sum_to_one(n in 2usize..5000) {
        let total: f64 = (0..n).map(|k| sga_weight(k, n)).sum();
        prop_assert!((total - 1.0).abs() <= 1e-12);
        prop_assert_eq!(sga_weight(0, n), 0.0);
        prop_assert!((0..n).all(|k| sga_weight(k, n) >= 0.0));
        // Σ 2k = N(N−1) holds exactly in integers.
        prop_assert_eq!((0..n as u64).map(|k| 2 * k).sum::<u64>(), (n as u64) * (n as u64 - 1));
    }
}
