//! Builds test problems and their default starting points from a config.

use cubic_gda::oracle::{MinimaxOracle, VectorX, VectorY};
use cubic_gda::testbed::{make_quadratic_with, make_robust_sum, make_strict_saddle, QuadraticProblem};
use nalgebra::DVector;

use crate::config::{ExperimentConfig, ProblemSpec};
use crate::HarnessError;

pub struct Problem {
    pub name: &'static str,
    pub oracle: Box<dyn MinimaxOracle>,
    pub x0: VectorX,
    pub y0: VectorY,
}

pub fn build_problem(spec: &ProblemSpec) -> Result<Problem, HarnessError> {
    let usage = |msg: &str| HarnessError::Usage(msg.to_string());
    let p = match spec {
        ProblemSpec::StrictSaddle => Problem {
            name: "strict_saddle",
            oracle: Box::new(make_strict_saddle()),
            x0: DVector::from_vec(vec![1.0, 0.5]),
            y0: DVector::zeros(1),
        },
        ProblemSpec::Quadratic {
            m,
            n,
            seed,
            conditioning,
            variant,
        } => {
            if *m == 0 || *n == 0 {
                return Err(usage("quadratic dimensions must be positive"));
            }
            Problem {
                name: "quadratic",
                oracle: Box::new(make_quadratic_with(*m, *n, *seed, *conditioning, *variant)),
                x0: DVector::from_element(*m, 1.0),
                y0: DVector::zeros(*n),
            }
        }
        ProblemSpec::QuadraticInline { spec } => {
            let q = QuadraticProblem::from_spec(spec.clone())?;
            let (m, n) = (q.dim_x(), q.dim_y());
            Problem {
                name: "quadratic",
                oracle: Box::new(q),
                x0: DVector::from_element(m, 1.0),
                y0: DVector::zeros(n),
            }
        }
        ProblemSpec::RobustSum {
            n_samples,
            d,
            seed,
            lambda,
            saddle_penalty,
        } => {
            if *n_samples == 0 || *d == 0 {
                return Err(usage("robust sum needs n_samples ≥ 1 and d ≥ 1"));
            }
            if !(*lambda > 0.0) || !(*saddle_penalty >= 0.0) {
                return Err(usage("robust sum needs lambda > 0 and a non-negative penalty"));
            }
            let mut r = make_robust_sum(*n_samples, *d, *seed, *lambda);
            if *saddle_penalty > 0.0 {
                r = r.with_saddle_penalty(*saddle_penalty)?;
            }
            Problem {
                name: "robust_sum",
                oracle: Box::new(r),
                x0: DVector::from_element(*d, 0.1),
                y0: DVector::from_element(*n_samples, 1.0),
            }
        }
    };
    Ok(p)
}

/// Problem with the config's starting point applied.
pub fn problem_for(config: &ExperimentConfig) -> Result<Problem, HarnessError> {
    let mut p = build_problem(&config.problem)?;
    if let Some(x0) = &config.x0 {
        if x0.len() != p.oracle.dim_x() {
            return Err(HarnessError::Usage(format!(
                "x0 has length {}, problem needs {}",
                x0.len(),
                p.oracle.dim_x()
            )));
        }
        p.x0 = DVector::from_column_slice(x0);
    }
    if let Some(y0) = &config.y0 {
        if y0.len() != p.oracle.dim_y() {
            return Err(HarnessError::Usage(format!(
                "y0 has length {}, problem needs {}",
                y0.len(),
                p.oracle.dim_y()
            )));
        }
        p.y0 = DVector::from_column_slice(y0);
    }
    Ok(p)
}
