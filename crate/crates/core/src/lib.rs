//! Cubic-regularised gradient descent-ascent for nonconvex-strongly-concave
//! minimax problems `min_x max_y f(x, y)`.
//!
//! The deterministic driver ([`driver_det::run_cubic_gda`]) and its
//! finite-sum variant ([`driver_stoch::run_stochastic_cubic_gda`]) seek
//! second-order stationary points of the envelope `Φ(x) = max_y f(x, y)`.
//! They need only gradients and Jacobian-vector products of `f`.
//!
//! ```
//! use cubic_gda::driver_det::{run_cubic_gda, RunConfig};
//! use cubic_gda::oracle::MinimaxOracle;
//! use cubic_gda::testbed::make_strict_saddle;
//! use nalgebra::dvector;
//!
//! let problem = make_strict_saddle();
//! let config = RunConfig::for_accuracy(problem.profile(), 0.2);
//! let run = run_cubic_gda(&problem, &dvector![1.0, 0.5], &dvector![0.0], &config).unwrap();
//! assert!(run.t_prime.is_some());
//! ```

pub mod cubic;
pub mod diagnostics;
pub mod driver_det;
pub mod driver_stoch;
pub mod error;
pub mod linalg;
pub mod oracle;
pub mod rng;
pub mod schur;
pub mod testbed;

pub use error::{Error, Result};

// One module per book chapter so `cargo test --doc` runs the listings and a
// failure names its chapter.
#[cfg(doctest)]
#[doc = include_str!("../../../book/src/introduction.md")]
pub mod book_introduction {}

#[cfg(doctest)]
#[doc = include_str!("../../../book/src/problems.md")]
pub mod book_problems {}

#[cfg(doctest)]
#[doc = include_str!("../../../book/src/deterministic.md")]
pub mod book_deterministic {}

#[cfg(doctest)]
#[doc = include_str!("../../../book/src/stochastic.md")]
pub mod book_stochastic {}

#[cfg(doctest)]
#[doc = include_str!("../../../book/src/diagnostics.md")]
pub mod book_diagnostics {}

#[cfg(doctest)]
#[doc = include_str!("../../../book/src/cli.md")]
pub mod book_cli {}

#[cfg(doctest)]
#[doc = include_str!("../../../book/src/acceptance.md")]
pub mod book_acceptance {}
