use thiserror::Error;

use crate::cubic::{CubicStep, KktReport};
use crate::linalg::CgReport;

/// Errors raised by oracles, solvers and drivers.
///
/// [`Error::is_usage`] separates caller mistakes from numerical failures so
/// front ends can map them to distinct exit codes.
#[derive(Debug, Error)]
pub enum Error {
    #[error("dimension mismatch for {what}: expected {expected}, got {got}")]
    Dimension {
        what: &'static str,
        expected: usize,
        got: usize,
    },
    #[error("sample index {index} out of range for {len} samples")]
    SampleIndex { index: usize, len: usize },
    #[error("invalid argument: {0}")]
    Usage(String),
    #[error("invalid configuration: {0}")]
    Config(String),
    #[error("operator of dimension {dim} exceeds the dense cap {cap}")]
    DenseCap { dim: usize, cap: usize },
    #[error("operator is not symmetric (max asymmetry {asymmetry:.3e})")]
    Asymmetric { asymmetry: f64 },
    #[error("non-finite value encountered in {0}")]
    NonFinite(&'static str),
    #[error("conjugate gradient did not converge: residual {:.3e} after {} iterations", .0.residual_norm, .0.iterations)]
    CgNotConverged(Box<CgReport>),
    #[error("Lanczos did not converge (best estimate {estimate:.6e}, residual {residual:.3e})")]
    LanczosNotConverged { estimate: f64, residual: f64 },
    #[error("secular equation root-find failed on bracket [{lo:.6e}, {hi:.6e}]")]
    RootFind { lo: f64, hi: f64 },
    #[error("cubic step failed KKT verification: {0:?}")]
    Kkt(KktReport),
    #[error("cubic solver did not converge within {iterations} iterations")]
    CubicNotConverged {
        iterations: usize,
        best: Box<CubicStep>,
    },
    #[error("{what} did not converge within {iterations} iterations (last residual {residual:.3e})")]
    NotConverged {
        what: &'static str,
        iterations: usize,
        residual: f64,
    },
}

impl Error {
    pub fn is_usage(&self) -> bool {
        matches!(
            self,
            Error::Dimension { .. }
                | Error::SampleIndex { .. }
                | Error::Usage(_)
                | Error::Config(_)
                | Error::DenseCap { .. }
        )
    }
}

pub type Result<T> = std::result::Result<T, Error>;
