use serde::{Deserialize, Serialize};
use thiserror::Error;

/// Min-eigenvalue trace of a feasibility scan: `(N, min_l lambda_min(Psi_l))`.
pub type EigenTrace = Vec<(usize, f64)>;

/// Evidence attached to an infeasibility report from the solver.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FeasibilityCertificate {
    /// Circle length at which the extension was attempted.
    pub n_blocks: usize,
    /// Smallest eigenvalue over all frequency blocks of the wrapped AR extension at `n_blocks`.
    pub wrap_min_eigenvalue: f64,
    /// Smallest circle length for which the wrapped AR extension is positive definite, if any
    /// was found within the search horizon.
    pub smallest_feasible_n: Option<usize>,
    pub reason: String,
}

#[derive(Debug, Clone, Error)]
pub enum CmxError {
    #[error("dimension error: {0}")]
    Dimension(String),

    #[error("malformed input: {0}")]
    Malformed(String),

    #[error("not positive definite: min eigenvalue {min_eigenvalue:.3e} <= tolerance {tolerance:.3e}")]
    NotPositiveDefinite { min_eigenvalue: f64, tolerance: f64 },

    #[error("not invertible: frequency block {frequency} has eigenvalue {eigenvalue:.3e}")]
    NotInvertible { frequency: usize, eigenvalue: f64 },

    #[error("non-real reconstruction: imaginary residue {residue:.3e}")]
    NonRealReconstruction { residue: f64 },

    #[error("infeasible band: block Toeplitz matrix of the band is not positive definite")]
    InfeasibleBand,

    #[error("horizon exhausted: no feasible circulant wrap up to N = {n_max}")]
    HorizonExhausted { n_max: usize, trace: EigenTrace },

    #[error("degenerate process: {0}")]
    DegenerateProcess(String),

    #[error("invalid model: {0}")]
    InvalidModel(String),

    #[error("not a covariance: {0}")]
    NotACovariance(String),

    #[error("not reciprocal of order {order}: band residual {residual:.3e} exceeds {tolerance:.3e}")]
    NotReciprocal {
        order: usize,
        residual: f64,
        tolerance: f64,
    },

    #[error("no convergence after {iterations} iterations (relative gradient {grad_norm:.3e})")]
    NoConvergence { iterations: usize, grad_norm: f64 },

    #[error("infeasible at N = {}: {}", .0.n_blocks, .0.reason)]
    Infeasible(Box<FeasibilityCertificate>),

    #[error("insufficient or degenerate data: {0}")]
    DegenerateData(String),

    #[error("io error: {0}")]
    Io(String),
}

impl From<std::io::Error> for CmxError {
    fn from(e: std::io::Error) -> Self {
        CmxError::Io(e.to_string())
    }
}

impl From<serde_json::Error> for CmxError {
    fn from(e: serde_json::Error) -> Self {
        CmxError::Malformed(e.to_string())
    }
}

pub type Result<T> = std::result::Result<T, CmxError>;
