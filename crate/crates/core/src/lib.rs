//! Maximum-entropy band extension for symmetric block-circulant covariances, and
//! maximum-likelihood identification of stationary reciprocal processes on the discrete circle.

pub mod blockcirc;
pub mod error;
pub mod feasibility;
pub mod identify;
pub mod io;
mod linalg;
pub mod maxent;
pub mod reciprocal;

pub use blockcirc::{
    assemble_circulant, band_residual, dft_block_diagonalize, idft_reconstruct, inverse, logdet,
    project_circulant, BlockCirculant, CovBand, SpectralForm,
};
pub use error::{CmxError, FeasibilityCertificate, Result};
pub use feasibility::{
    block_levinson, find_feasible_n, FeasibilityReport, FeasibleExtension, LevinsonResult,
};
pub use identify::{
    identify, log_likelihood, sufficient_statistics, Dataset, IdentifyOptions, SufficientStats,
};
pub use maxent::{dual_gradient, dual_objective, entropy, solve, Solution, SolverConfig};
pub use nalgebra::DMatrix;
pub use reciprocal::{
    covariance_of_model, model_from_covariance, sample, verify_model, yule_walker,
    ReciprocalModel, VerificationReport,
};
