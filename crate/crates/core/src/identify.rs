//! Maximum-likelihood identification of reciprocal models from periodic realizations.
//!
//! The circular sample covariances `Sigma_hat_0..n` are sufficient statistics. The estimate is
//! the banded inverse of their maximum-entropy circulant extension.

use nalgebra::DMatrix;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::blockcirc::{self, BlockCirculant, CovBand};
use crate::error::{CmxError, Result};
use crate::linalg::{self, Mat};
use crate::maxent::{self, SolverConfig, SolverDiagnostics};
use crate::reciprocal::{model_from_covariance, ReciprocalModel, DEFAULT_BAND_TOL};

/// `T` realizations of one period, each `N` vectors in `R^m` stored time-major.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "DatasetWire", into = "DatasetWire")]
pub struct Dataset {
    m: usize,
    n_blocks: usize,
    realizations: Vec<Vec<f64>>,
}

impl Dataset {
    pub fn new(m: usize, n_blocks: usize, realizations: Vec<Vec<f64>>) -> Result<Self> {
        if m == 0 || n_blocks == 0 {
            return Err(CmxError::Dimension("m and N must be positive".into()));
        }
        if realizations.is_empty() {
            return Err(CmxError::Malformed("need at least one realization".into()));
        }
        for (t, r) in realizations.iter().enumerate() {
            if r.len() != m * n_blocks {
                return Err(CmxError::Dimension(format!(
                    "realization {t} has {} values, expected N*m = {}",
                    r.len(),
                    m * n_blocks
                )));
            }
            if r.iter().any(|x| !x.is_finite()) {
                return Err(CmxError::Malformed(format!("realization {t} is not finite")));
            }
        }
        Ok(Dataset {
            m,
            n_blocks,
            realizations,
        })
    }

    pub fn m(&self) -> usize {
        self.m
    }

    pub fn n_blocks(&self) -> usize {
        self.n_blocks
    }

    /// Number of realizations `T`.
    pub fn len(&self) -> usize {
        self.realizations.len()
    }

    pub fn is_empty(&self) -> bool {
        self.realizations.is_empty()
    }

    pub fn realizations(&self) -> &[Vec<f64>] {
        &self.realizations
    }

    /// `y^(t)(s)`.
    pub fn value(&self, t: usize, s: usize) -> &[f64] {
        &self.realizations[t][s * self.m..(s + 1) * self.m]
    }

    /// Every realization advanced cyclically: `y'(s) = y((s + offset) mod N)`.
    pub fn shifted(&self, offset: usize) -> Dataset {
        let nb = self.n_blocks;
        let m = self.m;
        let realizations = self
            .realizations
            .iter()
            .map(|r| {
                let mut out = vec![0.0; r.len()];
                for s in 0..nb {
                    let src = (s + offset) % nb;
                    out[s * m..(s + 1) * m].copy_from_slice(&r[src * m..(src + 1) * m]);
                }
                out
            })
            .collect();
        Dataset {
            m,
            n_blocks: nb,
            realizations,
        }
    }
}

#[derive(Serialize, Deserialize)]
struct DatasetWire {
    m: usize,
    #[serde(rename = "N")]
    n_blocks: usize,
    #[serde(rename = "T")]
    count: usize,
    realizations: Vec<Vec<f64>>,
}

impl TryFrom<DatasetWire> for Dataset {
    type Error = CmxError;
    fn try_from(w: DatasetWire) -> Result<Self> {
        if w.count != w.realizations.len() {
            return Err(CmxError::Malformed(format!(
                "T = {} but {} realizations given",
                w.count,
                w.realizations.len()
            )));
        }
        Dataset::new(w.m, w.n_blocks, w.realizations)
    }
}

impl From<Dataset> for DatasetWire {
    fn from(d: Dataset) -> Self {
        DatasetWire {
            m: d.m,
            n_blocks: d.n_blocks,
            count: d.realizations.len(),
            realizations: d.realizations,
        }
    }
}

/// Normalized circular sample covariances `Sigma_hat_0, ..., Sigma_hat_n`.
#[derive(Debug, Clone, PartialEq)]
pub struct SufficientStats {
    pub m: usize,
    /// Circle length of the data.
    pub n_blocks: usize,
    /// Number of realizations.
    pub samples: usize,
    pub sigma_hat: Vec<Mat>,
}

impl SufficientStats {
    pub fn order(&self) -> usize {
        self.sigma_hat.len() - 1
    }

    /// The sample band as a covariance band.
    pub fn band(&self) -> Result<CovBand> {
        CovBand::new(self.sigma_hat.clone())
    }

    /// Unnormalized statistic `T_k`: `T_0 = N Sigma_hat_0`, `T_k = 2N Sigma_hat_k^T` for `k >= 1`.
    pub fn statistic(&self, k: usize) -> Mat {
        let nf = self.n_blocks as f64;
        if k == 0 {
            &self.sigma_hat[0] * nf
        } else {
            self.sigma_hat[k].transpose() * (2.0 * nf)
        }
    }
}

/// `Sigma_hat_k = 1/(N T) sum_t sum_s y((s+k) mod N) y(s)^T`, with `Sigma_hat_0` symmetrized.
pub fn sufficient_statistics(data: &Dataset, n: usize) -> Result<SufficientStats> {
    let nb = data.n_blocks();
    let m = data.m();
    if 2 * n >= nb {
        return Err(CmxError::Dimension(format!(
            "order {n} requires N > {}, got N = {nb}",
            2 * n
        )));
    }
    let partial: Vec<Vec<Mat>> = data
        .realizations()
        .par_iter()
        .map(|r| {
            (0..=n)
                .map(|k| {
                    let mut acc = DMatrix::zeros(m, m);
                    for s in 0..nb {
                        let ahead = &r[((s + k) % nb) * m..((s + k) % nb + 1) * m];
                        let now = &r[s * m..(s + 1) * m];
                        for a in 0..m {
                            for b in 0..m {
                                acc[(a, b)] += ahead[a] * now[b];
                            }
                        }
                    }
                    acc
                })
                .collect()
        })
        .collect();

    let mut sigma_hat = vec![DMatrix::zeros(m, m); n + 1];
    for p in &partial {
        for (acc, x) in sigma_hat.iter_mut().zip(p) {
            *acc += x;
        }
    }
    let scale = 1.0 / (nb as f64 * data.len() as f64);
    for s in sigma_hat.iter_mut() {
        *s *= scale;
    }
    sigma_hat[0] = linalg::symmetrize(&sigma_hat[0]);
    Ok(SufficientStats {
        m,
        n_blocks: nb,
        samples: data.len(),
        sigma_hat,
    })
}

/// Gaussian log-likelihood `log det M_N - sum_k Tr(M_k T_k)`, up to additive constants and a
/// positive factor.
pub fn log_likelihood(model: &ReciprocalModel, stats: &SufficientStats) -> Result<f64> {
    if model.m() != stats.m {
        return Err(CmxError::Dimension(format!(
            "model has m = {}, statistics have m = {}",
            model.m(),
            stats.m
        )));
    }
    if model.n_blocks() != stats.n_blocks {
        return Err(CmxError::Dimension(format!(
            "model has N = {}, statistics have N = {}",
            model.n_blocks(),
            stats.n_blocks
        )));
    }
    if model.order() > stats.order() {
        return Err(CmxError::Dimension(format!(
            "model order {} exceeds statistics order {}",
            model.order(),
            stats.order()
        )));
    }
    let ld = blockcirc::logdet(&model.circulant())
        .map_err(|e| CmxError::InvalidModel(e.to_string()))?;
    let pairing: f64 = model
        .blocks()
        .iter()
        .enumerate()
        .map(|(k, mk)| (mk * stats.statistic(k)).trace())
        .sum();
    Ok(ld - pairing)
}

#[derive(Debug, Clone, PartialEq)]
pub struct IdentifyOptions {
    pub solver: SolverConfig,
    /// Added to `Sigma_hat_0` as `ridge * I` before solving.
    pub ridge: f64,
    /// Solve the extension on a longer circle than the data.
    pub extend_n: Option<usize>,
}

impl Default for IdentifyOptions {
    fn default() -> Self {
        IdentifyOptions {
            solver: SolverConfig::default(),
            ridge: 0.0,
            extend_n: None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct IdentifyDiagnostics {
    #[serde(rename = "T")]
    pub samples: usize,
    /// Circle length the extension was solved on.
    #[serde(rename = "N")]
    pub n_blocks: usize,
    /// Likelihood of the estimate; absent when the circle was extended.
    pub log_likelihood: Option<f64>,
    pub band_match_residual: Option<f64>,
    pub solver: Option<SolverDiagnostics>,
    pub error: Option<String>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Identification {
    pub model: ReciprocalModel,
    pub sigma: BlockCirculant,
    pub stats: SufficientStats,
    pub diagnostics: IdentifyDiagnostics,
}

/// Estimates an order-`n` reciprocal model from `data`.
pub fn identify(data: &Dataset, n: usize, opts: &IdentifyOptions) -> Result<Identification> {
    identify_detailed(data, n, opts).0
}

/// As [`identify`], also returning diagnostics on failure.
pub fn identify_detailed(
    data: &Dataset,
    n: usize,
    opts: &IdentifyOptions,
) -> (Result<Identification>, IdentifyDiagnostics) {
    let mut diag = IdentifyDiagnostics {
        samples: data.len(),
        n_blocks: opts.extend_n.unwrap_or(data.n_blocks()),
        log_likelihood: None,
        band_match_residual: None,
        solver: None,
        error: None,
    };
    let result = run(data, n, opts, &mut diag);
    if let Err(e) = &result {
        diag.error = Some(e.to_string());
    }
    (result, diag)
}

fn run(
    data: &Dataset,
    n: usize,
    opts: &IdentifyOptions,
    diag: &mut IdentifyDiagnostics,
) -> Result<Identification> {
    if !(opts.ridge.is_finite() && opts.ridge >= 0.0) {
        return Err(CmxError::Malformed(format!(
            "ridge must be non-negative, got {}",
            opts.ridge
        )));
    }
    let n_solve = opts.extend_n.unwrap_or(data.n_blocks());
    if n_solve < data.n_blocks() {
        return Err(CmxError::Malformed(format!(
            "extended N = {n_solve} is shorter than the data length {}",
            data.n_blocks()
        )));
    }
    let mut stats = sufficient_statistics(data, n)?;
    if opts.ridge > 0.0 {
        stats.sigma_hat[0] += DMatrix::identity(stats.m, stats.m) * opts.ridge;
    }
    let band = stats.band()?;
    if !band.is_strictly_positive() {
        return Err(CmxError::DegenerateData(format!(
            "sample Toeplitz matrix is not positive definite (min eigenvalue {:.3e})",
            band.toeplitz_min_eigenvalue()
        )));
    }

    let (solved, solver_diag) = maxent::solve_detailed(&band, n_solve, &opts.solver, None);
    diag.band_match_residual = solver_diag.band_match_residual;
    diag.solver = Some(solver_diag);
    let sol = solved?;
    let model = model_from_covariance(&sol.sigma, n, DEFAULT_BAND_TOL)?;
    if n_solve == data.n_blocks() {
        diag.log_likelihood = Some(log_likelihood(&model, &stats)?);
    }
    Ok(Identification {
        model,
        sigma: sol.sigma,
        stats,
        diagnostics: diag.clone(),
    })
}
