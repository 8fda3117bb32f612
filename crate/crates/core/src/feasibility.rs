//! Constructive feasibility of positive-definite circulant extensions.
//!
//! The band is extended to an infinite lag sequence by the matrix AR recursion produced by the
//! multichannel Levinson-Whittle algorithm (the maximum-entropy Toeplitz extension), then wrapped
//! onto the circle of length `N`. Positivity of the wrap is decided directly on its frequency
//! blocks. This is the smallest `N` for which *this particular* wrap is positive definite; a
//! different completion may already exist at a smaller `N`.

use nalgebra::DMatrix;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::blockcirc::{dft_block_diagonalize, BlockCirculant, CovBand, PD_REL_TOL};
use crate::error::{CmxError, EigenTrace, Result};
use crate::linalg::{self, Mat};

/// Forward AR coefficients `A_1, ..., A_n` and innovation covariance of the order-`n` predictor
/// `y(t) + sum_j A_j y(t-j) = eps(t)`.
#[derive(Debug, Clone, PartialEq)]
pub struct LevinsonResult {
    pub m: usize,
    pub ar_coeffs: Vec<Mat>,
    pub innovation: Mat,
}

impl LevinsonResult {
    pub fn order(&self) -> usize {
        self.ar_coeffs.len()
    }
}

/// Smallest feasible circle length together with its wrapped extension.
#[derive(Debug, Clone, PartialEq)]
pub struct FeasibleExtension {
    n_blocks: usize,
    wrap: BlockCirculant,
    trace: EigenTrace,
}

impl FeasibleExtension {
    pub fn n_blocks(&self) -> usize {
        self.n_blocks
    }

    pub fn wrap(&self) -> &BlockCirculant {
        &self.wrap
    }

    /// `(N, min eigenvalue)` for every `N` examined, ending at the feasible one.
    pub fn trace(&self) -> &EigenTrace {
        &self.trace
    }

    pub fn into_parts(self) -> (usize, BlockCirculant) {
        (self.n_blocks, self.wrap)
    }
}

/// JSON report of a feasibility scan.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FeasibilityReport {
    pub feasible: bool,
    #[serde(rename = "N")]
    pub n_blocks: Option<usize>,
    pub n_max: usize,
    pub min_eigenvalue: Option<f64>,
    pub trace: EigenTrace,
}

/// Default search horizon `16 (2n + 1)`.
pub fn default_horizon(n: usize) -> usize {
    16 * (2 * n + 1)
}

fn is_pd(a: &Mat, scale: f64) -> bool {
    linalg::symmetric_eigenvalues(a)[0] > PD_REL_TOL * (1.0 + scale)
}

/// Multichannel Levinson-Whittle recursion on the block Toeplitz matrix of the band.
pub fn block_levinson(band: &CovBand) -> Result<LevinsonResult> {
    let m = band.m();
    let n = band.order();
    let sigma = band.sigma();
    let scale = linalg::symmetric_eigenvalues(&sigma[0])
        .iter()
        .fold(0.0_f64, |a, &x| a.max(x.abs()));

    let mut fwd: Vec<Mat> = Vec::with_capacity(n);
    let mut bwd: Vec<Mat> = Vec::with_capacity(n);
    let mut v_fwd = sigma[0].clone();
    let mut v_bwd = sigma[0].clone();
    if !is_pd(&v_fwd, scale) {
        return Err(CmxError::InfeasibleBand);
    }

    for p in 0..n {
        // Cross-covariance of the forward error with y(t-p-1).
        let mut delta = sigma[p + 1].clone();
        for (j, a) in fwd.iter().enumerate() {
            delta += a * &sigma[p - j];
        }
        let vb_inv = v_bwd
            .clone()
            .try_inverse()
            .ok_or(CmxError::InfeasibleBand)?;
        let vf_inv = v_fwd
            .clone()
            .try_inverse()
            .ok_or(CmxError::InfeasibleBand)?;
        let k_fwd = -(&delta * vb_inv);
        let k_bwd = -(delta.transpose() * vf_inv);

        let new_fwd: Vec<Mat> = (0..p)
            .map(|j| &fwd[j] + &k_fwd * &bwd[p - 1 - j])
            .chain(std::iter::once(k_fwd.clone()))
            .collect();
        let new_bwd: Vec<Mat> = (0..p)
            .map(|j| &bwd[j] + &k_bwd * &fwd[p - 1 - j])
            .chain(std::iter::once(k_bwd.clone()))
            .collect();

        v_fwd = linalg::symmetrize(&(&v_fwd + &k_fwd * delta.transpose()));
        v_bwd = linalg::symmetrize(&(&v_bwd + &k_bwd * &delta));
        if !is_pd(&v_fwd, scale) || !is_pd(&v_bwd, scale) {
            return Err(CmxError::InfeasibleBand);
        }
        fwd = new_fwd;
        bwd = new_bwd;
    }

    Ok(LevinsonResult {
        m,
        ar_coeffs: fwd,
        innovation: v_fwd,
    })
}

/// Lags `Sigma_{n+1}, ..., Sigma_{n+count}` from `Sigma_i = -sum_j A_j Sigma_{i-j}`.
pub fn ar_extend(lev: &LevinsonResult, band: &CovBand, count: usize) -> Result<Vec<Mat>> {
    let n = band.order();
    if lev.order() != n || lev.m != band.m() {
        return Err(CmxError::Dimension(format!(
            "Levinson result (m={}, n={}) does not match band (m={}, n={n})",
            lev.m,
            lev.order(),
            band.m()
        )));
    }
    let m = band.m();
    let mut lags: Vec<Mat> = band.sigma().to_vec();
    for i in n + 1..=n + count {
        let mut next = DMatrix::zeros(m, m);
        for (j, a) in lev.ar_coeffs.iter().enumerate() {
            next -= a * &lags[i - j - 1];
        }
        lags.push(next);
    }
    Ok(lags.split_off(n + 1))
}

/// Wraps a lag sequence `Sigma_0, Sigma_1, ...` (at least `N/2 + 1` lags) onto the circle of
/// length `N`. Even `N` puts `Sigma_{N/2} + Sigma_{N/2}^T` in the center slot.
pub fn wrap_lags(lags: &[Mat], n_blocks: usize) -> Result<BlockCirculant> {
    let half = n_blocks / 2;
    if lags.len() <= half {
        return Err(CmxError::Dimension(format!(
            "wrapping onto N = {n_blocks} needs {} lags, got {}",
            half + 1,
            lags.len()
        )));
    }
    let m = lags[0].nrows();
    let mut blocks = vec![DMatrix::zeros(m, m); n_blocks];
    blocks[0] = lags[0].clone();
    for k in 1..=half {
        if 2 * k == n_blocks {
            blocks[k] = &lags[k] + lags[k].transpose();
        } else {
            blocks[k] = lags[k].clone();
            blocks[n_blocks - k] = lags[k].transpose();
        }
    }
    BlockCirculant::new(blocks)
}

/// Full AR-extended lag sequence `Sigma_0, ..., Sigma_{len-1}`.
pub fn extended_lags(band: &CovBand, len: usize) -> Result<Vec<Mat>> {
    let lev = block_levinson(band)?;
    let n = band.order();
    let mut lags = band.sigma().to_vec();
    if len > n + 1 {
        lags.extend(ar_extend(&lev, band, len - n - 1)?);
    }
    lags.truncate(len.max(1));
    Ok(lags)
}

/// Smallest eigenvalue over the frequency blocks of the wrap at `N`, and the PD verdict.
pub fn wrap_spectrum_check(lags: &[Mat], n_blocks: usize) -> Result<(f64, bool)> {
    let wrap = wrap_lags(lags, n_blocks)?;
    let spec = dft_block_diagonalize(&wrap);
    Ok((spec.min_eigenvalue(), spec.is_positive_definite()))
}

/// Smallest `N` in `[2n+1, n_max]` whose wrapped AR extension is positive definite.
pub fn find_feasible_n(band: &CovBand, n_max: usize) -> Result<FeasibleExtension> {
    let n = band.order();
    let lev = block_levinson(band)?;
    let n_min = 2 * n + 1;
    let lags = {
        let mut lags = band.sigma().to_vec();
        let needed = n_max / 2 + 1;
        if needed > n + 1 {
            lags.extend(ar_extend(&lev, band, needed - n - 1)?);
        }
        lags
    };

    let chunk = rayon::current_num_threads().max(1);
    let mut trace = EigenTrace::new();
    let mut start = n_min;
    while start <= n_max {
        let end = (start + chunk - 1).min(n_max);
        let results: Vec<(usize, f64, bool)> = (start..=end)
            .into_par_iter()
            .map(|nb| {
                let (min, ok) = wrap_spectrum_check(&lags, nb).expect("enough lags for horizon");
                (nb, min, ok)
            })
            .collect();
        for (nb, min, ok) in results {
            trace.push((nb, min));
            if ok {
                return Ok(FeasibleExtension {
                    n_blocks: nb,
                    wrap: wrap_lags(&lags, nb)?,
                    trace,
                });
            }
        }
        start = end + 1;
    }
    Err(CmxError::HorizonExhausted { n_max, trace })
}

/// Runs [`find_feasible_n`] and summarizes the outcome; infeasible bands still error.
pub fn feasibility_report(band: &CovBand, n_max: usize) -> Result<FeasibilityReport> {
    match find_feasible_n(band, n_max) {
        Ok(ext) => Ok(FeasibilityReport {
            feasible: true,
            n_blocks: Some(ext.n_blocks),
            n_max,
            min_eigenvalue: ext.trace.last().map(|t| t.1),
            trace: ext.trace,
        }),
        Err(CmxError::HorizonExhausted { n_max, trace }) => Ok(FeasibilityReport {
            feasible: false,
            n_blocks: None,
            n_max,
            min_eigenvalue: None,
            trace,
        }),
        Err(e) => Err(e),
    }
}
