//! Reciprocal AR models of order `n` on the discrete circle.
//!
//! A model is the banded symmetric block-circulant matrix `M_N` with first block column
//! `M_0, M_1, ..., M_n, 0, ..., 0, M_n^T, ..., M_1^T`, so that `sum_k M_k y(t-k) = e(t)` with
//! `M_{-k} = M_k^T`. The process covariance is `M_N^{-1}`.

use nalgebra::DMatrix;
use num_complex::Complex64;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use rustfft::FftPlanner;
use serde::{Deserialize, Serialize};

use crate::blockcirc::{
    self, band_residual, dft_block_diagonalize, idft_reconstruct, BlockCirculant, SpectralForm,
    PD_REL_TOL,
};
use crate::error::{CmxError, Result};
use crate::identify::Dataset;
use crate::linalg::{self, CMat, Mat};

/// Default relative off-band tolerance for [`model_from_covariance`].
pub const DEFAULT_BAND_TOL: f64 = 1e-6;

/// Residual level below which [`verify_model`] reports a consistent pair.
pub const VERIFY_TOL: f64 = 1e-8;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "ModelWire", into = "ModelWire")]
pub struct ReciprocalModel {
    m: usize,
    n_blocks: usize,
    blocks: Vec<Mat>,
}

impl ReciprocalModel {
    /// Validates shape, symmetry of `M_0` and positive definiteness of the assembled `M_N`.
    pub fn new(blocks: Vec<Mat>, n_blocks: usize) -> Result<Self> {
        let model = Self::new_unchecked(blocks, n_blocks)?;
        let spec = dft_block_diagonalize(&model.circulant());
        if !spec.is_positive_definite() {
            return Err(CmxError::InvalidModel(format!(
                "M_N is not positive definite (min eigenvalue {:.3e})",
                spec.min_eigenvalue()
            )));
        }
        Ok(model)
    }

    /// Shape and symmetry checks only; `M_N` may be indefinite.
    pub(crate) fn new_unchecked(blocks: Vec<Mat>, n_blocks: usize) -> Result<Self> {
        let first = blocks
            .first()
            .ok_or_else(|| CmxError::InvalidModel("model needs M_0".into()))?;
        let m = first.nrows();
        let n = blocks.len() - 1;
        if m == 0 {
            return Err(CmxError::InvalidModel("block dimension must be positive".into()));
        }
        if n_blocks < 2 * n + 1 {
            return Err(CmxError::Dimension(format!(
                "order {n} needs N >= {}, got {n_blocks}",
                2 * n + 1
            )));
        }
        if blocks.iter().any(|b| b.nrows() != m || b.ncols() != m) {
            return Err(CmxError::Dimension(format!("model blocks must be {m}x{m}")));
        }
        if blocks.iter().any(|b| b.iter().any(|x| !x.is_finite())) {
            return Err(CmxError::InvalidModel("non-finite coefficients".into()));
        }
        let asym = (first - first.transpose()).norm();
        if asym > 1e-9 * (1.0 + first.norm()) {
            return Err(CmxError::InvalidModel(format!(
                "M_0 is not symmetric (defect {asym:.3e})"
            )));
        }
        let mut blocks = blocks;
        blocks[0] = linalg::symmetrize(&blocks[0]);
        Ok(ReciprocalModel {
            m,
            n_blocks,
            blocks,
        })
    }

    pub fn m(&self) -> usize {
        self.m
    }

    pub fn order(&self) -> usize {
        self.blocks.len() - 1
    }

    pub fn n_blocks(&self) -> usize {
        self.n_blocks
    }

    /// `M_0, ..., M_n`.
    pub fn blocks(&self) -> &[Mat] {
        &self.blocks
    }

    /// The banded block-circulant `M_N`.
    pub fn circulant(&self) -> BlockCirculant {
        let n = self.order();
        let mut col = vec![DMatrix::zeros(self.m, self.m); self.n_blocks];
        col[0] = self.blocks[0].clone();
        for k in 1..=n {
            col[k] = self.blocks[k].clone();
            col[self.n_blocks - k] = self.blocks[k].transpose();
        }
        BlockCirculant::new(col).expect("validated shape")
    }

    /// `c * M_k` for every block.
    pub fn scaled(&self, c: f64) -> ReciprocalModel {
        ReciprocalModel {
            m: self.m,
            n_blocks: self.n_blocks,
            blocks: self.blocks.iter().map(|b| b * c).collect(),
        }
    }
}

/// Coefficients `F_k` of `sum_{k=-n}^{n} F_k y(t-k) = d(t)` (with `F_0 = I`) and the conjugate
/// process variance.
#[derive(Debug, Clone, PartialEq)]
pub struct YuleWalkerSolution {
    order: usize,
    /// `F_{-n}, ..., F_{-1}, F_1, ..., F_n`.
    coeffs: Vec<Mat>,
    pub stats: ConjugateStats,
}

impl YuleWalkerSolution {
    pub fn order(&self) -> usize {
        self.order
    }

    /// `F_k` for `-n <= k <= n`; `F_0` is the identity.
    pub fn coefficient(&self, k: isize) -> Mat {
        let n = self.order as isize;
        assert!(k.abs() <= n, "coefficient index {k} outside [-{n}, {n}]");
        let m = self.stats.delta.nrows();
        match k {
            0 => DMatrix::identity(m, m),
            k if k < 0 => self.coeffs[(k + n) as usize].clone(),
            k => self.coeffs[(k + n - 1) as usize].clone(),
        }
    }

    /// `Delta^{-1} F_k` for `k = 0..=n`.
    pub fn normalized_blocks(&self) -> Result<Vec<Mat>> {
        let delta_inv = self
            .stats
            .delta
            .clone()
            .try_inverse()
            .ok_or_else(|| CmxError::DegenerateProcess("Delta is singular".into()))?;
        Ok((0..=self.order as isize)
            .map(|k| &delta_inv * self.coefficient(k))
            .collect())
    }

    /// `max_k ||Delta^{-1} F_{-k} - (Delta^{-1} F_k)^T||_F`; zero for an exact reciprocal covariance.
    pub fn center_symmetry_defect(&self) -> Result<f64> {
        let delta_inv = self
            .stats
            .delta
            .clone()
            .try_inverse()
            .ok_or_else(|| CmxError::DegenerateProcess("Delta is singular".into()))?;
        let n = self.order as isize;
        Ok((1..=n)
            .map(|k| {
                let neg = &delta_inv * self.coefficient(-k);
                let pos = &delta_inv * self.coefficient(k);
                (neg - pos.transpose()).norm()
            })
            .fold(0.0, f64::max))
    }

    /// The banded circulant `F_N = Circ{I, F_1, ..., F_n, 0, ..., F_{-n}, ..., F_{-1}}`.
    pub fn f_circulant(&self, n_blocks: usize) -> Result<BlockCirculant> {
        let n = self.order;
        if n_blocks < 2 * n + 1 {
            return Err(CmxError::Dimension(format!("N = {n_blocks} < 2n+1")));
        }
        let m = self.stats.delta.nrows();
        let mut col = vec![DMatrix::zeros(m, m); n_blocks];
        col[0] = DMatrix::identity(m, m);
        for k in 1..=n {
            col[k] = self.coefficient(k as isize);
            col[n_blocks - k] = self.coefficient(-(k as isize));
        }
        BlockCirculant::new(col)
    }
}

/// Variance `Delta` of the unnormalized conjugate process `d(t)`.
#[derive(Debug, Clone, PartialEq)]
pub struct ConjugateStats {
    pub delta: Mat,
}

/// Normal equations `F R = -rho` expressing `d(t)` orthogonal to the `2n` neighbours of `y(t)`.
///
/// The neighbours are stacked in time order `y(t-n), ..., y(t-1), y(t+1), ..., y(t+n)`, so `R` is a
/// principal submatrix of the circulant covariance and the unknown row is
/// `[F_n, ..., F_1, F_{-1}, ..., F_{-n}]`.
#[derive(Debug, Clone, PartialEq)]
pub struct YuleWalkerSystem {
    pub matrix: Mat,
    pub rhs: Mat,
}

fn lag_of(lags: &[Mat], d: isize) -> Mat {
    if d >= 0 {
        lags[d as usize].clone()
    } else {
        lags[(-d) as usize].transpose()
    }
}

/// Neighbour offsets `-n..=-1, 1..=n` in time order.
fn neighbour_offsets(n: usize) -> Vec<isize> {
    let n = n as isize;
    (-n..=-1).chain(1..=n).collect()
}

pub fn yule_walker_system(lags: &[Mat]) -> Result<YuleWalkerSystem> {
    if lags.is_empty() || lags.len().is_multiple_of(2) {
        return Err(CmxError::Dimension(format!(
            "need 2n+1 lags, got {}",
            lags.len()
        )));
    }
    let m = lags[0].nrows();
    if lags.iter().any(|l| l.nrows() != m || l.ncols() != m) {
        return Err(CmxError::Dimension(format!("lags must be {m}x{m}")));
    }
    let n = (lags.len() - 1) / 2;
    let offs = neighbour_offsets(n);
    let size = offs.len() * m;
    let mut matrix = DMatrix::zeros(size, size);
    let mut rhs = DMatrix::zeros(m, size);
    for (a, &ra) in offs.iter().enumerate() {
        for (b, &rb) in offs.iter().enumerate() {
            matrix
                .view_mut((a * m, b * m), (m, m))
                .copy_from(&lag_of(lags, ra - rb));
        }
        // E y(t) y(t + r)^T = Sigma_{-r}
        rhs.view_mut((0, a * m), (m, m))
            .copy_from(&(-lag_of(lags, -ra)));
    }
    Ok(YuleWalkerSystem { matrix, rhs })
}

/// Solves the two-sided normal equations from `Sigma_0, ..., Sigma_{2n}`.
pub fn yule_walker(lags: &[Mat]) -> Result<YuleWalkerSolution> {
    let sys = yule_walker_system(lags)?;
    let m = lags[0].nrows();
    let n = (lags.len() - 1) / 2;

    let coeffs_row = if n == 0 {
        DMatrix::zeros(m, 0)
    } else {
        let ev = linalg::symmetric_eigenvalues(&sys.matrix);
        let scale = ev.iter().fold(0.0_f64, |a, &x| a.max(x.abs()));
        if ev[0] <= PD_REL_TOL * (1.0 + scale) {
            return Err(CmxError::DegenerateProcess(format!(
                "neighbour covariance is singular (min eigenvalue {:.3e})",
                ev[0]
            )));
        }
        let chol = linalg::symmetrize(&sys.matrix)
            .cholesky()
            .ok_or_else(|| CmxError::DegenerateProcess("neighbour covariance not PD".into()))?;
        // F R = rhs  <=>  R F^T = rhs^T
        chol.solve(&sys.rhs.transpose()).transpose()
    };

    // Delta = Sigma_0 + sum_r F_(r) E y(t+r) y(t)^T = Sigma_0 - F rhs^T
    let mut delta = lags[0].clone() - &coeffs_row * sys.rhs.transpose();
    delta = linalg::symmetrize(&delta);
    let ev = linalg::symmetric_eigenvalues(&delta);
    let scale = linalg::symmetric_eigenvalues(&lags[0])
        .iter()
        .fold(0.0_f64, |a, &x| a.max(x.abs()));
    if ev[0] <= PD_REL_TOL * (1.0 + scale) {
        return Err(CmxError::DegenerateProcess(format!(
            "conjugate variance Delta is not positive definite (min eigenvalue {:.3e})",
            ev[0]
        )));
    }

    // Unknown row is time ordered: offsets -n..-1 multiply F_n..F_1, offsets 1..n multiply F_{-1}..F_{-n}.
    let offs = neighbour_offsets(n);
    let mut coeffs = vec![DMatrix::zeros(m, m); 2 * n];
    for (a, &r) in offs.iter().enumerate() {
        let blk = coeffs_row.view((0, a * m), (m, m)).into_owned();
        let k = -r;
        let idx = if k < 0 {
            (k + n as isize) as usize
        } else {
            (k + n as isize - 1) as usize
        };
        coeffs[idx] = blk;
    }
    Ok(YuleWalkerSolution {
        order: n,
        coeffs,
        stats: ConjugateStats { delta },
    })
}

/// Covariance `Sigma_N = M_N^{-1}` of the process generated by a model.
pub fn covariance_of_model(model: &ReciprocalModel) -> Result<BlockCirculant> {
    blockcirc::inverse(&model.circulant()).map_err(|e| match e {
        CmxError::NotInvertible { .. } | CmxError::NotPositiveDefinite { .. } => {
            CmxError::InvalidModel(e.to_string())
        }
        other => other,
    })
    .and_then(|c| {
        if dft_block_diagonalize(&c).is_positive_definite() {
            Ok(c)
        } else {
            Err(CmxError::InvalidModel("M_N is not positive definite".into()))
        }
    })
}

/// Reads the model off a covariance whose inverse is banded of bandwidth `n`.
pub fn model_from_covariance(
    c: &BlockCirculant,
    n: usize,
    band_tol: f64,
) -> Result<ReciprocalModel> {
    if 2 * n >= c.len() {
        return Err(CmxError::Dimension(format!(
            "order {n} needs N > {}, got N = {}",
            2 * n,
            c.len()
        )));
    }
    if !c.is_symmetric(1e-9) {
        return Err(CmxError::NotACovariance(format!(
            "not symmetric (defect {:.3e})",
            c.symmetry_defect()
        )));
    }
    let spec = dft_block_diagonalize(c);
    if !spec.is_positive_definite() {
        return Err(CmxError::NotACovariance(format!(
            "not positive definite (min eigenvalue {:.3e})",
            spec.min_eigenvalue()
        )));
    }
    let inv = blockcirc::inverse(c)?;
    let residual = band_residual(&inv, n)?;
    if residual > band_tol {
        return Err(CmxError::NotReciprocal {
            order: n,
            residual,
            tolerance: band_tol,
        });
    }
    ReciprocalModel::new(inv.band(n), c.len())
}

/// Consistency diagnostics for a (model, covariance) pair.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct VerificationReport {
    /// `||M_N C - I||_F`.
    pub product_residual: f64,
    /// Off-band mass of `C^{-1}` at the model's order; infinite when `C` is singular.
    pub band_residual: f64,
    /// `max_k ||(C^{-1})_{-k} - (C^{-1})_k^T||_F` of the unsymmetrized frequency-wise inverse.
    pub center_symmetry_defect: f64,
    pub tolerance: f64,
    pub passed: bool,
}

pub fn verify_model(model: &ReciprocalModel, c: &BlockCirculant) -> Result<VerificationReport> {
    let mn = model.circulant();
    let prod = mn.multiply(c)?;
    let ident = BlockCirculant::identity(c.m(), c.len());
    let product_residual = prod.axpy(-1.0, &ident)?.frobenius_norm();

    let spec = dft_block_diagonalize(c);
    let (band_res, defect) = match blockcirc::inverse_spectral(&spec) {
        Ok(inv) => {
            let raw = idft_reconstruct(&inv)?;
            let defect = raw.symmetry_defect();
            (band_residual(&raw.symmetrized(), model.order())?, defect)
        }
        Err(_) => (f64::INFINITY, f64::INFINITY),
    };
    let passed = product_residual <= VERIFY_TOL && band_res <= VERIFY_TOL && defect <= VERIFY_TOL;
    Ok(VerificationReport {
        product_residual,
        band_residual: band_res,
        center_symmetry_defect: defect,
        tolerance: VERIFY_TOL,
        passed,
    })
}

/// `T` independent Gaussian realizations with covariance `M_N^{-1}`.
///
/// Each realization is `R z` with `z` standard normal and `R` the real block-circulant square root
/// whose frequency blocks are the Hermitian square roots of `Psi_l(M_N)^{-1}`.
pub fn sample(model: &ReciprocalModel, realizations: usize, seed: u64) -> Result<Dataset> {
    if realizations == 0 {
        return Err(CmxError::Malformed("need at least one realization".into()));
    }
    let spec = dft_block_diagonalize(&model.circulant());
    if !spec.is_positive_definite() {
        return Err(CmxError::InvalidModel("M_N is not positive definite".into()));
    }
    let cov_spec = blockcirc::inverse_spectral(&spec)
        .map_err(|e| CmxError::InvalidModel(e.to_string()))?;
    let roots: Vec<CMat> = cov_spec.blocks().iter().map(linalg::hermitian_sqrt).collect();
    let roots = SpectralForm::new(roots)?;

    let m = model.m();
    let nb = model.n_blocks();
    let mut planner = FftPlanner::<f64>::new();
    let fwd = planner.plan_fft_forward(nb);
    let inv = planner.plan_fft_inverse(nb);
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut bufs = vec![vec![Complex64::new(0.0, 0.0); nb]; m];
    let scale = 1.0 / nb as f64;

    let mut out = Vec::with_capacity(realizations);
    for _ in 0..realizations {
        for t in 0..nb {
            for buf in bufs.iter_mut() {
                let z: f64 = StandardNormal.sample(&mut rng);
                buf[t] = Complex64::new(z, 0.0);
            }
        }
        for buf in bufs.iter_mut() {
            inv.process(buf);
        }
        for (l, root) in roots.blocks().iter().enumerate() {
            let zl: Vec<Complex64> = bufs.iter().map(|b| b[l]).collect();
            for a in 0..m {
                let mut acc = Complex64::new(0.0, 0.0);
                for (b, z) in zl.iter().enumerate() {
                    acc += root[(a, b)] * z;
                }
                bufs[a][l] = acc;
            }
        }
        for buf in bufs.iter_mut() {
            fwd.process(buf);
        }
        let mut y = vec![0.0; nb * m];
        for t in 0..nb {
            for a in 0..m {
                y[t * m + a] = bufs[a][t].re * scale;
            }
        }
        out.push(y);
    }
    Dataset::new(m, nb, out)
}

#[derive(Serialize, Deserialize)]
struct ModelWire {
    m: usize,
    n: usize,
    #[serde(rename = "N")]
    n_blocks: usize,
    #[serde(rename = "M")]
    blocks: Vec<Vec<f64>>,
}

impl TryFrom<ModelWire> for ReciprocalModel {
    type Error = CmxError;
    fn try_from(w: ModelWire) -> Result<Self> {
        if w.m == 0 {
            return Err(CmxError::Malformed("m must be positive".into()));
        }
        if w.blocks.len() != w.n + 1 {
            return Err(CmxError::Malformed(format!(
                "order {} needs {} blocks, got {}",
                w.n,
                w.n + 1,
                w.blocks.len()
            )));
        }
        ReciprocalModel::new(blockcirc::blocks_from_rows(w.m, w.blocks)?, w.n_blocks)
    }
}

impl From<ReciprocalModel> for ModelWire {
    fn from(model: ReciprocalModel) -> Self {
        ModelWire {
            m: model.m,
            n: model.order(),
            n_blocks: model.n_blocks,
            blocks: blockcirc::rows_from_blocks(&model.blocks),
        }
    }
}
