//! Block-circulant and block-Toeplitz matrix algebra.
//!
//! A block-circulant matrix with `N` blocks of size `m x m` is stored by its first block column
//! `C_0, ..., C_{N-1}`; block `(i, j)` of the assembled matrix is `C_{(i - j) mod N}`.
//!
//! Covariance lags follow `Sigma_k = E y(t+k) y(t)^T`, so the covariance of a stationary process
//! on the discrete circle has first block column `Sigma_0, Sigma_1, ..., Sigma_1^T`.
//!
//! Frequency blocks use `Psi_l = sum_k C_k exp(+j 2 pi l k / N)`, which equals the finite Fourier
//! transform of the first block row at angle `theta_l = -2 pi l / N`. For a real symmetric
//! circulant every `Psi_l` is Hermitian and `Psi_{N-l} = conj(Psi_l)`.

use nalgebra::DMatrix;
use num_complex::Complex64;
use rustfft::FftPlanner;
use serde::{Deserialize, Serialize};

use crate::error::{CmxError, Result};
use crate::linalg::{self, CMat, Mat};

/// Relative scale of the positive-definiteness threshold on frequency blocks.
pub const PD_REL_TOL: f64 = 1e-10;

/// Imaginary residue that `idft_reconstruct` silently drops.
pub const IMAG_TOL: f64 = 1e-10;

const SYMMETRY_TOL: f64 = 1e-9;

/// The band `Sigma_0, ..., Sigma_n` of `m x m` covariance lags.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "wire::CovBandWire", into = "wire::CovBandWire")]
pub struct CovBand {
    m: usize,
    sigma: Vec<Mat>,
}

impl CovBand {
    /// Builds a band from its lags. `Sigma_0` must be symmetric up to round-off; it is stored
    /// exactly symmetrized.
    pub fn new(sigma: Vec<Mat>) -> Result<Self> {
        let first = sigma
            .first()
            .ok_or_else(|| CmxError::Malformed("band needs at least Sigma_0".into()))?;
        let m = first.nrows();
        if m == 0 {
            return Err(CmxError::Dimension("block dimension must be positive".into()));
        }
        for (k, s) in sigma.iter().enumerate() {
            if s.nrows() != m || s.ncols() != m {
                return Err(CmxError::Dimension(format!(
                    "lag {k} is {}x{}, expected {m}x{m}",
                    s.nrows(),
                    s.ncols()
                )));
            }
            if s.iter().any(|x| !x.is_finite()) {
                return Err(CmxError::Malformed(format!("lag {k} has non-finite entries")));
            }
        }
        let asym = (first - first.transpose()).norm();
        if asym > SYMMETRY_TOL * (1.0 + first.norm()) {
            return Err(CmxError::Malformed(format!(
                "Sigma_0 is not symmetric (defect {asym:.3e})"
            )));
        }
        let mut sigma = sigma;
        sigma[0] = linalg::symmetrize(&sigma[0]);
        Ok(CovBand { m, sigma })
    }

    /// Scalar band `sigma_0, ..., sigma_n`.
    pub fn scalar(values: &[f64]) -> Result<Self> {
        CovBand::new(values.iter().map(|&v| DMatrix::from_element(1, 1, v)).collect())
    }

    pub fn m(&self) -> usize {
        self.m
    }

    /// Band order `n`.
    pub fn order(&self) -> usize {
        self.sigma.len() - 1
    }

    pub fn sigma(&self) -> &[Mat] {
        &self.sigma
    }

    /// Lag `k` for `|k| <= n`, with `Sigma_{-k} = Sigma_k^T`.
    pub fn lag(&self, k: isize) -> Mat {
        if k >= 0 {
            self.sigma[k as usize].clone()
        } else {
            self.sigma[(-k) as usize].transpose()
        }
    }

    pub fn scaled(&self, c: f64) -> CovBand {
        CovBand {
            m: self.m,
            sigma: self.sigma.iter().map(|s| s * c).collect(),
        }
    }

    /// Frobenius norm of the stacked lags.
    pub fn norm(&self) -> f64 {
        self.sigma.iter().map(linalg::frobenius_sq).sum::<f64>().sqrt()
    }

    /// The `(n+1)m x (n+1)m` block Toeplitz matrix with block `(i, j) = Sigma_{i-j}`.
    pub fn toeplitz(&self) -> Mat {
        let m = self.m;
        let size = self.sigma.len();
        let mut t = DMatrix::zeros(size * m, size * m);
        for i in 0..size {
            for j in 0..size {
                let blk = self.lag(i as isize - j as isize);
                t.view_mut((i * m, j * m), (m, m)).copy_from(&blk);
            }
        }
        t
    }

    /// Smallest eigenvalue of the block Toeplitz matrix.
    pub fn toeplitz_min_eigenvalue(&self) -> f64 {
        linalg::symmetric_eigenvalues(&self.toeplitz())[0]
    }

    /// Whether the block Toeplitz matrix is positive definite, with the same scale-relative
    /// threshold that is applied to frequency blocks.
    pub fn is_strictly_positive(&self) -> bool {
        let ev = linalg::symmetric_eigenvalues(&self.toeplitz());
        let scale = ev.iter().fold(0.0_f64, |a, &x| a.max(x.abs()));
        ev[0] > PD_REL_TOL * (1.0 + scale)
    }
}

/// A block-circulant matrix stored by its first block column.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "wire::BlockCirculantWire", into = "wire::BlockCirculantWire")]
pub struct BlockCirculant {
    m: usize,
    blocks: Vec<Mat>,
}

impl BlockCirculant {
    pub fn new(blocks: Vec<Mat>) -> Result<Self> {
        let first = blocks
            .first()
            .ok_or_else(|| CmxError::Dimension("circulant needs at least one block".into()))?;
        let m = first.nrows();
        if m == 0 {
            return Err(CmxError::Dimension("block dimension must be positive".into()));
        }
        if let Some(k) = blocks.iter().position(|b| b.nrows() != m || b.ncols() != m) {
            return Err(CmxError::Dimension(format!("block {k} is not {m}x{m}")));
        }
        if blocks.iter().any(|b| b.iter().any(|x| !x.is_finite())) {
            return Err(CmxError::Malformed("circulant has non-finite entries".into()));
        }
        Ok(BlockCirculant { m, blocks })
    }

    /// Scalar circulant from its first column.
    pub fn scalar(values: &[f64]) -> Result<Self> {
        BlockCirculant::new(values.iter().map(|&v| DMatrix::from_element(1, 1, v)).collect())
    }

    pub fn identity(m: usize, n_blocks: usize) -> Self {
        Self::zeros(m, n_blocks).with_block(0, DMatrix::identity(m, m))
    }

    pub fn zeros(m: usize, n_blocks: usize) -> Self {
        BlockCirculant {
            m,
            blocks: vec![DMatrix::zeros(m, m); n_blocks],
        }
    }

    fn with_block(mut self, k: usize, b: Mat) -> Self {
        self.blocks[k] = b;
        self
    }

    pub fn m(&self) -> usize {
        self.m
    }

    /// Number of blocks `N`.
    pub fn len(&self) -> usize {
        self.blocks.len()
    }

    pub fn is_empty(&self) -> bool {
        self.blocks.is_empty()
    }

    pub fn blocks(&self) -> &[Mat] {
        &self.blocks
    }

    pub fn into_blocks(self) -> Vec<Mat> {
        self.blocks
    }

    /// Block `C_{k mod N}`; negative `k` wraps.
    pub fn block(&self, k: isize) -> &Mat {
        let n = self.blocks.len() as isize;
        &self.blocks[k.rem_euclid(n) as usize]
    }

    /// Whether `C_0 = C_0^T` and `C_{N-k} = C_k^T`, relative to the largest block norm.
    pub fn is_symmetric(&self, rel_tol: f64) -> bool {
        self.symmetry_defect() <= rel_tol * (1.0 + self.max_block_norm())
    }

    /// `max_k ||C_{N-k} - C_k^T||_F`.
    pub fn symmetry_defect(&self) -> f64 {
        let n = self.blocks.len();
        (0..n)
            .map(|k| (&self.blocks[(n - k) % n] - self.blocks[k].transpose()).norm())
            .fold(0.0, f64::max)
    }

    fn max_block_norm(&self) -> f64 {
        self.blocks.iter().map(|b| b.norm()).fold(0.0, f64::max)
    }

    /// Exact symmetrization `(C + C^T) / 2`.
    pub fn symmetrized(&self) -> BlockCirculant {
        let n = self.blocks.len();
        let blocks = (0..n)
            .map(|k| (&self.blocks[k] + self.blocks[(n - k) % n].transpose()) * 0.5)
            .collect();
        BlockCirculant { m: self.m, blocks }
    }

    pub fn transpose(&self) -> BlockCirculant {
        let n = self.blocks.len();
        let blocks = (0..n).map(|k| self.blocks[(n - k) % n].transpose()).collect();
        BlockCirculant { m: self.m, blocks }
    }

    pub fn scaled(&self, c: f64) -> BlockCirculant {
        BlockCirculant {
            m: self.m,
            blocks: self.blocks.iter().map(|b| b * c).collect(),
        }
    }

    pub fn add(&self, other: &BlockCirculant) -> Result<BlockCirculant> {
        self.check_compatible(other)?;
        let blocks = self
            .blocks
            .iter()
            .zip(&other.blocks)
            .map(|(a, b)| a + b)
            .collect();
        Ok(BlockCirculant { m: self.m, blocks })
    }

    /// `self + t * other`.
    pub fn axpy(&self, t: f64, other: &BlockCirculant) -> Result<BlockCirculant> {
        self.check_compatible(other)?;
        let blocks = self
            .blocks
            .iter()
            .zip(&other.blocks)
            .map(|(a, b)| a + b * t)
            .collect();
        Ok(BlockCirculant { m: self.m, blocks })
    }

    /// Block-circulant product by direct cyclic convolution of first columns.
    pub fn multiply(&self, other: &BlockCirculant) -> Result<BlockCirculant> {
        self.check_compatible(other)?;
        let n = self.blocks.len();
        let blocks = (0..n)
            .map(|k| {
                let mut acc = DMatrix::zeros(self.m, self.m);
                for l in 0..n {
                    acc += &self.blocks[(k + n - l) % n] * &other.blocks[l];
                }
                acc
            })
            .collect();
        Ok(BlockCirculant { m: self.m, blocks })
    }

    /// Trace inner product `Tr(A^T B)` of the assembled matrices, `N sum_k <A_k, B_k>_F`.
    pub fn inner(&self, other: &BlockCirculant) -> Result<f64> {
        self.check_compatible(other)?;
        let s: f64 = self
            .blocks
            .iter()
            .zip(&other.blocks)
            .map(|(a, b)| a.dot(b))
            .sum();
        Ok(self.blocks.len() as f64 * s)
    }

    /// Frobenius norm of the assembled matrix.
    pub fn frobenius_norm(&self) -> f64 {
        let s: f64 = self.blocks.iter().map(linalg::frobenius_sq).sum();
        (self.blocks.len() as f64 * s).sqrt()
    }

    fn check_compatible(&self, other: &BlockCirculant) -> Result<()> {
        if self.m != other.m || self.blocks.len() != other.blocks.len() {
            return Err(CmxError::Dimension(format!(
                "circulant shapes differ: (m={}, N={}) vs (m={}, N={})",
                self.m,
                self.blocks.len(),
                other.m,
                other.blocks.len()
            )));
        }
        Ok(())
    }

    /// Dense `mN x mN` assembly.
    pub fn dense(&self) -> Mat {
        let m = self.m;
        let n = self.blocks.len();
        let mut out = DMatrix::zeros(m * n, m * n);
        for i in 0..n {
            for j in 0..n {
                out.view_mut((i * m, j * m), (m, m))
                    .copy_from(&self.blocks[(i + n - j) % n]);
            }
        }
        out
    }

    /// Blocks `C_0, ..., C_n`.
    pub fn band(&self, n: usize) -> Vec<Mat> {
        self.blocks.iter().take(n + 1).cloned().collect()
    }
}

/// Frequency blocks `Psi_0, ..., Psi_{N-1}` of a block-circulant matrix.
#[derive(Debug, Clone, PartialEq)]
pub struct SpectralForm {
    m: usize,
    psi: Vec<CMat>,
}

impl SpectralForm {
    pub fn new(psi: Vec<CMat>) -> Result<Self> {
        let m = psi
            .first()
            .ok_or_else(|| CmxError::Dimension("spectral form needs at least one block".into()))?
            .nrows();
        if psi.iter().any(|p| p.nrows() != m || p.ncols() != m) {
            return Err(CmxError::Dimension(format!("frequency blocks must be {m}x{m}")));
        }
        Ok(SpectralForm { m, psi })
    }

    /// Scalar spectrum.
    pub fn scalar(values: &[Complex64]) -> Result<Self> {
        SpectralForm::new(values.iter().map(|&v| DMatrix::from_element(1, 1, v)).collect())
    }

    pub fn m(&self) -> usize {
        self.m
    }

    pub fn len(&self) -> usize {
        self.psi.len()
    }

    pub fn is_empty(&self) -> bool {
        self.psi.is_empty()
    }

    pub fn blocks(&self) -> &[CMat] {
        &self.psi
    }

    /// Ascending eigenvalues of every frequency block (blocks are taken as Hermitian).
    pub fn eigenvalues(&self) -> Vec<Vec<f64>> {
        self.psi
            .iter()
            .map(|p| linalg::hermitian_eigenvalues(p).as_slice().to_vec())
            .collect()
    }

    /// `min_l lambda_min(Psi_l)`.
    pub fn min_eigenvalue(&self) -> f64 {
        self.eigenvalues()
            .iter()
            .map(|ev| ev[0])
            .fold(f64::INFINITY, f64::min)
    }

    /// `1e-10 * (1 + max_l ||Psi_l||_2)`.
    pub fn pd_threshold(&self) -> f64 {
        let scale = self
            .eigenvalues()
            .iter()
            .flat_map(|ev| ev.iter().map(|x| x.abs()))
            .fold(0.0, f64::max);
        PD_REL_TOL * (1.0 + scale)
    }

    /// Every frequency block has minimum eigenvalue above [`SpectralForm::pd_threshold`].
    pub fn is_positive_definite(&self) -> bool {
        let ev = self.eigenvalues();
        let scale = ev
            .iter()
            .flat_map(|e| e.iter().map(|x| x.abs()))
            .fold(0.0, f64::max);
        let min = ev.iter().map(|e| e[0]).fold(f64::INFINITY, f64::min);
        min > PD_REL_TOL * (1.0 + scale)
    }
}

/// Unnormalized transform `out_l = sum_k x_k exp(sign * j 2 pi l k / N)` applied entrywise.
fn transform_blocks(blocks: &[CMat], m: usize, inverse_sign: bool) -> Vec<CMat> {
    let n = blocks.len();
    let mut planner = FftPlanner::<f64>::new();
    let fft = if inverse_sign {
        planner.plan_fft_inverse(n)
    } else {
        planner.plan_fft_forward(n)
    };
    let mut out = vec![DMatrix::zeros(m, m); n];
    let mut buf = vec![Complex64::new(0.0, 0.0); n];
    for a in 0..m {
        for b in 0..m {
            for (k, blk) in blocks.iter().enumerate() {
                buf[k] = blk[(a, b)];
            }
            fft.process(&mut buf);
            for (l, o) in out.iter_mut().enumerate() {
                o[(a, b)] = buf[l];
            }
        }
    }
    out
}

/// `Psi_l = sum_k B_k exp(+j 2 pi l k / N)` for arbitrary real blocks.
pub(crate) fn spectrum_of_blocks(blocks: &[Mat]) -> Vec<CMat> {
    let m = blocks[0].nrows();
    let cblocks: Vec<CMat> = blocks.iter().map(linalg::to_complex).collect();
    transform_blocks(&cblocks, m, true)
}

/// `C_k = (1/N) sum_l Psi_l exp(-j 2 pi l k / N)`.
pub(crate) fn blocks_of_spectrum(psi: &[CMat]) -> Vec<CMat> {
    let m = psi[0].nrows();
    let scale = 1.0 / psi.len() as f64;
    transform_blocks(psi, m, false)
        .into_iter()
        .map(|b| b.map(|z| z * scale))
        .collect()
}

/// Frequencies `0..=N/2` with the multiplicity each stands for under conjugate symmetry.
pub(crate) fn half_spectrum(n: usize) -> impl Iterator<Item = (usize, f64)> {
    (0..=n / 2).map(move |l| {
        let mirrored = l != 0 && 2 * l != n;
        (l, if mirrored { 2.0 } else { 1.0 })
    })
}

/// Circulant completion of a band with every unknown lag set to zero.
///
/// First column `Sigma_0, Sigma_1, ..., Sigma_n, 0, ..., 0, Sigma_n^T, ..., Sigma_1^T`. The result is
/// symmetric but not necessarily positive definite.
pub fn assemble_circulant(band: &CovBand, n_blocks: usize) -> Result<BlockCirculant> {
    let n = band.order();
    if n_blocks < 2 * n + 1 {
        return Err(CmxError::Dimension(format!(
            "N = {n_blocks} < 2n+1 = {}: band lags would overlap their reflections",
            2 * n + 1
        )));
    }
    let m = band.m();
    let mut blocks = vec![DMatrix::zeros(m, m); n_blocks];
    blocks[0] = band.sigma[0].clone();
    for k in 1..=n {
        blocks[k] = band.sigma[k].clone();
        blocks[n_blocks - k] = band.sigma[k].transpose();
    }
    Ok(BlockCirculant { m, blocks })
}

/// Frequency blocks of a block-circulant matrix.
pub fn dft_block_diagonalize(c: &BlockCirculant) -> SpectralForm {
    SpectralForm {
        m: c.m,
        psi: spectrum_of_blocks(&c.blocks),
    }
}

/// Inverse of [`dft_block_diagonalize`]. Imaginary residue up to `1e-10` (relative to the block
/// scale) is discarded; anything larger means the spectrum lacks conjugate symmetry.
pub fn idft_reconstruct(s: &SpectralForm) -> Result<BlockCirculant> {
    let cblocks = blocks_of_spectrum(&s.psi);
    let scale = cblocks
        .iter()
        .flat_map(|b| b.iter().map(|z| z.re.abs()))
        .fold(0.0, f64::max);
    let mut residue: f64 = 0.0;
    let blocks = cblocks
        .iter()
        .map(|b| {
            let (re, r) = linalg::real_part(b);
            residue = residue.max(r);
            re
        })
        .collect();
    if residue > IMAG_TOL * (1.0 + scale) {
        return Err(CmxError::NonRealReconstruction { residue });
    }
    Ok(BlockCirculant { m: s.m, blocks })
}

fn require_symmetric(c: &BlockCirculant) -> Result<()> {
    if !c.is_symmetric(SYMMETRY_TOL) {
        return Err(CmxError::Malformed(format!(
            "block-circulant matrix is not symmetric (defect {:.3e})",
            c.symmetry_defect()
        )));
    }
    Ok(())
}

/// `log det` of a symmetric positive-definite block-circulant matrix, `sum_l log det Psi_l`.
pub fn logdet(c: &BlockCirculant) -> Result<f64> {
    require_symmetric(c)?;
    let spec = dft_block_diagonalize(c);
    logdet_spectral(&spec)
}

pub(crate) fn logdet_spectral(spec: &SpectralForm) -> Result<f64> {
    let n = spec.len();
    let mut evs = Vec::with_capacity(n / 2 + 1);
    let mut scale: f64 = 0.0;
    let mut min = f64::INFINITY;
    for (l, _) in half_spectrum(n) {
        let ev = linalg::hermitian_eigenvalues(&spec.psi[l]);
        scale = ev.iter().fold(scale, |a, &x| a.max(x.abs()));
        min = min.min(ev[0]);
        evs.push(ev);
    }
    let tol = PD_REL_TOL * (1.0 + scale);
    if min <= tol {
        return Err(CmxError::NotPositiveDefinite {
            min_eigenvalue: min,
            tolerance: tol,
        });
    }
    let mut total = 0.0;
    for ((_, w), ev) in half_spectrum(n).zip(&evs) {
        total += w * ev.iter().map(|x| x.ln()).sum::<f64>();
    }
    Ok(total)
}

/// Frequency-wise inverse of a symmetric block-circulant matrix.
pub fn inverse(c: &BlockCirculant) -> Result<BlockCirculant> {
    require_symmetric(c)?;
    let spec = dft_block_diagonalize(c);
    let inv = inverse_spectral(&spec)?;
    Ok(idft_reconstruct(&inv)?.symmetrized())
}

/// Inverts every frequency block, computing `0..=N/2` and mirroring the rest by conjugation.
pub(crate) fn inverse_spectral(spec: &SpectralForm) -> Result<SpectralForm> {
    let n = spec.len();
    let tol = spec.pd_threshold();
    let mut psi = vec![DMatrix::zeros(spec.m, spec.m); n];
    for (l, _) in half_spectrum(n) {
        let (inv, eig) = linalg::hermitian_inverse(&spec.psi[l], tol);
        let inv = inv.ok_or(CmxError::NotInvertible {
            frequency: l,
            eigenvalue: eig,
        })?;
        if l != 0 && 2 * l != n {
            psi[n - l] = inv.map(|z| z.conj());
        }
        psi[l] = inv;
    }
    Ok(SpectralForm { m: spec.m, psi })
}

/// Orthogonal projection of a symmetric `mN x mN` matrix onto block-circulant matrices: block
/// `C_k` is the average of the `N` blocks on cyclic block diagonal `k`.
pub fn project_circulant(mat: &Mat, m: usize) -> Result<BlockCirculant> {
    if m == 0 || mat.nrows() != mat.ncols() || !mat.nrows().is_multiple_of(m) || mat.nrows() == 0 {
        return Err(CmxError::Dimension(format!(
            "{}x{} is not a square matrix of {m}x{m} blocks",
            mat.nrows(),
            mat.ncols()
        )));
    }
    let n = mat.nrows() / m;
    let blocks = (0..n)
        .map(|k| {
            let mut acc = DMatrix::zeros(m, m);
            for i in 0..n {
                acc += mat.view((((i + k) % n) * m, i * m), (m, m));
            }
            acc / n as f64
        })
        .collect();
    Ok(BlockCirculant { m, blocks })
}

/// Frobenius mass of blocks `C_{n+1}, ..., C_{N-n-1}` relative to all blocks.
pub fn band_residual(c: &BlockCirculant, n: usize) -> Result<f64> {
    let len = c.len();
    if 2 * n >= len {
        return Err(CmxError::Dimension(format!(
            "bandwidth {n} requires N > {}, got N = {len}",
            2 * n
        )));
    }
    let total: f64 = c.blocks.iter().map(linalg::frobenius_sq).sum();
    if total == 0.0 {
        return Ok(0.0);
    }
    let off: f64 = c.blocks[n + 1..len - n]
        .iter()
        .map(linalg::frobenius_sq)
        .sum();
    Ok((off / total).sqrt())
}

mod wire {
    use super::*;

    #[derive(Serialize, Deserialize)]
    pub struct CovBandWire {
        pub m: usize,
        pub n: usize,
        pub sigma: Vec<Vec<f64>>,
    }

    #[derive(Serialize, Deserialize)]
    pub struct BlockCirculantWire {
        pub m: usize,
        #[serde(rename = "N")]
        pub n_blocks: usize,
        pub first_col: Vec<Vec<f64>>,
    }

    pub(crate) fn blocks_from_rows(m: usize, rows: Vec<Vec<f64>>) -> Result<Vec<Mat>> {
        rows.into_iter()
            .enumerate()
            .map(|(k, r)| {
                if r.len() != m * m {
                    return Err(CmxError::Malformed(format!(
                        "block {k} has {} entries, expected {}",
                        r.len(),
                        m * m
                    )));
                }
                Ok(DMatrix::from_row_slice(m, m, &r))
            })
            .collect()
    }

    pub(crate) fn rows_from_blocks(blocks: &[Mat]) -> Vec<Vec<f64>> {
        blocks
            .iter()
            .map(|b| b.transpose().as_slice().to_vec())
            .collect()
    }

    impl TryFrom<CovBandWire> for CovBand {
        type Error = CmxError;
        fn try_from(w: CovBandWire) -> Result<Self> {
            if w.m == 0 {
                return Err(CmxError::Malformed("m must be positive".into()));
            }
            if w.sigma.len() != w.n + 1 {
                return Err(CmxError::Malformed(format!(
                    "band of order {} needs {} blocks, got {}",
                    w.n,
                    w.n + 1,
                    w.sigma.len()
                )));
            }
            CovBand::new(blocks_from_rows(w.m, w.sigma)?)
        }
    }

    impl From<CovBand> for CovBandWire {
        fn from(b: CovBand) -> Self {
            CovBandWire {
                m: b.m,
                n: b.order(),
                sigma: rows_from_blocks(&b.sigma),
            }
        }
    }

    impl TryFrom<BlockCirculantWire> for BlockCirculant {
        type Error = CmxError;
        fn try_from(w: BlockCirculantWire) -> Result<Self> {
            if w.m == 0 {
                return Err(CmxError::Malformed("m must be positive".into()));
            }
            if w.first_col.len() != w.n_blocks {
                return Err(CmxError::Malformed(format!(
                    "N = {} but first_col has {} blocks",
                    w.n_blocks,
                    w.first_col.len()
                )));
            }
            BlockCirculant::new(blocks_from_rows(w.m, w.first_col)?)
        }
    }

    impl From<BlockCirculant> for BlockCirculantWire {
        fn from(c: BlockCirculant) -> Self {
            BlockCirculantWire {
                m: c.m,
                n_blocks: c.blocks.len(),
                first_col: rows_from_blocks(&c.blocks),
            }
        }
    }
}

pub(crate) use wire::{blocks_from_rows, rows_from_blocks};
