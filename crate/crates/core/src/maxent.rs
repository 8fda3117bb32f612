//! Maximum-entropy band extension on the discrete circle.
//!
//! The dual is minimized directly over banded symmetric block-circulant matrices `M` of bandwidth
//! `n`:
//!
//! `f(M) = N [<M_0, Sigma_0> + 2 sum_{k=1}^{n} <M_k, Sigma_k>] - log det M`.
//!
//! At the minimizer the band of `M^{-1}` equals the data band, so `M^{-1}` is the maximum-entropy
//! completion and `M` is its banded inverse. Small problems use damped Newton with an analytic
//! Hessian, larger ones gradient descent. Both use a backtracking line search that keeps every
//! frequency block positive definite and evaluates the decrease of `f` exactly from the
//! generalized eigenvalues of the step.

#![allow(clippy::neg_cmp_op_on_partial_ord)]

use std::f64::consts::PI;

use nalgebra::{DMatrix, DVector};
use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::blockcirc::{self, half_spectrum, BlockCirculant, CovBand, PD_REL_TOL};
use crate::error::{CmxError, FeasibilityCertificate, Result};
use crate::feasibility::{self, default_horizon};
use crate::linalg::{self, CMat, Mat};
use crate::reciprocal::ReciprocalModel;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SolverConfig {
    /// Relative gradient tolerance `||grad||_F / (1 + ||band||_F)`.
    pub grad_tol: f64,
    pub max_iter: usize,
    pub armijo_c: f64,
    pub backtrack_factor: f64,
    /// Relative eigenvalue floor for accepting an iterate as positive definite.
    pub pd_guard: f64,
    /// Largest number of free coordinates `(n+1) m^2` handled by Newton steps.
    pub newton_max_dim: usize,
    /// Line-search collapse threshold.
    pub min_step: f64,
}

impl Default for SolverConfig {
    fn default() -> Self {
        SolverConfig {
            grad_tol: 1e-10,
            max_iter: 200,
            armijo_c: 1e-4,
            backtrack_factor: 0.5,
            pd_guard: PD_REL_TOL,
            newton_max_dim: 2000,
            min_step: 1e-14,
        }
    }
}

impl SolverConfig {
    pub fn validate(&self) -> Result<()> {
        let positive = [
            ("grad_tol", self.grad_tol),
            ("armijo_c", self.armijo_c),
            ("pd_guard", self.pd_guard),
            ("min_step", self.min_step),
        ];
        for (name, v) in positive {
            if !(v.is_finite() && v > 0.0) {
                return Err(CmxError::Malformed(format!("{name} must be positive, got {v}")));
            }
        }
        if self.max_iter == 0 {
            return Err(CmxError::Malformed("max_iter must be positive".into()));
        }
        if !(self.backtrack_factor > 0.0 && self.backtrack_factor < 1.0) {
            return Err(CmxError::Malformed(format!(
                "backtrack_factor must lie in (0, 1), got {}",
                self.backtrack_factor
            )));
        }
        if self.armijo_c >= 0.5 {
            return Err(CmxError::Malformed(format!(
                "armijo_c must be below 0.5, got {}",
                self.armijo_c
            )));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Method {
    Newton,
    GradientDescent,
}

/// Accepted iterate of the solver.
#[derive(Debug, Clone, PartialEq)]
pub struct DualState {
    pub model: ReciprocalModel,
    pub objective: f64,
    /// Relative gradient norm.
    pub grad_norm: f64,
    pub iteration: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SolverDiagnostics {
    pub m: usize,
    pub n: usize,
    #[serde(rename = "N")]
    pub n_blocks: usize,
    pub method: Method,
    pub converged: bool,
    pub iterations: usize,
    /// Objective at every accepted iterate, starting from the initial point.
    pub objective: Vec<f64>,
    pub grad_norm: Vec<f64>,
    pub step: Vec<f64>,
    /// Exact change of the objective at every accepted step; always negative.
    pub decrease: Vec<f64>,
    pub final_grad_norm: Option<f64>,
    /// `||band(M^{-1}) - band||_F / ||band||_F`.
    pub band_match_residual: Option<f64>,
    /// Off-band mass of the numerically inverted optimal covariance.
    pub inverse_band_residual: Option<f64>,
    pub error: Option<String>,
    pub certificate: Option<FeasibilityCertificate>,
}

impl SolverDiagnostics {
    fn new(band: &CovBand, n_blocks: usize, method: Method) -> Self {
        SolverDiagnostics {
            m: band.m(),
            n: band.order(),
            n_blocks,
            method,
            converged: false,
            iterations: 0,
            objective: Vec::new(),
            grad_norm: Vec::new(),
            step: Vec::new(),
            decrease: Vec::new(),
            final_grad_norm: None,
            band_match_residual: None,
            inverse_band_residual: None,
            error: None,
            certificate: None,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Solution {
    /// The maximum-entropy completion `M^{-1}`.
    pub sigma: BlockCirculant,
    /// Its banded inverse.
    pub model: ReciprocalModel,
    pub state: DualState,
    pub diagnostics: SolverDiagnostics,
}

/// Gradient of the dual in block form `G_0, ..., G_n`, paired with a banded direction through
/// `sum_k <G_k, D_k>`.
#[derive(Debug, Clone, PartialEq)]
pub struct DualGradient {
    pub blocks: Vec<Mat>,
}

impl DualGradient {
    /// Directional derivative along the banded symmetric circulant with blocks `D_0, ..., D_n`.
    pub fn inner(&self, direction: &[Mat]) -> f64 {
        self.blocks
            .iter()
            .zip(direction)
            .map(|(g, d)| g.dot(d))
            .sum()
    }

    pub fn norm(&self) -> f64 {
        self.blocks
            .iter()
            .map(linalg::frobenius_sq)
            .sum::<f64>()
            .sqrt()
    }
}

fn phase(l: usize, k: usize, n_blocks: usize) -> Complex64 {
    let theta = 2.0 * PI * ((l * k) % n_blocks) as f64 / n_blocks as f64;
    Complex64::new(theta.cos(), theta.sin())
}

/// `Psi_l` of the banded circulant with blocks `B_0..B_n`, for `l = 0..=N/2`.
fn banded_spectrum(blocks: &[Mat], n_blocks: usize) -> Vec<CMat> {
    let m = blocks[0].nrows();
    (0..=n_blocks / 2)
        .map(|l| {
            let mut psi = linalg::to_complex(&blocks[0]);
            for (k, b) in blocks.iter().enumerate().skip(1) {
                let z = phase(l, k, n_blocks);
                for i in 0..m {
                    for j in 0..m {
                        psi[(i, j)] += z * b[(i, j)] + z.conj() * b[(j, i)];
                    }
                }
            }
            psi
        })
        .collect()
}

/// `<B_0, Sigma_0> + 2 sum_k <B_k, Sigma_k>`.
fn band_pairing(blocks: &[Mat], band: &CovBand) -> f64 {
    blocks
        .iter()
        .zip(band.sigma())
        .enumerate()
        .map(|(k, (b, s))| if k == 0 { b.dot(s) } else { 2.0 * b.dot(s) })
        .sum()
}

fn check_shapes(blocks: &[Mat], n_blocks: usize, band: &CovBand) -> Result<()> {
    let m = band.m();
    if blocks.is_empty() || blocks.iter().any(|b| b.nrows() != m || b.ncols() != m) {
        return Err(CmxError::Dimension(format!("expected {m}x{m} model blocks")));
    }
    if blocks.len() > band.order() + 1 {
        return Err(CmxError::Dimension(format!(
            "model bandwidth {} exceeds band order {}",
            blocks.len() - 1,
            band.order()
        )));
    }
    if n_blocks < 2 * band.order() + 1 {
        return Err(CmxError::Dimension(format!(
            "band order {} needs N >= {}, got {n_blocks}",
            band.order(),
            2 * band.order() + 1
        )));
    }
    Ok(())
}

/// Everything the solver needs at one iterate.
struct Eval {
    values: Vec<DVector<f64>>,
    vectors: Vec<CMat>,
    inv: Vec<CMat>,
    objective: f64,
    inv_band: Vec<Mat>,
    grad: Vec<Mat>,
}

fn evaluate(blocks: &[Mat], n_blocks: usize, band: &CovBand, pd_guard: f64) -> Result<Eval> {
    let m = band.m();
    let n = band.order();
    let spec = banded_spectrum(blocks, n_blocks);
    let mut values = Vec::with_capacity(spec.len());
    let mut vectors = Vec::with_capacity(spec.len());
    for psi in &spec {
        let eig = linalg::hermitize(psi).symmetric_eigen();
        values.push(eig.eigenvalues);
        vectors.push(eig.eigenvectors);
    }
    let scale = values
        .iter()
        .flat_map(|v| v.iter().map(|x| x.abs()))
        .fold(0.0, f64::max);
    let min = values.iter().flat_map(|v| v.iter().copied()).fold(f64::INFINITY, f64::min);
    let tol = pd_guard * (1.0 + scale);
    if !(min > tol) {
        return Err(CmxError::NotPositiveDefinite {
            min_eigenvalue: min,
            tolerance: tol,
        });
    }

    let mut logdet = 0.0;
    let mut inv = Vec::with_capacity(spec.len());
    for ((_, w), (vals, vecs)) in half_spectrum(n_blocks).zip(values.iter().zip(&vectors)) {
        logdet += w * vals.iter().map(|x| x.ln()).sum::<f64>();
        let scaled = DMatrix::from_fn(m, m, |i, j| vecs[(i, j)] / vals[j]);
        inv.push(linalg::hermitize(&(&scaled * vecs.adjoint())));
    }

    // S_k = (1/N) sum_l w_l Re(P_l exp(-j 2 pi l k / N)) for k = 0..=n.
    let inv_band: Vec<Mat> = (0..=n)
        .map(|k| {
            let mut acc = DMatrix::zeros(m, m);
            for ((l, w), p) in half_spectrum(n_blocks).zip(&inv) {
                let z = phase(l, k, n_blocks).conj();
                acc += p.map(|x| (x * z).re) * w;
            }
            acc / n_blocks as f64
        })
        .collect();

    let nf = n_blocks as f64;
    let mut padded: Vec<Mat> = blocks.to_vec();
    padded.resize(n + 1, DMatrix::zeros(m, m));
    let objective = nf * band_pairing(&padded, band) - logdet;
    let grad = band
        .sigma()
        .iter()
        .zip(&inv_band)
        .enumerate()
        .map(|(k, (s, p))| {
            let w = if k == 0 { nf } else { 2.0 * nf };
            let g = (s - p) * w;
            if k == 0 {
                linalg::symmetrize(&g)
            } else {
                g
            }
        })
        .collect();

    Ok(Eval {
        values,
        vectors,
        inv,
        objective,
        inv_band,
        grad,
    })
}

/// Dual objective at the banded model `M` (bandwidth at most the band order).
pub fn dual_objective(model: &ReciprocalModel, band: &CovBand) -> Result<f64> {
    check_shapes(model.blocks(), model.n_blocks(), band)?;
    Ok(evaluate(model.blocks(), model.n_blocks(), band, PD_REL_TOL)?.objective)
}

/// Gradient of [`dual_objective`]: `G_0 = N (Sigma_0 - S_0)`, `G_k = 2N (Sigma_k - S_k)` with
/// `S = M^{-1}`.
pub fn dual_gradient(model: &ReciprocalModel, band: &CovBand) -> Result<DualGradient> {
    check_shapes(model.blocks(), model.n_blocks(), band)?;
    let eval = evaluate(model.blocks(), model.n_blocks(), band, PD_REL_TOL)?;
    Ok(DualGradient { blocks: eval.grad })
}

/// Gaussian differential entropy `1/2 log det C + 1/2 mN (1 + log 2 pi)`.
pub fn entropy(c: &BlockCirculant) -> Result<f64> {
    let ld = blockcirc::logdet(c)?;
    let dim = (c.m() * c.len()) as f64;
    Ok(0.5 * ld + 0.5 * dim * (1.0 + (2.0 * PI).ln()))
}

/// Free coordinates of a banded symmetric circulant: the upper triangle of `M_0`, then every
/// entry of `M_1, ..., M_n`.
#[derive(Debug, Clone, Copy)]
struct Coord {
    k: usize,
    i: usize,
    j: usize,
}

fn coordinates(m: usize, n: usize) -> Vec<Coord> {
    let mut out = Vec::with_capacity(m * (m + 1) / 2 + n * m * m);
    for i in 0..m {
        for j in i..m {
            out.push(Coord { k: 0, i, j });
        }
    }
    for k in 1..=n {
        for i in 0..m {
            for j in 0..m {
                out.push(Coord { k, i, j });
            }
        }
    }
    out
}

fn coords_from_blocks(coords: &[Coord], g: &[Mat]) -> DVector<f64> {
    DVector::from_iterator(
        coords.len(),
        coords.iter().map(|c| {
            if c.k == 0 && c.i != c.j {
                2.0 * g[0][(c.i, c.j)]
            } else {
                g[c.k][(c.i, c.j)]
            }
        }),
    )
}

fn blocks_from_coords(coords: &[Coord], x: &DVector<f64>, m: usize, n: usize) -> Vec<Mat> {
    let mut out = vec![DMatrix::zeros(m, m); n + 1];
    for (c, &v) in coords.iter().zip(x.iter()) {
        out[c.k][(c.i, c.j)] = v;
        if c.k == 0 {
            out[0][(c.j, c.i)] = v;
        }
    }
    out
}

/// `H_ab = sum_l w_l Re Tr(P_l Phi_a P_l Phi_b)` where `Phi_a` is the frequency block of the
/// coordinate direction `a`, using `Tr(P E_ij P E_kl) = P_jk P_li`.
fn hessian(coords: &[Coord], eval: &Eval, n_blocks: usize) -> Mat {
    let dim = coords.len();
    let mut h = DMatrix::zeros(dim, dim);
    let mut terms: Vec<[(usize, usize, Complex64); 2]> = Vec::with_capacity(dim);
    for ((l, w), p) in half_spectrum(n_blocks).zip(&eval.inv) {
        terms.clear();
        for c in coords {
            let one = Complex64::new(1.0, 0.0);
            let zero = Complex64::new(0.0, 0.0);
            terms.push(if c.k == 0 {
                if c.i == c.j {
                    [(c.i, c.i, one), (c.i, c.i, zero)]
                } else {
                    [(c.i, c.j, one), (c.j, c.i, one)]
                }
            } else {
                let z = phase(l, c.k, n_blocks);
                [(c.i, c.j, z), (c.j, c.i, z.conj())]
            });
        }
        for a in 0..dim {
            for b in a..dim {
                let mut acc = Complex64::new(0.0, 0.0);
                for &(i, j, alpha) in &terms[a] {
                    for &(k, q, beta) in &terms[b] {
                        acc += alpha * beta * p[(j, k)] * p[(q, i)];
                    }
                }
                h[(a, b)] += w * acc.re;
            }
        }
    }
    for a in 0..dim {
        for b in 0..a {
            h[(a, b)] = h[(b, a)];
        }
    }
    h
}

/// Generalized eigenvalues `mu` of `Psi_l(D)` relative to `Psi_l(M)`, per half-spectrum frequency.
fn step_eigenvalues(eval: &Eval, direction: &[Mat], n_blocks: usize) -> Vec<DVector<f64>> {
    banded_spectrum(direction, n_blocks)
        .iter()
        .zip(eval.values.iter().zip(&eval.vectors))
        .map(|(phi, (vals, vecs))| {
            let m = vals.len();
            let proj = vecs.adjoint() * phi * vecs;
            let w = DMatrix::from_fn(m, m, |i, j| proj[(i, j)] / (vals[i] * vals[j]).sqrt());
            linalg::hermitian_eigenvalues(&w)
        })
        .collect()
}

/// `f(M + tD) - f(M)`, or `None` if `M + tD` leaves the positive-definite cone.
fn exact_decrease(
    t: f64,
    linear: f64,
    mu: &[DVector<f64>],
    n_blocks: usize,
) -> Option<f64> {
    let mut logdet_change = 0.0;
    for ((_, w), ev) in half_spectrum(n_blocks).zip(mu) {
        for &x in ev.iter() {
            let s = t * x;
            if !(s > -1.0) {
                return None;
            }
            logdet_change += w * s.ln_1p();
        }
    }
    Some(t * linear - logdet_change)
}

fn blocks_norm(blocks: &[Mat]) -> f64 {
    blocks.iter().map(linalg::frobenius_sq).sum::<f64>().sqrt()
}

fn band_match(inv_band: &[Mat], band: &CovBand) -> f64 {
    let diff: f64 = inv_band
        .iter()
        .zip(band.sigma())
        .map(|(p, s)| linalg::frobenius_sq(&(p - s)))
        .sum();
    let norm = band.norm();
    if norm == 0.0 {
        diff.sqrt()
    } else {
        diff.sqrt() / norm
    }
}

/// Evidence for (in)feasibility of the extension at `N`, from the wrapped AR extension.
pub fn feasibility_certificate(
    band: &CovBand,
    n_blocks: usize,
    reason: &str,
) -> Result<FeasibilityCertificate> {
    let lags = feasibility::extended_lags(band, n_blocks / 2 + 1)?;
    let (wrap_min, _) = feasibility::wrap_spectrum_check(&lags, n_blocks)?;
    let horizon = default_horizon(band.order()).max(n_blocks);
    let smallest = feasibility::find_feasible_n(band, horizon)
        .ok()
        .map(|ext| ext.n_blocks());
    Ok(FeasibilityCertificate {
        n_blocks,
        wrap_min_eigenvalue: wrap_min,
        smallest_feasible_n: smallest,
        reason: reason.to_string(),
    })
}

/// Solves the band extension at circle length `N` from the default initial point
/// `M_0 = Sigma_0^{-1} / 2`.
pub fn solve(band: &CovBand, n_blocks: usize, cfg: &SolverConfig) -> Result<Solution> {
    solve_detailed(band, n_blocks, cfg, None).0
}

/// As [`solve`], starting from a caller-supplied positive-definite banded model.
pub fn solve_with_initial(
    band: &CovBand,
    n_blocks: usize,
    cfg: &SolverConfig,
    initial: &ReciprocalModel,
) -> Result<Solution> {
    solve_detailed(band, n_blocks, cfg, Some(initial)).0
}

/// The solver with its diagnostics, which are returned on failure as well.
pub fn solve_detailed(
    band: &CovBand,
    n_blocks: usize,
    cfg: &SolverConfig,
    initial: Option<&ReciprocalModel>,
) -> (Result<Solution>, SolverDiagnostics) {
    let m = band.m();
    let n = band.order();
    let coords = coordinates(m, n);
    let method = if coords.len() <= cfg.newton_max_dim {
        Method::Newton
    } else {
        Method::GradientDescent
    };
    let mut diag = SolverDiagnostics::new(band, n_blocks, method);
    let result = run(band, n_blocks, cfg, initial, &coords, &mut diag);
    if let Err(e) = &result {
        diag.error = Some(e.to_string());
        if let CmxError::Infeasible(cert) = e {
            diag.certificate = Some((**cert).clone());
        }
    }
    (result, diag)
}

fn run(
    band: &CovBand,
    n_blocks: usize,
    cfg: &SolverConfig,
    initial: Option<&ReciprocalModel>,
    coords: &[Coord],
    diag: &mut SolverDiagnostics,
) -> Result<Solution> {
    cfg.validate()?;
    let m = band.m();
    let n = band.order();
    if n_blocks < 2 * n + 1 {
        return Err(CmxError::Dimension(format!(
            "band order {n} needs N >= {}, got {n_blocks}",
            2 * n + 1
        )));
    }
    if !band.is_strictly_positive() {
        return Err(CmxError::InfeasibleBand);
    }

    let mut blocks: Vec<Mat> = match initial {
        Some(model) => {
            if model.n_blocks() != n_blocks {
                return Err(CmxError::Dimension(format!(
                    "initial model has N = {}, expected {n_blocks}",
                    model.n_blocks()
                )));
            }
            check_shapes(model.blocks(), n_blocks, band)?;
            let mut b = model.blocks().to_vec();
            b.resize(n + 1, DMatrix::zeros(m, m));
            b
        }
        None => {
            let s0_inv = band.sigma()[0]
                .clone()
                .try_inverse()
                .ok_or(CmxError::InfeasibleBand)?;
            let mut b = vec![DMatrix::zeros(m, m); n + 1];
            b[0] = linalg::symmetrize(&s0_inv) * 0.5;
            b
        }
    };
    let init_norm = blocks_norm(&blocks);
    let scale = 1.0 + band.norm();
    let mut eval = evaluate(&blocks, n_blocks, band, cfg.pd_guard)?;
    let mut objective = eval.objective;
    let mut gd_step = 1.0;

    for iter in 0..=cfg.max_iter {
        let rel_grad = DualGradient {
            blocks: eval.grad.clone(),
        }
        .norm()
            / scale;
        let matched = band_match(&eval.inv_band, band);
        diag.iterations = iter;
        diag.objective.push(objective);
        diag.grad_norm.push(rel_grad);
        diag.final_grad_norm = Some(rel_grad);
        diag.band_match_residual = Some(matched);

        if rel_grad <= cfg.grad_tol && matched <= 10.0 * cfg.grad_tol {
            diag.converged = true;
            return finish(band, n_blocks, blocks, eval.objective, rel_grad, iter, diag);
        }
        if iter == cfg.max_iter {
            break;
        }

        let g = coords_from_blocks(coords, &eval.grad);
        let mut direction = match diag.method {
            Method::Newton => hessian(coords, &eval, n_blocks)
                .cholesky()
                .map(|ch| -ch.solve(&g))
                .unwrap_or_else(|| -&g),
            Method::GradientDescent => -&g,
        };
        let mut slope = g.dot(&direction);
        if !(slope < 0.0) {
            direction = -&g;
            slope = -g.dot(&g);
        }
        let d_blocks = blocks_from_coords(coords, &direction, m, n);
        let linear = n_blocks as f64 * band_pairing(&d_blocks, band);
        let mu = step_eigenvalues(&eval, &d_blocks, n_blocks);

        let mut t = match diag.method {
            Method::Newton => 1.0,
            Method::GradientDescent => gd_step,
        };
        let accepted = loop {
            if t < cfg.min_step {
                break None;
            }
            if let Some(df) = exact_decrease(t, linear, &mu, n_blocks) {
                if df <= cfg.armijo_c * t * slope && df < 0.0 {
                    let candidate: Vec<Mat> = blocks
                        .iter()
                        .zip(&d_blocks)
                        .map(|(b, d)| b + d * t)
                        .collect();
                    if let Ok(next) = evaluate(&candidate, n_blocks, band, cfg.pd_guard) {
                        break Some((t, df, candidate, next));
                    }
                }
            }
            t *= cfg.backtrack_factor;
        };

        // A stalled line search proves nothing about feasibility: a non-positive wrap at N does
        // not exclude other completions, and near the optimum the decrease drops below round-off.
        let Some((t, df, candidate, next)) = accepted else {
            return Err(CmxError::NoConvergence {
                iterations: iter,
                grad_norm: rel_grad,
            });
        };
        diag.step.push(t);
        diag.decrease.push(df);
        if diag.method == Method::GradientDescent {
            gd_step = (t / cfg.backtrack_factor).min(1e12);
        }
        blocks = candidate;
        eval = next;
        objective += df;

        // Tr(M C) = N <M, band> > 0 for every positive-definite completion C, so a
        // non-positive pairing at a positive-definite M proves infeasibility.
        if band_pairing(&blocks, band) <= 0.0 {
            let cert = feasibility_certificate(
                band,
                n_blocks,
                "a positive-definite banded dual iterate has non-positive pairing with the band",
            )?;
            return Err(CmxError::Infeasible(Box::new(cert)));
        }
        if !blocks_norm(&blocks).is_finite() || blocks_norm(&blocks) > 1e12 * init_norm {
            let cert = feasibility_certificate(band, n_blocks, "dual iterates diverge")?;
            return Err(CmxError::Infeasible(Box::new(cert)));
        }
    }

    Err(CmxError::NoConvergence {
        iterations: cfg.max_iter,
        grad_norm: diag.final_grad_norm.unwrap_or(f64::NAN),
    })
}

fn finish(
    band: &CovBand,
    n_blocks: usize,
    blocks: Vec<Mat>,
    objective: f64,
    grad_norm: f64,
    iteration: usize,
    diag: &mut SolverDiagnostics,
) -> Result<Solution> {
    let n = band.order();
    let model = ReciprocalModel::new(blocks, n_blocks)?;
    let sigma = blockcirc::inverse(&model.circulant())?;
    diag.inverse_band_residual = blockcirc::inverse(&sigma)
        .and_then(|inv| blockcirc::band_residual(&inv, n))
        .ok();
    Ok(Solution {
        sigma,
        model: model.clone(),
        state: DualState {
            model,
            objective,
            grad_norm,
            iteration,
        },
        diagnostics: diag.clone(),
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn scalar_model(vals: &[f64], nb: usize) -> ReciprocalModel {
        ReciprocalModel::new(
            vals.iter().map(|&v| DMatrix::from_element(1, 1, v)).collect(),
            nb,
        )
        .unwrap()
    }

    #[test]
    fn objective_at_identity() {
        let band = CovBand::scalar(&[1.0]).unwrap();
        let f = dual_objective(&scalar_model(&[1.0], 4), &band).unwrap();
        assert!((f - 4.0).abs() < 1e-14);
    }

    #[test]
    fn objective_scalar_calculus() {
        let band = CovBand::scalar(&[1.0]).unwrap();
        for c in [0.5, 1.0, 2.0, 3.0] {
            let f = dual_objective(&scalar_model(&[c], 6), &band).unwrap();
            assert!((f - (6.0 * c - 6.0 * f64::ln(c))).abs() < 1e-12);
        }
    }

    #[test]
    fn gradient_at_two_identity() {
        let band = CovBand::scalar(&[1.0]).unwrap();
        let g = dual_gradient(&scalar_model(&[2.0], 5), &band).unwrap();
        assert!((g.blocks[0][(0, 0)] - 0.5 * 5.0).abs() < 1e-13);
    }

    #[test]
    fn white_extension() {
        let band = CovBand::scalar(&[1.0]).unwrap();
        let sol = solve(&band, 6, &SolverConfig::default()).unwrap();
        assert!((sol.model.blocks()[0][(0, 0)] - 1.0).abs() < 1e-12);
        for (k, b) in sol.sigma.blocks().iter().enumerate() {
            let want = if k == 0 { 1.0 } else { 0.0 };
            assert!((b[(0, 0)] - want).abs() < 1e-12);
        }
    }

    #[test]
    fn five_equation_example() {
        let (s0, s1, s2) = (1.0, 0.5, 0.2);
        let band = CovBand::scalar(&[s0, s1, s2]).unwrap();
        let sol = solve(&band, 8, &SolverConfig::default()).unwrap();
        let mb = sol.model.blocks();
        let (m0, m1, m2) = (mb[0][(0, 0)], mb[1][(0, 0)], mb[2][(0, 0)]);
        let x3 = sol.sigma.blocks()[3][(0, 0)];
        let x4 = sol.sigma.blocks()[4][(0, 0)];
        let res = [
            m0 * s0 + 2.0 * m1 * s1 + 2.0 * m2 * s2 - 1.0,
            m0 * s1 + m1 * (s0 + s2) + m2 * (s1 + x3),
            m0 * s2 + m1 * (s1 + x3) + m2 * (s0 + x4),
            m0 * x3 + m1 * (s2 + x4) + m2 * (s1 + x3),
            m0 * x4 + 2.0 * m1 * x3 + 2.0 * m2 * s2,
        ];
        assert!(res.iter().all(|r| r.abs() < 1e-8), "{res:?}");
        assert!(sol.diagnostics.converged);
    }

    #[test]
    fn objective_trace_strictly_decreases() {
        let band = CovBand::scalar(&[1.0, 0.5, 0.2]).unwrap();
        let sol = solve(&band, 8, &SolverConfig::default()).unwrap();
        let tr = &sol.diagnostics.objective;
        assert!(tr.len() >= 2);
        assert!(tr.windows(2).all(|w| w[1] <= w[0]), "{tr:?}");
        assert!(tr[tr.len() - 1] < tr[0]);
        assert!(sol.diagnostics.decrease.iter().all(|&d| d < 0.0));
    }

    #[test]
    fn gradient_descent_path_converges() {
        let band = CovBand::scalar(&[1.0, 0.4]).unwrap();
        let cfg = SolverConfig {
            newton_max_dim: 0,
            max_iter: 5000,
            grad_tol: 1e-9,
            ..SolverConfig::default()
        };
        let sol = solve(&band, 6, &cfg).unwrap();
        assert_eq!(sol.diagnostics.method, Method::GradientDescent);
        let newton = solve(&band, 6, &SolverConfig::default()).unwrap();
        let d = (sol.sigma.blocks()[2][(0, 0)] - newton.sigma.blocks()[2][(0, 0)]).abs();
        assert!(d < 1e-7, "{d}");
    }

    #[test]
    fn infeasible_small_circle() {
        // At N = 5 there is no free lag and the only completion is indefinite.
        let band = CovBand::scalar(&[1.0, 0.9, 0.7]).unwrap();
        let (res, diag) = solve_detailed(&band, 5, &SolverConfig::default(), None);
        match res {
            Err(CmxError::Infeasible(cert)) => {
                assert_eq!(cert.n_blocks, 5);
                assert!(cert.wrap_min_eigenvalue < 0.0);
                assert_eq!(cert.smallest_feasible_n, Some(13));
            }
            other => panic!("unexpected {other:?}"),
        }
        assert!(diag.certificate.is_some());
        assert!(diag.error.is_some());
    }

    #[test]
    fn unattainable_tolerance_is_not_infeasibility() {
        // Feasible at N = 7 although the autoregressive wrap is not positive definite there.
        let band = CovBand::scalar(&[1.0, 0.9, 0.7]).unwrap();
        assert!(solve(&band, 7, &SolverConfig::default()).is_ok());
        let cfg = SolverConfig {
            grad_tol: 1e-18,
            ..SolverConfig::default()
        };
        assert!(matches!(
            solve(&band, 7, &cfg),
            Err(CmxError::NoConvergence { .. })
        ));
    }

    #[test]
    fn boundary_infeasibility_does_not_converge() {
        // At N = 6 the only candidate completion is singular.
        let band = CovBand::scalar(&[1.0, 0.9, 0.7]).unwrap();
        assert!(solve(&band, 6, &SolverConfig::default()).is_err());
    }

    #[test]
    fn non_pd_band_rejected() {
        let band = CovBand::scalar(&[1.0, 1.2]).unwrap();
        assert!(matches!(
            solve(&band, 5, &SolverConfig::default()),
            Err(CmxError::InfeasibleBand)
        ));
    }

    #[test]
    fn entropy_examples() {
        let c = 1.0 + (2.0 * PI).ln();
        let id = BlockCirculant::identity(2, 3);
        assert!((entropy(&id).unwrap() - 3.0 * c).abs() < 1e-12);
        let four = BlockCirculant::scalar(&[4.0, 0.0]).unwrap();
        assert!((entropy(&four).unwrap() - (4f64.ln() + c)).abs() < 1e-12);
    }

    #[test]
    fn config_validation() {
        let bad = SolverConfig {
            backtrack_factor: 1.0,
            ..SolverConfig::default()
        };
        assert!(bad.validate().is_err());
        assert!(SolverConfig::default().validate().is_ok());
    }

    #[test]
    fn matrix_band_converges() {
        let s0 = DMatrix::from_row_slice(2, 2, &[2.0, 0.3, 0.3, 1.0]);
        let s1 = DMatrix::from_row_slice(2, 2, &[0.5, 0.2, -0.1, 0.3]);
        let band = CovBand::new(vec![s0, s1]).unwrap();
        let sol = solve(&band, 7, &SolverConfig::default()).unwrap();
        let got = sol.sigma.band(1);
        for (g, s) in got.iter().zip(band.sigma()) {
            assert!((g - s).norm() < 1e-9);
        }
        assert!(sol.diagnostics.inverse_band_residual.unwrap() < 1e-9);
    }
}
