//! Independent dense oracles and random instance generators shared by the integration tests.
//! Nothing here calls into the library's frequency-domain code.

#![allow(dead_code)]

use cmx_core::DMatrix;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

pub type Mat = DMatrix<f64>;

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

pub fn random_mat(rng: &mut ChaCha8Rng, r: usize, c: usize) -> Mat {
    DMatrix::from_fn(r, c, |_, _| rng.random_range(-1.0..1.0))
}

/// Dense `mN x mN` matrix with block `(i, j)` equal to `col[(i - j) mod N]`.
pub fn dense_circulant(col: &[Mat]) -> Mat {
    let n = col.len();
    let m = col[0].nrows();
    let mut out = DMatrix::zeros(m * n, m * n);
    for i in 0..n {
        for j in 0..n {
            out.view_mut((i * m, j * m), (m, m))
                .copy_from(&col[(i + n - j) % n]);
        }
    }
    out
}

pub fn first_block_column(dense: &Mat, m: usize) -> Vec<Mat> {
    let n = dense.nrows() / m;
    (0..n)
        .map(|k| dense.view((k * m, 0), (m, m)).into_owned())
        .collect()
}

/// Dense block Toeplitz matrix with block `(i, j) = lag(i - j)`, `lag(-k) = lag(k)^T`.
pub fn dense_toeplitz(lags: &[Mat]) -> Mat {
    let p = lags.len();
    let m = lags[0].nrows();
    let mut out = DMatrix::zeros(m * p, m * p);
    for i in 0..p {
        for j in 0..p {
            let b = if i >= j {
                lags[i - j].clone()
            } else {
                lags[j - i].transpose()
            };
            out.view_mut((i * m, j * m), (m, m)).copy_from(&b);
        }
    }
    out
}

pub fn dense_logdet(a: &Mat) -> Option<f64> {
    let sym = (a + a.transpose()) * 0.5;
    let ch = sym.cholesky()?;
    Some(2.0 * ch.l().diagonal().iter().map(|x| x.ln()).sum::<f64>())
}

pub fn min_eigenvalue(a: &Mat) -> f64 {
    let sym = (a + a.transpose()) * 0.5;
    sym.symmetric_eigenvalues().iter().copied().fold(f64::INFINITY, f64::min)
}

pub fn max_abs(a: &Mat) -> f64 {
    a.iter().fold(0.0, |x, y| x.max(y.abs()))
}

/// First block column of a random symmetric positive-definite block circulant `R R^T + delta I`.
pub fn random_pd_circulant(rng: &mut ChaCha8Rng, m: usize, n_blocks: usize, delta: f64) -> Vec<Mat> {
    let r: Vec<Mat> = (0..n_blocks).map(|_| random_mat(rng, m, m)).collect();
    let rd = dense_circulant(&r);
    let c = &rd * rd.transpose() + DMatrix::identity(m * n_blocks, m * n_blocks) * delta;
    first_block_column(&c, m)
}

/// Random banded model blocks `M_0..M_n` whose assembled circulant is positive definite.
pub fn random_model_blocks(rng: &mut ChaCha8Rng, m: usize, n: usize, n_blocks: usize) -> Vec<Mat> {
    let mut blocks: Vec<Mat> = (0..=n).map(|_| random_mat(rng, m, m) * 0.5).collect();
    blocks[0] = (&blocks[0] + blocks[0].transpose()) * 0.5;
    let dense = dense_circulant(&banded_column(&blocks, n_blocks));
    let shift = -min_eigenvalue(&dense) + rng.random_range(0.2..1.5);
    blocks[0] += DMatrix::identity(m, m) * shift;
    blocks
}

/// First column `B_0, ..., B_n, 0, ..., 0, B_n^T, ..., B_1^T`.
pub fn banded_column(blocks: &[Mat], n_blocks: usize) -> Vec<Mat> {
    let m = blocks[0].nrows();
    let mut col = vec![DMatrix::zeros(m, m); n_blocks];
    col[0] = blocks[0].clone();
    for k in 1..blocks.len() {
        col[k] = blocks[k].clone();
        col[n_blocks - k] = blocks[k].transpose();
    }
    col
}

/// Scalar circulant completion of `band` with free lags `x_{n+1}, ..., x_{N/2}`.
pub fn scalar_completion(band: &[f64], free: &[f64], n_blocks: usize) -> Mat {
    let mut lags = band.to_vec();
    lags.extend_from_slice(free);
    DMatrix::from_fn(n_blocks, n_blocks, |i, j| {
        let d = (i + n_blocks - j) % n_blocks;
        lags[d.min(n_blocks - d)]
    })
}

/// Pattern matrix of lag `j` in a symmetric scalar circulant.
fn lag_pattern(j: usize, n_blocks: usize) -> Mat {
    DMatrix::from_fn(n_blocks, n_blocks, |a, b| {
        let d = (a + n_blocks - b) % n_blocks;
        if d.min(n_blocks - d) == j {
            1.0
        } else {
            0.0
        }
    })
}

/// Maximizes `log det` of the scalar circulant completion over the free lags by dense Newton,
/// seeded from the best positive-definite point of a grid. Returns the free lags.
pub fn primal_brute_force(band: &[f64], n_blocks: usize) -> Option<Vec<f64>> {
    let n = band.len() - 1;
    let nfree = n_blocks / 2 - n;
    if nfree == 0 {
        return Some(Vec::new());
    }
    let s0 = band[0];
    let steps = 24;
    let mut best: Option<(f64, Vec<f64>)> = None;
    let mut idx = vec![0usize; nfree];
    loop {
        let x: Vec<f64> = idx
            .iter()
            .map(|&i| s0 * (-1.0 + 2.0 * (i as f64 + 0.5) / steps as f64))
            .collect();
        if let Some(ld) = dense_logdet(&scalar_completion(band, &x, n_blocks)) {
            if best.as_ref().is_none_or(|b| ld > b.0) {
                best = Some((ld, x));
            }
        }
        let mut p = 0;
        loop {
            if p == nfree {
                break;
            }
            idx[p] += 1;
            if idx[p] < steps {
                break;
            }
            idx[p] = 0;
            p += 1;
        }
        if p == nfree {
            break;
        }
    }
    let (mut val, mut x) = best?;
    let patterns: Vec<Mat> = (n + 1..=n_blocks / 2)
        .map(|j| lag_pattern(j, n_blocks))
        .collect();
    for _ in 0..100 {
        let c = scalar_completion(band, &x, n_blocks);
        let cinv = c.clone().try_inverse()?;
        let g = DMatrix::from_fn(nfree, 1, |a, _| (&cinv * &patterns[a]).trace());
        let h = DMatrix::from_fn(nfree, nfree, |a, b| {
            -(&cinv * &patterns[a] * &cinv * &patterns[b]).trace()
        });
        let step = (-h).cholesky()?.solve(&g);
        if step.norm() < 1e-15 * (1.0 + s0) {
            break;
        }
        let mut t = 1.0;
        loop {
            let cand: Vec<f64> = x.iter().zip(step.iter()).map(|(a, d)| a + t * d).collect();
            if let Some(ld) = dense_logdet(&scalar_completion(band, &cand, n_blocks)) {
                if ld >= val - 1e-15 * val.abs() {
                    x = cand;
                    val = ld;
                    break;
                }
            }
            t *= 0.5;
            if t < 1e-12 {
                return Some(x);
            }
        }
    }
    Some(x)
}

/// Ordinary least-squares slope of `y` against `x`.
pub fn slope(x: &[f64], y: &[f64]) -> f64 {
    let n = x.len() as f64;
    let mx = x.iter().sum::<f64>() / n;
    let my = y.iter().sum::<f64>() / n;
    let sxy: f64 = x.iter().zip(y).map(|(a, b)| (a - mx) * (b - my)).sum();
    let sxx: f64 = x.iter().map(|a| (a - mx) * (a - mx)).sum();
    sxy / sxx
}

pub fn median(v: &mut [f64]) -> f64 {
    v.sort_by(|a, b| a.total_cmp(b));
    let k = v.len();
    if k % 2 == 1 {
        v[k / 2]
    } else {
        0.5 * (v[k / 2 - 1] + v[k / 2])
    }
}
