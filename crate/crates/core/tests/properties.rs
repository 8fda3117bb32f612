mod common;

use cmx_core::blockcirc::band_residual;
use cmx_core::feasibility::{ar_extend, block_levinson, find_feasible_n};
use cmx_core::identify::{identify, log_likelihood, sufficient_statistics, IdentifyOptions};
use cmx_core::maxent::{self, solve, solve_with_initial, SolverConfig};
use cmx_core::reciprocal::{
    covariance_of_model, model_from_covariance, sample, yule_walker, DEFAULT_BAND_TOL,
};
use cmx_core::{
    dft_block_diagonalize, idft_reconstruct, inverse, logdet, project_circulant, BlockCirculant,
    CmxError, CovBand, DMatrix, ReciprocalModel,
};
use common::*;
use proptest::prelude::*;
use rand::Rng;

fn config(cases: u32) -> ProptestConfig {
    let cases = std::env::var("PROPTEST_CASES")
        .ok()
        .and_then(|v| v.parse().ok())
        .unwrap_or(cases);
    ProptestConfig {
        cases,
        ..ProptestConfig::default()
    }
}

fn random_circulant(seed: u64, m: usize, nb: usize) -> BlockCirculant {
    let mut r = rng(seed);
    BlockCirculant::new((0..nb).map(|_| random_mat(&mut r, m, m)).collect()).unwrap()
}

fn rel_diff(a: &[Mat], b: &[Mat]) -> f64 {
    let num: f64 = a.iter().zip(b).map(|(x, y)| (x - y).norm_squared()).sum();
    let den: f64 = b.iter().map(|y| y.norm_squared()).sum();
    (num / den.max(f64::MIN_POSITIVE)).sqrt()
}

/// A feasible band: the first lags of a random positive-definite circulant at `nb`.
fn feasible_band(seed: u64, m: usize, n: usize, nb: usize) -> (CovBand, Vec<Mat>) {
    let mut r = rng(seed);
    let col = random_pd_circulant(&mut r, m, nb, 0.1);
    (CovBand::new(col[..=n].to_vec()).unwrap(), col)
}

fn random_model(seed: u64, m: usize, n: usize, nb: usize) -> ReciprocalModel {
    let mut r = rng(seed);
    ReciprocalModel::new(random_model_blocks(&mut r, m, n, nb), nb).unwrap()
}

proptest! {
    #![proptest_config(config(64))]

    #[test]
    fn shift_commutes_with_circulant(seed in any::<u64>(), m in 1usize..=3, nb in 1usize..=12) {
        let c = random_circulant(seed, m, nb).dense();
        let dim = m * nb;
        // Block down-shift: (U x)_i = x_{i-1}.
        let u = DMatrix::from_fn(dim, dim, |i, j| {
            if (j / m + 1) % nb == i / m && i % m == j % m { 1.0 } else { 0.0 }
        });
        let defect = (u.transpose() * &c * &u - &c).norm();
        prop_assert!(defect <= 1e-14 * (1.0 + c.norm()));
    }

    #[test]
    fn diagonalization_round_trip(seed in any::<u64>(), m in 1usize..=4, nb in 1usize..=32) {
        let c = random_circulant(seed, m, nb);
        let back = idft_reconstruct(&dft_block_diagonalize(&c)).unwrap();
        prop_assert!(rel_diff(back.blocks(), c.blocks()) <= 1e-12);
    }

    #[test]
    fn logdet_matches_dense(seed in any::<u64>(), m in 1usize..=4, nb in 1usize..=16) {
        let mut r = rng(seed);
        let col = random_pd_circulant(&mut r, m, nb, 0.05);
        let lib = logdet(&BlockCirculant::new(col.clone()).unwrap()).unwrap();
        let dense = dense_logdet(&dense_circulant(&col)).unwrap();
        prop_assert!((lib - dense).abs() <= 1e-9 * dense.abs().max(1.0));
    }

    #[test]
    fn projection_is_orthogonal(seed in any::<u64>(), m in 1usize..=3, nb in 1usize..=8) {
        let mut r = rng(seed);
        let dim = m * nb;
        let a = random_mat(&mut r, dim, dim);
        let sym = &a + a.transpose();
        let p = project_circulant(&sym, m).unwrap().dense();
        let resid = &sym - &p;
        for _ in 0..20 {
            let c = random_circulant(r.random(), m, nb).dense();
            prop_assert!(resid.dot(&c).abs() <= 1e-10 * (1.0 + sym.norm() * c.norm()));
        }
    }

    #[test]
    fn corner_projection_is_banded(seed in any::<u64>(), m in 1usize..=3, n in 0usize..=3, extra in 1usize..=6) {
        let mut r = rng(seed);
        let nb = 2 * n + extra;
        let k = (n + 1) * m;
        let a = random_mat(&mut r, k, k);
        let mut big = DMatrix::zeros(m * nb, m * nb);
        big.view_mut((0, 0), (k, k)).copy_from(&(&a + a.transpose()));
        let p = project_circulant(&big, m).unwrap();
        prop_assert!(band_residual(&p, n).unwrap() == 0.0);
    }

    #[test]
    fn levinson_solves_normal_equations(seed in any::<u64>(), m in 1usize..=3, n in 0usize..=4) {
        let (band, _) = feasible_band(seed, m, n, 2 * n + 3);
        let lev = block_levinson(&band).unwrap();
        let lag = |d: isize| band.lag(d);
        let scale = band.norm();
        for k in 1..=n as isize {
            let mut r = lag(k);
            for (j, a) in lev.ar_coeffs.iter().enumerate() {
                r += a * lag(k - j as isize - 1);
            }
            prop_assert!(r.norm() <= 1e-8 * scale);
        }
        prop_assert!(min_eigenvalue(&lev.innovation) > 0.0);
    }

    #[test]
    fn extension_is_whitened_and_positive(seed in any::<u64>(), m in 1usize..=3, n in 0usize..=3) {
        let (band, _) = feasible_band(seed, m, n, 2 * n + 3);
        let lev = block_levinson(&band).unwrap();
        let count = 20 - n;
        let mut lags = band.sigma().to_vec();
        lags.extend(ar_extend(&lev, &band, count).unwrap());
        let scale = band.norm();
        for i in n + 1..lags.len() {
            let mut r = lags[i].clone();
            for (j, a) in lev.ar_coeffs.iter().enumerate() {
                r += a * &lags[i - j - 1];
            }
            prop_assert!(r.norm() <= 1e-10 * scale);
        }
        for k in 0..lags.len() {
            prop_assert!(min_eigenvalue(&dense_toeplitz(&lags[..=k])) > 0.0);
        }
    }

    #[test]
    fn wrap_keeps_band_exactly(seed in any::<u64>(), m in 1usize..=3, n in 0usize..=3) {
        let (band, _) = feasible_band(seed, m, n, 2 * n + 2);
        let ext = find_feasible_n(&band, 400);
        prop_assume!(ext.is_ok());
        let ext = ext.unwrap();
        prop_assert_eq!(ext.wrap().band(n), band.sigma().to_vec());
    }

    #[test]
    fn model_round_trip(seed in any::<u64>(), m in 1usize..=3, n in 0usize..=3, extra in 0usize..=10) {
        let nb = (2 * n + 1 + extra).min(24);
        let model = random_model(seed, m, n, nb);
        let c = covariance_of_model(&model).unwrap();
        prop_assert!(band_residual(&inverse(&c).unwrap(), n).unwrap() <= 1e-10);
        let back = model_from_covariance(&c, n, DEFAULT_BAND_TOL).unwrap();
        prop_assert!(rel_diff(back.blocks(), model.blocks()) <= 1e-9);
    }

    #[test]
    fn dense_inverse_is_not_reciprocal(seed in any::<u64>(), m in 1usize..=2, n in 0usize..=2) {
        let nb = 2 * n + 4;
        let mut r = rng(seed);
        let col = random_pd_circulant(&mut r, m, nb, 0.1);
        let c = BlockCirculant::new(col).unwrap();
        let is_not_reciprocal = matches!(
            model_from_covariance(&c, n, DEFAULT_BAND_TOL),
            Err(CmxError::NotReciprocal { .. })
        );
        prop_assert!(is_not_reciprocal);
    }

    #[test]
    fn yule_walker_matches_banded_inverse(seed in any::<u64>(), m in 1usize..=3, n in 0usize..=3, extra in 0usize..=6) {
        let nb = 2 * n + 1 + extra;
        let model = random_model(seed, m, n, nb);
        let c = covariance_of_model(&model).unwrap();
        let sol = yule_walker(&c.blocks()[..=2 * n]).unwrap();
        let blocks = sol.normalized_blocks().unwrap();
        prop_assert!(rel_diff(&blocks, model.blocks()) <= 1e-8);
        prop_assert!(sol.center_symmetry_defect().unwrap() <= 1e-8);
    }
}

proptest! {
    #![proptest_config(config(32))]

    #[test]
    fn solver_recovers_band_with_banded_inverse(seed in any::<u64>(), m in 1usize..=3, n in 0usize..=3, extra in 0usize..=12) {
        let nb = 2 * n + 1 + extra;
        let (band, _) = feasible_band(seed, m, n, nb);
        let sol = solve(&band, nb, &SolverConfig::default()).unwrap();
        prop_assert!(rel_diff(&sol.sigma.band(n), band.sigma()) <= 1e-7);
        let inv = dense_circulant(sol.sigma.blocks()).try_inverse().unwrap();
        let col = first_block_column(&inv, m);
        let total: f64 = col.iter().map(|b| b.norm_squared()).sum();
        let off: f64 = col[n + 1..nb - n].iter().map(|b| b.norm_squared()).sum();
        prop_assert!((off / total).sqrt() <= 1e-9);
        let trace = &sol.diagnostics.objective;
        prop_assert!(trace.windows(2).all(|w| w[1] <= w[0]));
        prop_assert!(sol.diagnostics.decrease.iter().all(|&d| d < 0.0));
    }

    #[test]
    fn solution_is_unique(seed in any::<u64>(), m in 1usize..=2, n in 1usize..=3, extra in 0usize..=8) {
        let nb = 2 * n + 1 + extra;
        let (band, _) = feasible_band(seed, m, n, nb);
        let start = random_model(seed ^ 0x5eed, m, n, nb);
        let a = solve(&band, nb, &SolverConfig::default()).unwrap();
        let b = solve_with_initial(&band, nb, &SolverConfig::default(), &start).unwrap();
        prop_assert!(rel_diff(b.sigma.blocks(), a.sigma.blocks()) <= 1e-6);
    }

    #[test]
    fn solver_is_scale_equivariant(seed in any::<u64>(), m in 1usize..=2, n in 0usize..=3, extra in 0usize..=8, log_c in -3.0f64..3.0) {
        let c = 10f64.powf(log_c);
        let nb = 2 * n + 1 + extra;
        let (band, _) = feasible_band(seed, m, n, nb);
        // Converged well past the 1e-9 comparison so the stopping point does not dominate.
        let cfg = SolverConfig { grad_tol: 1e-12, ..SolverConfig::default() };
        let a = solve(&band, nb, &cfg).unwrap();
        let b = solve(&band.scaled(c), nb, &cfg).unwrap();
        prop_assert!(rel_diff(b.sigma.scaled(1.0 / c).blocks(), a.sigma.blocks()) <= 1e-9);
        prop_assert!(rel_diff(b.model.scaled(c).blocks(), a.model.blocks()) <= 1e-9);
    }

    #[test]
    fn identify_is_the_composed_pipeline(seed in any::<u64>(), n in 0usize..=2) {
        let model = random_model(seed, 1, n, 8);
        let data = sample(&model, 200, seed).unwrap();
        let id = identify(&data, n, &IdentifyOptions::default()).unwrap();
        let stats = sufficient_statistics(&data, n).unwrap();
        let sol = solve(&stats.band().unwrap(), 8, &SolverConfig::default()).unwrap();
        let composed = model_from_covariance(&sol.sigma, n, DEFAULT_BAND_TOL).unwrap();
        prop_assert_eq!(id.model, composed);
    }

    #[test]
    fn identified_model_maximizes_likelihood(seed in any::<u64>(), m in 1usize..=2, n in 0usize..=2) {
        let nb = 8;
        let truth = random_model(seed, m, n, nb);
        let data = sample(&truth, 100, seed).unwrap();
        let stats = sufficient_statistics(&data, n).unwrap();
        let id = identify(&data, n, &IdentifyOptions::default()).unwrap();
        let best = log_likelihood(&id.model, &stats).unwrap();
        let mut r = rng(seed ^ 0xabc);
        for _ in 0..50 {
            let other = ReciprocalModel::new(random_model_blocks(&mut r, m, n, nb), nb).unwrap();
            prop_assert!(log_likelihood(&other, &stats).unwrap() <= best + 1e-9 * best.abs());
        }
    }

    #[test]
    fn likelihood_is_concave(seed in any::<u64>(), m in 1usize..=2, n in 0usize..=2) {
        let nb = 7;
        let truth = random_model(seed, m, n, nb);
        let stats = sufficient_statistics(&sample(&truth, 20, seed).unwrap(), n).unwrap();
        let a = random_model(seed ^ 1, m, n, nb);
        let b = random_model(seed ^ 2, m, n, nb);
        let mid_blocks: Vec<Mat> = a.blocks().iter().zip(b.blocks()).map(|(x, y)| (x + y) * 0.5).collect();
        let mid = ReciprocalModel::new(mid_blocks, nb).unwrap();
        let la = log_likelihood(&a, &stats).unwrap();
        let lb = log_likelihood(&b, &stats).unwrap();
        let lm = log_likelihood(&mid, &stats).unwrap();
        prop_assert!(lm >= 0.5 * (la + lb) - 1e-9 * (la.abs() + lb.abs()));
    }

    #[test]
    fn circular_shift_leaves_estimate_unchanged(seed in any::<u64>(), n in 0usize..=2, offset in 1usize..8) {
        let model = random_model(seed, 2, n, 8);
        let data = sample(&model, 50, seed).unwrap();
        let shifted = data.shifted(offset);
        let a = sufficient_statistics(&data, n).unwrap();
        let b = sufficient_statistics(&shifted, n).unwrap();
        prop_assert!(rel_diff(&b.sigma_hat, &a.sigma_hat) <= 1e-12);
        let ia = identify(&data, n, &IdentifyOptions::default()).unwrap();
        let ib = identify(&shifted, n, &IdentifyOptions::default()).unwrap();
        prop_assert!(rel_diff(ib.model.blocks(), ia.model.blocks()) <= 1e-12);
    }

    #[test]
    fn linear_and_likelihood_estimates_agree_on_exact_lags(seed in any::<u64>(), m in 1usize..=2, n in 0usize..=3, extra in 0usize..=6) {
        let nb = 2 * n + 1 + extra;
        let truth = random_model(seed, m, n, nb);
        let c = covariance_of_model(&truth).unwrap();
        let linear = yule_walker(&c.blocks()[..=2 * n]).unwrap().normalized_blocks().unwrap();
        let band = CovBand::new(c.band(n)).unwrap();
        let ml = solve(&band, nb, &SolverConfig::default()).unwrap();
        prop_assert!(rel_diff(&linear, ml.model.blocks()) <= 1e-7);
    }

    #[test]
    fn dual_objective_ignores_completion(seed in any::<u64>(), m in 1usize..=2, n in 0usize..=2, extra in 0usize..=5) {
        let nb = 2 * n + 1 + extra;
        let (band, col) = feasible_band(seed, m, n, nb);
        let model = random_model(seed ^ 7, m, n, nb);
        let f = maxent::dual_objective(&model, &band).unwrap();
        let md = dense_circulant(&banded_column(model.blocks(), nb));
        let ld = dense_logdet(&md).unwrap();
        // Two different symmetric completions of the band.
        let mut r = rng(seed ^ 9);
        let mut other = col.clone();
        for k in n + 1..=nb / 2 {
            let x = random_mat(&mut r, m, m);
            if 2 * k == nb {
                other[k] = &x + x.transpose();
            } else {
                other[nb - k] = x.transpose();
                other[k] = x;
            }
        }
        for completion in [&col, &other] {
            let dense = (&md * dense_circulant(completion)).trace() - ld;
            prop_assert!((dense - f).abs() <= 1e-9 * (1.0 + f.abs()));
        }
    }
}
