//! `cmx`: band extension, identification, sampling and verification from the command line.
//!
//! Exit codes: 0 success, 1 input error, 2 infeasible or degenerate problem, 3 failed verification.

use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use cmx_core::feasibility::{default_horizon, feasibility_report};
use cmx_core::identify::{identify_detailed, IdentifyDiagnostics};
use cmx_core::io::{read_json, to_json_string, write_json};
use cmx_core::maxent::{solve_detailed, SolverDiagnostics};
use cmx_core::{
    entropy, sample, verify_model, BlockCirculant, CmxError, CovBand, Dataset, IdentifyOptions,
    ReciprocalModel, SolverConfig,
};
use serde::Serialize;

#[derive(Parser)]
#[command(name = "cmx", version, about)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Maximum-entropy extension of a covariance band to a block circulant of size N.
    Extend {
        /// Band file `{m, n, sigma}`.
        #[arg(long)]
        band: PathBuf,
        /// Number of blocks of the circulant.
        #[arg(long = "N", value_name = "INT")]
        n_blocks: usize,
        /// Relative gradient tolerance of the solver.
        #[arg(long)]
        tol: Option<f64>,
        #[arg(long)]
        max_iter: Option<usize>,
        /// Output directory; receives sigma.json, model.json and diagnostics.json.
        #[arg(long)]
        out: PathBuf,
    },
    /// Maximum-likelihood reciprocal model of order n from sample paths.
    Identify {
        /// Dataset file `{m, N, T, realizations}`.
        #[arg(long)]
        data: PathBuf,
        #[arg(long = "n", value_name = "INT")]
        order: usize,
        /// Added to the lag-zero sample covariance as `ridge * I`.
        #[arg(long, default_value_t = 0.0)]
        ridge: f64,
        /// Solve the extension on a longer circle.
        #[arg(long = "extend-N", value_name = "INT")]
        extend_n: Option<usize>,
        #[arg(long)]
        tol: Option<f64>,
        #[arg(long)]
        max_iter: Option<usize>,
        /// Output directory; receives model.json, sigma.json and diagnostics.json.
        #[arg(long)]
        out: PathBuf,
    },
    /// Draws independent realizations of a model.
    Sample {
        #[arg(long)]
        model: PathBuf,
        /// Number of realizations.
        #[arg(long = "T", value_name = "INT")]
        realizations: usize,
        #[arg(long)]
        seed: u64,
        #[arg(long)]
        out: PathBuf,
    },
    /// Smallest circle length admitting a positive-definite wrapped extension of a band.
    Feasibility {
        #[arg(long)]
        band: PathBuf,
        /// Largest N tried; defaults to 16 (2n + 1).
        #[arg(long)]
        n_max: Option<usize>,
    },
    /// Checks that a model is the inverse of a covariance and is banded.
    Verify {
        #[arg(long)]
        model: PathBuf,
        #[arg(long)]
        cov: PathBuf,
    },
}

struct Failure {
    code: u8,
    message: String,
}

impl From<CmxError> for Failure {
    fn from(e: CmxError) -> Self {
        Failure {
            code: exit_code(&e),
            message: e.to_string(),
        }
    }
}

fn exit_code(e: &CmxError) -> u8 {
    match e {
        CmxError::Dimension(_)
        | CmxError::Malformed(_)
        | CmxError::Io(_)
        | CmxError::InvalidModel(_)
        | CmxError::NotACovariance(_) => 1,
        _ => 2,
    }
}

#[derive(Serialize)]
struct ExtendReport<'a> {
    status: &'static str,
    exit_code: u8,
    error: Option<String>,
    entropy: Option<f64>,
    solver: Option<&'a SolverDiagnostics>,
}

#[derive(Serialize)]
struct IdentifyReport<'a> {
    status: &'static str,
    exit_code: u8,
    error: Option<String>,
    identify: Option<&'a IdentifyDiagnostics>,
}

fn status(code: u8) -> &'static str {
    match code {
        0 => "ok",
        1 => "input_error",
        _ => "failed",
    }
}

fn solver_config(tol: Option<f64>, max_iter: Option<usize>) -> Result<SolverConfig, Failure> {
    let mut cfg = SolverConfig::default();
    if let Some(t) = tol {
        cfg.grad_tol = t;
    }
    if let Some(k) = max_iter {
        cfg.max_iter = k;
    }
    cfg.validate()?;
    Ok(cfg)
}

fn prepare_dir(out: &Path) -> Result<(), Failure> {
    fs::create_dir_all(out).map_err(|e| Failure {
        code: 1,
        message: format!("cannot create {}: {e}", out.display()),
    })
}

fn extend(
    band: &Path,
    n_blocks: usize,
    tol: Option<f64>,
    max_iter: Option<usize>,
    out: &Path,
) -> Result<(), Failure> {
    prepare_dir(out)?;
    let mut diag = None;
    let result = (|| -> Result<f64, Failure> {
        let cfg = solver_config(tol, max_iter)?;
        let band: CovBand = read_json(band)?;
        let (res, d) = solve_detailed(&band, n_blocks, &cfg, None);
        diag = Some(d);
        let sol = res?;
        write_json(&out.join("sigma.json"), &sol.sigma)?;
        write_json(&out.join("model.json"), &sol.model)?;
        Ok(entropy(&sol.sigma)?)
    })();
    let (code, error, h) = match &result {
        Ok(h) => (0, None, Some(*h)),
        Err(f) => (f.code, Some(f.message.clone()), None),
    };
    let report = ExtendReport {
        status: status(code),
        exit_code: code,
        error,
        entropy: h,
        solver: diag.as_ref(),
    };
    write_json(&out.join("diagnostics.json"), &report)?;
    result.map(|_| ())
}

#[allow(clippy::too_many_arguments)]
fn identify(
    data: &Path,
    order: usize,
    ridge: f64,
    extend_n: Option<usize>,
    tol: Option<f64>,
    max_iter: Option<usize>,
    out: &Path,
) -> Result<(), Failure> {
    prepare_dir(out)?;
    let mut diag = None;
    let result = (|| -> Result<(), Failure> {
        let opts = IdentifyOptions {
            solver: solver_config(tol, max_iter)?,
            ridge,
            extend_n,
        };
        let data: Dataset = read_json(data)?;
        let (res, d) = identify_detailed(&data, order, &opts);
        diag = Some(d);
        let fit = res?;
        write_json(&out.join("model.json"), &fit.model)?;
        write_json(&out.join("sigma.json"), &fit.sigma)?;
        Ok(())
    })();
    let (code, error) = match &result {
        Ok(()) => (0, None),
        Err(f) => (f.code, Some(f.message.clone())),
    };
    let report = IdentifyReport {
        status: status(code),
        exit_code: code,
        error,
        identify: diag.as_ref(),
    };
    write_json(&out.join("diagnostics.json"), &report)?;
    result
}

fn run(cli: Cli) -> Result<(), Failure> {
    match cli.command {
        Command::Extend {
            band,
            n_blocks,
            tol,
            max_iter,
            out,
        } => extend(&band, n_blocks, tol, max_iter, &out),
        Command::Identify {
            data,
            order,
            ridge,
            extend_n,
            tol,
            max_iter,
            out,
        } => identify(&data, order, ridge, extend_n, tol, max_iter, &out),
        Command::Sample {
            model,
            realizations,
            seed,
            out,
        } => {
            let model: ReciprocalModel = read_json(&model)?;
            let data = sample(&model, realizations, seed)?;
            write_json(&out, &data)?;
            Ok(())
        }
        Command::Feasibility { band, n_max } => {
            let band: CovBand = read_json(&band)?;
            let n_max = n_max.unwrap_or_else(|| default_horizon(band.order()));
            let report = feasibility_report(&band, n_max)?;
            println!("{}", to_json_string(&report)?);
            if report.feasible {
                Ok(())
            } else {
                Err(Failure {
                    code: 2,
                    message: format!("no feasible circle length up to N = {n_max}"),
                })
            }
        }
        Command::Verify { model, cov } => {
            let model: ReciprocalModel = read_json(&model)?;
            let cov: BlockCirculant = read_json(&cov)?;
            let report = verify_model(&model, &cov)?;
            println!("{}", to_json_string(&report)?);
            if report.passed {
                Ok(())
            } else {
                Err(Failure {
                    code: 3,
                    message: format!(
                        "verification failed: product residual {:e}, band residual {:e}",
                        report.product_residual, report.band_residual
                    ),
                })
            }
        }
    }
}

/// `CMX_THREADS` sizes the worker pool; 0 runs sequentially.
fn configure_threads() -> Result<(), Failure> {
    let Ok(v) = std::env::var("CMX_THREADS") else {
        return Ok(());
    };
    let k: usize = v.trim().parse().map_err(|_| Failure {
        code: 1,
        message: format!("CMX_THREADS must be a non-negative integer, got {v:?}"),
    })?;
    rayon::ThreadPoolBuilder::new()
        .num_threads(k.max(1))
        .build_global()
        .map_err(|e| Failure {
            code: 1,
            message: format!("cannot configure thread pool: {e}"),
        })
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let code = if e.use_stderr() { 1 } else { 0 };
            let _ = e.print();
            return ExitCode::from(code);
        }
    };
    match configure_threads().and_then(|()| run(cli)) {
        Ok(()) => ExitCode::SUCCESS,
        Err(f) => {
            eprintln!("cmx: {}", f.message);
            ExitCode::from(f.code)
        }
    }
}
