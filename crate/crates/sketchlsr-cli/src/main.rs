//! Batch front end: solve single problems from Matrix Market files, run
//! seeded Monte Carlo experiments from JSON configs, and evaluate the
//! closed-form bound calculators. Results are wrapped in a JSON envelope
//! whose config echo reproduces the run.
//!
//! Exit codes: 0 success, 2 input/usage error, 3 numerical failure.

use anyhow::Context;
use clap::{Args, Parser, Subcommand, ValueEnum};
use serde::Serialize;
use serde_json::{json, Value};
use sketchlsr::bounds::{
    beta_error_bound, boost_success, chernoff_tail, matmul_expected_bound, theorem1_sample_size,
    theorem2_sample_size, uniform_sample_size, BoundReport, ChernoffParams, MatmulVariant,
    TailSide,
};
use sketchlsr::harness::{run_experiment, stats_to_csv, ExperimentConfig};
use sketchlsr::io::{read_matrix_market, read_vector, VectorFormat};
use sketchlsr::linalg::{exact_lsr_with_svd, leverage_scores, thin_svd, RegressionProblem};
use sketchlsr::matrix::norm2_sq;
use sketchlsr::sketch::{draw_sketch, SketchKind, WeightMode};
use sketchlsr::solver::{certify_with_exact, error_ratio_given, solve_sketched};
use sketchlsr::SeededRng;
use std::path::PathBuf;
use std::process::ExitCode;
use std::time::Instant;

/// Beyond this many matrix entries the exact reference solve (and with it
/// the error ratio and certificate) is skipped in `solve`.
const EXACT_FEASIBLE_ENTRIES: usize = 1 << 27;

#[derive(Parser)]
#[command(
    name = "sketchlsr",
    version,
    about = "Randomized sketch-and-solve least squares"
)]
struct Cli {
    /// Worker threads (default: machine cores; env fallback SKETCHLSR_THREADS)
    #[arg(long, global = true)]
    threads: Option<usize>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Solve one regression problem, exactly or through a sketch
    Solve(SolveArgs),
    /// Run a Monte Carlo experiment described by a JSON config
    Experiment(ExperimentArgs),
    /// Evaluate a closed-form bound calculator
    Bounds(BoundsArgs),
}

#[derive(Clone, Copy, PartialEq, Eq, ValueEnum)]
enum Method {
    Exact,
    Leverage,
    Uniform,
    Srht,
    Sparse,
}

#[derive(Clone, Copy, ValueEnum)]
enum YFormat {
    Auto,
    Mm,
    Csv,
}

#[derive(Args)]
struct SolveArgs {
    /// Design matrix X in Matrix Market format
    #[arg(long)]
    x: PathBuf,
    /// Response vector y (single-column Matrix Market or headerless CSV)
    #[arg(long)]
    y: PathBuf,
    #[arg(long, value_enum)]
    method: Method,
    /// Sketch size (required for every method except exact)
    #[arg(long)]
    c: Option<usize>,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long, default_value_t = 0)]
    stream: u64,
    /// Use the literal diagonal D = diag(1/p_i) row weights for leverage
    /// sampling instead of the unbiased 1/sqrt(p_i) scaling
    #[arg(long)]
    literal_alg1_weights: bool,
    /// Override response-vector format detection
    #[arg(long, value_enum, default_value = "auto")]
    y_format: YFormat,
    /// Write the realized sketch operator as JSON for replay
    #[arg(long)]
    operator_out: Option<PathBuf>,
    /// Write the result envelope here instead of stdout
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args)]
struct ExperimentArgs {
    /// ExperimentConfig JSON document
    #[arg(long)]
    config: PathBuf,
    /// Also write per-c CSV rows here
    #[arg(long)]
    csv: Option<PathBuf>,
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Clone, Copy, PartialEq, Eq, ValueEnum)]
enum Calc {
    T1,
    T2,
    Chernoff,
    Boost,
    Matmul,
    Beta,
}

#[derive(Args)]
struct BoundsArgs {
    #[arg(long, value_enum)]
    calc: Calc,
    #[arg(long)]
    d: Option<usize>,
    #[arg(long)]
    eps: Option<f64>,
    /// Constant hidden by the d ln d branch of the leverage threshold
    #[arg(long, default_value_t = 20.0)]
    c_lnd: f64,
    #[arg(long)]
    mu: Option<f64>,
    /// Lower-tail deviation parameter; with --theta2/--delta1/--delta2 the
    /// t2 calc uses the general tail formula instead of the rounded one
    #[arg(long)]
    theta1: Option<f64>,
    #[arg(long)]
    theta2: Option<f64>,
    #[arg(long)]
    delta1: Option<f64>,
    #[arg(long)]
    delta2: Option<f64>,
    /// Deviation parameter for the chernoff calc
    #[arg(long)]
    theta: Option<f64>,
    #[arg(long, value_enum, default_value = "min")]
    side: Side,
    /// Scaled extreme eigenvalue xi = c * lambda(E W)
    #[arg(long)]
    xi: Option<f64>,
    /// Per-summand eigenvalue cap R
    #[arg(long)]
    r: Option<f64>,
    #[arg(long)]
    t: Option<u64>,
    #[arg(long)]
    c: Option<usize>,
    #[arg(long)]
    x_fro: Option<f64>,
    #[arg(long)]
    y_fro: Option<f64>,
    #[arg(long, default_value_t = 0.0)]
    x_spec: f64,
    #[arg(long, value_enum, default_value = "frobenius")]
    variant: Variant,
    /// Constant hidden by the spectral-norm variant
    #[arg(long, default_value_t = 1.0)]
    c_spec: f64,
    #[arg(long)]
    kappa: Option<f64>,
    #[arg(long)]
    gamma: Option<f64>,
    #[arg(long)]
    beta_norm: Option<f64>,
    /// Constant in front of the coefficient-error bound (eps for the
    /// leverage guarantee, 1.2 for the uniform one)
    #[arg(long, default_value_t = 1.2)]
    const_factor: f64,
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Clone, Copy, PartialEq, Eq, ValueEnum)]
enum Side {
    Min,
    Max,
}

#[derive(Clone, Copy, PartialEq, Eq, ValueEnum)]
enum Variant {
    Frobenius,
    Spectral,
}

#[derive(Serialize)]
struct Envelope {
    tool_version: String,
    command: String,
    config_echo: Value,
    started_at: String,
    finished_at: String,
    payload: Value,
}

enum CmdError {
    Lib(sketchlsr::Error),
    Other(anyhow::Error),
}

impl From<sketchlsr::Error> for CmdError {
    fn from(e: sketchlsr::Error) -> Self {
        CmdError::Lib(e)
    }
}

impl From<anyhow::Error> for CmdError {
    fn from(e: anyhow::Error) -> Self {
        CmdError::Other(e)
    }
}

type CmdResult<T> = Result<T, CmdError>;

fn main() -> ExitCode {
    let cli = Cli::parse();
    let threads = cli.threads.or_else(|| {
        std::env::var("SKETCHLSR_THREADS")
            .ok()
            .and_then(|v| v.parse().ok())
    });

    let run = || match &cli.command {
        Command::Solve(args) => cmd_solve(args),
        Command::Experiment(args) => cmd_experiment(args),
        Command::Bounds(args) => cmd_bounds(args),
    };
    let outcome = match threads {
        Some(n) if n > 0 => match rayon::ThreadPoolBuilder::new().num_threads(n).build() {
            Ok(pool) => pool.install(run),
            Err(e) => Err(CmdError::Other(anyhow::anyhow!(
                "failed to build thread pool: {e}"
            ))),
        },
        _ => run(),
    };

    match outcome {
        Ok(()) => ExitCode::SUCCESS,
        Err(CmdError::Lib(e)) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
        Err(CmdError::Other(e)) => {
            eprintln!("error: {e:#}");
            ExitCode::from(2)
        }
    }
}

fn now_rfc3339() -> String {
    chrono::Utc::now().to_rfc3339_opts(chrono::SecondsFormat::Millis, true)
}

fn emit(envelope: &Envelope, out: &Option<PathBuf>) -> CmdResult<()> {
    let body = serde_json::to_string_pretty(envelope)
        .context("serializing result envelope")
        .map_err(CmdError::Other)?;
    match out {
        Some(path) => std::fs::write(path, body + "\n")
            .with_context(|| format!("writing {}", path.display()))
            .map_err(CmdError::Other)?,
        None => println!("{body}"),
    }
    Ok(())
}

fn method_kind(method: Method) -> Option<SketchKind> {
    match method {
        Method::Exact => None,
        Method::Leverage => Some(SketchKind::LeverageSample),
        Method::Uniform => Some(SketchKind::UniformSample),
        Method::Srht => Some(SketchKind::Srht),
        Method::Sparse => Some(SketchKind::SparseEmbedding),
    }
}

fn cmd_solve(args: &SolveArgs) -> CmdResult<()> {
    let started_at = now_rfc3339();
    let x = read_matrix_market(&args.x)?;
    let y_format = match args.y_format {
        YFormat::Auto => VectorFormat::Auto,
        YFormat::Mm => VectorFormat::MatrixMarket,
        YFormat::Csv => VectorFormat::Csv,
    };
    let y = read_vector(&args.y, y_format)?;
    let problem = RegressionProblem::new(x, y)?;
    let (n, d) = (problem.n(), problem.d());
    let y_norm_sq = norm2_sq(problem.y());

    let method_name = match args.method {
        Method::Exact => "exact",
        Method::Leverage => "leverage",
        Method::Uniform => "uniform",
        Method::Srht => "srht",
        Method::Sparse => "sparse",
    };
    let config_echo = json!({
        "x": args.x.display().to_string(),
        "y": args.y.display().to_string(),
        "method": method_name,
        "c": args.c,
        "seed": args.seed,
        "stream": args.stream,
        "literal_alg1_weights": args.literal_alg1_weights,
    });

    let payload = match method_kind(args.method) {
        None => {
            let t = Instant::now();
            let exact = sketchlsr::linalg::exact_lsr(&problem)?;
            let solve_ms = t.elapsed().as_secs_f64() * 1e3;
            json!({
                "n": n,
                "d": d,
                "beta_tilde": exact.beta,
                "c_realized": n,
                "sketch_kind": "exact",
                "rank_deficient": false,
                "error_ratio": 1.0,
                "exact_residual_sq": exact.residual_sq,
                "residual_sq_full": exact.residual_sq,
                "certificate": Value::Null,
                "timings": { "sketch_ms": 0.0, "apply_ms": 0.0, "solve_ms": solve_ms },
            })
        }
        Some(kind) => {
            let c = args.c.ok_or_else(|| {
                sketchlsr::Error::Domain("--c is required for sketched methods".into())
            })?;
            let weights = if args.literal_alg1_weights {
                WeightMode::InverseProb
            } else {
                WeightMode::InverseSqrtProb
            };
            let exact_feasible = n.saturating_mul(d) <= EXACT_FEASIBLE_ENTRIES;

            // The leverage sampler needs the SVD anyway; reuse it for the
            // reference solve and certificate when feasible.
            let needs_svd = exact_feasible || kind == SketchKind::LeverageSample;
            let svd = if needs_svd {
                Some(thin_svd(problem.x())?)
            } else {
                None
            };
            let profile = match (kind, &svd) {
                (SketchKind::LeverageSample, Some(svd)) => Some(leverage_scores(svd)),
                _ => None,
            };

            let t_sketch = Instant::now();
            let op = draw_sketch(
                kind,
                n,
                c,
                profile.as_ref(),
                weights,
                SeededRng::new(args.seed, args.stream),
            )?;
            let sketch_ms = t_sketch.elapsed().as_secs_f64() * 1e3;
            if let Some(path) = &args.operator_out {
                let body = serde_json::to_string(&op)
                    .context("serializing operator")
                    .map_err(CmdError::Other)?;
                std::fs::write(path, body)
                    .with_context(|| format!("writing {}", path.display()))
                    .map_err(CmdError::Other)?;
            }

            let sol = solve_sketched(&problem, &op)?;
            let (exact_residual_sq, error_ratio, certificate) = match &svd {
                Some(svd) if exact_feasible => {
                    let exact = exact_lsr_with_svd(&problem, svd)?;
                    let cert = certify_with_exact(&problem, svd, &exact, &op, &sol)?;
                    (
                        Some(exact.residual_sq),
                        Some(error_ratio_given(
                            exact.residual_sq,
                            sol.residual_sq_full,
                            y_norm_sq,
                        )),
                        serde_json::to_value(&cert)
                            .context("serializing certificate")
                            .map_err(CmdError::Other)?,
                    )
                }
                _ => (None, None, Value::Null),
            };

            json!({
                "n": n,
                "d": d,
                "beta_tilde": sol.beta_tilde,
                "c_realized": sol.c_realized,
                "sketch_kind": sol.sketch_kind.to_string(),
                "rank_deficient": sol.rank_deficient,
                "error_ratio": error_ratio,
                "exact_residual_sq": exact_residual_sq,
                "residual_sq_full": sol.residual_sq_full,
                "residual_sq_sketched": sol.residual_sq_sketched,
                "certificate": certificate,
                "timings": {
                    "sketch_ms": sketch_ms,
                    "apply_ms": sol.apply_time.as_secs_f64() * 1e3,
                    "solve_ms": sol.solve_time.as_secs_f64() * 1e3,
                },
            })
        }
    };

    emit(
        &Envelope {
            tool_version: env!("CARGO_PKG_VERSION").to_string(),
            command: "solve".into(),
            config_echo,
            started_at,
            finished_at: now_rfc3339(),
            payload,
        },
        &args.out,
    )
}

fn cmd_experiment(args: &ExperimentArgs) -> CmdResult<()> {
    let started_at = now_rfc3339();
    let text = std::fs::read_to_string(&args.config)
        .with_context(|| format!("reading {}", args.config.display()))
        .map_err(CmdError::Other)?;
    let mut de = serde_json::Deserializer::from_str(&text);
    let config: ExperimentConfig = serde_path_to_error::deserialize(&mut de).map_err(|e| {
        let pointer = format!("/{}", e.path().to_string().replace('.', "/"));
        CmdError::Lib(sketchlsr::Error::Config {
            pointer,
            msg: e.inner().to_string(),
        })
    })?;

    let stats = run_experiment(&config)?;
    if let Some(path) = &args.csv {
        std::fs::write(path, stats_to_csv(&stats))
            .with_context(|| format!("writing {}", path.display()))
            .map_err(CmdError::Other)?;
    }
    let config_echo = serde_json::to_value(&config)
        .context("echoing config")
        .map_err(CmdError::Other)?;
    let payload = serde_json::to_value(&stats)
        .context("serializing stats")
        .map_err(CmdError::Other)?;
    emit(
        &Envelope {
            tool_version: env!("CARGO_PKG_VERSION").to_string(),
            command: "experiment".into(),
            config_echo,
            started_at,
            finished_at: now_rfc3339(),
            payload,
        },
        &args.out,
    )
}

fn require<T: Copy>(opt: Option<T>, flag: &str) -> CmdResult<T> {
    opt.ok_or_else(|| CmdError::Lib(sketchlsr::Error::Domain(format!("{flag} is required"))))
}

fn cmd_bounds(args: &BoundsArgs) -> CmdResult<()> {
    let started_at = now_rfc3339();
    let report: BoundReport = match args.calc {
        Calc::T1 => {
            let d = require(args.d, "--d")?;
            let eps = require(args.eps, "--eps")?;
            let c = theorem1_sample_size(d, eps, args.c_lnd)?;
            BoundReport {
                name: "leverage_sample_size".into(),
                value: c as f64,
                c_required: Some(c),
                failure_prob: Some(0.2),
                inputs: json!({ "d": d, "eps": eps, "c_lnd": args.c_lnd }),
            }
        }
        Calc::T2 => {
            let d = require(args.d, "--d")?;
            let mu = require(args.mu, "--mu")?;
            let has_tail_params = args.theta1.is_some()
                || args.theta2.is_some()
                || args.delta1.is_some()
                || args.delta2.is_some();
            let (name, c, inputs) = if has_tail_params {
                let theta1 = require(args.theta1, "--theta1")?;
                let theta2 = require(args.theta2, "--theta2")?;
                let delta1 = require(args.delta1, "--delta1")?;
                let delta2 = require(args.delta2, "--delta2")?;
                (
                    "uniform_sample_size_general",
                    uniform_sample_size(d, mu, theta1, theta2, delta1, delta2)?,
                    json!({
                        "d": d, "mu": mu, "theta1": theta1, "theta2": theta2,
                        "delta1": delta1, "delta2": delta2,
                    }),
                )
            } else {
                (
                    "uniform_sample_size",
                    theorem2_sample_size(d, mu)?,
                    json!({ "d": d, "mu": mu }),
                )
            };
            BoundReport {
                name: name.into(),
                value: c as f64,
                c_required: Some(c),
                failure_prob: Some(0.95),
                inputs,
            }
        }
        Calc::Chernoff => {
            let d = require(args.d, "--d")?;
            let theta = require(args.theta, "--theta")?;
            let xi = require(args.xi, "--xi")?;
            let r = require(args.r, "--r")?;
            let (side, params) = match args.side {
                Side::Min => (TailSide::Min, ChernoffParams::new(theta, 2.0, r, xi, xi, d)?),
                Side::Max => (TailSide::Max, ChernoffParams::new(0.5, theta, r, xi, xi, d)?),
            };
            let tail = chernoff_tail(&params, side);
            BoundReport {
                name: "matrix_chernoff_tail".into(),
                value: tail,
                c_required: None,
                failure_prob: Some(tail),
                inputs: json!({
                    "d": d, "theta": theta, "xi": xi, "r": r,
                    "side": if args.side == Side::Min { "min" } else { "max" },
                }),
            }
        }
        Calc::Boost => {
            let t = require(args.t, "--t")?;
            let p = boost_success(t);
            BoundReport {
                name: "boost_success_probability".into(),
                value: p,
                c_required: None,
                failure_prob: Some(1.0 - p),
                inputs: json!({ "t": t }),
            }
        }
        Calc::Matmul => {
            let x_fro = require(args.x_fro, "--x-fro")?;
            let c = require(args.c, "--c")?;
            let (variant, name) = match args.variant {
                Variant::Frobenius => (MatmulVariant::Frobenius, "matmul_frobenius_bound"),
                Variant::Spectral => (MatmulVariant::Spectral, "matmul_spectral_bound"),
            };
            let y_fro = args.y_fro.unwrap_or(0.0);
            let value = matmul_expected_bound(x_fro, y_fro, args.x_spec, c, variant, args.c_spec)?;
            BoundReport {
                name: name.into(),
                value,
                c_required: None,
                failure_prob: None,
                inputs: json!({
                    "x_fro": x_fro, "y_fro": y_fro, "x_spec": args.x_spec,
                    "c": c, "c_spec": args.c_spec,
                }),
            }
        }
        Calc::Beta => {
            let kappa = require(args.kappa, "--kappa")?;
            let gamma = require(args.gamma, "--gamma")?;
            let beta_norm = require(args.beta_norm, "--beta-norm")?;
            let factor = args.eps.unwrap_or(args.const_factor);
            let value = beta_error_bound(factor, kappa, gamma, beta_norm);
            BoundReport {
                name: "coefficient_error_bound".into(),
                value,
                c_required: None,
                failure_prob: None,
                inputs: json!({
                    "factor": factor, "kappa": kappa,
                    "gamma": gamma, "beta_norm": beta_norm,
                }),
            }
        }
    };

    let config_echo = report.inputs.clone();
    let payload = serde_json::to_value(&report)
        .context("serializing bound report")
        .map_err(CmdError::Other)?;
    emit(
        &Envelope {
            tool_version: env!("CARGO_PKG_VERSION").to_string(),
            command: "bounds".into(),
            config_echo,
            started_at,
            finished_at: now_rfc3339(),
            payload,
        },
        &args.out,
    )
}
