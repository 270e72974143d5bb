//! Seeded Monte Carlo harness: generate regression problems with controlled
//! coherence, condition number, and column-space mass fraction, sweep sketch
//! sizes, and aggregate success statistics. Identical configurations produce
//! identical statistics regardless of thread count: every trial draws from
//! its own (master_seed, packed stream) generator and aggregation is
//! index-ordered.

use crate::error::{Error, Result};
use crate::linalg::{
    exact_lsr_with_svd, leverage_scores, thin_svd, LeverageProfile, RegressionProblem,
};
use crate::matrix::{norm2, norm2_sq, DenseMatrix};
use crate::rng::SeededRng;
use crate::sketch::{draw_sketch, SketchKind, WeightMode};
use crate::solver::{certify_with_exact, error_ratio_given, solve_sketched};
use rand::Rng;
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

/// Hard per-trial tolerance on the certificate equality gap, relative to
/// ||y||^2. A violation is a correctness bug, not sampling noise, and
/// aborts the whole experiment with the offending seed.
pub const CERTIFICATE_GAP_REL_TOL: f64 = 1e-8;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "profile", rename_all = "snake_case")]
pub enum CoherenceProfile {
    /// Orthonormalized Gaussian basis; coherence stays O(1).
    Incoherent,
    /// k rows of the basis pinned to distinct standard basis directions,
    /// forcing coherence n/d on those rows.
    Spiked { k: usize },
    /// The basis is exactly e_1..e_d stacked over zeros; coherence n/d.
    OneHot,
}

#[derive(Clone, Copy, Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ProblemSpec {
    pub n: usize,
    pub d: usize,
    pub coherence_profile: CoherenceProfile,
    pub kappa_target: f64,
    pub gamma_target: f64,
    pub seed: u64,
}

/// Ground-truth metadata recorded at generation time.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct ProblemMetadata {
    pub mu: f64,
    pub gamma: f64,
    pub kappa: f64,
    pub beta_star: Vec<f64>,
    pub orthogonal_noise_norm: f64,
}

#[derive(Clone, Copy, Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SamplerConfig {
    pub kind: SketchKind,
    #[serde(default)]
    pub literal_alg1_weights: bool,
}

impl SamplerConfig {
    pub fn weight_mode(&self) -> WeightMode {
        if self.literal_alg1_weights {
            WeightMode::InverseProb
        } else {
            WeightMode::InverseSqrtProb
        }
    }
}

#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub problem: ProblemSpec,
    pub sampler: SamplerConfig,
    pub c_grid: Vec<usize>,
    pub trials: usize,
    pub eps: f64,
    pub success_threshold: f64,
    pub master_seed: u64,
}

/// Per-sketch-size aggregate.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct CellStats {
    pub c: usize,
    pub trials: usize,
    pub success_count: usize,
    pub rate: f64,
    pub wilson_low: f64,
    pub wilson_high: f64,
    pub ratio_p50: f64,
    pub ratio_p90: f64,
    pub ratio_p99: f64,
    pub ratio_max: f64,
    pub mean_c_realized: f64,
    pub mean_wall_time_ms: f64,
    /// Per-trial ratios in trial order; kept so runs can be diffed and
    /// extended without re-running earlier trials.
    pub ratios: Vec<f64>,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct TrialStats {
    pub problem_mu: f64,
    pub problem_gamma: f64,
    pub problem_kappa: f64,
    pub exact_residual_sq: f64,
    pub per_c: Vec<CellStats>,
}

fn validate_spec(spec: &ProblemSpec, prefix: &str) -> Result<()> {
    let fail = |field: &str, msg: String| -> Result<()> {
        Err(Error::Config {
            pointer: format!("{prefix}/{field}"),
            msg,
        })
    };
    if spec.d < 1 || spec.n < spec.d {
        return fail("n", format!("need n >= d >= 1, got n = {}, d = {}", spec.n, spec.d));
    }
    if let CoherenceProfile::Spiked { k } = spec.coherence_profile {
        if k > spec.d {
            return fail("coherence_profile/k", format!("spiked k = {k} exceeds d = {}", spec.d));
        }
    }
    if !(spec.kappa_target >= 1.0) || !spec.kappa_target.is_finite() {
        return fail("kappa_target", format!("must be >= 1, got {}", spec.kappa_target));
    }
    if spec.d == 1 && spec.kappa_target != 1.0 {
        return fail("kappa_target", "d = 1 admits only kappa = 1".into());
    }
    if !(spec.gamma_target > 0.0 && spec.gamma_target <= 1.0) {
        return fail("gamma_target", format!("must be in (0, 1], got {}", spec.gamma_target));
    }
    Ok(())
}

impl ExperimentConfig {
    pub fn validate(&self) -> Result<()> {
        validate_spec(&self.problem, "/problem")?;
        if self.trials < 1 {
            return Err(Error::Config {
                pointer: "/trials".into(),
                msg: "need at least one trial".into(),
            });
        }
        if self.c_grid.is_empty() {
            return Err(Error::Config {
                pointer: "/c_grid".into(),
                msg: "c_grid must be nonempty".into(),
            });
        }
        for (i, &c) in self.c_grid.iter().enumerate() {
            if c < 1 {
                return Err(Error::Config {
                    pointer: format!("/c_grid/{i}"),
                    msg: "sketch sizes must be >= 1".into(),
                });
            }
            let without_replacement = matches!(
                self.sampler.kind,
                SketchKind::UniformSample | SketchKind::Srht
            );
            if without_replacement && c > self.problem.n {
                return Err(Error::Config {
                    pointer: format!("/c_grid/{i}"),
                    msg: format!(
                        "c = {c} exceeds n = {} for a without-replacement sampler",
                        self.problem.n
                    ),
                });
            }
        }
        if !(self.eps > 0.0) || !self.eps.is_finite() {
            return Err(Error::Config {
                pointer: "/eps".into(),
                msg: format!("eps must be positive, got {}", self.eps),
            });
        }
        if !(self.success_threshold >= 1.0) || !self.success_threshold.is_finite() {
            return Err(Error::Config {
                pointer: "/success_threshold".into(),
                msg: format!("must be >= 1, got {}", self.success_threshold),
            });
        }
        Ok(())
    }
}

fn gaussian_vec(rng: &mut ChaCha8Rng, len: usize) -> Vec<f64> {
    (0..len).map(|_| rng.sample::<f64, _>(StandardNormal)).collect()
}

/// Orthonormalizes a Gaussian n x d draw via QR with a deterministic sign
/// fix (positive R diagonal).
fn orthonormal_gaussian(rng: &mut ChaCha8Rng, n: usize, d: usize) -> DenseMatrix {
    let g = nalgebra::DMatrix::from_fn(n, d, |_, _| rng.sample::<f64, _>(StandardNormal));
    let qr = g.qr();
    let r = qr.r();
    let mut q = qr.q();
    for j in 0..d {
        if r[(j, j)] < 0.0 {
            for i in 0..n {
                q[(i, j)] = -q[(i, j)];
            }
        }
    }
    DenseMatrix::from_nalgebra(&q)
}

fn basis_for_profile(
    rng: &mut ChaCha8Rng,
    n: usize,
    d: usize,
    profile: CoherenceProfile,
) -> DenseMatrix {
    match profile {
        CoherenceProfile::Incoherent => orthonormal_gaussian(rng, n, d),
        CoherenceProfile::OneHot => {
            let mut u = DenseMatrix::zeros(n, d);
            for j in 0..d {
                u.set(j, j, 1.0);
            }
            u
        }
        CoherenceProfile::Spiked { k } => {
            let mut u = DenseMatrix::zeros(n, d);
            for j in 0..k {
                u.set(j, j, 1.0);
            }
            if d > k {
                let tail = orthonormal_gaussian(rng, n - k, d - k);
                for i in 0..(n - k) {
                    for j in 0..(d - k) {
                        u.set(k + i, k + j, tail.get(i, j));
                    }
                }
            }
            u
        }
    }
}

/// Builds X = U diag(sigma) V^T with U shaped by the coherence profile,
/// log-spaced singular values hitting kappa_target, a random rotation V,
/// and y = X beta_star + w with w placed exactly in the orthogonal
/// complement and scaled so the achieved gamma equals gamma_target.
pub fn generate_problem(
    spec: &ProblemSpec,
    rng: SeededRng,
) -> Result<(RegressionProblem, ProblemMetadata)> {
    validate_spec(spec, "/problem")?;
    let (n, d) = (spec.n, spec.d);
    let mut gen = rng.to_rng();

    let u = basis_for_profile(&mut gen, n, d, spec.coherence_profile);
    let sigma: Vec<f64> = if d == 1 {
        vec![1.0]
    } else {
        (0..d)
            .map(|i| spec.kappa_target.powf(-(i as f64) / (d as f64 - 1.0)))
            .collect()
    };
    let v = orthonormal_gaussian(&mut gen, d, d);

    // X row i = (U_i .* sigma) V^T.
    let mut x = DenseMatrix::zeros(n, d);
    let mut scaled = vec![0.0; d];
    for i in 0..n {
        for (j, s) in scaled.iter_mut().enumerate() {
            *s = u.get(i, j) * sigma[j];
        }
        let row = x.row_mut(i);
        for (jj, r) in row.iter_mut().enumerate() {
            let mut acc = 0.0;
            for (j, s) in scaled.iter().enumerate() {
                acc += s * v.get(jj, j);
            }
            *r = acc;
        }
    }

    let beta_star = gaussian_vec(&mut gen, d);
    let u_part = x.matvec(&beta_star);
    let signal = norm2(&u_part);
    if signal == 0.0 {
        return Err(Error::Domain("degenerate draw: X beta_star vanished".into()));
    }

    let (y, noise_norm) = if spec.gamma_target == 1.0 {
        (u_part, 0.0)
    } else {
        // Project a Gaussian onto the orthogonal complement of range(X).
        let mut w = Vec::new();
        for _ in 0..4 {
            let g = gaussian_vec(&mut gen, n);
            let coeffs = u.tr_matvec(&g);
            let proj = u.matvec(&coeffs);
            let cand: Vec<f64> = g.iter().zip(&proj).map(|(a, b)| a - b).collect();
            if norm2(&cand) > 1e-8 * norm2(&g) {
                w = cand;
                break;
            }
        }
        if w.is_empty() {
            return Err(Error::Domain(
                "could not draw an orthogonal noise direction".into(),
            ));
        }
        let target = signal * (1.0 / (spec.gamma_target * spec.gamma_target) - 1.0).sqrt();
        let scale = target / norm2(&w);
        let y: Vec<f64> = u_part
            .iter()
            .zip(&w)
            .map(|(s, wi)| s + wi * scale)
            .collect();
        (y, target)
    };

    let mut max_l: f64 = 0.0;
    for i in 0..n {
        max_l = max_l.max(norm2_sq(u.row(i)));
    }
    let mu = (n as f64 / d as f64) * max_l;
    let gamma = signal / signal.hypot(noise_norm);
    let kappa = sigma[0] / sigma[d - 1];

    let problem = RegressionProblem::new(x, y)?;
    Ok((
        problem,
        ProblemMetadata {
            mu,
            gamma,
            kappa,
            beta_star,
            orthogonal_noise_norm: noise_norm,
        },
    ))
}

/// Stream id for (grid cell, trial): parallel-safe and replayable.
pub fn trial_stream(c_index: usize, trial: usize) -> u64 {
    ((c_index as u64) << 32) | trial as u64
}

struct TrialOutcome {
    ratio: f64,
    c_realized: usize,
    wall_ms: f64,
}

/// Runs the configured sweep. Each trial draws a sketch, solves, verifies
/// the certificate equality, and scores success as ratio <= threshold.
pub fn run_experiment(config: &ExperimentConfig) -> Result<TrialStats> {
    config.validate()?;
    let (problem, meta) = generate_problem(
        &config.problem,
        SeededRng::new(config.problem.seed, 0),
    )?;
    let svd = thin_svd(problem.x())?;
    let exact = exact_lsr_with_svd(&problem, &svd)?;
    let profile: Option<LeverageProfile> = match config.sampler.kind {
        SketchKind::LeverageSample => Some(leverage_scores(&svd)),
        _ => None,
    };
    let y_norm_sq = norm2_sq(problem.y());
    let gap_tol = CERTIFICATE_GAP_REL_TOL * y_norm_sq;
    let weight_mode = config.sampler.weight_mode();

    let mut per_c = Vec::with_capacity(config.c_grid.len());
    for (ci, &c) in config.c_grid.iter().enumerate() {
        let outcomes: Vec<TrialOutcome> = (0..config.trials)
            .into_par_iter()
            .map(|trial| -> Result<TrialOutcome> {
                let stream = trial_stream(ci, trial);
                let rng = SeededRng::new(config.master_seed, stream);
                let op = draw_sketch(
                    config.sampler.kind,
                    problem.n(),
                    c,
                    profile.as_ref(),
                    weight_mode,
                    rng,
                )?;
                let sol = solve_sketched(&problem, &op)?;
                let cert = certify_with_exact(&problem, &svd, &exact, &op, &sol)?;
                if cert.equality_gap > gap_tol {
                    return Err(Error::Certificate {
                        seed: config.master_seed,
                        stream,
                        gap: cert.equality_gap,
                        tol: gap_tol,
                    });
                }
                Ok(TrialOutcome {
                    ratio: error_ratio_given(exact.residual_sq, sol.residual_sq_full, y_norm_sq),
                    c_realized: sol.c_realized,
                    wall_ms: sol.wall_time.as_secs_f64() * 1e3,
                })
            })
            .collect::<Result<Vec<_>>>()?;

        let ratios: Vec<f64> = outcomes.iter().map(|o| o.ratio).collect();
        let success_count = ratios
            .iter()
            .filter(|&&r| r <= config.success_threshold)
            .count();
        let (rate, wilson_low, wilson_high) =
            wilson_interval(success_count, config.trials, 0.95);
        let mut sorted = ratios.clone();
        sorted.sort_by(f64::total_cmp);
        let q = |p: f64| -> f64 {
            let idx = ((p * sorted.len() as f64).ceil() as usize).max(1) - 1;
            sorted[idx.min(sorted.len() - 1)]
        };
        per_c.push(CellStats {
            c,
            trials: config.trials,
            success_count,
            rate,
            wilson_low,
            wilson_high,
            ratio_p50: q(0.50),
            ratio_p90: q(0.90),
            ratio_p99: q(0.99),
            ratio_max: sorted[sorted.len() - 1],
            mean_c_realized: outcomes.iter().map(|o| o.c_realized as f64).sum::<f64>()
                / config.trials as f64,
            mean_wall_time_ms: outcomes.iter().map(|o| o.wall_ms).sum::<f64>()
                / config.trials as f64,
            ratios,
        });
    }

    Ok(TrialStats {
        problem_mu: meta.mu,
        problem_gamma: meta.gamma,
        problem_kappa: meta.kappa,
        exact_residual_sq: exact.residual_sq,
        per_c,
    })
}

/// Wilson score interval for a binomial proportion at the given confidence.
pub fn wilson_interval(successes: usize, trials: usize, confidence: f64) -> (f64, f64, f64) {
    assert!(trials > 0, "wilson interval needs trials > 0");
    // z for two-sided 95%; generalized via the inverse error function would
    // drag in a special-function dependency for one constant.
    let z = match confidence {
        c if (c - 0.95).abs() < 1e-12 => 1.959963984540054,
        c if (c - 0.99).abs() < 1e-12 => 2.5758293035489004,
        _ => 1.959963984540054,
    };
    let n = trials as f64;
    let p_hat = successes as f64 / n;
    let z2 = z * z;
    let denom = 1.0 + z2 / n;
    let center = (p_hat + z2 / (2.0 * n)) / denom;
    let half = z * (p_hat * (1.0 - p_hat) / n + z2 / (4.0 * n * n)).sqrt() / denom;
    (p_hat, (center - half).max(0.0), (center + half).min(1.0))
}

/// Success rate and 95% Wilson interval for one grid cell.
pub fn estimate_success_rate(stats: &TrialStats, c: usize) -> Result<(f64, (f64, f64))> {
    let cell = stats
        .per_c
        .iter()
        .find(|cell| cell.c == c)
        .ok_or_else(|| Error::Domain(format!("c = {c} is not in the experiment grid")))?;
    Ok((cell.rate, (cell.wilson_low, cell.wilson_high)))
}

/// Plot-ready CSV, one row per sketch size. Times are in seconds. The
/// column set and order are fixed.
pub fn stats_to_csv(stats: &TrialStats) -> String {
    let mut out = String::from("c,rate,ci_low,ci_high,p50,p90,p99,max,mean_wall_time\n");
    for cell in &stats.per_c {
        out.push_str(&format!(
            "{},{},{},{},{},{},{},{},{}\n",
            cell.c,
            cell.rate,
            cell.wilson_low,
            cell.wilson_high,
            cell.ratio_p50,
            cell.ratio_p90,
            cell.ratio_p99,
            cell.ratio_max,
            cell.mean_wall_time_ms / 1e3,
        ));
    }
    out
}
