//! Sketch-and-solve: minimize ||S y - S X beta|| on the reduced system,
//! compare against the exact solution, and certify each realized sketch
//! through the deterministic error chain relating the excess residual to
//! ||U z||^2 with U z = X (beta_lsr - beta_tilde).

use crate::error::{Error, Result};
use crate::linalg::{
    exact_lsr_with_svd, leverage_scores, orthogonal_residual, thin_svd, ExactSolution,
    LeverageProfile, RegressionProblem, ThinSvd, RANK_TOL_FACTOR,
};
use crate::matrix::{norm2, norm2_sq};
use crate::rng::SeededRng;
use crate::sketch::{draw_sketch, SketchKind, SketchOperator, WeightMode};
use serde::{Deserialize, Serialize};
use std::time::{Duration, Instant};

/// Result of solving the sketched problem, evaluated on both the reduced
/// and the full system.
#[derive(Clone, Debug)]
pub struct SketchedSolution {
    pub beta_tilde: Vec<f64>,
    pub c_realized: usize,
    pub sketch_kind: SketchKind,
    pub residual_sq_full: f64,
    pub residual_sq_sketched: f64,
    pub rank_deficient: bool,
    pub wall_time: Duration,
    pub apply_time: Duration,
    pub solve_time: Duration,
}

/// Every quantity of the deterministic error chain for one realized sketch.
/// z is the d-vector with U z = X (beta_lsr - beta_tilde); the cross term is
/// ||U^T S^T S (y - X beta_lsr)||, evaluated as ||(SU)^T (S r)|| so no n x n
/// intermediate is ever formed.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct CertificateReport {
    pub sigma_min_su: f64,
    pub sigma_max_su: f64,
    pub cross_term: f64,
    pub z_norm: f64,
    pub uz_norm_sq: f64,
    pub equality_gap: f64,
    pub z_bound: f64,
    pub beta_gap_sq: f64,
}

/// How to draw one sketch: kind, target size, and leverage weight mode.
#[derive(Clone, Copy, Debug, Serialize, Deserialize)]
pub struct SketchPlan {
    pub kind: SketchKind,
    pub c: usize,
    #[serde(default)]
    pub weights: WeightMode,
}

/// Outcome of best-of-t boosting: the solution with the smallest full
/// residual plus every trial's error ratio (infinite for failed trials).
#[derive(Clone, Debug)]
pub struct BestOfT {
    pub best: SketchedSolution,
    pub best_index: usize,
    pub ratios: Vec<f64>,
}

/// Solves min ||S y - S X beta|| on the realized c x d system via QR,
/// falling back to an SVD minimum-norm solution when S X is rank deficient
/// under the shared rank tolerance.
pub fn solve_sketched(
    problem: &RegressionProblem,
    op: &SketchOperator,
) -> Result<SketchedSolution> {
    if op.n != problem.n() {
        return Err(Error::Dimension(format!(
            "operator acts on {} rows, problem has {}",
            op.n,
            problem.n()
        )));
    }
    let start = Instant::now();
    let sx = op.apply(problem.x())?;
    let sy = op.apply_vec(problem.y())?;
    let apply_time = start.elapsed();

    let c = sx.nrows();
    let d = sx.ncols();
    if c == 0 {
        return Err(Error::Sampling("realized sketch has zero rows".into()));
    }

    let solve_start = Instant::now();
    let sx_na = sx.to_nalgebra();
    let sy_na = nalgebra::DVector::from_column_slice(&sy);

    let mut rank_deficient = false;
    let beta_na = if c >= d {
        let qr = sx_na.clone().qr();
        let r = qr.r();
        let max_diag = (0..d).map(|i| r[(i, i)].abs()).fold(0.0f64, f64::max);
        let tol = RANK_TOL_FACTOR * c.max(d) as f64 * max_diag;
        let full_rank = (0..d).all(|i| r[(i, i)].abs() > tol) && max_diag > 0.0;
        if full_rank {
            let mut qtb = sy_na.clone();
            qr.q_tr_mul(&mut qtb);
            let rhs = qtb.rows(0, d).into_owned();
            match r.solve_upper_triangular(&rhs) {
                Some(sol) => Some(sol),
                None => None,
            }
        } else {
            None
        }
    } else {
        None
    };

    let beta_na = match beta_na {
        Some(b) => b,
        None => {
            // Minimum-norm solution through the SVD pseudo-inverse.
            rank_deficient = true;
            let svd = sx_na
                .try_svd(true, true, f64::EPSILON, 75 * d.max(4))
                .ok_or(Error::Factorization { rows: c, cols: d })?;
            let smax = svd.singular_values.iter().cloned().fold(0.0f64, f64::max);
            let tol = RANK_TOL_FACTOR * c.max(d) as f64 * smax;
            svd.solve(&sy_na, tol)
                .map_err(|_| Error::Factorization { rows: c, cols: d })?
        }
    };
    let solve_time = solve_start.elapsed();

    let beta_tilde: Vec<f64> = beta_na.iter().cloned().collect();
    let fitted_sketched = sx.matvec(&beta_tilde);
    let residual_sq_sketched = sy
        .iter()
        .zip(&fitted_sketched)
        .map(|(a, b)| (a - b) * (a - b))
        .sum();
    let fitted_full = problem.x().matvec(&beta_tilde);
    let residual_sq_full = problem
        .y()
        .iter()
        .zip(&fitted_full)
        .map(|(a, b)| (a - b) * (a - b))
        .sum();

    Ok(SketchedSolution {
        beta_tilde,
        c_realized: c,
        sketch_kind: op.kind(),
        residual_sq_full,
        residual_sq_sketched,
        rank_deficient,
        wall_time: start.elapsed(),
        apply_time,
        solve_time,
    })
}

/// Residual ratio against the exact optimum with the 0/0 convention: both
/// residuals at or below 1e-12 ||y||^2 count as an exact recovery.
pub fn error_ratio_given(
    exact_residual_sq: f64,
    sketched_residual_sq: f64,
    y_norm_sq: f64,
) -> f64 {
    let tol = 1e-12 * y_norm_sq;
    if exact_residual_sq <= tol {
        if sketched_residual_sq <= tol {
            return 1.0;
        }
        return f64::INFINITY;
    }
    sketched_residual_sq / exact_residual_sq
}

/// ||y - X beta_tilde||^2 / ||y - X beta_lsr||^2, computing the exact
/// solution internally.
pub fn error_ratio(problem: &RegressionProblem, solution: &SketchedSolution) -> Result<f64> {
    let svd = thin_svd(problem.x())?;
    let exact = exact_lsr_with_svd(problem, &svd)?;
    Ok(error_ratio_given(
        exact.residual_sq,
        solution.residual_sq_full,
        norm2_sq(problem.y()),
    ))
}

/// Fills the deterministic error-chain report for one realized sketch.
pub fn certify(
    problem: &RegressionProblem,
    svd: &ThinSvd,
    op: &SketchOperator,
    solution: &SketchedSolution,
) -> Result<CertificateReport> {
    let exact = exact_lsr_with_svd(problem, svd)?;
    certify_with_exact(problem, svd, &exact, op, solution)
}

/// `certify` with the exact solution precomputed; used by the Monte Carlo
/// harness to avoid re-solving per trial.
pub fn certify_with_exact(
    problem: &RegressionProblem,
    svd: &ThinSvd,
    exact: &ExactSolution,
    op: &SketchOperator,
    solution: &SketchedSolution,
) -> Result<CertificateReport> {
    let d = svd.d();
    let su = op.apply(&svd.u)?;
    let c = su.nrows();

    let (sigma_min_su, sigma_max_su) = {
        let svals = su
            .to_nalgebra()
            .try_svd(false, false, f64::EPSILON, 75 * d.max(4))
            .ok_or(Error::Factorization { rows: c, cols: d })?
            .singular_values;
        let smax = svals.iter().cloned().fold(0.0f64, f64::max);
        // A c x d operator with c < d is rank deficient as a map on R^d.
        let smin = if c < d {
            0.0
        } else {
            svals.iter().cloned().fold(f64::INFINITY, f64::min)
        };
        (smin, smax)
    };

    let r = orthogonal_residual(problem, svd)?;
    let sr = op.apply_vec(&r)?;
    let cross_term = norm2(&su.tr_matvec(&sr));

    // z = Sigma V^T (beta_lsr - beta_tilde), since U^T X = Sigma V^T.
    let dbeta: Vec<f64> = exact
        .beta
        .iter()
        .zip(&solution.beta_tilde)
        .map(|(a, b)| a - b)
        .collect();
    let mut z = vec![0.0; d];
    for (j, zj) in z.iter_mut().enumerate() {
        let mut acc = 0.0;
        for (i, &db) in dbeta.iter().enumerate() {
            acc += svd.v.get(i, j) * db;
        }
        *zj = svd.sigma[j] * acc;
    }
    let z_norm = norm2(&z);
    let uz = svd.u.matvec(&z);
    let uz_norm_sq = norm2_sq(&uz);

    let equality_gap =
        (solution.residual_sq_full - exact.residual_sq - uz_norm_sq).abs();
    let z_bound = if sigma_min_su > 0.0 {
        cross_term / (sigma_min_su * sigma_min_su)
    } else {
        f64::INFINITY
    };
    let beta_gap_sq = norm2_sq(&dbeta);

    Ok(CertificateReport {
        sigma_min_su,
        sigma_max_su,
        cross_term,
        z_norm,
        uz_norm_sq,
        equality_gap,
        z_bound,
        beta_gap_sq,
    })
}

/// Runs t independent sketch-solve trials on consecutive rng streams and
/// keeps the solution with the smallest full residual. Evaluating the full
/// residual costs O(nd) per trial. Errors only surface if every trial fails.
pub fn best_of_t(
    problem: &RegressionProblem,
    plan: &SketchPlan,
    t: usize,
    rng: SeededRng,
) -> Result<BestOfT> {
    if t < 1 {
        return Err(Error::Domain("best_of_t needs t >= 1".into()));
    }
    let svd = thin_svd(problem.x())?;
    let exact = exact_lsr_with_svd(problem, &svd)?;
    let profile: Option<LeverageProfile> = match plan.kind {
        SketchKind::LeverageSample => Some(leverage_scores(&svd)),
        _ => None,
    };
    let y_norm_sq = norm2_sq(problem.y());

    let mut ratios = Vec::with_capacity(t);
    let mut best: Option<(usize, SketchedSolution)> = None;
    let mut first_err: Option<Error> = None;
    for i in 0..t {
        let trial_rng = rng.offset_stream(i as u64);
        let attempt = draw_sketch(
            plan.kind,
            problem.n(),
            plan.c,
            profile.as_ref(),
            plan.weights,
            trial_rng,
        )
        .and_then(|op| solve_sketched(problem, &op));
        match attempt {
            Ok(sol) => {
                ratios.push(error_ratio_given(
                    exact.residual_sq,
                    sol.residual_sq_full,
                    y_norm_sq,
                ));
                let better = match &best {
                    None => true,
                    Some((_, b)) => sol.residual_sq_full < b.residual_sq_full,
                };
                if better {
                    best = Some((i, sol));
                }
            }
            Err(e) => {
                ratios.push(f64::INFINITY);
                if first_err.is_none() {
                    first_err = Some(e);
                }
            }
        }
    }
    match best {
        Some((best_index, best)) => Ok(BestOfT {
            best,
            best_index,
            ratios,
        }),
        None => Err(first_err.unwrap_or_else(|| Error::Sampling("no successful trial".into()))),
    }
}
