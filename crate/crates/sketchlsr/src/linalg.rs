//! Dense linear-algebra substrate: thin SVD, exact least squares, leverage
//! scores, coherence, the column-space mass fraction gamma, and condition
//! numbers. Everything here is a pure function of its inputs.

use crate::error::{Error, Result};
use crate::matrix::{norm2, norm2_sq, DenseMatrix};

/// Relative rank tolerance: X is full rank iff
/// sigma_min > RANK_TOL_FACTOR * max(n, d) * sigma_max.
pub const RANK_TOL_FACTOR: f64 = 1e-12;

/// An overdetermined least-squares instance: X is n x d with n >= d >= 1,
/// y has length n. Full column rank is enforced where a factorization is
/// actually consumed (see `assert_full_rank`).
#[derive(Clone, Debug)]
pub struct RegressionProblem {
    x: DenseMatrix,
    y: Vec<f64>,
}

impl RegressionProblem {
    pub fn new(x: DenseMatrix, y: Vec<f64>) -> Result<Self> {
        let (n, d) = (x.nrows(), x.ncols());
        if d < 1 || n < d {
            return Err(Error::Dimension(format!(
                "need n >= d >= 1, got n = {n}, d = {d}"
            )));
        }
        if y.len() != n {
            return Err(Error::Dimension(format!(
                "y has length {}, expected {n}",
                y.len()
            )));
        }
        if y.iter().any(|v| !v.is_finite()) {
            return Err(Error::Domain("y contains a non-finite entry".into()));
        }
        Ok(RegressionProblem { x, y })
    }

    pub fn x(&self) -> &DenseMatrix {
        &self.x
    }

    pub fn y(&self) -> &[f64] {
        &self.y
    }

    pub fn n(&self) -> usize {
        self.x.nrows()
    }

    pub fn d(&self) -> usize {
        self.x.ncols()
    }
}

/// Thin singular value decomposition X = U diag(sigma) V^T with U n x d
/// (orthonormal columns), sigma nonincreasing, V d x d orthogonal.
///
/// Sign convention: each U column has its largest-magnitude entry positive
/// (first such entry on ties), so factors are reproducible across runs.
#[derive(Clone, Debug)]
pub struct ThinSvd {
    pub u: DenseMatrix,
    pub sigma: Vec<f64>,
    pub v: DenseMatrix,
}

impl ThinSvd {
    pub fn n(&self) -> usize {
        self.u.nrows()
    }

    pub fn d(&self) -> usize {
        self.u.ncols()
    }

    pub fn sigma_max(&self) -> f64 {
        self.sigma[0]
    }

    pub fn sigma_min(&self) -> f64 {
        self.sigma[self.sigma.len() - 1]
    }

    /// Errors out unless sigma_min clears the relative rank tolerance.
    pub fn assert_full_rank(&self) -> Result<()> {
        let tol = RANK_TOL_FACTOR * self.n().max(self.d()) as f64;
        let smax = self.sigma_max();
        let ratio = if smax > 0.0 {
            self.sigma_min() / smax
        } else {
            0.0
        };
        if ratio <= tol {
            return Err(Error::RankDeficient { ratio, tol });
        }
        Ok(())
    }
}

/// Row leverage scores l_i = ||u_i||^2 plus the coherence mu = (n/d) max_i l_i.
#[derive(Clone, Debug)]
pub struct LeverageProfile {
    pub scores: Vec<f64>,
    pub d: usize,
    pub coherence_mu: f64,
}

impl LeverageProfile {
    pub fn n(&self) -> usize {
        self.scores.len()
    }
}

/// Solution of the exact problem: beta = argmin ||y - X beta||^2 and the
/// attained squared residual.
#[derive(Clone, Debug)]
pub struct ExactSolution {
    pub beta: Vec<f64>,
    pub residual_sq: f64,
}

fn svd_max_iterations(d: usize) -> usize {
    // Generous Golub-Kahan iteration budget; LAPACK uses ~30 per value.
    75 * d.max(4)
}

/// Thin SVD of X (n >= d). Singular values come back sorted nonincreasing
/// and the deterministic sign convention is applied.
pub fn thin_svd(x: &DenseMatrix) -> Result<ThinSvd> {
    let (n, d) = (x.nrows(), x.ncols());
    if d < 1 || n < d {
        return Err(Error::Dimension(format!(
            "thin_svd needs n >= d >= 1, got {n} x {d}"
        )));
    }
    let m = x.to_nalgebra();
    let svd = m
        .try_svd(true, true, f64::EPSILON, svd_max_iterations(d))
        .ok_or(Error::Factorization { rows: n, cols: d })?;
    let u_na = svd.u.expect("u requested");
    let vt_na = svd.v_t.expect("v_t requested");
    let sv = svd.singular_values;

    // Sort triples by descending singular value; ties keep original order.
    let mut order: Vec<usize> = (0..d).collect();
    order.sort_by(|&a, &b| sv[b].partial_cmp(&sv[a]).unwrap().then(a.cmp(&b)));

    let mut u = DenseMatrix::zeros(n, d);
    let mut v = DenseMatrix::zeros(d, d);
    let mut sigma = Vec::with_capacity(d);
    for (jj, &j) in order.iter().enumerate() {
        sigma.push(sv[j]);
        for i in 0..n {
            u.set(i, jj, u_na[(i, j)]);
        }
        for i in 0..d {
            v.set(i, jj, vt_na[(j, i)]);
        }
    }

    // Sign convention: largest-magnitude entry of each U column positive.
    for j in 0..d {
        let mut best_i = 0;
        let mut best = -1.0;
        for i in 0..n {
            let a = u.get(i, j).abs();
            if a > best {
                best = a;
                best_i = i;
            }
        }
        if u.get(best_i, j) < 0.0 {
            for i in 0..n {
                u.set(i, j, -u.get(i, j));
            }
            for i in 0..d {
                v.set(i, j, -v.get(i, j));
            }
        }
    }

    Ok(ThinSvd { u, sigma, v })
}

/// Exact least squares via an internally computed thin SVD.
pub fn exact_lsr(problem: &RegressionProblem) -> Result<ExactSolution> {
    let svd = thin_svd(problem.x())?;
    exact_lsr_with_svd(problem, &svd)
}

/// Exact least squares beta = V diag(1/sigma) U^T y from a precomputed SVD.
pub fn exact_lsr_with_svd(problem: &RegressionProblem, svd: &ThinSvd) -> Result<ExactSolution> {
    check_svd_matches(problem, svd)?;
    svd.assert_full_rank()?;
    let mut t = svd.u.tr_matvec(problem.y());
    for (ti, s) in t.iter_mut().zip(&svd.sigma) {
        *ti /= s;
    }
    let beta = svd.v.matvec(&t);
    let fitted = problem.x().matvec(&beta);
    let residual_sq = problem
        .y()
        .iter()
        .zip(&fitted)
        .map(|(yi, fi)| (yi - fi) * (yi - fi))
        .sum();
    Ok(ExactSolution { beta, residual_sq })
}

/// Leverage scores of the rows of X, read off the thin SVD.
pub fn leverage_scores(svd: &ThinSvd) -> LeverageProfile {
    let n = svd.n();
    let d = svd.d();
    let mut scores = Vec::with_capacity(n);
    let mut max_score: f64 = 0.0;
    for i in 0..n {
        let li = norm2_sq(svd.u.row(i));
        max_score = max_score.max(li);
        scores.push(li);
    }
    let coherence_mu = (n as f64 / d as f64) * max_score;
    LeverageProfile {
        scores,
        d,
        coherence_mu,
    }
}

/// Fraction of ||y|| lying in the column space of X: ||U U^T y|| / ||y||.
pub fn gamma(problem: &RegressionProblem, svd: &ThinSvd) -> Result<f64> {
    check_svd_matches(problem, svd)?;
    let y_norm = norm2(problem.y());
    if y_norm == 0.0 {
        return Err(Error::Domain(
            "gamma is undefined for a zero response vector".into(),
        ));
    }
    let coeffs = svd.u.tr_matvec(problem.y());
    let projected = svd.u.matvec(&coeffs);
    Ok(norm2(&projected) / y_norm)
}

/// Condition number sigma_max / sigma_min; errors on rank deficiency.
pub fn condition_number(svd: &ThinSvd) -> Result<f64> {
    svd.assert_full_rank()?;
    Ok(svd.sigma_max() / svd.sigma_min())
}

/// y - U (U^T y): the component of y orthogonal to the column space of X,
/// which also equals y - X beta_lsr.
pub fn orthogonal_residual(problem: &RegressionProblem, svd: &ThinSvd) -> Result<Vec<f64>> {
    check_svd_matches(problem, svd)?;
    let coeffs = svd.u.tr_matvec(problem.y());
    let projected = svd.u.matvec(&coeffs);
    Ok(problem
        .y()
        .iter()
        .zip(&projected)
        .map(|(yi, pi)| yi - pi)
        .collect())
}

fn check_svd_matches(problem: &RegressionProblem, svd: &ThinSvd) -> Result<()> {
    if svd.n() != problem.n() || svd.d() != problem.d() {
        return Err(Error::Dimension(format!(
            "SVD shape {} x {} does not match problem {} x {}",
            svd.n(),
            svd.d(),
            problem.n(),
            problem.d()
        )));
    }
    Ok(())
}
