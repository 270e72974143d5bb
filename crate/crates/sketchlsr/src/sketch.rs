//! Realized random sketch operators S in R^{c x n}: leverage-score row
//! sampling, uniform row sampling without replacement, the subsampled
//! randomized Hadamard transform, and sparse embeddings. Operators are
//! stored in structured form and applied without materializing S, except
//! through the dense oracle `to_dense` used by tests.

use crate::error::{Error, Result};
use crate::linalg::LeverageProfile;
use crate::matrix::DenseMatrix;
use crate::rng::SeededRng;
use rand::Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use std::collections::HashMap;

/// Redraw budget for an empty leverage sample before giving up. The empty
/// event has probability prod(1 - p_i), astronomically small at any useful c.
pub const MAX_EMPTY_RETRIES: usize = 16;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum SketchKind {
    #[serde(rename = "leverage")]
    LeverageSample,
    #[serde(rename = "uniform")]
    UniformSample,
    #[serde(rename = "srht")]
    Srht,
    #[serde(rename = "sparse")]
    SparseEmbedding,
}

impl std::fmt::Display for SketchKind {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        let s = match self {
            SketchKind::LeverageSample => "leverage",
            SketchKind::UniformSample => "uniform",
            SketchKind::Srht => "srht",
            SketchKind::SparseEmbedding => "sparse",
        };
        f.write_str(s)
    }
}

/// Row weighting for leverage sampling. `InverseSqrtProb` (the default)
/// scales selected rows by p_i^{-1/2} so that E[S^T S] = I_n, which is what
/// the expected matrix-multiplication error bound requires. `InverseProb`
/// is the literal diagonal D = diag(1/p_i) reading and is kept behind a
/// flag for comparison; it biases S^T S by an extra 1/p_i factor.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
pub enum WeightMode {
    #[default]
    #[serde(rename = "inverse_sqrt_prob")]
    InverseSqrtProb,
    #[serde(rename = "inverse_prob")]
    InverseProb,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct LeverageRow {
    pub index: usize,
    pub weight: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind")]
pub enum SketchPayload {
    #[serde(rename = "leverage")]
    LeverageSample {
        rows: Vec<LeverageRow>,
        probs: Vec<f64>,
    },
    #[serde(rename = "uniform")]
    UniformSample { rows: Vec<usize> },
    #[serde(rename = "srht")]
    Srht {
        n2: usize,
        signs: Vec<i8>,
        rows: Vec<usize>,
        scale: f64,
    },
    #[serde(rename = "sparse")]
    SparseEmbedding { buckets: Vec<usize>, signs: Vec<i8> },
}

/// A realized sketching operator acting on n-row matrices and vectors.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SketchOperator {
    pub n: usize,
    pub c_target: usize,
    pub payload: SketchPayload,
}

impl SketchOperator {
    pub fn kind(&self) -> SketchKind {
        match self.payload {
            SketchPayload::LeverageSample { .. } => SketchKind::LeverageSample,
            SketchPayload::UniformSample { .. } => SketchKind::UniformSample,
            SketchPayload::Srht { .. } => SketchKind::Srht,
            SketchPayload::SparseEmbedding { .. } => SketchKind::SparseEmbedding,
        }
    }

    /// Number of rows the realized operator produces. Random for leverage
    /// sampling, c_target for every other kind.
    pub fn c_realized(&self) -> usize {
        match &self.payload {
            SketchPayload::LeverageSample { rows, .. } => rows.len(),
            SketchPayload::UniformSample { rows } => rows.len(),
            SketchPayload::Srht { rows, .. } => rows.len(),
            SketchPayload::SparseEmbedding { .. } => self.c_target,
        }
    }

    /// S * M without materializing S.
    pub fn apply(&self, m: &DenseMatrix) -> Result<DenseMatrix> {
        if m.nrows() != self.n {
            return Err(Error::Dimension(format!(
                "operator expects {} rows, matrix has {}",
                self.n,
                m.nrows()
            )));
        }
        let out = apply_to_buffer(self, m.data(), m.ncols());
        DenseMatrix::new(self.c_realized(), m.ncols(), out)
    }

    /// S * x for a length-n vector.
    pub fn apply_vec(&self, x: &[f64]) -> Result<Vec<f64>> {
        if x.len() != self.n {
            return Err(Error::Dimension(format!(
                "operator expects length {}, vector has {}",
                self.n,
                x.len()
            )));
        }
        Ok(apply_to_buffer(self, x, 1))
    }

    /// Dense oracle: materializes S as a c x n matrix. Test/debug use only;
    /// quadratic in memory by design.
    pub fn to_dense(&self) -> DenseMatrix {
        let c = self.c_realized();
        let mut s = DenseMatrix::zeros(c, self.n);
        match &self.payload {
            SketchPayload::LeverageSample { rows, .. } => {
                for (r, lr) in rows.iter().enumerate() {
                    s.set(r, lr.index, lr.weight);
                }
            }
            SketchPayload::UniformSample { rows } => {
                for (r, &idx) in rows.iter().enumerate() {
                    s.set(r, idx, 1.0);
                }
            }
            SketchPayload::Srht {
                n2,
                signs,
                rows,
                scale,
            } => {
                let norm = 1.0 / (*n2 as f64).sqrt();
                for (r, &hrow) in rows.iter().enumerate() {
                    for j in 0..self.n {
                        let parity = (hrow & j).count_ones() & 1;
                        let h = if parity == 0 { norm } else { -norm };
                        s.set(r, j, scale * h * f64::from(signs[j]));
                    }
                }
            }
            SketchPayload::SparseEmbedding { buckets, signs } => {
                for j in 0..self.n {
                    s.set(buckets[j], j, f64::from(signs[j]));
                }
            }
        }
        s
    }
}

/// Row-major kernel shared by matrix and vector application.
fn apply_to_buffer(op: &SketchOperator, data: &[f64], k: usize) -> Vec<f64> {
    match &op.payload {
        SketchPayload::LeverageSample { rows, .. } => {
            let mut out = Vec::with_capacity(rows.len() * k);
            for lr in rows {
                let src = &data[lr.index * k..(lr.index + 1) * k];
                out.extend(src.iter().map(|v| v * lr.weight));
            }
            out
        }
        SketchPayload::UniformSample { rows } => {
            let mut out = Vec::with_capacity(rows.len() * k);
            for &idx in rows {
                out.extend_from_slice(&data[idx * k..(idx + 1) * k]);
            }
            out
        }
        SketchPayload::Srht {
            n2,
            signs,
            rows,
            scale,
        } => srht_apply_with_block(op.n, *n2, signs, rows, *scale, data, k, srht_block_size(*n2, k)),
        SketchPayload::SparseEmbedding { buckets, signs } => {
            let mut out = vec![0.0; op.c_target * k];
            for i in 0..op.n {
                let sign = f64::from(signs[i]);
                let dst = &mut out[buckets[i] * k..(buckets[i] + 1) * k];
                for (d, &v) in dst.iter_mut().zip(&data[i * k..(i + 1) * k]) {
                    *d += sign * v;
                }
            }
            out
        }
    }
}

/// Largest power-of-two block that keeps a row block of k columns within
/// ~1 MiB, so stage one of the split transform stays cache resident.
fn srht_block_size(n2: usize, k: usize) -> usize {
    let mut b = 1usize;
    while b < n2 && 2 * b * k * 8 <= 1 << 20 {
        b *= 2;
    }
    b
}

/// S * M for the SRHT using the Kronecker split H_{n2} = H_{n2/b} x H_b.
/// Blocks of b input rows are sign-flipped, zero-padded, and transformed
/// one at a time in a cache-resident scratch buffer; each transformed
/// block's contribution is accumulated straight into the c selected output
/// rows via out[(q, s)] += (-1)^{popcount(q & p)} Z_p[s]. The input is read
/// exactly once and no n2-sized buffer is ever materialized. Block groups
/// are combined in a fixed order, so results are bitwise identical
/// regardless of how many threads process them.
#[allow(clippy::too_many_arguments)]
pub fn srht_apply_with_block(
    n: usize,
    n2: usize,
    signs: &[i8],
    rows: &[usize],
    scale: f64,
    data: &[f64],
    k: usize,
    block: usize,
) -> Vec<f64> {
    let b = block.min(n2);
    let a = n2 / b;
    let c = rows.len();
    let out_norm = scale / (n2 as f64).sqrt();
    let qs: Vec<(usize, usize)> = rows.iter().map(|&r| (r / b, r % b)).collect();

    // Group count is a pure function of the problem shape, never of the
    // thread pool, to keep the accumulation order fixed.
    let groups = if a >= 2 && n2 * k >= 1 << 19 {
        a.min(8)
    } else {
        1
    };

    let process_group = |g: usize| -> Vec<f64> {
        let mut partial = vec![0.0; c * k];
        let mut scratch = vec![0.0; b * k];
        for p in (g * a / groups)..((g + 1) * a / groups) {
            let row0 = p * b;
            let filled = n.saturating_sub(row0).min(b);
            for i in 0..filled {
                let sign = f64::from(signs[row0 + i]);
                let src = &data[(row0 + i) * k..(row0 + i + 1) * k];
                let dst = &mut scratch[i * k..(i + 1) * k];
                for (d, &v) in dst.iter_mut().zip(src) {
                    *d = sign * v;
                }
            }
            for v in scratch[filled * k..].iter_mut() {
                *v = 0.0;
            }
            fwht_rows_raw(&mut scratch, b, k);
            for (ri, &(q, s)) in qs.iter().enumerate() {
                let src = &scratch[s * k..s * k + k];
                let dst = &mut partial[ri * k..ri * k + k];
                if (q & p).count_ones() & 1 == 0 {
                    for (d, &v) in dst.iter_mut().zip(src) {
                        *d += v;
                    }
                } else {
                    for (d, &v) in dst.iter_mut().zip(src) {
                        *d -= v;
                    }
                }
            }
        }
        partial
    };

    let partials: Vec<Vec<f64>> = if groups > 1 {
        (0..groups).into_par_iter().map(process_group).collect()
    } else {
        vec![process_group(0)]
    };
    let mut out = vec![0.0; c * k];
    for partial in &partials {
        for (o, &v) in out.iter_mut().zip(partial) {
            *o += v;
        }
    }
    for v in out.iter_mut() {
        *v *= out_norm;
    }
    out
}

/// Sampling probabilities p_i = min(1, c l_i / d) for leverage sampling.
pub fn leverage_probabilities(profile: &LeverageProfile, c: usize) -> Result<Vec<f64>> {
    if c < 1 {
        return Err(Error::Domain("sketch size c must be >= 1".into()));
    }
    let d = profile.d as f64;
    Ok(profile
        .scores
        .iter()
        .map(|&l| (c as f64 * l / d).min(1.0))
        .collect())
}

/// Independent Bernoulli row selection with the given probabilities; each
/// selected row i carries the configured weight (1/sqrt(p_i) by default).
/// Redraws up to MAX_EMPTY_RETRIES times if no row is selected.
pub fn draw_leverage_sketch(
    p: &[f64],
    rng: SeededRng,
    weights: WeightMode,
) -> Result<SketchOperator> {
    if p.is_empty() {
        return Err(Error::Domain("empty probability vector".into()));
    }
    if p.iter().any(|&pi| !(0.0..=1.0).contains(&pi)) {
        return Err(Error::Domain(
            "leverage probabilities must lie in [0, 1]".into(),
        ));
    }
    let mut gen = rng.to_rng();
    for _ in 0..=MAX_EMPTY_RETRIES {
        let mut rows = Vec::new();
        for (i, &pi) in p.iter().enumerate() {
            if pi == 0.0 {
                continue;
            }
            if gen.gen::<f64>() < pi {
                let weight = match weights {
                    WeightMode::InverseSqrtProb => 1.0 / pi.sqrt(),
                    WeightMode::InverseProb => 1.0 / pi,
                };
                rows.push(LeverageRow { index: i, weight });
            }
        }
        if !rows.is_empty() {
            return Ok(SketchOperator {
                n: p.len(),
                c_target: p.iter().sum::<f64>().round() as usize,
                payload: SketchPayload::LeverageSample {
                    rows,
                    probs: p.to_vec(),
                },
            });
        }
    }
    Err(Error::Sampling(format!(
        "leverage sample came back empty after {MAX_EMPTY_RETRIES} redraws"
    )))
}

/// c distinct indices drawn uniformly over all c-subsets of [n], via a
/// partial Fisher-Yates shuffle over a sparse index map (O(c) memory).
fn sample_without_replacement(
    n: usize,
    c: usize,
    gen: &mut impl Rng,
) -> Vec<usize> {
    let mut remap: HashMap<usize, usize> = HashMap::new();
    let mut picked = Vec::with_capacity(c);
    for i in 0..c {
        let j = gen.gen_range(i..n);
        let vj = *remap.get(&j).unwrap_or(&j);
        let vi = *remap.get(&i).unwrap_or(&i);
        picked.push(vj);
        remap.insert(j, vi);
    }
    picked.sort_unstable();
    picked
}

/// Unweighted uniform row selection without replacement. The selection is
/// deliberately unscaled: the argmin of the sketched problem is invariant
/// to any uniform positive row scaling.
pub fn draw_uniform_sketch(n: usize, c: usize, rng: SeededRng) -> Result<SketchOperator> {
    if c < 1 || c > n {
        return Err(Error::Domain(format!(
            "uniform sampling needs 1 <= c <= n, got c = {c}, n = {n}"
        )));
    }
    let mut gen = rng.to_rng();
    let rows = sample_without_replacement(n, c, &mut gen);
    Ok(SketchOperator {
        n,
        c_target: c,
        payload: SketchPayload::UniformSample { rows },
    })
}

/// Normalized Walsh-Hadamard transform of a power-of-two-length vector,
/// O(n log n) and orthogonal: ||fwht(x)|| = ||x||.
pub fn fwht(x: &[f64]) -> Result<Vec<f64>> {
    if !x.len().is_power_of_two() {
        return Err(Error::Domain(format!(
            "fwht needs a power-of-two length, got {}",
            x.len()
        )));
    }
    let mut out = x.to_vec();
    fwht_rows(&mut out, x.len(), 1);
    Ok(out)
}

/// In-place unnormalized Walsh-Hadamard butterflies applied down the rows
/// of a row-major n2 x k buffer (each column transformed independently).
/// At level h, pairing rows (i, i+h) within a 2h-row block is the same as
/// butterflying the block's two contiguous halves elementwise, which keeps
/// every memory access sequential and vectorizable.
pub(crate) fn fwht_rows_raw(buf: &mut [f64], n2: usize, k: usize) {
    debug_assert!(n2.is_power_of_two());
    debug_assert_eq!(buf.len(), n2 * k);
    let mut half = k;
    while half < n2 * k {
        for block in buf.chunks_exact_mut(2 * half) {
            let (a, b) = block.split_at_mut(half);
            for (x, y) in a.iter_mut().zip(b.iter_mut()) {
                let (s, t) = (*x + *y, *x - *y);
                *x = s;
                *y = t;
            }
        }
        half *= 2;
    }
}

/// Normalized (orthogonal) variant of `fwht_rows_raw`.
pub(crate) fn fwht_rows(buf: &mut [f64], n2: usize, k: usize) {
    fwht_rows_raw(buf, n2, k);
    let norm = 1.0 / (n2 as f64).sqrt();
    for v in buf.iter_mut() {
        *v *= norm;
    }
}

/// SRHT operator sqrt(n2/c) R H D, where n2 is n padded to the next power
/// of two, D holds n2 random signs, H is the normalized Walsh-Hadamard
/// matrix, and R keeps c distinct rows chosen uniformly without
/// replacement. Input rows beyond n are treated as zero padding.
pub fn draw_srht(n: usize, c: usize, rng: SeededRng) -> Result<SketchOperator> {
    if c < 1 || c > n {
        return Err(Error::Domain(format!(
            "SRHT needs 1 <= c <= n, got c = {c}, n = {n}"
        )));
    }
    let n2 = n.next_power_of_two();
    let mut gen = rng.to_rng();
    let signs: Vec<i8> = (0..n2).map(|_| if gen.gen::<bool>() { 1 } else { -1 }).collect();
    let rows = sample_without_replacement(n2, c, &mut gen);
    let scale = (n2 as f64 / c as f64).sqrt();
    Ok(SketchOperator {
        n,
        c_target: c,
        payload: SketchPayload::Srht {
            n2,
            signs,
            rows,
            scale,
        },
    })
}

/// Sparse embedding S = Phi D: every input coordinate lands in exactly one
/// of c buckets with a random sign, so application is linear in the input.
pub fn draw_sparse_embedding(n: usize, c: usize, rng: SeededRng) -> Result<SketchOperator> {
    if c < 1 {
        return Err(Error::Domain("sparse embedding needs c >= 1".into()));
    }
    if n < 1 {
        return Err(Error::Domain("sparse embedding needs n >= 1".into()));
    }
    let mut gen = rng.to_rng();
    let buckets: Vec<usize> = (0..n).map(|_| gen.gen_range(0..c)).collect();
    let signs: Vec<i8> = (0..n).map(|_| if gen.gen::<bool>() { 1 } else { -1 }).collect();
    Ok(SketchOperator {
        n,
        c_target: c,
        payload: SketchPayload::SparseEmbedding { buckets, signs },
    })
}

/// Draws an operator of the given kind. Leverage sampling needs the
/// problem's leverage profile to form its probabilities.
pub fn draw_sketch(
    kind: SketchKind,
    n: usize,
    c: usize,
    profile: Option<&LeverageProfile>,
    weights: WeightMode,
    rng: SeededRng,
) -> Result<SketchOperator> {
    match kind {
        SketchKind::LeverageSample => {
            let profile = profile.ok_or_else(|| {
                Error::Domain("leverage sampling requires a leverage profile".into())
            })?;
            if profile.n() != n {
                return Err(Error::Dimension(format!(
                    "profile has n = {}, expected {n}",
                    profile.n()
                )));
            }
            let p = leverage_probabilities(profile, c)?;
            draw_leverage_sketch(&p, rng, weights)
        }
        SketchKind::UniformSample => draw_uniform_sketch(n, c, rng),
        SketchKind::Srht => draw_srht(n, c, rng),
        SketchKind::SparseEmbedding => draw_sparse_embedding(n, c, rng),
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::linalg::{leverage_scores, thin_svd};
    use crate::matrix::{norm2, norm2_sq};
    use rand_distr::StandardNormal;

    fn random_matrix(n: usize, d: usize, seed: u64) -> DenseMatrix {
        let mut rng = SeededRng::new(seed, 0).to_rng();
        DenseMatrix::from_fn(n, d, |_, _| rng.sample(StandardNormal))
    }

    fn profile_of(n: usize, d: usize, seed: u64) -> LeverageProfile {
        leverage_scores(&thin_svd(&random_matrix(n, d, seed)).unwrap())
    }

    #[test]
    fn probabilities_hand_example() {
        let prof = LeverageProfile {
            scores: vec![1.0, 0.5, 0.5],
            d: 2,
            coherence_mu: 1.5,
        };
        let p = leverage_probabilities(&prof, 3).unwrap();
        assert_eq!(p, vec![1.0, 0.75, 0.75]);
    }

    #[test]
    fn probabilities_saturate_and_zero() {
        let prof = LeverageProfile {
            scores: vec![0.5, 0.5, 0.5, 0.5],
            d: 2,
            coherence_mu: 1.0,
        };
        let p = leverage_probabilities(&prof, 4).unwrap();
        assert!(p.iter().all(|&pi| pi == 1.0));

        let prof0 = LeverageProfile {
            scores: vec![1.0, 1.0, 0.0],
            d: 2,
            coherence_mu: 1.5,
        };
        let p0 = leverage_probabilities(&prof0, 2).unwrap();
        assert_eq!(p0[2], 0.0);
    }

    #[test]
    fn saturated_probabilities_select_everything_with_unit_weight() {
        let p = vec![1.0; 7];
        let op = draw_leverage_sketch(&p, SeededRng::new(1, 0), WeightMode::InverseSqrtProb).unwrap();
        assert_eq!(op.c_realized(), 7);
        let m = random_matrix(7, 3, 2);
        let sm = op.apply(&m).unwrap();
        assert_eq!(sm, m);
    }

    #[test]
    fn leverage_sample_size_matches_binomial_mean() {
        let p: Vec<f64> = (0..50).map(|i| 0.1 + 0.015 * i as f64).collect();
        let expected: f64 = p.iter().sum();
        let var: f64 = p.iter().map(|pi| pi * (1.0 - pi)).sum();
        let draws = 10_000;
        let mut total = 0usize;
        for t in 0..draws {
            let op =
                draw_leverage_sketch(&p, SeededRng::new(99, t), WeightMode::InverseSqrtProb).unwrap();
            total += op.c_realized();
        }
        let mean = total as f64 / draws as f64;
        let se = (var / draws as f64).sqrt();
        assert!(
            (mean - expected).abs() <= 3.0 * se,
            "mean {mean} vs expected {expected} (se {se})"
        );
    }

    #[test]
    fn leverage_seeded_replay_golden() {
        // Golden value recorded at first implementation: seed 42, stream 0,
        // p = (1, 0.5) selects row 0 only.
        let op = draw_leverage_sketch(&[1.0, 0.5], SeededRng::new(42, 0), WeightMode::InverseSqrtProb)
            .unwrap();
        let indices: Vec<usize> = match &op.payload {
            SketchPayload::LeverageSample { rows, .. } => rows.iter().map(|r| r.index).collect(),
            _ => unreachable!(),
        };
        assert_eq!(indices, vec![0]);
        let op2 = draw_leverage_sketch(&[1.0, 0.5], SeededRng::new(42, 0), WeightMode::InverseSqrtProb)
            .unwrap();
        assert_eq!(op, op2);
    }

    #[test]
    fn literal_weight_mode_uses_inverse_probability() {
        let p = vec![1.0, 0.25];
        for trial in 0.. {
            let op = draw_leverage_sketch(&p, SeededRng::new(3, trial), WeightMode::InverseProb).unwrap();
            if let SketchPayload::LeverageSample { rows, .. } = &op.payload {
                if let Some(r) = rows.iter().find(|r| r.index == 1) {
                    assert_eq!(r.weight, 4.0);
                    break;
                }
            }
        }
    }

    #[test]
    fn uniform_full_sample_is_identity() {
        let op = draw_uniform_sketch(6, 6, SeededRng::new(5, 0)).unwrap();
        let m = random_matrix(6, 2, 8);
        assert_eq!(op.apply(&m).unwrap(), m);
    }

    #[test]
    fn uniform_marginals() {
        let draws = 10_000;
        let mut counts = [0usize; 3];
        for t in 0..draws {
            let op = draw_uniform_sketch(3, 1, SeededRng::new(17, t)).unwrap();
            if let SketchPayload::UniformSample { rows } = &op.payload {
                counts[rows[0]] += 1;
            }
        }
        let se = (draws as f64 * (1.0 / 3.0) * (2.0 / 3.0)).sqrt();
        for &c in &counts {
            assert!(
                (c as f64 - draws as f64 / 3.0).abs() <= 3.0 * se,
                "counts {counts:?}"
            );
        }
    }

    #[test]
    fn uniform_indices_distinct_and_sorted() {
        for t in 0..50 {
            let op = draw_uniform_sketch(37, 11, SeededRng::new(23, t)).unwrap();
            if let SketchPayload::UniformSample { rows } = &op.payload {
                assert!(rows.windows(2).all(|w| w[0] < w[1]));
                assert!(rows.iter().all(|&r| r < 37));
            }
        }
        assert!(draw_uniform_sketch(4, 5, SeededRng::new(1, 0)).is_err());
    }

    #[test]
    fn fwht_two_point() {
        let out = fwht(&[1.0, 1.0]).unwrap();
        assert!((out[0] - std::f64::consts::SQRT_2).abs() < 1e-15);
        assert!(out[1].abs() < 1e-15);
    }

    #[test]
    fn fwht_impulse() {
        let out = fwht(&[1.0, 0.0, 0.0, 0.0]).unwrap();
        for v in out {
            assert!((v - 0.5).abs() < 1e-15);
        }
    }

    #[test]
    fn fwht_preserves_norm() {
        let mut rng = SeededRng::new(31, 0).to_rng();
        let x: Vec<f64> = (0..256).map(|_| rng.sample::<f64, _>(StandardNormal)).collect();
        let out = fwht(&x).unwrap();
        assert!((norm2(&out) - norm2(&x)).abs() <= 1e-12 * norm2(&x));
        assert!(fwht(&[1.0, 2.0, 3.0]).is_err());
    }

    #[test]
    fn srht_full_transform_is_orthogonal() {
        let n = 16;
        let op = draw_srht(n, n, SeededRng::new(41, 0)).unwrap();
        let mut rng = SeededRng::new(42, 0).to_rng();
        let x: Vec<f64> = (0..n).map(|_| rng.sample::<f64, _>(StandardNormal)).collect();
        let sx = op.apply_vec(&x).unwrap();
        assert!((norm2(&sx) - norm2(&x)).abs() <= 1e-12 * norm2(&x));
    }

    #[test]
    fn srht_isometry_in_expectation() {
        let n = 24;
        let mut rng = SeededRng::new(51, 0).to_rng();
        let x: Vec<f64> = (0..n).map(|_| rng.sample::<f64, _>(StandardNormal)).collect();
        let x_sq = norm2_sq(&x);
        let draws = 10_000;
        let mut vals = Vec::with_capacity(draws);
        for t in 0..draws {
            let op = draw_srht(n, 8, SeededRng::new(52, t as u64)).unwrap();
            vals.push(norm2_sq(&op.apply_vec(&x).unwrap()));
        }
        let mean: f64 = vals.iter().sum::<f64>() / draws as f64;
        let var: f64 =
            vals.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / (draws as f64 - 1.0);
        let se = (var / draws as f64).sqrt();
        assert!(
            (mean - x_sq).abs() <= 3.0 * se,
            "mean {mean} vs {x_sq} (se {se})"
        );
    }

    #[test]
    fn srht_zero_padding_is_inert() {
        // n = 3 pads to n2 = 4; the padded coordinate never contributes.
        let n = 3;
        let m = random_matrix(n, 2, 61);
        let op = draw_srht(n, 2, SeededRng::new(62, 0)).unwrap();
        let structured = op.apply(&m).unwrap();

        // Dense S restricted to the real columns gives the same product.
        let dense = op.to_dense();
        let restricted = dense.matmul(&m);
        for i in 0..structured.nrows() {
            for j in 0..structured.ncols() {
                assert!((structured.get(i, j) - restricted.get(i, j)).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn srht_split_transform_matches_plain_path() {
        for (n, k, c) in [(48usize, 2usize, 5usize), (300, 3, 17), (1000, 1, 40)] {
            let m = random_matrix(n, k, n as u64 + 1000);
            let op = draw_srht(n, c, SeededRng::new(63, n as u64)).unwrap();
            if let SketchPayload::Srht {
                n2,
                signs,
                rows,
                scale,
            } = &op.payload
            {
                let plain = srht_apply_with_block(n, *n2, signs, rows, *scale, m.data(), k, *n2);
                for block in [2usize, 8, 64] {
                    if block >= *n2 {
                        continue;
                    }
                    let split = srht_apply_with_block(n, *n2, signs, rows, *scale, m.data(), k, block);
                    let err: f64 = plain
                        .iter()
                        .zip(&split)
                        .map(|(x, y)| (x - y) * (x - y))
                        .sum::<f64>()
                        .sqrt();
                    let scale_ref = plain.iter().map(|v| v * v).sum::<f64>().sqrt();
                    assert!(
                        err <= 1e-12 * scale_ref.max(1e-30),
                        "n={n} k={k} block={block}: err {err}"
                    );
                }
            }
        }
    }

    #[test]
    fn sparse_embedding_structure() {
        let op = draw_sparse_embedding(40, 7, SeededRng::new(71, 0)).unwrap();
        let dense = op.to_dense();
        for j in 0..40 {
            let col: Vec<f64> = (0..7).map(|i| dense.get(i, j)).collect();
            let nz: Vec<f64> = col.into_iter().filter(|v| *v != 0.0).collect();
            assert_eq!(nz.len(), 1);
            assert_eq!(nz[0].abs(), 1.0);
        }
    }

    #[test]
    fn sparse_embedding_isometry_in_expectation() {
        let n = 30;
        let mut rng = SeededRng::new(81, 0).to_rng();
        let x: Vec<f64> = (0..n).map(|_| rng.sample::<f64, _>(StandardNormal)).collect();
        let x_sq = norm2_sq(&x);
        let draws = 10_000;
        let mut vals = Vec::with_capacity(draws);
        for t in 0..draws {
            let op = draw_sparse_embedding(n, 5, SeededRng::new(82, t as u64)).unwrap();
            vals.push(norm2_sq(&op.apply_vec(&x).unwrap()));
        }
        let mean: f64 = vals.iter().sum::<f64>() / draws as f64;
        let var: f64 =
            vals.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / (draws as f64 - 1.0);
        let se = (var / draws as f64).sqrt();
        assert!(
            (mean - x_sq).abs() <= 3.0 * se,
            "mean {mean} vs {x_sq} (se {se})"
        );
    }

    #[test]
    fn sparse_embedding_single_bucket_is_signed_sum() {
        let n = 9;
        let op = draw_sparse_embedding(n, 1, SeededRng::new(91, 0)).unwrap();
        let x: Vec<f64> = (1..=n).map(|v| v as f64).collect();
        let sx = op.apply_vec(&x).unwrap();
        assert_eq!(sx.len(), 1);
        if let SketchPayload::SparseEmbedding { signs, .. } = &op.payload {
            let expected: f64 = x.iter().zip(signs).map(|(v, s)| v * f64::from(*s)).sum();
            assert!((sx[0] - expected).abs() < 1e-12);
        }
    }

    #[test]
    fn structured_apply_matches_dense_oracle() {
        let n = 32;
        let m = random_matrix(n, 3, 100);
        let prof = profile_of(n, 3, 101);
        let p = leverage_probabilities(&prof, 10).unwrap();
        let ops = vec![
            draw_leverage_sketch(&p, SeededRng::new(1, 1), WeightMode::InverseSqrtProb).unwrap(),
            draw_uniform_sketch(n, 9, SeededRng::new(1, 2)).unwrap(),
            draw_srht(n, 9, SeededRng::new(1, 3)).unwrap(),
            draw_sparse_embedding(n, 9, SeededRng::new(1, 4)).unwrap(),
        ];
        for op in ops {
            let fast = op.apply(&m).unwrap();
            let slow = op.to_dense().matmul(&m);
            let scale = slow.frobenius_norm().max(1e-30);
            let mut diff = 0.0f64;
            for i in 0..fast.nrows() {
                for j in 0..fast.ncols() {
                    diff += (fast.get(i, j) - slow.get(i, j)).powi(2);
                }
            }
            assert!(
                diff.sqrt() <= 1e-10 * scale,
                "kind {:?} disagrees with dense oracle",
                op.kind()
            );
        }
    }

    #[test]
    fn leverage_gram_is_unbiased() {
        // E[(SM)^T (SM)] = M^T M for the default weights.
        let n = 12;
        let m = random_matrix(n, 2, 110);
        let target = m.gram();
        let prof = profile_of(n, 2, 111);
        let p = leverage_probabilities(&prof, 6).unwrap();
        let draws = 20_000;
        let mut acc = DenseMatrix::zeros(2, 2);
        let mut sq = DenseMatrix::zeros(2, 2);
        for t in 0..draws {
            let op = draw_leverage_sketch(&p, SeededRng::new(112, t), WeightMode::InverseSqrtProb)
                .unwrap();
            let g = op.apply(&m).unwrap().gram();
            for i in 0..2 {
                for j in 0..2 {
                    acc.set(i, j, acc.get(i, j) + g.get(i, j));
                    sq.set(i, j, sq.get(i, j) + g.get(i, j) * g.get(i, j));
                }
            }
        }
        for i in 0..2 {
            for j in 0..2 {
                let mean = acc.get(i, j) / draws as f64;
                let var = sq.get(i, j) / draws as f64 - mean * mean;
                let se = (var / draws as f64).sqrt().max(1e-12);
                assert!(
                    (mean - target.get(i, j)).abs() <= 5.0 * se,
                    "entry ({i},{j}): mean {mean} target {} se {se}",
                    target.get(i, j)
                );
            }
        }
    }

    #[test]
    fn uniform_gram_scales_by_c_over_n() {
        let n = 10;
        let c = 4;
        let m = random_matrix(n, 2, 120);
        let target = m.gram();
        let draws = 20_000;
        let mut acc = DenseMatrix::zeros(2, 2);
        let mut sq = DenseMatrix::zeros(2, 2);
        for t in 0..draws {
            let op = draw_uniform_sketch(n, c, SeededRng::new(121, t)).unwrap();
            let g = op.apply(&m).unwrap().gram();
            for i in 0..2 {
                for j in 0..2 {
                    acc.set(i, j, acc.get(i, j) + g.get(i, j));
                    sq.set(i, j, sq.get(i, j) + g.get(i, j) * g.get(i, j));
                }
            }
        }
        let frac = c as f64 / n as f64;
        for i in 0..2 {
            for j in 0..2 {
                let mean = acc.get(i, j) / draws as f64;
                let var = sq.get(i, j) / draws as f64 - mean * mean;
                let se = (var / draws as f64).sqrt().max(1e-12);
                assert!(
                    (mean - frac * target.get(i, j)).abs() <= 5.0 * se,
                    "entry ({i},{j})"
                );
            }
        }
    }

    #[test]
    fn operators_are_bit_identical_for_equal_seeds() {
        let prof = profile_of(20, 3, 130);
        let p = leverage_probabilities(&prof, 8).unwrap();
        let r = SeededRng::new(7, 13);
        assert_eq!(
            draw_leverage_sketch(&p, r, WeightMode::InverseSqrtProb).unwrap(),
            draw_leverage_sketch(&p, r, WeightMode::InverseSqrtProb).unwrap()
        );
        assert_eq!(
            draw_uniform_sketch(20, 8, r).unwrap(),
            draw_uniform_sketch(20, 8, r).unwrap()
        );
        assert_eq!(draw_srht(20, 8, r).unwrap(), draw_srht(20, 8, r).unwrap());
        assert_eq!(
            draw_sparse_embedding(20, 8, r).unwrap(),
            draw_sparse_embedding(20, 8, r).unwrap()
        );
    }

    #[test]
    fn operator_json_roundtrip() {
        let op = draw_srht(10, 4, SeededRng::new(140, 0)).unwrap();
        let json = serde_json::to_string(&op).unwrap();
        let back: SketchOperator = serde_json::from_str(&json).unwrap();
        assert_eq!(op, back);
    }
}
