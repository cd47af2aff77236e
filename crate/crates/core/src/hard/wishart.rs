//! Wishart and GOE ensembles and the inverse-trace experiments built on them.

use nalgebra::{DMatrix, DVector};
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::error::{invalid, Result};
use crate::linalg::{cholesky_lower, gaussian_matrix, gaussian_vector, orthonormal_basis, sym_eigenvalues};
use crate::oracle::MatVecOracle;
use crate::rng::{par_trials, LabRng, RngStream};
use crate::stats::wilson_interval;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Normalization {
    /// Entries of `X` are `N(0, 1/rows)`, so `E tr W = cols`.
    UnitOverD,
    /// Entries of `X` are standard normal.
    Standard,
}

/// `W = X Xᵀ` with `X` of shape `rows × cols`.
pub fn sample_wishart(rows: usize, cols: usize, norm: Normalization, rng: &mut LabRng) -> DMatrix<f64> {
    let mut x = gaussian_matrix(rows, cols, rng);
    if norm == Normalization::UnitOverD {
        x /= (rows as f64).sqrt();
    }
    &x * x.transpose()
}

/// Symmetric matrix with `N(0,1)` diagonal and `N(0,½)` off-diagonal entries.
pub fn sample_goe(k: usize, rng: &mut LabRng) -> DMatrix<f64> {
    let mut g = DMatrix::zeros(k, k);
    for i in 0..k {
        g[(i, i)] = StandardNormal.sample(rng);
        for j in 0..i {
            let v: f64 = StandardNormal.sample(rng);
            let v = v * std::f64::consts::FRAC_1_SQRT_2;
            g[(i, j)] = v;
            g[(j, i)] = v;
        }
    }
    g
}

/// `N I + √(2N) G` with `G ~ GOE(K)`.
pub fn sample_goe_surrogate(k: usize, n: usize, rng: &mut LabRng) -> DMatrix<f64> {
    let nn = n as f64;
    sample_goe(k, rng) * (2.0 * nn).sqrt() + DMatrix::identity(k, k) * nn
}

#[derive(Debug, Clone, Serialize)]
pub struct TailRow {
    pub x: f64,
    pub hits: usize,
    pub trials: usize,
    pub p: f64,
    pub lo: f64,
    pub hi: f64,
    /// `p / √x`.
    pub ratio: f64,
}

/// Monte-Carlo `Pr{λ_min(W) ≤ x/d²}` for `W ~ Wishart(d)` (unit-over-d).
pub fn smallest_eig_tail(d: usize, xs: &[f64], trials: usize, stream: &RngStream) -> Result<Vec<TailRow>> {
    if d < 2 {
        return invalid("tail experiment needs d >= 2");
    }
    if xs.iter().any(|&x| !(x > 0.0 && x <= 1.0)) {
        return invalid("x grid must lie in (0, 1]");
    }
    if trials == 0 {
        return Ok(Vec::new());
    }
    let mins = par_trials(stream, trials, |_, rng| sym_eigenvalues(&sample_wishart(d, d, Normalization::UnitOverD, rng))[0]);
    let d2 = (d * d) as f64;
    Ok(xs
        .iter()
        .map(|&x| {
            let hits = mins.iter().filter(|&&m| m <= x / d2).count();
            let (lo, hi) = wilson_interval(hits, trials, 1.96);
            let p = hits as f64 / trials as f64;
            TailRow { x, hits, trials, p, lo, hi, ratio: p / x.sqrt() }
        })
        .collect())
}

/// `m⁻¹ Σ ‖Z_i‖²`.
pub fn inverse_trace_estimator(samples: &[DVector<f64>]) -> Result<f64> {
    if samples.is_empty() {
        return invalid("estimator needs at least one sample");
    }
    Ok(samples.iter().map(|z| z.norm_squared()).sum::<f64>() / samples.len() as f64)
}

#[derive(Debug, Clone, Serialize)]
pub struct VarianceCheck {
    pub samples: usize,
    pub sample_var: f64,
    /// `2‖Σ‖²_HS`.
    pub theory: f64,
    pub std_err: f64,
    pub z: f64,
}

/// Sample variance of `‖Z‖²` for `Z ~ N(0, Σ)` against `2‖Σ‖²_HS`.
pub fn sq_norm_variance(sigma: &DMatrix<f64>, samples: usize, stream: &RngStream) -> Result<VarianceCheck> {
    if samples < 2 {
        return invalid("need at least two samples");
    }
    let l = cholesky_lower(sigma, 0.0)?;
    let d = sigma.nrows();
    let vals = par_trials(stream, samples, |_, rng| (&l * gaussian_vector(d, rng)).norm_squared());
    let n = samples as f64;
    let mean = vals.iter().sum::<f64>() / n;
    let m2 = vals.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / n;
    let m4 = vals.iter().map(|v| (v - mean).powi(4)).sum::<f64>() / n;
    let sample_var = m2 * n / (n - 1.0);
    let theory = 2.0 * sigma.norm_squared();
    let std_err = ((m4 - m2 * m2) / n).sqrt();
    Ok(VarianceCheck { samples, sample_var, theory, std_err, z: (sample_var - theory) / std_err })
}

/// Assembles `[[Y₁Y₁ᵀ, Y₁Y₂ᵀ], [Y₂Y₁ᵀ, Y₂Y₂ᵀ + W̃]]`.
pub fn posterior_block(y1: &DMatrix<f64>, y2: &DMatrix<f64>, w: &DMatrix<f64>) -> DMatrix<f64> {
    let n = y1.nrows();
    let m = y2.nrows();
    let mut b = DMatrix::zeros(n + m, n + m);
    b.view_mut((0, 0), (n, n)).copy_from(&(y1 * y1.transpose()));
    let off = y2 * y1.transpose();
    b.view_mut((n, 0), (m, n)).copy_from(&off);
    b.view_mut((0, n), (n, m)).copy_from(&off.transpose());
    b.view_mut((n, n), (m, m)).copy_from(&(y2 * y2.transpose() + w));
    b
}

#[derive(Debug, Clone, Serialize)]
pub struct MinorizationReport {
    pub trials: usize,
    pub violations: usize,
    /// Largest `λ_min(block) − λ_min(W̃)` seen.
    pub worst_excess: f64,
}

/// `λ_min(block) ≤ λ_min(W̃) + 1e-10` with `W̃ ~ Wishart(d − n)` and Gaussian `Y₁, Y₂`.
pub fn posterior_minorization_check(n: usize, d: usize, trials: usize, stream: &RngStream) -> Result<MinorizationReport> {
    if !(n < d && d <= 12) {
        return invalid("minorization check needs n < d <= 12");
    }
    let excess = par_trials(stream, trials, |_, rng| {
        let y1 = gaussian_matrix(n, n, rng);
        let y2 = gaussian_matrix(d - n, n, rng);
        let w = sample_wishart(d - n, d - n, Normalization::UnitOverD, rng);
        sym_eigenvalues(&posterior_block(&y1, &y2, &w))[0] - sym_eigenvalues(&w)[0]
    });
    Ok(MinorizationReport {
        trials,
        violations: excess.iter().filter(|&&e| e > 1e-10).count(),
        worst_excess: excess.iter().cloned().fold(f64::NEG_INFINITY, f64::max),
    })
}

/// `tr(W⁻¹)` through the eigenvalues.
pub fn inverse_trace(w: &DMatrix<f64>) -> f64 {
    sym_eigenvalues(w).iter().map(|l| 1.0 / l).sum()
}

/// Constant in `tr(W⁻¹) ≤ C′ d²`. Calibrated once as the rounded-up 0.55-quantile of
/// `tr(W⁻¹)/d²` over 4000 draws at each of d = 8 and d = 32, then frozen.
pub const INV_TRACE_C: f64 = 5.0;

#[derive(Debug, Clone, Serialize)]
pub struct TraceBoundReport {
    pub d: usize,
    pub c_prime: f64,
    pub trials: usize,
    pub within: usize,
    pub fraction: f64,
}

pub fn inverse_trace_bound(d: usize, c_prime: f64, trials: usize, stream: &RngStream) -> Result<TraceBoundReport> {
    let within = par_trials(stream, trials, |_, rng| {
        inverse_trace(&sample_wishart(d, d, Normalization::UnitOverD, rng)) <= c_prime * (d * d) as f64
    })
    .into_iter()
    .filter(|&b| b)
    .count();
    Ok(TraceBoundReport { d, c_prime, trials, within, fraction: within as f64 / trials.max(1) as f64 })
}

/// Samples of `tr(W⁻¹)/d²`, used for calibration.
pub fn inverse_trace_ratios(d: usize, trials: usize, stream: &RngStream) -> Vec<f64> {
    par_trials(stream, trials, |_, rng| inverse_trace(&sample_wishart(d, d, Normalization::UnitOverD, rng)) / (d * d) as f64)
}

/// Mat-vec strategies for inverse-trace estimation with `n` queries.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum TraceStrategy {
    /// Query `e_1, …, e_n`; invert the known leading block.
    Coordinate,
    /// Gaussian queries, Rayleigh–Ritz on their span.
    Hutchinson,
    /// Half Gaussian queries, half the orthogonalized responses, then Rayleigh–Ritz.
    BlockPower,
}

impl TraceStrategy {
    pub const ALL: [TraceStrategy; 3] = [TraceStrategy::Coordinate, TraceStrategy::Hutchinson, TraceStrategy::BlockPower];

    pub fn as_str(&self) -> &'static str {
        match self {
            TraceStrategy::Coordinate => "coordinate",
            TraceStrategy::Hutchinson => "hutchinson",
            TraceStrategy::BlockPower => "block-power",
        }
    }
}

/// `(d/n)·tr(T⁻¹)` where `T = QᵀWQ` on the span of the queries.
fn ritz_estimate(oracle: &mut MatVecOracle, queries: &[DVector<f64>]) -> Result<f64> {
    let d = oracle.dimension();
    let q = orthonormal_basis(queries, 1e-10)?;
    let mut wq = Vec::with_capacity(q.len());
    for v in &q {
        wq.push(oracle.query(v)?);
    }
    let n = q.len();
    let t = DMatrix::from_fn(n, n, |i, j| 0.5 * (q[i].dot(&wq[j]) + q[j].dot(&wq[i])));
    let ev = sym_eigenvalues(&t);
    Ok(d as f64 / n as f64 * ev.iter().map(|l| 1.0 / l).sum::<f64>())
}

/// Estimate of `tr(W⁻¹)` with exactly `n` mat-vec queries.
pub fn estimate_inverse_trace(w: &DMatrix<f64>, n: usize, strategy: TraceStrategy, rng: &mut LabRng) -> Result<(f64, usize)> {
    let d = w.nrows();
    if n == 0 || n > d {
        return invalid(format!("query budget {n} outside 1..={d}"));
    }
    let mut oracle = MatVecOracle::new(w.clone()).without_log();
    let est = match strategy {
        TraceStrategy::Coordinate => {
            let mut cols = Vec::with_capacity(n);
            for i in 0..n {
                let mut e = DVector::zeros(d);
                e[i] = 1.0;
                cols.push(oracle.query(&e)?);
            }
            let block = DMatrix::from_fn(n, n, |i, j| 0.5 * (cols[j][i] + cols[i][j]));
            d as f64 / n as f64 * inverse_trace(&block)
        }
        TraceStrategy::Hutchinson => {
            let qs: Vec<_> = (0..n).map(|_| gaussian_vector(d, rng)).collect();
            ritz_estimate(&mut oracle, &qs)?
        }
        TraceStrategy::BlockPower => {
            let b = n.div_ceil(2);
            let start: Vec<_> = (0..b).map(|_| gaussian_vector(d, rng)).collect();
            let q0 = orthonormal_basis(&start, 1e-10)?;
            let mut wq = Vec::with_capacity(n);
            for v in &q0 {
                wq.push(oracle.query(v)?);
            }
            let mut all = q0.clone();
            all.extend(wq.iter().take(n - b).cloned());
            let q = orthonormal_basis(&all, 1e-10)?;
            for v in &q[b..] {
                wq.push(oracle.query(v)?);
            }
            let t = DMatrix::from_fn(n, n, |i, j| 0.5 * (q[i].dot(&wq[j]) + q[j].dot(&wq[i])));
            d as f64 / n as f64 * sym_eigenvalues(&t).iter().map(|l| 1.0 / l).sum::<f64>()
        }
    };
    Ok((est, oracle.query_count()))
}

#[derive(Debug, Clone, Serialize)]
pub struct QueryRow {
    pub strategy: TraceStrategy,
    pub n: usize,
    pub trials: usize,
    pub successes: usize,
    pub rate: f64,
}

/// Fraction of trials with estimate in `[½ tr(W⁻¹), 2 tr(W⁻¹)]` for each budget `n`.
pub fn inverse_trace_query_experiment(
    d: usize,
    strategy: TraceStrategy,
    ns: &[usize],
    trials: usize,
    stream: &RngStream,
) -> Result<Vec<QueryRow>> {
    let mut rows = Vec::new();
    for (idx, &n) in ns.iter().enumerate() {
        let out = par_trials(&stream.child(idx as u64), trials, |_, rng| -> Result<bool> {
            let w = sample_wishart(d, d, Normalization::UnitOverD, rng);
            let truth = inverse_trace(&w);
            let (est, q) = estimate_inverse_trace(&w, n, strategy, rng)?;
            debug_assert_eq!(q, n);
            Ok(est >= 0.5 * truth && est <= 2.0 * truth)
        });
        let successes = out.into_iter().collect::<Result<Vec<_>>>()?.into_iter().filter(|&b| b).count();
        rows.push(QueryRow { strategy, n, trials, successes, rate: successes as f64 / trials.max(1) as f64 });
    }
    Ok(rows)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn wishart_moments() {
        let s = RngStream::new(1);
        let vals = par_trials(&s, 100_000, |_, rng| sample_wishart(1, 1, Normalization::UnitOverD, rng)[(0, 0)]);
        let n = vals.len() as f64;
        let m = vals.iter().sum::<f64>() / n;
        // Var(g²) = 2
        assert!((m - 1.0).abs() < 5.0 * (2.0 / n).sqrt(), "{m}");
        let vals = par_trials(&s.child(1), 20_000, |_, rng| sample_wishart(2, 10, Normalization::Standard, rng)[(0, 0)]);
        let n = vals.len() as f64;
        let m = vals.iter().sum::<f64>() / n;
        // W_11 ~ χ²_10: variance 20
        assert!((m - 10.0).abs() < 5.0 * (20.0 / n).sqrt(), "{m}");
        let mut rng = s.child(2).rng();
        for _ in 0..50 {
            let w = sample_wishart(5, 3, Normalization::Standard, &mut rng);
            assert!(sym_eigenvalues(&w)[0] >= -1e-12);
        }
    }

    #[test]
    fn goe_variances() {
        let s = RngStream::new(2);
        let g = par_trials(&s, 20_000, |_, rng| sample_goe(3, rng));
        let n = g.len() as f64;
        let vd = g.iter().map(|m| m[(1, 1)].powi(2)).sum::<f64>() / n;
        let vo = g.iter().map(|m| m[(0, 2)].powi(2)).sum::<f64>() / n;
        assert!((vd - 1.0).abs() < 5.0 * (2.0 / n).sqrt());
        assert!((vo - 0.5).abs() < 5.0 * (0.5 / n).sqrt());
        assert!(g.iter().all(|m| m == &m.transpose()));
    }

    #[test]
    fn tail_table_edge_cases() {
        assert!(smallest_eig_tail(8, &[0.1], 0, &RngStream::new(1)).unwrap().is_empty());
        assert!(smallest_eig_tail(8, &[1.5], 10, &RngStream::new(1)).is_err());
        assert!(smallest_eig_tail(1, &[0.5], 10, &RngStream::new(1)).is_err());
    }

    #[test]
    fn tail_scaling() {
        let rows = smallest_eig_tail(8, &[0.25, 1.0], 20_000, &RngStream::new(3)).unwrap();
        let r = rows[1].p / rows[0].p;
        assert!((r / 2.0 - 1.0).abs() < 0.3, "{r}");
    }

    #[test]
    fn estimator_and_variance() {
        let s = RngStream::new(4);
        let sigma = DMatrix::from_diagonal(&DVector::from_vec(vec![1.0, 0.25]));
        let l = cholesky_lower(&sigma, 0.0).unwrap();
        let zs = par_trials(&s, 50_000, |_, rng| &l * gaussian_vector(2, rng));
        // E‖Z‖² = 1.25, Var = 2(1 + 1/16)
        let t = inverse_trace_estimator(&zs).unwrap();
        assert!((t - 1.25).abs() < 5.0 * (2.125f64 / 50_000.0).sqrt());
        let v = sq_norm_variance(&DMatrix::identity(3, 3), 100_000, &s.child(1)).unwrap();
        assert_eq!(v.theory, 6.0);
        assert!(v.z.abs() < 5.0, "{v:?}");
        assert!(inverse_trace_estimator(&[]).is_err());
    }

    #[test]
    fn chebyshev_step_of_the_estimator() {
        // m = 48/0.1 exact samples from N(0, I_10)
        let s = RngStream::new(5);
        let ok = par_trials(&s, 200, |_, rng| {
            let zs: Vec<_> = (0..480).map(|_| gaussian_vector(10, rng)).collect();
            (inverse_trace_estimator(&zs).unwrap() - 10.0).abs() <= 5.0
        });
        assert!(ok.iter().filter(|&&b| b).count() as f64 >= 0.9 * 200.0);
    }

    #[test]
    fn minorization() {
        let r = posterior_minorization_check(3, 8, 2000, &RngStream::new(6)).unwrap();
        assert_eq!(r.violations, 0, "{r:?}");
        let w = DMatrix::from_diagonal(&DVector::from_vec(vec![0.7, 2.0]));
        let b = posterior_block(&DMatrix::zeros(1, 1), &DMatrix::zeros(2, 1), &w);
        assert!((sym_eigenvalues(&b)[0] - 0.0).abs() < 1e-15);
        let b = posterior_block(&DMatrix::from_element(1, 1, 1e-4), &DMatrix::from_element(2, 1, 1e-4), &DMatrix::identity(2, 2));
        assert!(sym_eigenvalues(&b)[0] <= 1.0);
        // a negative definite W̃ breaks the inequality, so the check samples W̃ from Wishart
        let b = posterior_block(&DMatrix::from_element(1, 1, 1.0), &DMatrix::from_element(1, 1, 1.0), &DMatrix::from_element(1, 1, -1.0));
        assert!(sym_eigenvalues(&b)[0] > -1.0);
        assert!(posterior_minorization_check(8, 8, 1, &RngStream::new(1)).is_err());
    }

    #[test]
    fn full_budget_recovers_the_trace() {
        let s = RngStream::new(7);
        for strat in TraceStrategy::ALL {
            let rows = inverse_trace_query_experiment(32, strat, &[32], 50, &s).unwrap();
            assert_eq!(rows[0].successes, 50, "{strat:?}");
        }
        let mut rng = s.rng();
        let w = sample_wishart(6, 6, Normalization::UnitOverD, &mut rng);
        for strat in TraceStrategy::ALL {
            let (e, q) = estimate_inverse_trace(&w, 6, strat, &mut rng).unwrap();
            assert_eq!(q, 6);
            assert!((e / inverse_trace(&w) - 1.0).abs() < 1e-8);
        }
    }
}
