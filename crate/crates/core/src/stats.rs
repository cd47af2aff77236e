//! Small statistics toolkit: two-sample tests, intervals, regression, moments.

use nalgebra::{DMatrix, DVector};
use rand::seq::SliceRandom;
use serde::{Deserialize, Serialize};

use crate::error::{invalid, Result};
use crate::rng::LabRng;

/// Outcome of a permutation two-sample test.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TwoSampleTest {
    pub statistic: f64,
    pub p_value: f64,
    pub permutations: usize,
}

fn euclid(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum::<f64>().sqrt()
}

/// Pairwise distances of the pooled sample, upper triangle stored row-major.
struct PooledDistances {
    n: usize,
    d: Vec<f64>,
}

impl PooledDistances {
    fn new(points: &[&[f64]]) -> Self {
        let n = points.len();
        let mut d = Vec::with_capacity(n * (n - 1) / 2);
        for i in 0..n {
            for j in i + 1..n {
                d.push(euclid(points[i], points[j]));
            }
        }
        PooledDistances { n, d }
    }

    /// Scaled energy statistic for the labelling `in_x`.
    fn statistic(&self, in_x: &[bool]) -> f64 {
        let (mut sxx, mut syy, mut sxy) = (0.0, 0.0, 0.0);
        let mut k = 0;
        for i in 0..self.n {
            let a = in_x[i];
            for j in i + 1..self.n {
                let v = self.d[k];
                k += 1;
                match (a, in_x[j]) {
                    (true, true) => sxx += v,
                    (false, false) => syy += v,
                    _ => sxy += v,
                }
            }
        }
        let nx = in_x.iter().filter(|&&b| b).count() as f64;
        let ny = self.n as f64 - nx;
        let e = 2.0 * sxy / (nx * ny) - 2.0 * sxx / (nx * nx) - 2.0 * syy / (ny * ny);
        e * nx * ny / (nx + ny)
    }
}

/// Energy distance (V-statistic) between two samples.
pub fn energy_distance(x: &[Vec<f64>], y: &[Vec<f64>]) -> Result<f64> {
    check_samples(x, y)?;
    let pts: Vec<&[f64]> = x.iter().chain(y).map(|v| v.as_slice()).collect();
    let labels: Vec<bool> = (0..pts.len()).map(|i| i < x.len()).collect();
    let pd = PooledDistances::new(&pts);
    let n = x.len() as f64;
    let m = y.len() as f64;
    Ok(pd.statistic(&labels) * (n + m) / (n * m))
}

fn check_samples(x: &[Vec<f64>], y: &[Vec<f64>]) -> Result<()> {
    if x.is_empty() || y.is_empty() {
        return invalid("two-sample test needs non-empty samples");
    }
    let d = x[0].len();
    if x.iter().chain(y).any(|v| v.len() != d) {
        return invalid("samples have inconsistent dimensions");
    }
    Ok(())
}

/// Energy-distance permutation test; `p = (1 + #{perm ≥ observed}) / (1 + P)`.
pub fn energy_test(x: &[Vec<f64>], y: &[Vec<f64>], permutations: usize, rng: &mut LabRng) -> Result<TwoSampleTest> {
    check_samples(x, y)?;
    let pts: Vec<&[f64]> = x.iter().chain(y).map(|v| v.as_slice()).collect();
    let pd = PooledDistances::new(&pts);
    let mut labels: Vec<bool> = (0..pts.len()).map(|i| i < x.len()).collect();
    let obs = pd.statistic(&labels);
    let tol = 1e-12 * obs.abs().max(1e-300);
    let mut hits = 0;
    for _ in 0..permutations {
        labels.shuffle(rng);
        if pd.statistic(&labels) >= obs - tol {
            hits += 1;
        }
    }
    Ok(TwoSampleTest {
        statistic: obs,
        p_value: (1 + hits) as f64 / (1 + permutations) as f64,
        permutations,
    })
}

/// Coordinatewise standardization using pooled mean and deviation.
pub fn standardize_pooled(x: &mut [Vec<f64>], y: &mut [Vec<f64>]) {
    if x.is_empty() {
        return;
    }
    let d = x[0].len();
    let n = (x.len() + y.len()) as f64;
    for k in 0..d {
        let mean = x.iter().chain(y.iter()).map(|v| v[k]).sum::<f64>() / n;
        let var = x.iter().chain(y.iter()).map(|v| (v[k] - mean).powi(2)).sum::<f64>() / n;
        let sd = if var > 0.0 { var.sqrt() } else { 1.0 };
        for v in x.iter_mut().chain(y.iter_mut()) {
            v[k] = (v[k] - mean) / sd;
        }
    }
}

/// Two-sample Kolmogorov–Smirnov distance.
pub fn ks_distance(a: &[f64], b: &[f64]) -> f64 {
    let mut a = a.to_vec();
    let mut b = b.to_vec();
    a.sort_by(|x, y| x.partial_cmp(y).unwrap());
    b.sort_by(|x, y| x.partial_cmp(y).unwrap());
    let (mut i, mut j, mut d) = (0, 0, 0.0f64);
    let (na, nb) = (a.len() as f64, b.len() as f64);
    while i < a.len() && j < b.len() {
        let t = a[i].min(b[j]);
        while i < a.len() && a[i] <= t {
            i += 1;
        }
        while j < b.len() && b[j] <= t {
            j += 1;
        }
        d = d.max((i as f64 / na - j as f64 / nb).abs());
    }
    d
}

/// Wilson score interval for a binomial proportion.
pub fn wilson_interval(successes: usize, n: usize, z: f64) -> (f64, f64) {
    if n == 0 {
        return (0.0, 1.0);
    }
    let nf = n as f64;
    let p = successes as f64 / nf;
    let z2 = z * z;
    let denom = 1.0 + z2 / nf;
    let center = (p + z2 / (2.0 * nf)) / denom;
    let half = z * (p * (1.0 - p) / nf + z2 / (4.0 * nf * nf)).sqrt() / denom;
    ((center - half).max(0.0), (center + half).min(1.0))
}

/// Ordinary least squares line with coefficient of determination.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LinearFit {
    pub slope: f64,
    pub intercept: f64,
    pub r2: f64,
}

pub fn linear_fit(x: &[f64], y: &[f64]) -> Result<LinearFit> {
    if x.len() != y.len() || x.len() < 2 {
        return invalid("linear fit needs at least two paired points");
    }
    let n = x.len() as f64;
    let mx = x.iter().sum::<f64>() / n;
    let my = y.iter().sum::<f64>() / n;
    let sxx: f64 = x.iter().map(|a| (a - mx).powi(2)).sum();
    if sxx == 0.0 {
        return invalid("linear fit needs distinct abscissae");
    }
    let sxy: f64 = x.iter().zip(y).map(|(a, b)| (a - mx) * (b - my)).sum();
    let slope = sxy / sxx;
    let intercept = my - slope * mx;
    let ss_tot: f64 = y.iter().map(|b| (b - my).powi(2)).sum();
    let ss_res: f64 = x.iter().zip(y).map(|(a, b)| (b - intercept - slope * a).powi(2)).sum();
    let r2 = if ss_tot == 0.0 { 1.0 } else { 1.0 - ss_res / ss_tot };
    Ok(LinearFit { slope, intercept, r2 })
}

/// Sample mean and (unbiased) covariance.
pub fn mean_cov(samples: &[DVector<f64>]) -> Result<(DVector<f64>, DMatrix<f64>)> {
    if samples.len() < 2 {
        return invalid("need at least two samples");
    }
    let d = samples[0].len();
    let n = samples.len() as f64;
    let mut mean = DVector::zeros(d);
    for s in samples {
        mean += s;
    }
    mean /= n;
    let mut cov = DMatrix::zeros(d, d);
    for s in samples {
        let c = s - &mean;
        cov.ger(1.0, &c, &c, 1.0);
    }
    cov /= n - 1.0;
    Ok((mean, cov))
}

/// Standard errors of the entries of a sample covariance for a centered
/// Gaussian with true covariance `sigma`: `sqrt((σ_ij² + σ_ii σ_jj) / n)`.
pub fn gaussian_cov_se(sigma: &DMatrix<f64>, n: usize) -> DMatrix<f64> {
    let d = sigma.nrows();
    DMatrix::from_fn(d, d, |i, j| {
        ((sigma[(i, j)].powi(2) + sigma[(i, i)] * sigma[(j, j)]) / n as f64).sqrt()
    })
}
