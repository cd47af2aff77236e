//! Gaussian sampling from matrix-vector queries: a polynomial of `Λ` applied
//! to white noise, with an exact `d`-query fallback.

use nalgebra::{DMatrix, DVector};
use serde::Serialize;

use crate::cheb::{inv_sqrt_search, ChebyshevPolynomial};
use crate::error::{invalid, LabError, Result};
use crate::linalg::{cholesky_lower, gaussian_vector};
use crate::oracle::MatVecOracle;
use crate::rng::LabRng;

/// `δ = ε / (C_δ √d)`.
pub const C_DELTA: f64 = 4.0;

/// Pivot tolerance of the exact-path factorization.
pub const EXACT_PIVOT_TOL: f64 = 1e-12;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub enum Method {
    Krylov,
    Exact,
}

impl Method {
    pub fn as_str(&self) -> &'static str {
        match self {
            Method::Krylov => "krylov",
            Method::Exact => "exact",
        }
    }
}

#[derive(Debug, Clone)]
pub struct KrylovSamplerPlan {
    pub kappa: f64,
    pub d: usize,
    pub eps: f64,
    pub method: Method,
    /// Certified polynomial degree (also the Krylov query count).
    pub degree: usize,
    pub delta: f64,
    pub c_delta: f64,
    /// Approximation of `x^{-1/2}` on `[1, κ]`.
    pub poly: ChebyshevPolynomial,
    pub certified_error: f64,
}

impl KrylovSamplerPlan {
    /// Queries spent per sample.
    pub fn query_budget(&self) -> usize {
        match self.method {
            Method::Krylov => self.degree,
            Method::Exact => self.d,
        }
    }
}

pub fn plan(kappa: f64, d: usize, eps: f64) -> Result<KrylovSamplerPlan> {
    if !(kappa >= 1.0) || !kappa.is_finite() {
        return invalid(format!("kappa must be >= 1, got {kappa}"));
    }
    if d == 0 {
        return invalid("dimension must be positive");
    }
    if !(eps > 0.0 && eps < 1.0) {
        return invalid(format!("eps must lie in (0,1), got {eps}"));
    }
    let delta = eps / (C_DELTA * (d as f64).sqrt());
    let (poly, err) = if kappa == 1.0 {
        (ChebyshevPolynomial::new((0.0, 2.0), vec![1.0])?, 0.0)
    } else {
        let c = inv_sqrt_search(kappa, delta)?;
        (c.poly, c.max_error)
    };
    let degree = poly.degree();
    let method = if degree < d { Method::Krylov } else { Method::Exact };
    Ok(KrylovSamplerPlan { kappa, d, eps, method, degree, delta, c_delta: C_DELTA, poly, certified_error: err })
}

/// Draws one sample, spending exactly `plan.query_budget()` oracle queries.
pub fn sample(plan: &KrylovSamplerPlan, oracle: &mut MatVecOracle, rng: &mut LabRng) -> Result<DVector<f64>> {
    let d = plan.d;
    if oracle.dimension() != d {
        return Err(LabError::DimensionMismatch { expected: d, got: oracle.dimension() });
    }
    match plan.method {
        Method::Krylov => {
            let x = gaussian_vector(d, rng);
            plan.poly.apply(&x, |v| oracle.query(v))
        }
        Method::Exact => {
            let mut lambda = DMatrix::zeros(d, d);
            let mut e = DVector::zeros(d);
            for i in 0..d {
                e[i] = 1.0;
                let col = oracle.query(&e)?;
                lambda.set_column(i, &col);
                e[i] = 0.0;
            }
            let factor = exact_factor(&lambda)?;
            Ok(factor * gaussian_vector(d, rng))
        }
    }
}

/// Lower factor `L` with `LLᵀ = Λ⁻¹` for a learned (symmetrized) `Λ`.
pub fn exact_factor(lambda: &DMatrix<f64>) -> Result<DMatrix<f64>> {
    let sym = (lambda + lambda.transpose()) * 0.5;
    let l = cholesky_lower(&sym, 0.0)?;
    let d = sym.nrows();
    let linv = l
        .solve_lower_triangular(&DMatrix::identity(d, d))
        .ok_or_else(|| LabError::Numerical("singular factor".into()))?;
    let sigma = linv.transpose() * &linv;
    let sigma = (&sigma + sigma.transpose()) * 0.5;
    cholesky_lower(&sigma, EXACT_PIVOT_TOL)
}

/// `KL(N(0, Σ̂) ‖ N(0, Σ))` for SPD matrices.
pub fn exact_kl_centered(sigma_hat: &DMatrix<f64>, sigma: &DMatrix<f64>) -> Result<f64> {
    if sigma_hat.shape() != sigma.shape() {
        return Err(LabError::DimensionMismatch { expected: sigma.nrows(), got: sigma_hat.nrows() });
    }
    let d = sigma.nrows();
    let l = cholesky_lower(sigma, 0.0)?;
    let lh = cholesky_lower(sigma_hat, 0.0)?;
    let m = l
        .solve_lower_triangular(&lh)
        .ok_or_else(|| LabError::Numerical("singular factor".into()))?;
    let tr = m.norm_squared();
    let logdet = |f: &DMatrix<f64>| 2.0 * f.diagonal().iter().map(|x| x.ln()).sum::<f64>();
    Ok(0.5 * (tr - d as f64 + logdet(&l) - logdet(&lh)))
}

/// Exact KL and the eigenvalue bound `Σ_k (q(λ_k)² λ_k − 1)²` for diagonal `Λ`.
pub fn kl_diagonal(poly: &ChebyshevPolynomial, lambdas: &[f64]) -> (f64, f64) {
    let mut kl = 0.0;
    let mut bound = 0.0;
    for &l in lambdas {
        let q = poly.eval(l);
        let e = q * q * l - 1.0;
        kl += 0.5 * (e - e.ln_1p());
        bound += e * e;
    }
    (kl, bound)
}

/// Diagonal test spectra on `[1, κ]`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub enum Spectrum {
    UniformGrid,
    TwoCluster,
    ChebyshevExtrema,
}

impl Spectrum {
    pub const ALL: [Spectrum; 3] = [Spectrum::UniformGrid, Spectrum::TwoCluster, Spectrum::ChebyshevExtrema];

    pub fn as_str(&self) -> &'static str {
        match self {
            Spectrum::UniformGrid => "uniform",
            Spectrum::TwoCluster => "two_cluster",
            Spectrum::ChebyshevExtrema => "cheb_extrema",
        }
    }

    pub fn eigenvalues(&self, d: usize, kappa: f64) -> Vec<f64> {
        if d == 1 {
            return vec![kappa];
        }
        let m = (d - 1) as f64;
        (0..d)
            .map(|k| match self {
                Spectrum::UniformGrid => 1.0 + (kappa - 1.0) * k as f64 / m,
                Spectrum::TwoCluster => {
                    if k < d / 2 {
                        1.0
                    } else {
                        kappa
                    }
                }
                Spectrum::ChebyshevExtrema => {
                    let b = (k as f64 * std::f64::consts::PI / m).cos();
                    ((kappa - 1.0) / 2.0 * (b + 1.0) + 1.0).clamp(1.0, kappa)
                }
            })
            .collect()
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::oracle::Diagonal;
    use crate::rng::RngStream;

    #[test]
    fn plan_examples() {
        let p = plan(1.0, 10, 0.1).unwrap();
        assert_eq!(p.method, Method::Krylov);
        assert_eq!(p.degree, 0);

        let p = plan(1e4, 3, 0.1).unwrap();
        assert_eq!(p.method, Method::Exact);
        assert_eq!(p.query_budget(), 3);

        let p = plan(16.0, 4096, 0.1).unwrap();
        assert_eq!(p.method, Method::Krylov);
        assert!((p.delta - 0.1 / (4.0 * 64.0)).abs() < 1e-15);
        assert!(p.degree < 4096);
        assert!(plan(0.5, 3, 0.1).is_err());
        assert!(plan(4.0, 3, 1.5).is_err());
    }

    #[test]
    fn identity_gives_seed_draw() {
        let p = plan(1.0, 5, 0.1).unwrap();
        let mut o = MatVecOracle::new(DMatrix::<f64>::identity(5, 5));
        let s = RngStream::new(3);
        let y = sample(&p, &mut o, &mut s.rng()).unwrap();
        let x = gaussian_vector(5, &mut s.rng());
        assert_eq!(y, x);
        assert_eq!(o.query_count(), 0);
    }

    #[test]
    fn krylov_query_count_is_degree() {
        let p = plan(16.0, 64, 0.1).unwrap();
        assert_eq!(p.method, Method::Krylov);
        let diag = DVector::from_fn(64, |i, _| 1.0 + 15.0 * i as f64 / 63.0);
        let mut o = MatVecOracle::new(Diagonal(diag));
        sample(&p, &mut o, &mut RngStream::new(1).rng()).unwrap();
        assert_eq!(o.query_count(), p.degree);
    }

    #[test]
    fn exact_query_count_is_dimension() {
        let p = plan(1e4, 3, 0.1).unwrap();
        let mut o = MatVecOracle::new(Diagonal(DVector::from_vec(vec![1.0, 50.0, 1e4])));
        let y = sample(&p, &mut o, &mut RngStream::new(2).rng()).unwrap();
        assert_eq!(o.query_count(), 3);
        assert_eq!(y.len(), 3);
    }

    #[test]
    fn dimension_mismatch() {
        let p = plan(4.0, 3, 0.1).unwrap();
        let mut o = MatVecOracle::new(DMatrix::<f64>::identity(4, 4));
        assert!(sample(&p, &mut o, &mut RngStream::new(2).rng()).is_err());
    }

    #[test]
    fn kl_examples() {
        let s = DMatrix::from_row_slice(2, 2, &[2.0, 0.3, 0.3, 1.0]);
        assert!(exact_kl_centered(&s, &s).unwrap().abs() < 1e-14);
        let a = DMatrix::from_element(1, 1, 2.0);
        let b = DMatrix::from_element(1, 1, 1.0);
        let want = 0.5 * (2.0 - 1.0 - 2f64.ln());
        assert!((exact_kl_centered(&a, &b).unwrap() - want).abs() < 1e-14);
        assert!((want - 0.15343).abs() < 1e-5);
        let bad = DMatrix::from_row_slice(2, 2, &[1.0, 2.0, 2.0, 1.0]);
        assert!(exact_kl_centered(&bad, &s).is_err());
    }

    #[test]
    fn diagonal_kl_agrees_with_general_formula_and_bound() {
        let p = plan(16.0, 8, 0.3).unwrap();
        let lambdas = Spectrum::UniformGrid.eigenvalues(8, 16.0);
        let (kl, bound) = kl_diagonal(&p.poly, &lambdas);
        let q2 = DMatrix::from_diagonal(&DVector::from_iterator(8, lambdas.iter().map(|&l| p.poly.eval(l).powi(2))));
        let sig = DMatrix::from_diagonal(&DVector::from_iterator(8, lambdas.iter().map(|&l| 1.0 / l)));
        let general = exact_kl_centered(&q2, &sig).unwrap();
        assert!((kl - general).abs() < 1e-12 + 1e-8 * kl);
        assert!(kl <= bound);
        assert!(kl <= 0.09);
    }

    #[test]
    fn spectra_span_interval() {
        for s in Spectrum::ALL {
            let l = s.eigenvalues(16, 64.0);
            assert_eq!(l.len(), 16);
            let lo = l.iter().cloned().fold(f64::INFINITY, f64::min);
            let hi = l.iter().cloned().fold(0.0, f64::max);
            assert_eq!((lo, hi), (1.0, 64.0));
        }
    }
}
