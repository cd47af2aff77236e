//! Chebyshev polynomials, certified polynomial approximations and the
//! finite-node minimax problem behind the moment-matching lower bound.

use nalgebra::{DMatrix, DVector};

use crate::error::{invalid, LabError, Result};

/// Number of uniform grid points used by every certificate.
pub const CERT_GRID: usize = 10_001;

/// `T_k(x)`, via the trigonometric form inside `[-1, 1]` and the hyperbolic form outside.
pub fn cheb_value(k: usize, x: f64) -> f64 {
    if k == 0 {
        return 1.0;
    }
    let kf = k as f64;
    if x.abs() <= 1.0 {
        (kf * x.acos()).cos()
    } else {
        let c = (kf * x.abs().acosh()).cosh();
        if x < 0.0 && k % 2 == 1 {
            -c
        } else {
            c
        }
    }
}

/// A polynomial stored in the Chebyshev basis of an interval `[lo, hi]`.
#[derive(Debug, Clone, PartialEq)]
pub struct ChebyshevPolynomial {
    pub interval: (f64, f64),
    pub coeffs: Vec<f64>,
}

impl ChebyshevPolynomial {
    pub fn new(interval: (f64, f64), coeffs: Vec<f64>) -> Result<Self> {
        if !(interval.0 < interval.1) || !interval.0.is_finite() || !interval.1.is_finite() {
            return invalid(format!("bad interval {:?}", interval));
        }
        if coeffs.is_empty() {
            return invalid("a polynomial needs at least one coefficient");
        }
        Ok(ChebyshevPolynomial { interval, coeffs })
    }

    pub fn degree(&self) -> usize {
        self.coeffs.len() - 1
    }

    /// The affine map of the interval onto `[-1, 1]`.
    pub fn to_unit(&self, x: f64) -> f64 {
        let (lo, hi) = self.interval;
        if x == lo {
            -1.0
        } else if x == hi {
            1.0
        } else {
            2.0 * (x - lo) / (hi - lo) - 1.0
        }
    }

    /// Clenshaw evaluation.
    pub fn eval(&self, x: f64) -> f64 {
        let t = self.to_unit(x);
        let (mut b1, mut b2) = (0.0, 0.0);
        for &c in self.coeffs.iter().skip(1).rev() {
            let b0 = c + 2.0 * t * b1 - b2;
            b2 = b1;
            b1 = b0;
        }
        self.coeffs[0] + t * b1 - b2
    }

    /// Applies `p(Λ)` to `v` using exactly `degree()` calls to `matvec`.
    pub fn apply<F>(&self, v: &DVector<f64>, mut matvec: F) -> Result<DVector<f64>>
    where
        F: FnMut(&DVector<f64>) -> Result<DVector<f64>>,
    {
        let (lo, hi) = self.interval;
        let scale = 2.0 / (hi - lo);
        let shift = (lo + hi) / (hi - lo);
        // A b = scale * Λ b - shift * b
        let mut unit = |b: &DVector<f64>| -> Result<DVector<f64>> {
            let mut w = matvec(b)?;
            w *= scale;
            w.axpy(-shift, b, 1.0);
            Ok(w)
        };
        let n = self.degree();
        if n == 0 {
            return Ok(v * self.coeffs[0]);
        }
        let mut b1 = v * self.coeffs[n];
        let mut b2 = DVector::zeros(v.len());
        for k in (1..n).rev() {
            let mut b0 = unit(&b1)?;
            b0 *= 2.0;
            b0 -= &b2;
            b0.axpy(self.coeffs[k], v, 1.0);
            b2 = b1;
            b1 = b0;
        }
        let mut y = unit(&b1)?;
        y -= &b2;
        y.axpy(self.coeffs[0], v, 1.0);
        Ok(y)
    }
}

/// Interpolates `f` at the `degree + 1` first-kind Chebyshev points of the interval.
pub fn interpolate<F: Fn(f64) -> f64>(f: F, interval: (f64, f64), degree: usize) -> Result<ChebyshevPolynomial> {
    let (lo, hi) = interval;
    if !(lo < hi) {
        return invalid(format!("bad interval {:?}", interval));
    }
    let n = degree + 1;
    let nf = n as f64;
    let thetas: Vec<f64> = (0..n).map(|k| std::f64::consts::PI * (k as f64 + 0.5) / nf).collect();
    let vals: Vec<f64> = thetas
        .iter()
        .map(|&th| f(0.5 * (hi - lo) * (th.cos() + 1.0) + lo))
        .collect();
    let coeffs = (0..n)
        .map(|j| {
            let s: f64 = thetas.iter().zip(&vals).map(|(&th, &v)| v * (j as f64 * th).cos()).sum();
            let c = 2.0 * s / nf;
            if j == 0 {
                0.5 * c
            } else {
                c
            }
        })
        .collect();
    ChebyshevPolynomial::new(interval, coeffs)
}

/// Max of `|p(x) - f(x)|` over the certification grid of `[lo, hi]`.
pub fn grid_error<F: Fn(f64) -> f64>(p: &ChebyshevPolynomial, f: F, interval: (f64, f64)) -> f64 {
    let (lo, hi) = interval;
    let m = (CERT_GRID - 1) as f64;
    (0..CERT_GRID)
        .map(|i| {
            let x = if i == CERT_GRID - 1 { hi } else { lo + (hi - lo) * i as f64 / m };
            (p.eval(x) - f(x)).abs()
        })
        .fold(0.0, f64::max)
}

/// A polynomial together with its grid certificate.
#[derive(Debug, Clone)]
pub struct Certified {
    pub poly: ChebyshevPolynomial,
    /// Degree prescribed by the degree formula, before any cap.
    pub nominal_degree: usize,
    pub max_error: f64,
}

/// Chebyshev coefficients of `x^s` on `[-1, 1]` up to degree `max_deg`.
pub fn monomial_coeffs(s: usize, max_deg: usize) -> Vec<f64> {
    let mut c = vec![0.0; max_deg.min(s) + 1];
    // j = s - 2m, coefficient 2^{1-s} C(s, m); computed in log space
    let ln2 = std::f64::consts::LN_2;
    let mut ln_binom = 0.0;
    for m in 0..=(s / 2) {
        if m > 0 {
            ln_binom += ((s - m + 1) as f64 / m as f64).ln();
        }
        let j = s - 2 * m;
        if j <= max_deg {
            let mut v = (ln_binom + (1.0 - s as f64) * ln2).exp();
            if j == 0 {
                v *= 0.5;
            }
            c[j] = v;
        }
    }
    c
}

/// Truncated Chebyshev expansion approximating `x^s` on `[-1, 1]` within `δ`.
pub fn monomial_approx(s: usize, delta: f64) -> Result<Certified> {
    if s == 0 {
        return invalid("monomial_approx needs s >= 1");
    }
    if !(delta > 0.0 && delta < 1.0) {
        return invalid(format!("delta must lie in (0,1), got {delta}"));
    }
    let nominal = (2.0 * s as f64 * (2.0 / delta).ln()).sqrt().ceil() as usize;
    let poly = ChebyshevPolynomial::new((-1.0, 1.0), monomial_coeffs(s, nominal))?;
    let err = grid_error(&poly, |x| x.powi(s as i32), (-1.0, 1.0));
    if err > delta {
        return Err(LabError::Certification(format!(
            "x^{s} approximation error {err} exceeds {delta}"
        )));
    }
    Ok(Certified { poly, nominal_degree: nominal, max_error: err })
}

/// Degree ceiling for the inverse square root search.
pub fn inv_sqrt_degree_cap(kappa: f64, delta: f64) -> usize {
    (64.0 * kappa.sqrt() * (kappa / delta).ln()).ceil().max(1.0) as usize
}

/// Certified approximation of `x^{-1/2}` on `[1, κ]` within `δ/√κ`, for `κ ≥ 2`.
pub fn inv_sqrt_approx(kappa: f64, delta: f64) -> Result<Certified> {
    if !(kappa >= 2.0) {
        return invalid(format!("inv_sqrt_approx needs kappa >= 2, got {kappa}"));
    }
    inv_sqrt_search(kappa, delta)
}

/// Degree search for the inverse square root, valid for any `κ > 1`.
pub fn inv_sqrt_search(kappa: f64, delta: f64) -> Result<Certified> {
    if !(kappa > 1.0) || !kappa.is_finite() {
        return invalid(format!("kappa must exceed 1, got {kappa}"));
    }
    if !(delta > 0.0 && delta < 0.5) {
        return invalid(format!("delta must lie in (0, 1/2), got {delta}"));
    }
    let tol = delta / kappa.sqrt();
    let cap = inv_sqrt_degree_cap(kappa, delta);
    let f = |x: f64| 1.0 / x.sqrt();
    let attempt = |deg: usize| -> Result<(ChebyshevPolynomial, f64)> {
        let p = interpolate(f, (1.0, kappa), deg)?;
        let e = grid_error(&p, f, (1.0, kappa));
        Ok((p, e))
    };
    let mut hi = 1usize;
    let mut best = loop {
        let (p, e) = attempt(hi)?;
        if e <= tol {
            break (p, e);
        }
        if hi >= cap {
            return Err(LabError::Certification(format!(
                "no degree up to {cap} certifies inverse square root at kappa={kappa}, delta={delta}"
            )));
        }
        hi = (2 * hi).min(cap);
    };
    let mut lo = hi / 2;
    // invariant: degree `hi` certifies, degree `lo` does not (or lo == 0)
    while hi - lo > 1 {
        let mid = (lo + hi) / 2;
        let (p, e) = attempt(mid)?;
        if e <= tol {
            hi = mid;
            best = (p, e);
        } else {
            lo = mid;
        }
    }
    Ok(Certified { poly: best.0, nominal_degree: hi, max_error: best.1 })
}

/// Reference construction: truncated binomial series of `(1-u)^{-1/2}` with each
/// power replaced by its Chebyshev-truncated approximation.
pub fn inv_sqrt_taylor(kappa: f64, delta: f64) -> Result<Certified> {
    if !(kappa >= 2.0) {
        return invalid(format!("inv_sqrt_taylor needs kappa >= 2, got {kappa}"));
    }
    if !(delta > 0.0 && delta < 0.5) {
        return invalid(format!("delta must lie in (0, 1/2), got {delta}"));
    }
    // tail: sum_{t>T} u^t <= κ (1 - 1/κ)^{T+1} <= δ/2
    let r = 1.0 - 1.0 / kappa;
    let t_max = ((delta / (2.0 * kappa)).ln() / r.ln()).ceil().max(0.0) as usize;
    let mut c = Vec::with_capacity(t_max + 1);
    let mut ct = 1.0;
    for t in 0..=t_max {
        if t > 0 {
            ct *= (2 * t - 1) as f64 / (2 * t) as f64;
        }
        c.push(ct);
    }
    let csum: f64 = c.iter().sum();
    let dprime = delta / (2.0 * csum);
    let mut coeffs = vec![0.0f64; 1];
    let mut nominal = 0;
    for (t, &ct) in c.iter().enumerate() {
        let pc = if t == 0 {
            vec![1.0]
        } else {
            let m = monomial_approx(t, dprime)?;
            nominal = nominal.max(m.nominal_degree.min(t));
            m.poly.coeffs
        };
        if pc.len() > coeffs.len() {
            coeffs.resize(pc.len(), 0.0);
        }
        for (j, &v) in pc.iter().enumerate() {
            coeffs[j] += ct * v;
        }
    }
    // u = 1 - x/κ is minus the unit variable of [0, 2κ]
    let s = 1.0 / kappa.sqrt();
    for (j, v) in coeffs.iter_mut().enumerate() {
        *v *= if j % 2 == 0 { s } else { -s };
    }
    let poly = ChebyshevPolynomial::new((0.0, 2.0 * kappa), coeffs)?;
    let f = |x: f64| 1.0 / x.sqrt();
    let err = grid_error(&poly, f, (1.0, kappa));
    if err > delta / kappa.sqrt() {
        return Err(LabError::Certification(format!(
            "series construction error {err} exceeds {}",
            delta / kappa.sqrt()
        )));
    }
    Ok(Certified { poly, nominal_degree: nominal, max_error: err })
}

/// Chebyshev extrema of `T_{K+1}` mapped onto `[1, κ]`, in decreasing order.
#[derive(Debug, Clone, PartialEq)]
pub struct NodeSet {
    pub k: usize,
    pub kappa: f64,
    pub nodes: Vec<f64>,
}

pub fn extrema_nodes(k: usize, kappa: f64) -> Result<NodeSet> {
    if k == 0 {
        return invalid("extrema_nodes needs K >= 1");
    }
    if !(kappa > 1.0) {
        return invalid(format!("extrema_nodes needs kappa > 1, got {kappa}"));
    }
    let n = k + 2;
    let mut nodes: Vec<f64> = (0..n)
        .map(|i| {
            let beta = (i as f64 * std::f64::consts::PI / (k + 1) as f64).cos();
            (kappa - 1.0) / 2.0 * (beta + 1.0) + 1.0
        })
        .collect();
    nodes[0] = kappa;
    nodes[n - 1] = 1.0;
    Ok(NodeSet { k, kappa, nodes })
}

fn minimax_on_subset(nodes: &[f64], degree: usize, interval: (f64, f64)) -> Result<(f64, ChebyshevPolynomial)> {
    let n = nodes.len();
    debug_assert_eq!(n, degree + 2);
    let lo_hi = interval;
    let p0 = ChebyshevPolynomial::new(lo_hi, vec![0.0])?;
    let mut a = DMatrix::zeros(n, n);
    let mut b = DVector::zeros(n);
    for (i, &x) in nodes.iter().enumerate() {
        let t = p0.to_unit(x);
        for j in 0..=degree {
            a[(i, j)] = cheb_value(j, t);
        }
        a[(i, degree + 1)] = if i % 2 == 0 { 1.0 } else { -1.0 };
        b[i] = 1.0 / x;
    }
    let sol = a
        .lu()
        .solve(&b)
        .ok_or_else(|| LabError::Numerical("singular alternation system".into()))?;
    let p = ChebyshevPolynomial::new(lo_hi, sol.as_slice()[..=degree].to_vec())?;
    Ok((sol[degree + 1].abs(), p))
}

/// Best uniform approximation of `1/x` by a polynomial of the given degree on a finite node set.
pub fn finite_minimax(nodes: &[f64], degree: usize) -> Result<(f64, ChebyshevPolynomial)> {
    if nodes.is_empty() {
        return invalid("finite_minimax needs nodes");
    }
    if nodes.iter().any(|&x| !(x > 0.0) || !x.is_finite()) {
        return invalid("nodes must be positive and finite");
    }
    let mut sorted = nodes.to_vec();
    sorted.sort_by(|a, b| b.partial_cmp(a).unwrap());
    if sorted.windows(2).any(|w| w[0] == w[1]) {
        return invalid("duplicate nodes make the alternation system singular");
    }
    let lo = *sorted.last().unwrap();
    let hi = sorted[0];
    let interval = if lo < hi { (lo, hi) } else { (lo - 1.0, hi + 1.0) };
    let n = sorted.len();
    if n <= degree + 1 {
        // interpolation is exact
        let p0 = ChebyshevPolynomial::new(interval, vec![0.0])?;
        let a = DMatrix::from_fn(n, n, |i, j| cheb_value(j, p0.to_unit(sorted[i])));
        let b = DVector::from_iterator(n, sorted.iter().map(|x| 1.0 / x));
        let c = a
            .lu()
            .solve(&b)
            .ok_or_else(|| LabError::Numerical("singular interpolation system".into()))?;
        let mut coeffs = c.as_slice().to_vec();
        coeffs.resize(degree + 1, 0.0);
        return Ok((0.0, ChebyshevPolynomial::new(interval, coeffs)?));
    }
    let m = degree + 2;
    if n == m {
        return minimax_on_subset(&sorted, degree, interval);
    }
    if binomial(n, m) > 1_000_000.0 {
        return invalid(format!("{n} nodes at degree {degree} is too many subsets"));
    }
    // the finite minimax value is the largest over (degree+2)-point subsets
    let mut best: Option<(f64, ChebyshevPolynomial)> = None;
    let mut idx: Vec<usize> = (0..m).collect();
    loop {
        let sub: Vec<f64> = idx.iter().map(|&i| sorted[i]).collect();
        let (e, p) = minimax_on_subset(&sub, degree, interval)?;
        if best.as_ref().map_or(true, |b| e > b.0) {
            best = Some((e, p));
        }
        // next combination
        let mut i = m;
        loop {
            if i == 0 {
                return Ok(best.unwrap());
            }
            i -= 1;
            if idx[i] < n - m + i {
                break;
            }
        }
        idx[i] += 1;
        for j in i + 1..m {
            idx[j] = idx[j - 1] + 1;
        }
        if idx[m - 1] >= n {
            return Ok(best.unwrap());
        }
    }
}

fn binomial(n: usize, k: usize) -> f64 {
    (0..k).fold(1.0, |acc, i| acc * (n - i) as f64 / (i + 1) as f64)
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn cheb_value_examples() {
        assert!((cheb_value(3, 0.5) + 1.0).abs() < 1e-14);
        assert!((cheb_value(2, 2.0) - 7.0).abs() < 1e-12);
        assert!(7.0 <= (2.0f64 + 3.0f64.sqrt()).powi(2));
        assert_eq!(cheb_value(0, 123.0), 1.0);
        for k in 0..8 {
            let s = if k % 2 == 0 { 1.0 } else { -1.0 };
            assert!((cheb_value(k, 1.0) - 1.0).abs() < 1e-12);
            assert!((cheb_value(k, -1.0) - s).abs() < 1e-12);
            assert!((cheb_value(k, 1.0 + 1e-15) - 1.0).abs() < 1e-6);
        }
    }

    fn recurrence(k: usize, x: f64) -> f64 {
        let (mut a, mut b) = (1.0, x);
        if k == 0 {
            return a;
        }
        for _ in 1..k {
            let c = 2.0 * x * b - a;
            a = b;
            b = c;
        }
        b
    }

    proptest! {
        #[test]
        fn cheb_value_matches_recurrence(k in 0usize..20, x in -3.0f64..3.0) {
            let r = recurrence(k, x);
            prop_assert!((cheb_value(k, x) - r).abs() <= 1e-9 * r.abs().max(1.0));
        }

        #[test]
        fn clenshaw_matches_direct_sum(coeffs in proptest::collection::vec(-2.0f64..2.0, 1..12), x in 1.0f64..5.0) {
            let p = ChebyshevPolynomial::new((1.0, 5.0), coeffs.clone()).unwrap();
            let t = p.to_unit(x);
            let direct: f64 = coeffs.iter().enumerate().map(|(j, c)| c * recurrence(j, t)).sum();
            prop_assert!((p.eval(x) - direct).abs() < 1e-10);
        }
    }

    #[test]
    fn matrix_application_matches_scalar_and_counts() {
        let p = ChebyshevPolynomial::new((1.0, 4.0), vec![0.3, -1.0, 0.5, 0.25]).unwrap();
        let diag = [1.0, 2.5, 4.0];
        let v = DVector::from_vec(vec![1.0, -2.0, 0.5]);
        let mut calls = 0;
        let y = p
            .apply(&v, |b| {
                calls += 1;
                Ok(DVector::from_iterator(3, b.iter().zip(diag.iter()).map(|(x, l)| x * l)))
            })
            .unwrap();
        assert_eq!(calls, 3);
        for i in 0..3 {
            assert!((y[i] - p.eval(diag[i]) * v[i]).abs() < 1e-12);
        }
    }

    #[test]
    fn monomial_examples() {
        let m = monomial_approx(1, 0.3).unwrap();
        assert_eq!(m.max_error, 0.0);
        assert_eq!(m.poly.coeffs, vec![0.0, 1.0]);

        let m = monomial_approx(2, 0.6).unwrap();
        assert_eq!(m.nominal_degree, 3);
        assert!((m.poly.coeffs[0] - 0.5).abs() < 1e-15);
        assert!((m.poly.coeffs[2] - 0.5).abs() < 1e-15);
        assert!(m.max_error < 1e-15);

        assert!(monomial_approx(8, 0.01).unwrap().max_error <= 0.01);
    }

    #[test]
    fn monomial_grid_certified() {
        for s in 1..=32 {
            for &d in &[0.3, 0.1, 0.01] {
                let m = monomial_approx(s, d).unwrap();
                assert!(m.max_error <= d, "s={s} d={d}");
            }
        }
    }

    #[test]
    fn inv_sqrt_examples() {
        let q = inv_sqrt_approx(4.0, 0.25).unwrap();
        assert!(q.max_error <= 0.125);
        let q = inv_sqrt_approx(2.0, 0.4).unwrap();
        assert!((q.poly.eval(1.0) - 1.0).abs() <= 0.4 / 2f64.sqrt());
        assert!(inv_sqrt_approx(1.5, 0.1).is_err());
    }

    #[test]
    fn inv_sqrt_certified_grid() {
        for &k in &[2.0, 4.0, 16.0, 64.0, 256.0] {
            for &d in &[0.3, 0.1, 0.01] {
                let q = inv_sqrt_approx(k, d).unwrap();
                // independent spot check off the certification grid
                let worst = (0..997)
                    .map(|i| 1.0 + (k - 1.0) * (i as f64 + 0.37) / 997.0)
                    .map(|x| (q.poly.eval(x) - 1.0 / x.sqrt()).abs())
                    .fold(0.0, f64::max);
                assert!(q.max_error <= d / k.sqrt());
                assert!(worst <= 1.01 * d / k.sqrt());
            }
        }
    }

    #[test]
    fn inv_sqrt_degree_growth() {
        let ks = [4.0f64, 16.0, 64.0, 256.0];
        let degs: Vec<f64> = ks.iter().map(|&k| inv_sqrt_approx(k, 0.01).unwrap().poly.degree() as f64).collect();
        // strip the logarithmic factor, then the growth in κ must be about √κ
        let (lx, ly): (Vec<f64>, Vec<f64>) =
            ks.iter().zip(&degs).map(|(k, d)| (k.ln(), (d / (k / 0.01).ln()).ln())).unzip();
        let mx = lx.iter().sum::<f64>() / 4.0;
        let my = ly.iter().sum::<f64>() / 4.0;
        let slope = lx.iter().zip(&ly).map(|(x, y)| (x - mx) * (y - my)).sum::<f64>()
            / lx.iter().map(|x| (x - mx).powi(2)).sum::<f64>();
        assert!(slope <= 0.6, "slope {slope}, degrees {degs:?}");
        for (k, d) in ks.iter().zip(&degs) {
            assert!(*d <= 2.0 * k.sqrt() * (k / 0.01).ln());
        }
    }

    #[test]
    fn series_reference_path_certifies() {
        let q = inv_sqrt_taylor(4.0, 0.25).unwrap();
        assert!(q.max_error <= 0.125);
        let q = inv_sqrt_taylor(16.0, 0.1).unwrap();
        assert!(q.max_error <= 0.1 / 4.0);
    }

    #[test]
    fn extrema_node_examples() {
        let n = extrema_nodes(1, 9.0).unwrap();
        for (a, b) in n.nodes.iter().zip([9.0, 5.0, 1.0]) {
            assert!((a - b).abs() < 1e-12);
        }
        let n = extrema_nodes(2, 5.0).unwrap();
        for (a, b) in n.nodes.iter().zip([5.0, 4.0, 2.0, 1.0]) {
            assert!((a - b).abs() < 1e-12);
        }
        for k in 1..20 {
            let n = extrema_nodes(k, 37.5).unwrap();
            assert_eq!(n.nodes[0], 37.5);
            assert_eq!(*n.nodes.last().unwrap(), 1.0);
            assert!(n.nodes.windows(2).all(|w| w[0] > w[1]));
        }
    }

    /// Minimax error of `1/x` on `degree + 2` nodes from divided differences.
    fn divided_difference_error(nodes: &[f64]) -> f64 {
        let prod: f64 = nodes.iter().product();
        let w: f64 = (0..nodes.len())
            .map(|i| {
                1.0 / (0..nodes.len())
                    .filter(|&k| k != i)
                    .map(|k| (nodes[i] - nodes[k]).abs())
                    .product::<f64>()
            })
            .sum();
        1.0 / prod / w
    }

    #[test]
    fn minimax_three_nodes_constant() {
        let (e, p) = finite_minimax(&[9.0, 5.0, 1.0], 0).unwrap();
        assert!((e - 4.0 / 9.0).abs() < 1e-12);
        assert!((p.coeffs[0] - 5.0 / 9.0).abs() < 1e-12);
        // brute-force scan over the constant
        let scan = (0..=100_000)
            .map(|i| i as f64 / 100_000.0)
            .map(|c| [9.0f64, 5.0, 1.0].iter().map(|x| (1.0 / x - c).abs()).fold(0.0, f64::max))
            .fold(f64::INFINITY, f64::min);
        assert!((scan - e).abs() < 1e-5);
    }

    #[test]
    fn minimax_matches_divided_differences_and_alternates() {
        for k in 1..8 {
            for &kappa in &[3.0, 16.0, 100.0] {
                let nodes = extrema_nodes(k, kappa).unwrap().nodes;
                let (e, p) = finite_minimax(&nodes, k).unwrap();
                let want = divided_difference_error(&nodes);
                assert!((e - want).abs() <= 1e-8 * want, "k={k} kappa={kappa}");
                let r: Vec<f64> = nodes.iter().map(|&x| 1.0 / x - p.eval(x)).collect();
                for w in r.windows(2) {
                    assert!(w[0] * w[1] < 0.0);
                }
                for x in &r {
                    assert!((x.abs() - e).abs() <= 1e-8 * e.max(1e-300) + 1e-14);
                }
            }
        }
    }

    #[test]
    fn minimax_brute_force_small_degree() {
        use rand::{Rng, SeedableRng};
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(5);
        for k in 1..=2usize {
            let nodes = extrema_nodes(k, 10.0).unwrap().nodes;
            let (e, p) = finite_minimax(&nodes, k).unwrap();
            // no random perturbation of the optimum does better
            for _ in 0..20_000 {
                let c: Vec<f64> = p.coeffs.iter().map(|c| c + rng.random_range(-0.05..0.05)).collect();
                let q = ChebyshevPolynomial::new(p.interval, c).unwrap();
                let err = nodes.iter().map(|&x| (1.0 / x - q.eval(x)).abs()).fold(0.0, f64::max);
                assert!(err >= e * (1.0 - 1e-8));
            }
        }
    }

    #[test]
    fn minimax_monotone_in_degree() {
        let nodes = extrema_nodes(5, 40.0).unwrap().nodes;
        let es: Vec<f64> = (0..=6).map(|deg| finite_minimax(&nodes, deg).unwrap().0).collect();
        for w in es.windows(2) {
            assert!(w[1] <= w[0] * (1.0 + 1e-10) + 1e-15, "{es:?}");
        }
        assert_eq!(es[6], 0.0);
    }

    #[test]
    fn minimax_rejects_duplicates() {
        assert!(finite_minimax(&[3.0, 3.0, 1.0], 1).is_err());
    }

    #[test]
    fn minimax_order_of_magnitude() {
        // K ~ c0 √κ ln d with κ=64, d=1e4, c0=0.05
        let kappa = 64.0f64;
        let d = 1e4f64;
        let c0 = 0.05;
        let k = ((c0 * kappa.sqrt() * d.ln()).round() as usize).max(1);
        let nodes = extrema_nodes(k, kappa).unwrap().nodes;
        let (e, _) = finite_minimax(&nodes, k).unwrap();
        let bound = d.powf(-2.0 * c0) / kappa;
        assert!(e >= bound / 100.0 && e <= 1.0, "e={e} bound={bound}");
    }
}
