//! Sampling in fixed low dimension: ellipsoid rounding of the unit sublevel
//! set from first-order queries, then rejection from a dilated ellipsoid.

use nalgebra::{DMatrix, DVector};
use rand::Rng;
use rand_distr::StandardNormal;

use crate::error::{invalid, LabError, Result};
use crate::linalg::cholesky_lower;
use crate::oracle::{FirstOrderOracle, Potential};
use crate::quad::gauss_legendre;
use crate::rng::{par_trials, LabRng, RngStream};

/// Query budget constant of the rounding phase.
pub const C_ITER: f64 = 8.0;

/// Proposal budget of one rejection run.
pub const PROPOSAL_BUDGET: usize = 100_000_000;

/// `{x : (x − z)ᵀ A (x − z) ≤ 1}`, stored with a factor `L`, `LLᵀ = A⁻¹`.
#[derive(Debug, Clone, PartialEq)]
pub struct Ellipsoid {
    pub center: DVector<f64>,
    pub shape: DMatrix<f64>,
    factor: DMatrix<f64>,
}

impl Ellipsoid {
    /// Builds the ellipsoid from `P = A⁻¹`.
    pub fn from_inverse_shape(center: DVector<f64>, p: &DMatrix<f64>) -> Result<Self> {
        if p.nrows() != center.len() || p.ncols() != center.len() {
            return Err(LabError::DimensionMismatch { expected: center.len(), got: p.nrows() });
        }
        let sym = (p + p.transpose()) * 0.5;
        let factor = cholesky_lower(&sym, 0.0)?;
        let d = center.len();
        let linv = factor
            .solve_lower_triangular(&DMatrix::identity(d, d))
            .ok_or_else(|| LabError::Numerical("singular ellipsoid".into()))?;
        let shape = linv.transpose() * linv;
        Ok(Ellipsoid { center, shape, factor })
    }

    pub fn ball(center: DVector<f64>, radius: f64) -> Result<Self> {
        let d = center.len();
        Self::from_inverse_shape(center, &(DMatrix::identity(d, d) * (radius * radius)))
    }

    pub fn dim(&self) -> usize {
        self.center.len()
    }

    /// `P = A⁻¹`.
    pub fn inverse_shape(&self) -> DMatrix<f64> {
        &self.factor * self.factor.transpose()
    }

    pub fn factor(&self) -> &DMatrix<f64> {
        &self.factor
    }

    /// `(x − z)ᵀ A (x − z)`.
    pub fn mahalanobis(&self, x: &DVector<f64>) -> f64 {
        let c = x - &self.center;
        c.dot(&(&self.shape * &c))
    }

    pub fn contains(&self, x: &DVector<f64>) -> bool {
        self.mahalanobis(x) <= 1.0
    }

    /// Dilation by `s` about the center.
    pub fn dilate(&self, s: f64) -> Ellipsoid {
        Ellipsoid {
            center: self.center.clone(),
            shape: &self.shape / (s * s),
            factor: &self.factor * s,
        }
    }

    /// `z + L u` for a unit vector `u`.
    pub fn boundary_point(&self, u: &DVector<f64>) -> DVector<f64> {
        &self.center + &self.factor * u
    }

    /// `ln vol(E)` relative to the unit ball.
    pub fn log_volume_ratio(&self) -> f64 {
        self.factor.diagonal().iter().map(|x| x.ln()).sum()
    }
}

/// Draws a point uniformly from `E`.
pub fn uniform_in_ellipsoid(e: &Ellipsoid, rng: &mut LabRng) -> DVector<f64> {
    let d = e.dim();
    let mut buf = vec![0.0; d];
    uniform_into(&e.center, &e.factor, 1.0, rng, &mut buf);
    DVector::from_vec(buf)
}

fn uniform_into(center: &DVector<f64>, factor: &DMatrix<f64>, scale: f64, rng: &mut LabRng, out: &mut [f64]) {
    let d = out.len();
    let mut u = [0.0f64; 16];
    assert!(d <= 16, "dimension above 16");
    let u = &mut u[..d];
    let mut norm = 0.0;
    for v in u.iter_mut() {
        *v = rng.sample::<f64, _>(StandardNormal);
        norm += *v * *v;
    }
    let w: f64 = rng.random();
    let radial = if d == 2 { w.sqrt() } else { w.powf(1.0 / d as f64) };
    let r = radial * scale / norm.sqrt();
    for i in 0..d {
        let mut s = 0.0;
        for j in 0..=i {
            s += factor[(i, j)] * u[j];
        }
        out[i] = center[i] + r * s;
    }
}

/// Answer of the sublevel-set oracle.
#[derive(Debug, Clone, PartialEq)]
pub enum Membership {
    In,
    /// Outside; `V` exceeds the level on the halfspace `⟨g, x′ − x⟩ ≥ 0`.
    Out(Vec<f64>),
}

/// Membership and separation for `{V ≤ 1}` built on first-order queries.
pub struct SublevelOracle<'a> {
    pub inner: FirstOrderOracle<'a>,
    pub level: f64,
}

impl<'a> SublevelOracle<'a> {
    pub fn new(inner: FirstOrderOracle<'a>) -> Self {
        SublevelOracle { inner, level: 1.0 }
    }

    /// One first-order query.
    pub fn membership_separation(&mut self, x: &[f64]) -> Result<Membership> {
        let (v, g) = self.inner.evaluate(x)?;
        if v <= self.level {
            Ok(Membership::In)
        } else {
            Ok(Membership::Out(g))
        }
    }

    pub fn query_count(&self) -> usize {
        self.inner.query_count()
    }
}

/// Output of the rounding phase.
#[derive(Debug, Clone)]
pub struct Rounding {
    /// Certified inside the sublevel set.
    pub inner: Ellipsoid,
    /// Certified to contain the sublevel set.
    pub outer: Ellipsoid,
    /// Ratio of the outer to the inner ellipsoid, `(d+1)√d`.
    pub dilation: f64,
    pub queries: usize,
    pub iterations: usize,
}

/// Query ceiling `C_ITER · d² (d+1) (ln(R/r) + 1)` of the rounding phase.
pub fn rounding_budget(d: usize, kappa: f64) -> usize {
    let df = d as f64;
    let log_ratio = 0.5 * kappa.max(1.0).ln();
    (C_ITER * df * df * (df + 1.0) * (log_ratio + 1.0)).ceil() as usize
}

/// Ellipsoid method on `{V ≤ 1}` for a 1-strongly convex, κ-smooth `V` minimized at 0.
///
/// Each step queries the center; if the center is inside, the `2d` points
/// `z ± a_i/(d+1)` on the scaled semi-axes are queried. A point outside
/// yields a (possibly shallow) cut; when all are inside, their convex hull
/// certifies `E/((d+1)√d) ⊆ {V ≤ 1} ⊆ E`.
pub fn ellipsoid_round(oracle: &mut SublevelOracle, d: usize, kappa: f64) -> Result<Rounding> {
    if d < 2 {
        return invalid("ellipsoid rounding needs d >= 2");
    }
    if oracle.inner.dimension() != d {
        return Err(LabError::DimensionMismatch { expected: d, got: oracle.inner.dimension() });
    }
    let df = d as f64;
    let start = oracle.query_count();
    let budget = rounding_budget(d, kappa);
    let mut z = DVector::<f64>::zeros(d);
    let mut p = DMatrix::<f64>::identity(d, d) * 2.0;
    let mut iterations = 0;
    loop {
        if oracle.query_count() - start > budget {
            return Err(LabError::BudgetExceeded(format!(
                "rounding used more than {budget} queries; is V 1-strongly convex and κ-smooth?"
            )));
        }
        iterations += 1;
        let cut = match oracle.membership_separation(z.as_slice())? {
            Membership::Out(g) => Some((DVector::from_vec(g), 0.0)),
            Membership::In => {
                let eig = p.clone().symmetric_eigen();
                let mut found = None;
                'axes: for i in 0..d {
                    let axis = eig.eigenvectors.column(i) * (eig.eigenvalues[i].max(0.0).sqrt() / (df + 1.0));
                    for sign in [1.0, -1.0] {
                        let q = &z + &axis * sign;
                        if let Membership::Out(g) = oracle.membership_separation(q.as_slice())? {
                            let g = DVector::from_vec(g);
                            let gpg = g.dot(&(&p * &g)).sqrt();
                            let alpha = -g.dot(&(&q - &z)) / gpg;
                            found = Some((g, alpha));
                            break 'axes;
                        }
                    }
                }
                found
            }
        };
        let Some((g, alpha)) = cut else {
            let outer = Ellipsoid::from_inverse_shape(z.clone(), &p)?;
            let dilation = (df + 1.0) * df.sqrt();
            return Ok(Rounding {
                inner: outer.dilate(1.0 / dilation),
                outer,
                dilation,
                queries: oracle.query_count() - start,
                iterations,
            });
        };
        let gpg = g.dot(&(&p * &g));
        if !(gpg > 0.0) {
            return Err(LabError::Degenerate("zero separating direction".into()));
        }
        if alpha >= 1.0 {
            return Err(LabError::Degenerate("cut leaves an empty ellipsoid".into()));
        }
        let b = &p * &g / gpg.sqrt();
        let step = (1.0 + df * alpha) / (df + 1.0);
        z -= &b * step;
        let shrink = df * df * (1.0 - alpha * alpha) / (df * df - 1.0);
        let tau = 2.0 * (1.0 + df * alpha) / ((df + 1.0) * (1.0 + alpha));
        p = (&p - &b * b.transpose() * tau) * shrink;
        p = (&p + p.transpose()) * 0.5;
    }
}

/// `t = ⌈4(d ln d + ln(1/ε)) + 8⌉`.
pub fn rejection_radius(d: usize, eps: f64) -> f64 {
    let df = d as f64;
    (4.0 * (df * df.ln() + (1.0 / eps).ln()) + 8.0).ceil()
}

/// Rejection sampling from `tE′`; returns the accepted point and the number of proposals.
pub fn rejection_sample(
    oracle: &mut FirstOrderOracle,
    outer: &Ellipsoid,
    eps: f64,
    rng: &mut LabRng,
) -> Result<(DVector<f64>, usize)> {
    let d = outer.dim();
    if oracle.dimension() != d {
        return Err(LabError::DimensionMismatch { expected: d, got: oracle.dimension() });
    }
    if !(eps > 0.0 && eps < 1.0) {
        return invalid(format!("eps must lie in (0,1), got {eps}"));
    }
    let t = rejection_radius(d, eps);
    let mut x = vec![0.0; d];
    for n in 1..=PROPOSAL_BUDGET {
        uniform_into(&outer.center, &outer.factor, t, rng, &mut x);
        let v = oracle.evaluate_value(&x)?;
        // accept with probability exp(-V)
        let u: f64 = rng.random();
        if v < 745.0 && u < (-v).exp() {
            return Ok((DVector::from_vec(x), n));
        }
    }
    Err(LabError::BudgetExceeded(format!("no acceptance in {PROPOSAL_BUDGET} proposals")))
}

/// One sampler run: rounding plus a single rejection sample.
#[derive(Debug, Clone)]
pub struct LowdimRun {
    pub rounding_queries: usize,
    pub proposals: usize,
    pub sample: DVector<f64>,
}

impl LowdimRun {
    pub fn total_queries(&self) -> usize {
        self.rounding_queries + self.proposals
    }
}

/// Rounds once, then draws `n` independent samples in parallel.
pub fn sample_many<P: Potential>(
    potential: &P,
    kappa: f64,
    eps: f64,
    n: usize,
    stream: &RngStream,
) -> Result<(Rounding, Vec<(DVector<f64>, usize)>)> {
    let d = potential.dim();
    let mut so = SublevelOracle::new(FirstOrderOracle::new(potential).without_log());
    let rounding = ellipsoid_round(&mut so, d, kappa)?;
    let outer = rounding.outer.clone();
    let draws = par_trials(stream, n, |_, rng| {
        let mut o = FirstOrderOracle::new(potential).without_log();
        rejection_sample(&mut o, &outer, eps, rng)
    });
    let samples = draws.into_iter().collect::<Result<Vec<_>>>()?;
    Ok((rounding, samples))
}

/// Regular grid of `bins × bins` cells over a box; points outside fall into edge cells.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Grid2 {
    pub lo: [f64; 2],
    pub hi: [f64; 2],
    pub bins: usize,
}

impl Grid2 {
    fn axis_index(&self, k: usize, v: f64) -> usize {
        let f = (v - self.lo[k]) / (self.hi[k] - self.lo[k]) * self.bins as f64;
        if f < 0.0 {
            0
        } else {
            (f as usize).min(self.bins - 1)
        }
    }

    pub fn index(&self, x: &[f64]) -> usize {
        self.axis_index(0, x[0]) * self.bins + self.axis_index(1, x[1])
    }

    /// Cell edges along an axis; edge cells reach `pad` widths beyond the box.
    fn edges(&self, k: usize, pad: f64) -> Vec<f64> {
        let w = self.hi[k] - self.lo[k];
        let mut e: Vec<f64> = (0..=self.bins).map(|i| self.lo[k] + w * i as f64 / self.bins as f64).collect();
        e[0] -= pad * w;
        e[self.bins] += pad * w;
        e
    }

    pub fn histogram(&self, samples: &[DVector<f64>]) -> Vec<f64> {
        let mut h = vec![0.0; self.bins * self.bins];
        for s in samples {
            h[self.index(s.as_slice())] += 1.0;
        }
        let n = samples.len() as f64;
        h.iter_mut().for_each(|v| *v /= n);
        h
    }
}

/// Cell probabilities of the density `∝ exp(−V)` by tensor Gauss–Legendre quadrature.
pub fn reference_cell_probs<P: Potential + ?Sized>(potential: &P, grid: &Grid2) -> Vec<f64> {
    let rule = gauss_legendre(12);
    let e0 = grid.edges(0, 1.0);
    let e1 = grid.edges(1, 1.0);
    let mut probs = vec![0.0; grid.bins * grid.bins];
    for i in 0..grid.bins {
        for j in 0..grid.bins {
            // edge cells span a wider range, so split them into panels
            let panels_i = if i == 0 || i + 1 == grid.bins { 8 } else { 1 };
            let panels_j = if j == 0 || j + 1 == grid.bins { 8 } else { 1 };
            let mut s = 0.0;
            for pi in 0..panels_i {
                let a0 = e0[i] + (e0[i + 1] - e0[i]) * pi as f64 / panels_i as f64;
                let b0 = e0[i] + (e0[i + 1] - e0[i]) * (pi + 1) as f64 / panels_i as f64;
                for pj in 0..panels_j {
                    let a1 = e1[j] + (e1[j + 1] - e1[j]) * pj as f64 / panels_j as f64;
                    let b1 = e1[j] + (e1[j + 1] - e1[j]) * (pj + 1) as f64 / panels_j as f64;
                    let (h0, m0) = (0.5 * (b0 - a0), 0.5 * (a0 + b0));
                    let (h1, m1) = (0.5 * (b1 - a1), 0.5 * (a1 + b1));
                    for (x, wx) in rule.0.iter().zip(&rule.1) {
                        for (y, wy) in rule.0.iter().zip(&rule.1) {
                            let p = [m0 + h0 * x, m1 + h1 * y];
                            s += wx * wy * h0 * h1 * (-potential.value(&p)).exp();
                        }
                    }
                }
            }
            probs[i * grid.bins + j] = s;
        }
    }
    let total: f64 = probs.iter().sum();
    probs.iter_mut().for_each(|v| *v /= total);
    probs
}

/// Total variation between two discrete laws.
pub fn tv(p: &[f64], q: &[f64]) -> f64 {
    0.5 * p.iter().zip(q).map(|(a, b)| (a - b).abs()).sum::<f64>()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::oracle::QuadraticPotential;

    fn quad(diag: &[f64]) -> QuadraticPotential {
        QuadraticPotential::diagonal(diag).unwrap()
    }

    #[test]
    fn membership_examples() {
        let v = quad(&[1.0, 1.0]);
        let mut o = SublevelOracle::new(FirstOrderOracle::new(&v));
        assert_eq!(o.membership_separation(&[0.0, 0.0]).unwrap(), Membership::In);
        assert_eq!(o.membership_separation(&[2.0, 0.0]).unwrap(), Membership::Out(vec![2.0, 0.0]));
        assert_eq!(o.query_count(), 2);
        // the ball of radius √(2/κ) is inside for a κ-smooth V
        let kappa: f64 = 40.0;
        let v = quad(&[1.0, kappa]);
        let mut o = SublevelOracle::new(FirstOrderOracle::new(&v));
        let r = (2.0 / kappa).sqrt();
        for k in 0..64 {
            let a = k as f64 * std::f64::consts::TAU / 64.0;
            assert_eq!(o.membership_separation(&[r * a.cos(), r * a.sin()]).unwrap(), Membership::In);
        }
    }

    #[test]
    fn rounding_isotropic() {
        let v = quad(&[1.0, 1.0]);
        let mut o = SublevelOracle::new(FirstOrderOracle::new(&v));
        let r = ellipsoid_round(&mut o, 2, 1.0).unwrap();
        // unit ball of V is the disc of radius √2
        let s2 = 2f64.sqrt();
        let bound = r.dilation * s2;
        for k in 0..1000 {
            let a = k as f64 * std::f64::consts::TAU / 1000.0;
            let u = DVector::from_vec(vec![a.cos(), a.sin()]);
            assert!(r.outer.contains(&(&u * s2 * (1.0 - 1e-12))));
            let p = r.inner.boundary_point(&u);
            assert!(v.value(p.as_slice()) <= 1.0 + 1e-12);
            assert!(r.outer.boundary_point(&u).norm() <= bound * (1.0 + 1e-12));
        }
    }

    #[test]
    fn rounding_ill_conditioned() {
        let v = quad(&[1.0, 100.0]);
        let mut o = SublevelOracle::new(FirstOrderOracle::new(&v));
        let r = ellipsoid_round(&mut o, 2, 100.0).unwrap();
        assert_eq!(r.queries, o.query_count());
        assert!(r.queries <= rounding_budget(2, 100.0));
        for k in 0..1000 {
            let a = k as f64 * std::f64::consts::TAU / 1000.0;
            let u = DVector::from_vec(vec![a.cos(), a.sin()]);
            assert!(v.value(r.inner.boundary_point(&u).as_slice()) <= 1.0 + 1e-12);
            // points on the level set are inside the outer ellipsoid
            let x = DVector::from_vec(vec![2f64.sqrt() * a.cos(), (2.0 / 100.0f64).sqrt() * a.sin()]);
            assert!(r.outer.mahalanobis(&x) <= 1.0 + 1e-9);
        }
    }

    #[test]
    fn rounding_count_grows_with_log_kappa() {
        let mut counts = vec![];
        for &k in &[10.0, 1e2, 1e3, 1e4] {
            let v = quad(&[1.0, k]);
            let mut o = SublevelOracle::new(FirstOrderOracle::new(&v));
            let r = ellipsoid_round(&mut o, 2, k).unwrap();
            counts.push(r.queries as f64);
        }
        let x: Vec<f64> = [10.0f64, 1e2, 1e3, 1e4].iter().map(|k| k.ln()).collect();
        let fit = crate::stats::linear_fit(&x, &counts).unwrap();
        assert!(fit.slope > 0.0, "{counts:?}");
        for (c, lx) in counts.iter().zip(&x) {
            assert!(c / lx < 60.0, "{counts:?}");
        }
    }

    #[test]
    fn radius_formula() {
        assert_eq!(rejection_radius(2, 0.01), 32.0);
    }

    #[test]
    fn uniform_ball_area_ratio() {
        let e = Ellipsoid::ball(DVector::zeros(2), 1.0).unwrap();
        let mut rng = RngStream::new(4).rng();
        let n = 100_000;
        let inside = (0..n).filter(|_| uniform_in_ellipsoid(&e, &mut rng).norm() <= 0.5).count();
        let p = inside as f64 / n as f64;
        let se = (0.25f64 * 0.75 / n as f64).sqrt();
        assert!((p - 0.25).abs() <= 5.0 * se);
    }

    #[test]
    fn uniform_mean_and_dilation() {
        let p = DMatrix::from_row_slice(2, 2, &[3.0, 1.0, 1.0, 2.0]);
        let e = Ellipsoid::from_inverse_shape(DVector::from_vec(vec![1.0, -2.0]), &p).unwrap();
        let big = e.dilate(3.0);
        let n = 50_000;
        let mut ra = RngStream::new(9).rng();
        let mut rb = RngStream::new(9).rng();
        let mut mean = DVector::zeros(2);
        for _ in 0..n {
            let a = uniform_in_ellipsoid(&e, &mut ra);
            let b = uniform_in_ellipsoid(&big, &mut rb);
            assert!((e.mahalanobis(&a) - big.mahalanobis(&b)).abs() < 1e-9);
            mean += a;
        }
        mean /= n as f64;
        // uniform on an ellipse: coordinate variance P_ii / 4
        for i in 0..2 {
            let se = (p[(i, i)] / 4.0 / n as f64).sqrt();
            assert!((mean[i] - e.center[i]).abs() <= 5.0 * se);
        }
    }

    #[test]
    fn acceptance_inside_inner_is_at_least_inverse_e() {
        let v = quad(&[1.0, 30.0]);
        let mut o = SublevelOracle::new(FirstOrderOracle::new(&v));
        let r = ellipsoid_round(&mut o, 2, 30.0).unwrap();
        let mut rng = RngStream::new(1).rng();
        for _ in 0..2000 {
            let x = uniform_in_ellipsoid(&r.inner, &mut rng);
            assert!((-v.value(x.as_slice())).exp() >= (-1f64).exp());
        }
    }

    #[test]
    fn tv_of_identical_laws_is_zero() {
        assert_eq!(tv(&[0.2, 0.8], &[0.2, 0.8]), 0.0);
        assert!((tv(&[1.0, 0.0], &[0.0, 1.0]) - 1.0).abs() < 1e-15);
    }

    #[test]
    fn reference_probs_match_product_normal() {
        // for diagonal quadratics the cell masses factor into 1D normal masses
        let v = quad(&[1.0, 4.0]);
        let grid = Grid2 { lo: [-3.0, -1.5], hi: [3.0, 1.5], bins: 6 };
        let probs = reference_cell_probs(&v, &grid);
        let cdf = |x: f64, s: f64| 0.5 * (1.0 + erf(x / (s * 2f64.sqrt())));
        let mass = |a: f64, b: f64, s: f64| cdf(b, s) - cdf(a, s);
        let edges = |lo: f64, hi: f64| -> Vec<f64> {
            let mut e: Vec<f64> = (0..=6).map(|i| lo + (hi - lo) * i as f64 / 6.0).collect();
            e[0] = f64::NEG_INFINITY;
            e[6] = f64::INFINITY;
            e
        };
        let (ex, ey) = (edges(-3.0, 3.0), edges(-1.5, 1.5));
        for i in 0..6 {
            for j in 0..6 {
                let want = mass(ex[i], ex[i + 1], 1.0) * mass(ey[j], ey[j + 1], 0.5);
                assert!((probs[i * 6 + j] - want).abs() < 1e-6, "{i} {j}");
            }
        }
    }

    /// Abramowitz–Stegun 7.1.26 is too coarse here; use a series/continued fraction.
    fn erf(x: f64) -> f64 {
        if x < 0.0 {
            return -erf(-x);
        }
        if x < 3.0 {
            let mut term = x;
            let mut sum = x;
            for n in 1..200 {
                term *= -x * x / n as f64;
                sum += term / (2 * n + 1) as f64;
            }
            sum * 2.0 / std::f64::consts::PI.sqrt()
        } else {
            // continued fraction for erfc
            let mut f = 0.0;
            for n in (1..60).rev() {
                f = n as f64 / 2.0 / (x + f);
            }
            1.0 - (-x * x).exp() / std::f64::consts::PI.sqrt() / (x + f)
        }
    }
}
