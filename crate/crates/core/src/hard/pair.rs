//! The moment-matched diagonal pair `D, D′`, its rotations, block-Krylov
//! transcripts, the entrywise GOE coupling and the single-sample distinguisher.

use nalgebra::{DMatrix, DVector};
use rand::Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use super::lp::{solve_moment_lp, strengthen};
use super::wishart::{sample_goe_surrogate, sample_wishart, Normalization};
use crate::error::{invalid, Result};
use crate::linalg::{gaussian_vector, haar_orthogonal};
use crate::oracle::{Diagonal, LinearOperator};
use crate::rng::{par_trials, LabRng, RngStream};
use crate::stats::{energy_test, standardize_pooled, TwoSampleTest};

/// Integer rounding with exact sum: floors, then `+1` to the largest fractional parts
/// (lower index first on ties).
pub fn round_multiplicities(x: &[f64], d: usize) -> Result<Vec<usize>> {
    let s: f64 = x.iter().sum();
    if (s - d as f64).abs() > 1e-6 * (d as f64).max(1.0) {
        return invalid(format!("entries sum to {s}, expected {d}"));
    }
    if x.iter().any(|&v| !(v >= 0.0)) {
        return invalid("entries must be non-negative");
    }
    let mut n: Vec<usize> = x.iter().map(|v| (v + 1e-9).floor() as usize).collect();
    let base: usize = n.iter().sum();
    if base > d {
        return invalid("floors already exceed d");
    }
    let mut order: Vec<usize> = (0..x.len()).collect();
    let frac = |i: usize| x[i] - n[i] as f64;
    order.sort_by(|&a, &b| frac(b).partial_cmp(&frac(a)).unwrap().then(a.cmp(&b)));
    let extra = d - base;
    if extra > x.len() {
        return invalid("rounding cannot reach d");
    }
    for &i in order.iter().take(extra) {
        n[i] += 1;
    }
    Ok(n)
}

/// `c₁ = 1/(κ^{3/2} ln⁴ d)`.
pub fn default_c1(kappa: f64, d: usize) -> f64 {
    1.0 / (kappa.powf(1.5) * (d as f64).ln().powi(4))
}

pub const DEFAULT_C0: f64 = 0.05;

/// `c₀ √κ ln d`: the largest `K` for which the lower-bound construction applies.
pub fn lp_threshold(kappa: f64, d: usize, c0: f64) -> f64 {
    c0 * kappa.sqrt() * (d as f64).ln()
}

#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
pub struct HardPairConfig {
    pub k: usize,
    pub kappa: f64,
    pub d: usize,
    pub c0: f64,
    pub c1: f64,
}

impl HardPairConfig {
    pub fn new(k: usize, kappa: f64, d: usize) -> Self {
        HardPairConfig { k, kappa, d, c0: DEFAULT_C0, c1: default_c1(kappa, d) }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct HardPair {
    pub config: HardPairConfig,
    pub nodes: Vec<f64>,
    /// Strengthened real solutions.
    pub x: Vec<f64>,
    pub x_prime: Vec<f64>,
    pub n: Vec<usize>,
    pub n_prime: Vec<usize>,
    /// Minimax error `E` (the LP optimum is `2dE`).
    pub minimax: f64,
    pub lp_objective: f64,
    pub duality_gap: f64,
    /// `tr(D⁻¹)` and `tr(D′⁻¹)`.
    pub trace: f64,
    pub trace_prime: f64,
    /// Guaranteed lower bound `c₁ d E − 2(K+2)` on the trace gap.
    pub gap_bound: f64,
}

pub fn build_hard_pair(cfg: HardPairConfig) -> Result<HardPair> {
    if !(cfg.c1 > 0.0 && cfg.c1 < 1.0) {
        return invalid("c1 must lie in (0, 1)");
    }
    let sol = solve_moment_lp(cfg.k, cfg.kappa, cfg.d)?;
    let (x, x_prime) = strengthen(&sol, cfg.c1)?;
    let n = round_multiplicities(&x, cfg.d)?;
    let n_prime = round_multiplicities(&x_prime, cfg.d)?;
    let tr = |m: &[usize]| sol.nodes.iter().zip(m).map(|(l, &c)| c as f64 / l).sum::<f64>();
    Ok(HardPair {
        config: cfg,
        trace: tr(&n),
        trace_prime: tr(&n_prime),
        gap_bound: cfg.c1 * cfg.d as f64 * sol.minimax - 2.0 * (cfg.k + 2) as f64,
        nodes: sol.nodes,
        x,
        x_prime,
        n,
        n_prime,
        minimax: sol.minimax,
        lp_objective: sol.objective,
        duality_gap: sol.duality_gap,
    })
}

impl HardPair {
    pub fn trace_gap(&self) -> f64 {
        self.trace - self.trace_prime
    }

    fn expand(&self, counts: &[usize]) -> DVector<f64> {
        DVector::from_iterator(
            self.config.d,
            self.nodes.iter().zip(counts).flat_map(|(&l, &c)| std::iter::repeat_n(l, c)),
        )
    }

    /// Diagonal of `D`.
    pub fn diag(&self) -> DVector<f64> {
        self.expand(&self.n)
    }

    pub fn diag_prime(&self) -> DVector<f64> {
        self.expand(&self.n_prime)
    }

    /// `(U, Λ = UᵀDU, Λ′ = UᵀD′U)` with one Haar rotation.
    pub fn rotate(&self, rng: &mut LabRng) -> (DMatrix<f64>, DMatrix<f64>, DMatrix<f64>) {
        let u = haar_orthogonal(self.config.d, rng);
        let conj = |diag: &DVector<f64>| {
            let mut m = u.transpose() * DMatrix::from_diagonal(diag) * &u;
            m = (&m + m.transpose()) * 0.5;
            m
        };
        let l = conj(&self.diag());
        let lp = conj(&self.diag_prime());
        (u, l, lp)
    }
}

/// `G[j][(k, l)] = ⟨z_k, Λ^j z_l⟩` for `j = 0..=depth`, symmetrized in `(k, l)`.
pub fn krylov_transcript(op: &dyn LinearOperator, seeds: &[DVector<f64>], depth: usize) -> Vec<DMatrix<f64>> {
    let k = seeds.len();
    let mut powers: Vec<Vec<DVector<f64>>> = vec![seeds.to_vec()];
    for j in 1..=depth {
        let next = powers[j - 1].iter().map(|v| op.apply(v)).collect();
        powers.push(next);
    }
    (0..=depth)
        .map(|j| {
            // split the power so both factors stay short: ⟨Λ^a z_k, Λ^b z_l⟩, a + b = j
            let a = j / 2;
            let b = j - a;
            let g = DMatrix::from_fn(k, k, |r, c| powers[a][r].dot(&powers[b][c]));
            (&g + g.transpose()) * 0.5
        })
        .collect()
}

/// Upper triangles of every slice, flattened.
pub fn gram_features(tensor: &[DMatrix<f64>]) -> Vec<f64> {
    let mut out = Vec::new();
    for g in tensor {
        for r in 0..g.nrows() {
            for c in r..g.ncols() {
                out.push(g[(r, c)]);
            }
        }
    }
    out
}

/// Energy permutation test between Gram tensors of `K` seeds at the given depth under
/// two operators.
pub fn transcript_test(
    a: &dyn LinearOperatorSync,
    b: &dyn LinearOperatorSync,
    k: usize,
    depth: usize,
    per_side: usize,
    permutations: usize,
    stream: &RngStream,
) -> Result<TwoSampleTest> {
    let d = a.dim();
    let draw = |op: &dyn LinearOperatorSync, s: &RngStream| {
        par_trials(s, per_side, |_, rng| {
            let seeds: Vec<_> = (0..k).map(|_| gaussian_vector(d, rng)).collect();
            gram_features(&krylov_transcript(op.as_op(), &seeds, depth))
        })
    };
    let mut xa = draw(a, &stream.child(0));
    let mut xb = draw(b, &stream.child(1));
    standardize_pooled(&mut xa, &mut xb);
    energy_test(&xa, &xb, permutations, &mut stream.child(2).rng())
}

/// Operators that can be shared across worker threads.
pub trait LinearOperatorSync: Sync {
    fn as_op(&self) -> &dyn LinearOperator;
    fn dim(&self) -> usize {
        self.as_op().dim()
    }
}

impl LinearOperatorSync for Diagonal {
    fn as_op(&self) -> &dyn LinearOperator {
        self
    }
}

impl LinearOperatorSync for DMatrix<f64> {
    fn as_op(&self) -> &dyn LinearOperator {
        self
    }
}

fn normal_logpdf(x: f64, mean: f64, var: f64) -> f64 {
    -0.5 * ((x - mean).powi(2) / var + (2.0 * std::f64::consts::PI * var).ln())
}

/// Maximal coupling of `N(m₁, v₁)` and `N(m₂, v₂)`; returns `(X, Y, X == Y)`.
pub fn maximal_coupling(m1: f64, v1: f64, m2: f64, v2: f64, rng: &mut LabRng) -> (f64, f64, bool) {
    let p = Normal::new(m1, v1.sqrt()).unwrap();
    let q = Normal::new(m2, v2.sqrt()).unwrap();
    let x = p.sample(rng);
    let u: f64 = rng.random();
    if u.ln() <= normal_logpdf(x, m2, v2) - normal_logpdf(x, m1, v1) {
        return (x, x, true);
    }
    loop {
        let y = q.sample(rng);
        let w: f64 = rng.random();
        // accept from the residual (q − p)₊
        let r = (normal_logpdf(y, m1, v1) - normal_logpdf(y, m2, v2)).exp();
        if w > r.min(1.0) {
            return (x, y, false);
        }
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct CouplingReport {
    pub k: usize,
    pub trials: usize,
    pub successes: usize,
    pub rate: f64,
}

/// Entrywise maximal coupling of `N_i I + √(2N_i) GOE` with `N′_i I + √(2N′_i) GOE + s_i I`
/// over all blocks; a trial succeeds when every entry of every block coincides.
pub fn goe_coupling_experiment(
    k: usize,
    counts: &[(usize, usize)],
    shifts: &[f64],
    trials: usize,
    stream: &RngStream,
) -> Result<CouplingReport> {
    if counts.len() != shifts.len() {
        return invalid("one shift per block");
    }
    if counts.iter().any(|&(a, b)| a < k * k || b < k * k) {
        return invalid("multiplicities must be at least K²");
    }
    let ok = par_trials(stream, trials, |_, rng| {
        let mut all = true;
        for (&(n, np), &s) in counts.iter().zip(shifts) {
            let (n, np) = (n as f64, np as f64);
            for r in 0..k {
                for c in r..k {
                    let coupled = if r == c {
                        maximal_coupling(n, 2.0 * n, np + s, 2.0 * np, rng).2
                    } else {
                        maximal_coupling(0.0, n, 0.0, np, rng).2
                    };
                    all &= coupled;
                }
            }
        }
        all
    });
    let successes = ok.iter().filter(|&&b| b).count();
    Ok(CouplingReport { k, trials, successes, rate: successes as f64 / trials.max(1) as f64 })
}

/// Coupling experiment for a built pair.
pub fn pair_coupling(pair: &HardPair, trials: usize, stream: &RngStream) -> Result<CouplingReport> {
    let counts: Vec<_> = pair.n.iter().cloned().zip(pair.n_prime.iter().cloned()).collect();
    let shifts: Vec<_> = pair.x.iter().zip(&pair.x_prime).map(|(a, b)| a - b).collect();
    goe_coupling_experiment(pair.config.k, &counts, &shifts, trials, stream)
}

/// Held-out accuracy minus ½ of a threshold classifier separating `Wishart(K, N)` from its
/// GOE surrogate through the diagonal log-likelihood ratio `Σ_i log χ²_N(W_ii) − log N(N, 2N)(W_ii)`
/// (additive constants dropped).
pub fn wishart_goe_advantage(k: usize, n: usize, per_class: usize, stream: &RngStream) -> f64 {
    let nf = n as f64;
    let feat = |w: &DMatrix<f64>| {
        (0..k)
            .map(|i| {
                let x = w[(i, i)];
                if x <= 0.0 {
                    return f64::NEG_INFINITY;
                }
                (0.5 * nf - 1.0) * x.ln() - 0.5 * x + (x - nf).powi(2) / (4.0 * nf)
            })
            .sum::<f64>()
    };
    let wis = par_trials(&stream.child(0), 2 * per_class, |_, rng| feat(&sample_wishart(k, n, Normalization::Standard, rng)));
    let goe = par_trials(&stream.child(1), 2 * per_class, |_, rng| feat(&sample_goe_surrogate(k, n, rng)));
    // medians: a non-positive GOE diagonal gives an infinite feature
    let median = |v: &[f64]| {
        let mut v = v.to_vec();
        v.sort_by(|a, b| a.partial_cmp(b).unwrap());
        v[v.len() / 2]
    };
    let (mw, mg) = (median(&wis[..per_class]), median(&goe[..per_class]));
    let thr = 0.5 * (mw + mg);
    let wis_side = |f: f64| (f > thr) == (mw > mg);
    let correct = wis[per_class..].iter().filter(|&&f| wis_side(f)).count()
        + goe[per_class..].iter().filter(|&&f| !wis_side(f)).count();
    correct as f64 / (2 * per_class) as f64 - 0.5
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub enum Label {
    A,
    B,
}

/// `A` iff `‖x‖²` is at least as close to `trA` as to `trB`.
pub fn single_sample_distinguisher(norm2: f64, tr_a: f64, tr_b: f64) -> Result<Label> {
    if tr_a == tr_b {
        return invalid("traces must differ");
    }
    Ok(if (norm2 - tr_a).abs() <= (norm2 - tr_b).abs() { Label::A } else { Label::B })
}

#[derive(Debug, Clone, Serialize)]
pub struct DistinguishReport {
    pub trials: usize,
    pub correct: usize,
    pub accuracy: f64,
    pub trace: f64,
    pub trace_prime: f64,
}

/// One exact sample per trial from `N(0, D⁻¹)` or `N(0, D′⁻¹)` (alternating), classified by
/// `‖X‖²`; the norm is rotation invariant so the diagonal form suffices.
pub fn distinguisher_experiment(pair: &HardPair, trials: usize, stream: &RngStream) -> Result<DistinguishReport> {
    let (da, db) = (pair.diag(), pair.diag_prime());
    let (ta, tb) = (pair.trace, pair.trace_prime);
    let res = par_trials(stream, trials, |i, rng| -> Result<bool> {
        let (diag, truth) = if i % 2 == 0 { (&da, Label::A) } else { (&db, Label::B) };
        let g = gaussian_vector(diag.len(), rng);
        let n2: f64 = g.iter().zip(diag.iter()).map(|(g, l)| g * g / l).sum();
        if ta == tb {
            // identical laws: fall back to the tie rule
            return Ok(truth == Label::A);
        }
        Ok(single_sample_distinguisher(n2, ta, tb)? == truth)
    });
    let correct = res.into_iter().collect::<Result<Vec<_>>>()?.into_iter().filter(|&b| b).count();
    Ok(DistinguishReport { trials, correct, accuracy: correct as f64 / trials.max(1) as f64, trace: ta, trace_prime: tb })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::linalg::sym_eigenvalues;

    #[test]
    fn rounding_examples() {
        assert_eq!(round_multiplicities(&[3.4, 2.6, 4.0], 10).unwrap(), vec![3, 3, 4]);
        assert_eq!(round_multiplicities(&[2.0, 5.0, 3.0], 10).unwrap(), vec![2, 5, 3]);
        assert_eq!(round_multiplicities(&[1.5, 1.5], 3).unwrap(), vec![2, 1]);
        assert!(round_multiplicities(&[1.0, 1.0], 3).is_err());
    }

    proptest::proptest! {
        #[test]
        fn rounding_is_within_one(v in proptest::collection::vec(0.0f64..50.0, 1..8)) {
            let s: f64 = v.iter().sum();
            let d = s.round() as usize;
            let scale = d as f64 / s.max(1e-9);
            let x: Vec<f64> = v.iter().map(|a| a * scale).collect();
            if d > 0 {
                let n = round_multiplicities(&x, d).unwrap();
                proptest::prop_assert_eq!(n.iter().sum::<usize>(), d);
                for (a, b) in x.iter().zip(&n) {
                    proptest::prop_assert!((*b as f64 - a).abs() < 1.0);
                }
            }
        }
    }

    #[test]
    fn pair_invariants() {
        let cfg = HardPairConfig { k: 3, kappa: 16.0, d: 600, c0: DEFAULT_C0, c1: 0.2 };
        let p = build_hard_pair(cfg).unwrap();
        assert_eq!(p.n.iter().sum::<usize>(), 600);
        assert_eq!(p.n_prime.iter().sum::<usize>(), 600);
        for j in 0..=3 {
            let a: f64 = p.nodes.iter().zip(&p.n).map(|(l, &c)| c as f64 * l.powi(j)).sum();
            let b: f64 = p.nodes.iter().zip(&p.n_prime).map(|(l, &c)| c as f64 * l.powi(j)).sum();
            assert!((a - b).abs() <= 5.0 * 16f64.powi(j));
            let xa: f64 = p.nodes.iter().zip(&p.x).map(|(l, c)| c * l.powi(j)).sum();
            let xb: f64 = p.nodes.iter().zip(&p.x_prime).map(|(l, c)| c * l.powi(j)).sum();
            assert!((xa - xb).abs() <= 1e-6 * 600.0 * 16f64.powi(j));
        }
        assert!(p.trace_gap() >= p.gap_bound);
        let mut rng = RngStream::new(1).rng();
        let small = build_hard_pair(HardPairConfig { d: 40, ..cfg }).unwrap();
        let (u, l, lp) = small.rotate(&mut rng);
        assert!((u.transpose() * &u - DMatrix::identity(40, 40)).amax() < 1e-12);
        let mut want: Vec<f64> = small.diag().iter().cloned().collect();
        want.sort_by(|a, b| a.partial_cmp(b).unwrap());
        let got = sym_eigenvalues(&l);
        assert!(want.iter().zip(&got).all(|(a, b)| (a - b).abs() < 1e-8));
        let ev = sym_eigenvalues(&lp);
        assert!(ev[0] > 1.0 - 1e-8 && ev[39] < 16.0 + 1e-8);
    }

    #[test]
    fn transcript_identities() {
        let mut rng = RngStream::new(2).rng();
        let seeds: Vec<_> = (0..3).map(|_| gaussian_vector(10, &mut rng)).collect();
        let id = DMatrix::<f64>::identity(10, 10);
        let t = krylov_transcript(&id, &seeds, 3);
        for j in 1..=3 {
            assert!((&t[j] - &t[0]).amax() < 1e-12);
        }
        let g0 = DMatrix::from_fn(3, 3, |a, b| seeds[a].dot(&seeds[b]));
        assert!((&t[0] - g0).amax() < 1e-12);
        let m = crate::linalg::gaussian_matrix(10, 10, &mut rng);
        let lam = &m * m.transpose();
        let t = krylov_transcript(&lam, &seeds, 2);
        for a in 0..3 {
            for b in 0..3 {
                let direct = (&lam * &seeds[a]).dot(&(&lam * &seeds[b]));
                assert!((t[2][(a, b)] - direct).abs() <= 1e-8 * direct.abs().max(1.0));
                assert_eq!(t[2][(a, b)], t[2][(b, a)]);
            }
        }
        assert_eq!(gram_features(&t).len(), 3 * 6);
    }

    #[test]
    fn coupling_with_identical_laws_always_succeeds() {
        let r = goe_coupling_experiment(3, &[(20, 20), (30, 30)], &[0.0, 0.0], 500, &RngStream::new(3)).unwrap();
        assert_eq!(r.successes, 500);
        assert!(goe_coupling_experiment(3, &[(5, 20)], &[0.0], 10, &RngStream::new(3)).is_err());
    }

    #[test]
    fn maximal_coupling_rate_matches_tv() {
        // TV between N(0,1) and N(0.5,1) is 2Φ(0.25) − 1
        let s = RngStream::new(4);
        let out = par_trials(&s, 40_000, |_, rng| maximal_coupling(0.0, 1.0, 0.5, 1.0, rng));
        let rate = out.iter().filter(|o| o.2).count() as f64 / 40_000.0;
        let tv = 0.19741265136584707;
        assert!((rate - (1.0 - tv)).abs() < 5.0 * (0.2f64 * 0.8 / 40_000.0).sqrt(), "{rate}");
        // the Y marginal is N(0.5, 1)
        let my = out.iter().map(|o| o.1).sum::<f64>() / 40_000.0;
        assert!((my - 0.5).abs() < 5.0 * (1.0f64 / 40_000.0).sqrt());
    }

    #[test]
    fn coupling_failure_grows_with_c1() {
        let s = RngStream::new(5);
        let mut rates = Vec::new();
        for c1 in [0.001, 0.01, 0.1] {
            let p = build_hard_pair(HardPairConfig { k: 2, kappa: 16.0, d: 4096, c0: DEFAULT_C0, c1 }).unwrap();
            rates.push(pair_coupling(&p, 4000, &s).unwrap().rate);
        }
        assert!(rates[0] >= rates[1] && rates[1] > rates[2], "{rates:?}");
    }

    #[test]
    fn wishart_goe_advantage_shrinks() {
        let s = RngStream::new(6);
        let a: Vec<f64> = [30, 300, 3000].iter().map(|&n| wishart_goe_advantage(3, n, 20_000, &s.child(n as u64))).collect();
        eprintln!("advantage {a:?}");
        assert!(a[0] > a[2] && a[0] > 0.05, "{a:?}");
        assert!(a[2] < 0.03, "{a:?}");
    }

    #[test]
    fn distinguisher_rules() {
        assert_eq!(single_sample_distinguisher(10.0, 10.0, 20.0).unwrap(), Label::A);
        assert_eq!(single_sample_distinguisher(15.0, 10.0, 20.0).unwrap(), Label::A);
        assert_eq!(single_sample_distinguisher(16.0, 10.0, 20.0).unwrap(), Label::B);
        assert!(single_sample_distinguisher(1.0, 2.0, 2.0).is_err());
    }
}
