//! The branching planar family of piecewise-linear convex potentials whose
//! zero sets hide the bits of `b` at matching scales, with its structural
//! checks, a bit-revelation oracle and leakage experiments.

use rand::Rng;
use serde::Serialize;

use crate::error::{invalid, LabError, Result};
use crate::oracle::Potential;
use crate::quad::gauss_legendre;
use crate::rng::{par_trials, LabRng, RngStream};

pub mod checks;

/// Exact `2^e`.
pub fn pow2(e: i32) -> f64 {
    debug_assert!((-1022..=1023).contains(&e));
    f64::from_bits(((e + 1023) as u64) << 52)
}

/// Width constant of the coincidence region for the unmollified potential.
pub const P3_MARGIN: f64 = 100.0;
/// Width constant used once mollification is accounted for.
pub const LEAK_MARGIN: f64 = 200.0;
/// Largest `ℓ` examined by the leak oracle.
pub const LEAK_MAX_ELL: usize = 64;

/// A bit string `b_1 … b_N` with dyadic prefixes `[b]_ℓ = Σ_{i≤ℓ} b_i 2^{-(i+2)}`.
#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize)]
pub struct BitString {
    bits: Vec<u8>,
}

impl BitString {
    pub fn new(bits: Vec<u8>) -> Result<Self> {
        if bits.is_empty() || bits.len() > 50 {
            return invalid(format!("bit strings need 1..=50 bits, got {}", bits.len()));
        }
        if bits.iter().any(|&b| b > 1) {
            return invalid("bits must be 0 or 1");
        }
        Ok(BitString { bits })
    }

    pub fn parse(s: &str) -> Result<Self> {
        let bits = s
            .chars()
            .map(|c| match c {
                '0' => Ok(0),
                '1' => Ok(1),
                _ => invalid(format!("not a bit: {c:?}")),
            })
            .collect::<Result<Vec<u8>>>()?;
        Self::new(bits)
    }

    /// The string whose bits read `index` in binary, `b_1` most significant.
    pub fn from_index(n: usize, index: u64) -> Result<Self> {
        Self::new((0..n).map(|i| ((index >> (n - 1 - i)) & 1) as u8).collect())
    }

    pub fn random(n: usize, rng: &mut LabRng) -> Result<Self> {
        Self::new((0..n).map(|_| rng.random_range(0..2u8)).collect())
    }

    pub fn len(&self) -> usize {
        self.bits.len()
    }

    pub fn is_empty(&self) -> bool {
        false
    }

    pub fn bits(&self) -> &[u8] {
        &self.bits
    }

    /// Numerator of `[b]_ℓ` over `2^{min(ℓ,N)+2}`.
    pub fn prefix_numerator(&self, ell: usize) -> u64 {
        self.bits[..ell.min(self.len())].iter().fold(0u64, |acc, &b| 2 * acc + b as u64)
    }

    /// `[b]_ℓ`, exact; `ℓ > N` gives `[b]_N`.
    pub fn prefix_value(&self, ell: usize) -> f64 {
        let l = ell.min(self.len());
        self.prefix_numerator(l) as f64 * pow2(-(l as i32) - 2)
    }

    pub fn complement(&self) -> BitString {
        BitString { bits: self.bits.iter().map(|b| 1 - b).collect() }
    }

    /// Length of the longest common prefix.
    pub fn common_prefix(&self, other: &BitString) -> usize {
        self.bits.iter().zip(&other.bits).take_while(|(a, b)| a == b).count()
    }

    pub fn to_string_bits(&self) -> String {
        self.bits.iter().map(|b| if *b == 1 { '1' } else { '0' }).collect()
    }
}

/// Exponents of the potential: slope `2^slope_log2`, quadratic
/// coefficient `2^{-quad_log2}/2` and mollification radius `2^{-delta_log2}`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub struct Profile {
    pub slope_log2: i32,
    pub quad_log2: i32,
    pub delta_log2: i32,
}

impl Profile {
    /// `(7N, 16N, 5N)`, i.e. `κ = 2^N`, slope `2^{7N}`, `‖·‖²/(2κ^16)`, `δ = κ^{-5}`.
    pub fn standard(n: usize) -> Self {
        let n = n as i32;
        Profile { slope_log2: 7 * n, quad_log2: 16 * n, delta_log2: 5 * n }
    }

    pub fn reduced(p_slope: i32, p_quad: i32, p_delta: i32) -> Self {
        Profile { slope_log2: p_slope, quad_log2: p_quad, delta_log2: p_delta }
    }
}

/// Normalization of the disk mollifier.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub enum Mollifier {
    /// Average over the disk.
    Normalized,
    /// Integral over the disk (the average times `πδ²`).
    Literal,
}

/// 57-node disk rule: a central node and eight equal-area annuli of seven
/// nodes, all with weight 1/57. Exact for affine integrands.
pub fn disk_rule() -> Vec<(f64, f64)> {
    let mut nodes = vec![(0.0, 0.0)];
    for ring in 0..8 {
        // ring covers area fraction [1 + 7 ring, 1 + 7 (ring+1)] / 57; node at its mid-area radius
        let mid = (1.0 + 7.0 * ring as f64 + 3.5) / 57.0;
        let r = mid.sqrt();
        let offset = ring as f64 * std::f64::consts::PI / 28.0;
        for j in 0..7 {
            let a = offset + j as f64 * std::f64::consts::TAU / 7.0;
            nodes.push((r * a.cos(), r * a.sin()));
        }
    }
    nodes
}

#[derive(Debug, Clone)]
pub struct KakeyaPotential {
    b: BitString,
    n: usize,
    profile: Profile,
    mollifier: Mollifier,
    prefixes: Vec<f64>,
    slope: f64,
    quad: f64,
    delta: f64,
    rule: Vec<(f64, f64)>,
}

impl KakeyaPotential {
    pub fn new(b: BitString, profile: Profile, mollifier: Mollifier) -> Result<Self> {
        let n = b.len();
        for e in [profile.slope_log2, -profile.quad_log2 - 1, -profile.delta_log2, -(3 * n as i32)] {
            if !(-1000..=1000).contains(&e) {
                return invalid(format!("exponent {e} out of double range"));
            }
        }
        let prefixes = (0..=n).map(|l| b.prefix_value(l)).collect();
        Ok(KakeyaPotential {
            n,
            profile,
            mollifier,
            prefixes,
            slope: pow2(profile.slope_log2),
            quad: pow2(-profile.quad_log2 - 1),
            delta: pow2(-profile.delta_log2),
            rule: disk_rule(),
            b,
        })
    }

    pub fn standard(b: BitString) -> Result<Self> {
        let n = b.len();
        Self::new(b, Profile::standard(n), Mollifier::Normalized)
    }

    pub fn bits(&self) -> &BitString {
        &self.b
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn profile(&self) -> Profile {
        self.profile
    }

    pub fn delta(&self) -> f64 {
        self.delta
    }

    pub fn slope_scale(&self) -> f64 {
        self.slope
    }

    /// Coefficient `c` of the quadratic term `c‖·‖²`.
    pub fn quad_coef(&self) -> f64 {
        self.quad
    }

    /// `[b]_ℓ`.
    pub fn prefix(&self, ell: usize) -> f64 {
        self.prefixes[ell.min(self.n)]
    }

    /// `φ_k(x,y) = (|y − [b]_k x| − (2^{-k} x + 2^{-(3N−k)}))₊`.
    pub fn phi(&self, k: usize, x: f64, y: f64) -> f64 {
        let kk = k as i32;
        let n3 = 3 * self.n as i32;
        let v = (y - self.prefix(k) * x).abs() - (pow2(-kk) * x + pow2(kk - n3));
        if v > 0.0 {
            v
        } else {
            0.0
        }
    }

    /// `max_k 2^{-k} φ_k` and the maximizing `k` (0 when the max is 0).
    fn scaled_max(&self, x: f64, y: f64) -> (f64, usize) {
        let mut best = (0.0, 0);
        for k in 1..=self.n {
            let v = pow2(-(k as i32)) * self.phi(k, x, y);
            if v > best.0 {
                best = (v, k);
            }
        }
        best
    }

    /// `Ṽ_b = slope · max_k 2^{-k} φ_k`.
    pub fn v_tilde(&self, x: f64, y: f64) -> f64 {
        self.slope * self.scaled_max(x, y).0
    }

    /// A subgradient of `Ṽ_b`.
    pub fn v_tilde_grad(&self, x: f64, y: f64) -> (f64, f64) {
        let (v, k) = self.scaled_max(x, y);
        if v == 0.0 {
            return (0.0, 0.0);
        }
        let p = self.prefix(k);
        let s = if y - p * x >= 0.0 { 1.0 } else { -1.0 };
        let c = self.slope * pow2(-(k as i32));
        (c * (-s * p - pow2(-(k as i32))), c * s)
    }

    fn mollifier_scale(&self) -> f64 {
        match self.mollifier {
            Mollifier::Normalized => 1.0,
            Mollifier::Literal => std::f64::consts::PI * self.delta * self.delta,
        }
    }

    /// The mollified piecewise-linear part.
    pub fn v_mollified(&self, x: f64, y: f64) -> f64 {
        let d = self.delta;
        let s: f64 = self.rule.iter().map(|(u, v)| self.v_tilde(x + d * u, y + d * v)).sum();
        s / self.rule.len() as f64 * self.mollifier_scale()
    }

    /// `V_b = Ṽ_b ∗ χ_δ + c‖·‖²`.
    pub fn v_full(&self, x: f64, y: f64) -> f64 {
        self.v_mollified(x, y) + self.quad * (x * x + y * y)
    }

    /// Gradient of `V_b` under the disk rule.
    pub fn v_full_grad(&self, x: f64, y: f64) -> (f64, f64) {
        let d = self.delta;
        let (mut gx, mut gy) = (0.0, 0.0);
        for (u, v) in &self.rule {
            let g = self.v_tilde_grad(x + d * u, y + d * v);
            gx += g.0;
            gy += g.1;
        }
        let s = self.mollifier_scale() / self.rule.len() as f64;
        (gx * s + 2.0 * self.quad * x, gy * s + 2.0 * self.quad * y)
    }

    /// Slopes bounding the sector `Z̃_b = {(x, βx) : x ≥ 0, |β − [b]| ≤ 2^{-N}}`.
    pub fn sector_slopes(&self) -> (f64, f64) {
        let w = pow2(-(self.n as i32));
        (self.prefix(self.n) - w, self.prefix(self.n) + w)
    }

    pub fn in_tilde_z(&self, x: f64, y: f64) -> bool {
        let (lo, hi) = self.sector_slopes();
        x >= 0.0 && y >= lo * x && y <= hi * x
    }

    /// Euclidean distance to `Z̃_b` by projection onto its two boundary rays.
    pub fn dist_tilde_z(&self, x: f64, y: f64) -> f64 {
        if self.in_tilde_z(x, y) {
            return 0.0;
        }
        let (lo, hi) = self.sector_slopes();
        let ray = |s: f64| {
            let n = (1.0 + s * s).sqrt();
            let (ux, uy) = (1.0 / n, s / n);
            let t = (x * ux + y * uy).max(0.0);
            ((x - t * ux).powi(2) + (y - t * uy).powi(2)).sqrt()
        };
        ray(lo).min(ray(hi))
    }

    /// Half-width of `Ω_b` in slope: 0.4 times the spacing `2^{-(N+2)}` of the values `[b]`.
    pub fn omega_half_width(&self) -> f64 {
        0.4 * pow2(-(self.n as i32) - 2)
    }

    /// `Ω_b = {(x, βx) : x ≥ 2^{-3N}, |β − [b]| ≤ w}`.
    pub fn in_omega(&self, x: f64, y: f64) -> bool {
        let w = self.omega_half_width();
        let c = self.prefix(self.n);
        x >= pow2(-3 * self.n as i32) && y >= (c - w) * x && y <= (c + w) * x
    }

    /// Membership in `S_ℓ(b)`: `x < ¼·2^{-3N}` or `|y − [b]_ℓ x| ≥ 100·2^{-ℓ} x`.
    pub fn in_s(&self, ell: usize, x: f64, y: f64) -> bool {
        x < 0.25 * pow2(-3 * self.n as i32) || (y - self.prefix(ell) * x).abs() >= P3_MARGIN * pow2(-(ell as i32)) * x
    }

    /// Strict version used for the coincidence property.
    pub fn in_p3_region(&self, ell: usize, x: f64, y: f64) -> bool {
        x < 0.25 * pow2(-3 * self.n as i32) || (y - self.prefix(ell) * x).abs() > P3_MARGIN * pow2(-(ell as i32)) * x
    }

    /// Region where the mollified potentials of prefix-sharing strings coincide.
    pub fn in_leak_region(&self, ell: usize, x: f64, y: f64) -> bool {
        x < 0.125 * pow2(-3 * self.n as i32) || (y - self.prefix(ell) * x).abs() > LEAK_MARGIN * pow2(-(ell as i32)) * x
    }

    /// Lipschitz bound `slope · Σ_k 2^{-k}(1 + [b]_k)` of the mollified part (normalized mollifier).
    pub fn lipschitz_bound(&self) -> f64 {
        self.slope * (1..=self.n).map(|k| pow2(-(k as i32)) * (1.0 + self.prefix(k))).sum::<f64>()
    }
}

impl Potential for KakeyaPotential {
    fn dim(&self) -> usize {
        2
    }
    fn value(&self, x: &[f64]) -> f64 {
        self.v_full(x[0], x[1])
    }
    fn gradient(&self, x: &[f64]) -> Vec<f64> {
        let g = self.v_full_grad(x[0], x[1]);
        vec![g.0, g.1]
    }
}

/// Result of the induction test at one point.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum InductionOutcome {
    Holds,
    Violated,
    /// Preconditions fail: `ℓ ∉ [1, N]`, `k ∉ [max(ℓ+1, 2), N]`, point outside `S_ℓ(b)` or `φ_k = 0`.
    NotApplicable,
}

/// Checks `φ_k ≤ 2 φ_{k−1}` at a point of `S_ℓ(b)` with `φ_k > 0`.
pub fn induction_check(p: &KakeyaPotential, ell: usize, k: usize, x: f64, y: f64) -> InductionOutcome {
    if ell == 0 || ell > p.n() || k <= ell || k < 2 || k > p.n() || !p.in_s(ell, x, y) {
        return InductionOutcome::NotApplicable;
    }
    let pk = p.phi(k, x, y);
    if pk <= 0.0 {
        return InductionOutcome::NotApplicable;
    }
    if pk <= 2.0 * p.phi(k - 1, x, y) {
        InductionOutcome::Holds
    } else {
        InductionOutcome::Violated
    }
}

/// The stronger inequality `φ_{k−1} ≥ φ_k` valid when `x ≤ ¼·2^{-3N}`; `None` when not applicable.
pub fn near_origin_check(p: &KakeyaPotential, k: usize, x: f64, y: f64) -> Option<bool> {
    if k < 2 || k > p.n() || x > 0.25 * pow2(-3 * p.n() as i32) {
        return None;
    }
    let pk = p.phi(k, x, y);
    if pk <= 0.0 {
        return None;
    }
    Some(p.phi(k - 1, x, y) >= pk)
}

/// Response of the bit-revelation oracle.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub enum LeakResponse {
    /// `x < ⅛·2^{-3N}`: the potentials of all strings agree near the query.
    NoInformation,
    Revealed {
        /// Largest `ℓ ≤ 64` with `|y − [b]_ℓ x| ≤ 200·2^{-ℓ} x` (0 if none).
        ell: usize,
        /// `min(ℓ + 1, N)`.
        bits: usize,
        /// The prefix `[b]_bits` as a bit string.
        prefix: Vec<u8>,
        /// Set when `ℓ + 1 > N`.
        capped: bool,
    },
}

pub fn bit_leak_oracle(b: &BitString, x: f64, y: f64) -> LeakResponse {
    let n = b.len();
    if !(x >= 0.125 * pow2(-3 * n as i32)) {
        return LeakResponse::NoInformation;
    }
    let ell = (0..=LEAK_MAX_ELL)
        .rev()
        .find(|&l| (y - b.prefix_value(l) * x).abs() <= LEAK_MARGIN * pow2(-(l as i32)) * x)
        .unwrap_or(0);
    let bits = (ell + 1).min(n);
    LeakResponse::Revealed { ell, bits, prefix: b.bits()[..bits].to_vec(), capped: ell + 1 > n }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub enum Strategy {
    /// Direction uniform in `(−π/2, π/2)`, unit radius.
    Random,
    /// Query the ray `y = [b̂]_{ℓ₀} x` of the currently known prefix.
    Bisection,
}

impl Strategy {
    pub fn as_str(&self) -> &'static str {
        match self {
            Strategy::Random => "random",
            Strategy::Bisection => "bisection",
        }
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct LeakageReport {
    pub n: usize,
    pub strategy: Strategy,
    pub trials: usize,
    pub n_queries: usize,
    pub queries: usize,
    /// Mean newly revealed bits per query.
    pub avg_bits_per_query: f64,
    /// `histogram[r]` counts queries that revealed a prefix of length `r`.
    pub histogram: Vec<u64>,
    /// Queries whose `ℓ + 1` exceeded `N`.
    pub capped: u64,
    /// Trials in which `b` was fully revealed.
    pub identified: usize,
    /// Trials fully revealed within `N + 2` queries.
    pub identified_within_n_plus_2: usize,
    /// Mean queries to full revelation over identified trials.
    pub mean_queries_to_identify: f64,
}

struct TrialOutcome {
    new_bits: usize,
    hist: Vec<u64>,
    capped: u64,
    identify_at: Option<usize>,
}

fn leakage_trial(n: usize, n_queries: usize, strategy: Strategy, rng: &mut LabRng) -> Result<TrialOutcome> {
    let b = BitString::random(n, rng)?;
    let mut known = 0usize;
    let mut out = TrialOutcome { new_bits: 0, hist: vec![0; n + 1], capped: 0, identify_at: None };
    for q in 0..n_queries {
        let (x, y) = match strategy {
            Strategy::Random => {
                let a = rng.random_range(-std::f64::consts::FRAC_PI_2..std::f64::consts::FRAC_PI_2);
                (a.cos(), a.sin())
            }
            Strategy::Bisection => (1.0, b.prefix_value(known)),
        };
        match bit_leak_oracle(&b, x, y) {
            LeakResponse::NoInformation => out.hist[0] += 1,
            LeakResponse::Revealed { bits, capped, .. } => {
                out.hist[bits] += 1;
                if capped {
                    out.capped += 1;
                }
                if bits > known {
                    out.new_bits += bits - known;
                    known = bits;
                }
            }
        }
        if known == n && out.identify_at.is_none() {
            out.identify_at = Some(q + 1);
        }
    }
    Ok(out)
}

/// Monte-Carlo estimate of revealed bits per query against a uniformly random `b`.
pub fn leakage_experiment(
    n: usize,
    n_queries: usize,
    strategy: Strategy,
    trials: usize,
    stream: &RngStream,
) -> Result<LeakageReport> {
    if n == 0 || n > 50 {
        return invalid("N must lie in 1..=50");
    }
    let outcomes = par_trials(stream, trials, |_, rng| leakage_trial(n, n_queries, strategy, rng))
        .into_iter()
        .collect::<Result<Vec<_>>>()?;
    let mut hist = vec![0u64; n + 1];
    let mut capped = 0;
    let mut new_bits = 0usize;
    let mut ids = Vec::new();
    for o in &outcomes {
        for (h, c) in hist.iter_mut().zip(&o.hist) {
            *h += c;
        }
        capped += o.capped;
        new_bits += o.new_bits;
        if let Some(q) = o.identify_at {
            ids.push(q);
        }
    }
    let queries = trials * n_queries;
    Ok(LeakageReport {
        n,
        strategy,
        trials,
        n_queries,
        queries,
        avg_bits_per_query: if queries == 0 { 0.0 } else { new_bits as f64 / queries as f64 },
        histogram: hist,
        capped,
        identified: ids.len(),
        identified_within_n_plus_2: ids.iter().filter(|&&q| q <= n + 2).count(),
        mean_queries_to_identify: if ids.is_empty() { 0.0 } else { ids.iter().sum::<usize>() as f64 / ids.len() as f64 },
    })
}

/// Probability of `Ω_b` under `exp(−V_b)`, with the two integrals behind it.
#[derive(Debug, Clone, Copy, Serialize)]
pub struct MassReport {
    pub omega_integral: f64,
    pub total_integral: f64,
    pub mass: f64,
    pub refinement: usize,
}

/// Polar-coordinate tensor Gauss–Legendre quadrature with breakpoints at the kink angles,
/// refined until both integrals change by less than `1e-3` relative.
pub fn omega_mass(p: &KakeyaPotential) -> Result<MassReport> {
    let n = p.n();
    let r_max = (40.0 / p.quad_coef()).sqrt();
    let r0 = pow2(-3 * n as i32 - 2);
    let mut r_breaks = vec![0.0];
    let mut r = r0;
    while r < r_max {
        r_breaks.push(r);
        r *= 2.0;
    }
    r_breaks.push(r_max);

    let mut slopes = Vec::new();
    for k in 1..=n {
        let w = pow2(-(k as i32));
        slopes.extend([p.prefix(k), p.prefix(k) - w, p.prefix(k) + w]);
    }
    let c = p.prefix(n);
    let w = p.omega_half_width();
    let (om_lo, om_hi) = ((c - w).atan(), (c + w).atan());
    let half_pi = std::f64::consts::FRAC_PI_2;
    let mut t_breaks = vec![-half_pi, half_pi, 3.0 * half_pi, om_lo, om_hi];
    for s in slopes {
        t_breaks.push(s.atan());
        t_breaks.push(s.atan() + std::f64::consts::PI);
    }
    t_breaks.sort_by(|a, b| a.partial_cmp(b).unwrap());
    t_breaks.dedup_by(|a, b| (*a - *b).abs() < 1e-15);

    let rule = gauss_legendre(8);
    let panel = |lo: f64, hi: f64, m: usize, f: &mut dyn FnMut(f64) -> f64| -> f64 {
        let mut s = 0.0;
        for i in 0..m {
            let a = lo + (hi - lo) * i as f64 / m as f64;
            let b = lo + (hi - lo) * (i + 1) as f64 / m as f64;
            let (h, mid) = (0.5 * (b - a), 0.5 * (a + b));
            for (x, wt) in rule.0.iter().zip(&rule.1) {
                s += wt * h * f(mid + h * x);
            }
        }
        s
    };
    let radial = |theta: f64, r_lo: f64, m: usize| -> f64 {
        let (ct, st) = (theta.cos(), theta.sin());
        let mut s = 0.0;
        let mut f = |r: f64| r * (-p.v_full(r * ct, r * st)).exp();
        for wdw in r_breaks.windows(2) {
            let (a, b) = (wdw[0].max(r_lo), wdw[1]);
            if b > a {
                s += panel(a, b, m, &mut f);
            }
        }
        s
    };
    let integrals = |m: usize| -> (f64, f64) {
        let mut total = 0.0;
        for wdw in t_breaks.windows(2) {
            total += panel(wdw[0], wdw[1], m, &mut |t| radial(t, 0.0, m));
        }
        let x0 = pow2(-3 * n as i32);
        let omega = panel(om_lo, om_hi, m, &mut |t| radial(t, x0 / t.cos(), m));
        (omega, total)
    };
    let mut m = 1;
    let mut prev = integrals(m);
    while m < 64 {
        m *= 2;
        let cur = integrals(m);
        let rel = |a: f64, b: f64| ((a - b) / b).abs();
        if rel(prev.0, cur.0) < 1e-3 && rel(prev.1, cur.1) < 1e-3 {
            return Ok(MassReport { omega_integral: cur.0, total_integral: cur.1, mass: cur.0 / cur.1, refinement: m });
        }
        prev = cur;
    }
    Err(LabError::Numerical("mass quadrature did not converge".into()))
}

/// Nesting depth of zero sets at a point: the largest `j` with `φ_1 = … = φ_j = 0`.
pub fn zero_depth(p: &KakeyaPotential, x: f64, y: f64) -> usize {
    (1..=p.n()).take_while(|&k| p.phi(k, x, y) == 0.0).count()
}

/// Raster of `zero_depth` on a `px × px` grid of `[x0, x0+w] × [y0, y0+w]`, row 0 at the top.
pub fn zero_raster(p: &KakeyaPotential, x0: f64, y0: f64, w: f64, px: usize) -> Vec<Vec<u8>> {
    (0..px)
        .map(|row| {
            let y = y0 + w * (px - row) as f64 / px as f64 - 0.5 * w / px as f64;
            (0..px)
                .map(|col| {
                    let x = x0 + w * (col as f64 + 0.5) / px as f64;
                    zero_depth(p, x, y) as u8
                })
                .collect()
        })
        .collect()
}

/// SVG with one panel per string: nested zero sets `φ_1 = … = φ_k = 0` shaded
/// light to dark, plus circles at the given radii.
pub fn render_zero_sets(strings: &[BitString], window: f64, px: usize, radii: &[f64]) -> Result<String> {
    if strings.is_empty() {
        return invalid("nothing to render");
    }
    let n = strings[0].len();
    if n > 6 || strings.iter().any(|b| b.len() != n) {
        return invalid("render needs strings of one common length N <= 6");
    }
    let cell = 2usize;
    let size = px * cell;
    let gap = 10;
    let width = strings.len() * (size + gap) + gap;
    let height = size + 2 * gap + 14;
    let mut svg = format!(
        "<?xml version=\"1.0\" encoding=\"UTF-8\"?>\n<svg xmlns=\"http://www.w3.org/2000/svg\" version=\"1.1\" width=\"{width}\" height=\"{height}\">\n<rect width=\"100%\" height=\"100%\" fill=\"white\"/>\n"
    );
    for (i, b) in strings.iter().enumerate() {
        let p = KakeyaPotential::standard(b.clone())?;
        let ox = gap + i * (size + gap);
        let oy = gap;
        svg.push_str(&format!("<g id=\"b{}\" transform=\"translate({ox},{oy})\">\n", b.to_string_bits()));
        svg.push_str(&format!("<rect width=\"{size}\" height=\"{size}\" fill=\"none\" stroke=\"#888\"/>\n"));
        let raster = zero_raster(&p, -0.1 * window, -0.5 * window, window, px);
        for k in 1..=n {
            let shade = 0.15 + 0.8 * k as f64 / n as f64;
            svg.push_str(&format!("<g fill=\"#1f4e9c\" fill-opacity=\"{shade:.3}\">"));
            for (row, line) in raster.iter().enumerate() {
                for (col, &d) in line.iter().enumerate() {
                    if d as usize == k {
                        svg.push_str(&format!(
                            "<rect x=\"{}\" y=\"{}\" width=\"{cell}\" height=\"{cell}\"/>",
                            col * cell,
                            row * cell
                        ));
                    }
                }
            }
            svg.push_str("</g>\n");
        }
        let scale = size as f64 / window;
        let (cx, cy) = (0.1 * window * scale, 0.5 * window * scale);
        for r in radii {
            svg.push_str(&format!(
                "<circle cx=\"{cx:.2}\" cy=\"{cy:.2}\" r=\"{:.2}\" fill=\"none\" stroke=\"#444\" stroke-dasharray=\"3,2\"/>\n",
                r * scale
            ));
        }
        svg.push_str(&format!(
            "<text x=\"0\" y=\"{}\" font-family=\"monospace\" font-size=\"12\">b={}</text>\n</g>\n",
            size + 14,
            b.to_string_bits()
        ));
    }
    svg.push_str("</svg>\n");
    Ok(svg)
}
