//! Simulating adaptive extended-oracle algorithms from non-adaptive block-Krylov data.
//!
//! An adaptive run queries `v_k = v_k({Λ^i v_j}_{H_{k-1}})` and receives `{Λ^i v_j}_{H_k}`.
//! The simulator sees only `{Λ^i z_j}_{H_K}` for Gaussian seeds `z_j`; it orthogonalizes the
//! seeds into `ṽ_k`, asks the algorithm for `v̄_k` on rotated data, and picks reflections `Ũ_k`
//! fixing everything seen so far while sending `(Ũ_{1:k-1})ᵀ ṽ_k` to `v̄_k`.

use std::cell::Cell;

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::error::{invalid, LabError, Result};
use crate::linalg::{gaussian_vector, haar_orthogonal, orthonormal_basis, project_out};
use crate::oracle::{enumeration_order, extended_index_set, new_pairs, LinearOperator};
use crate::rng::{par_trials, LabRng, RngStream};
use crate::stats::{energy_test, standardize_pooled, TwoSampleTest};

/// Relative residual below which a direction counts as lying in the span.
pub const DEGENERATE_TOL: f64 = 1e-8;
/// Orthogonality drift tolerated on rotation inputs.
pub const DRIFT_TOL: f64 = 1e-8;

/// Vectors indexed by pairs `(i, j)`, kept in insertion order.
#[derive(Debug, Clone, Default)]
pub struct Transcript {
    pub pairs: Vec<(usize, usize)>,
    pub vectors: Vec<DVector<f64>>,
}

impl Transcript {
    pub fn get(&self, i: usize, j: usize) -> Option<&DVector<f64>> {
        self.pairs.iter().position(|&p| p == (i, j)).map(|n| &self.vectors[n])
    }

    pub fn push(&mut self, pair: (usize, usize), v: DVector<f64>) {
        self.pairs.push(pair);
        self.vectors.push(v);
    }

    pub fn len(&self) -> usize {
        self.pairs.len()
    }

    pub fn is_empty(&self) -> bool {
        self.pairs.is_empty()
    }

    /// Restriction to `H_k`, in enumeration order.
    pub fn restrict(&self, k: usize) -> Result<Transcript> {
        let mut out = Transcript::default();
        if k == 0 {
            return Ok(out);
        }
        for &p in &extended_index_set(k)?.pairs {
            let v = self.get(p.0, p.1).ok_or_else(|| LabError::InvalidArgument(format!("missing pair {p:?}")))?;
            out.push(p, v.clone());
        }
        Ok(out)
    }
}

/// A deterministic adaptive algorithm: `propose` gives a raw direction for query `k` (1-based)
/// from the inputs `{Λ^i v_j}_{H_{k-1}}`; [`next_query`] turns it into a valid query.
pub trait AdaptiveAlgorithm: Sync {
    fn name(&self) -> &str;
    fn propose(&self, k: usize, d: usize, inputs: &Transcript) -> DVector<f64>;
}

fn unit(d: usize, i: usize) -> DVector<f64> {
    let mut e = DVector::zeros(d);
    e[i % d] = 1.0;
    e
}

/// Orthonormal basis of `span(vectors)`, skipping numerically dependent members.
fn span_basis(vectors: &[DVector<f64>]) -> Vec<DVector<f64>> {
    let mut q: Vec<DVector<f64>> = Vec::with_capacity(vectors.len());
    for v in vectors {
        let mut w = v.clone();
        project_out(&mut w, &q);
        let n = w.norm();
        if n > 1e-12 * v.norm() {
            q.push(w / n);
        }
    }
    q
}

/// Unit vector along the part of `z` orthogonal to `basis` (modified Gram-Schmidt, two passes).
pub fn orthogonalized_direction(z: &DVector<f64>, basis: &[DVector<f64>]) -> Result<DVector<f64>> {
    let q = span_basis(basis);
    let mut r = z.clone();
    project_out(&mut r, &q);
    let n = r.norm();
    if !(n > DEGENERATE_TOL * z.norm()) {
        return Err(LabError::Degenerate(format!("residual {n:e} of a vector with norm {:e}", z.norm())));
    }
    Ok(r / n)
}

/// The algorithm's `k`-th query with the wrapping projection: unit norm and orthogonal to every
/// input. A proposal inside the span falls back to coordinate vectors in order.
pub fn next_query(alg: &dyn AdaptiveAlgorithm, k: usize, d: usize, inputs: &Transcript) -> Result<DVector<f64>> {
    let raw = alg.propose(k, d, inputs);
    if raw.len() != d {
        return Err(LabError::DimensionMismatch { expected: d, got: raw.len() });
    }
    if raw.norm() > 0.0 {
        if let Ok(v) = orthogonalized_direction(&raw, &inputs.vectors) {
            return Ok(v);
        }
    }
    for i in 0..d {
        if let Ok(v) = orthogonalized_direction(&unit(d, i), &inputs.vectors) {
            return Ok(v);
        }
    }
    Err(LabError::Degenerate("inputs span the whole space".into()))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Algorithm {
    /// Coordinate vectors `e_1, e_2, …`.
    Fresh,
    /// Entrywise cube of the latest response `Λ v_{k-1}`.
    Power,
    /// Entrywise magnitude of the latest response plus a coordinate nudge.
    Hybrid,
}

impl Algorithm {
    pub const ALL: [Algorithm; 3] = [Algorithm::Fresh, Algorithm::Power, Algorithm::Hybrid];

    pub fn as_str(&self) -> &'static str {
        match self {
            Algorithm::Fresh => "fresh",
            Algorithm::Power => "power",
            Algorithm::Hybrid => "hybrid",
        }
    }

    pub fn parse(s: &str) -> Result<Self> {
        Self::ALL
            .into_iter()
            .find(|a| a.as_str() == s)
            .ok_or_else(|| LabError::InvalidArgument(format!("unknown algorithm '{s}' (fresh|power|hybrid)")))
    }
}

impl AdaptiveAlgorithm for Algorithm {
    fn name(&self) -> &str {
        self.as_str()
    }

    fn propose(&self, k: usize, d: usize, inputs: &Transcript) -> DVector<f64> {
        let latest = if k >= 2 { inputs.get(1, k - 1) } else { None };
        match (self, latest) {
            (Algorithm::Fresh, _) | (_, None) => unit(d, k - 1),
            (Algorithm::Power, Some(r)) => r.map(|x| x * x * x),
            (Algorithm::Hybrid, Some(r)) => {
                let a = r.abs();
                let n = a.norm().max(1e-300);
                a / n + unit(d, k - 1) * 0.5
            }
        }
    }
}

/// Ground-truth adaptive transcript `{Λ^i v_j}_{H_K}` by direct products.
pub fn run_adaptive(alg: &dyn AdaptiveAlgorithm, lambda: &dyn LinearOperator, k_max: usize) -> Result<Transcript> {
    let d = lambda.dim();
    if k_max == 0 || k_max * k_max >= d {
        return invalid(format!("need 1 <= K and K² < d (K = {k_max}, d = {d})"));
    }
    let mut t = Transcript::default();
    for k in 1..=k_max {
        let v = next_query(alg, k, d, &t)?;
        for (i, j) in new_pairs(k) {
            let w = if i == 0 {
                v.clone()
            } else {
                lambda.apply(t.get(i - 1, j).expect("previous power present"))
            };
            t.push((i, j), w);
        }
    }
    t.restrict(k_max)
}

/// Block-Krylov data `{Λ^i z_j}_{H_K}`. This is the only view of `Λ` the simulator gets;
/// accesses are audited by the largest seed index touched.
pub struct KrylovData {
    k: usize,
    data: Transcript,
    touched: Cell<usize>,
}

impl KrylovData {
    pub fn generate(lambda: &dyn LinearOperator, seeds: &[DVector<f64>]) -> Result<Self> {
        let k = seeds.len();
        let set = extended_index_set(k)?;
        let mut data = Transcript::default();
        for &(i, j) in &set.pairs {
            let v = if i == 0 { seeds[j - 1].clone() } else { lambda.apply(data.get(i - 1, j).unwrap()) };
            data.push((i, j), v);
        }
        Ok(KrylovData { k, data, touched: Cell::new(0) })
    }

    pub fn k(&self) -> usize {
        self.k
    }

    pub fn dim(&self) -> usize {
        self.data.vectors[0].len()
    }

    fn get(&self, i: usize, j: usize) -> Result<&DVector<f64>> {
        self.touched.set(self.touched.get().max(j));
        self.data
            .get(i, j)
            .ok_or_else(|| LabError::InvalidArgument(format!("pair ({i}, {j}) outside H_{}", self.k)))
    }

    /// Largest seed index read so far.
    pub fn touched(&self) -> usize {
        self.touched.get()
    }
}

/// `Uᵀ = U = I − 2wwᵀ`, or the identity.
#[derive(Debug, Clone)]
pub struct Rotation {
    pub dim: usize,
    pub w: Option<DVector<f64>>,
}

impl Rotation {
    pub fn identity(dim: usize) -> Self {
        Rotation { dim, w: None }
    }

    /// `U x` (equal to `Uᵀ x` for a reflection).
    pub fn apply(&self, x: &DVector<f64>) -> DVector<f64> {
        match &self.w {
            None => x.clone(),
            Some(w) => x - w * (2.0 * w.dot(x)),
        }
    }

    pub fn to_matrix(&self) -> DMatrix<f64> {
        let mut m = DMatrix::identity(self.dim, self.dim);
        if let Some(w) = &self.w {
            m -= w * w.transpose() * 2.0;
        }
        m
    }
}

/// Orthogonal `U` with `Uᵀx = x` for every fixed `x` and `Uᵀy = z`: the reflection through the
/// bisector of `y` and `z`, which is the identity on everything orthogonal to both.
pub fn build_rotation(fixed: &[DVector<f64>], y: &DVector<f64>, z: &DVector<f64>) -> Result<Rotation> {
    let d = y.len();
    if z.len() != d {
        return Err(LabError::DimensionMismatch { expected: d, got: z.len() });
    }
    if d <= fixed.len() + 1 {
        return invalid(format!("dimension {d} too small for {} fixed vectors", fixed.len()));
    }
    for (name, v) in [("y", y), ("z", z)] {
        if (v.norm() - 1.0).abs() > DRIFT_TOL {
            return invalid(format!("{name} is not unit (norm {})", v.norm()));
        }
        for (n, x) in fixed.iter().enumerate() {
            let ip = x.dot(v) / x.norm().max(1e-300);
            if ip.abs() > DRIFT_TOL {
                return invalid(format!("{name} has inner product {ip:e} with fixed vector {n}"));
            }
        }
    }
    let diff = y - z;
    let n = diff.norm();
    if n < 1e-14 {
        return Ok(Rotation::identity(d));
    }
    Ok(Rotation { dim: d, w: Some(diff / n) })
}

fn apply_ut(rots: &[Rotation], x: &DVector<f64>) -> DVector<f64> {
    // (U_1 ⋯ U_k)ᵀ x = U_kᵀ ⋯ U_1ᵀ x
    rots.iter().fold(x.clone(), |acc, r| r.apply(&acc))
}

fn apply_u(rots: &[Rotation], x: &DVector<f64>) -> DVector<f64> {
    rots.iter().rev().fold(x.clone(), |acc, r| r.apply(&acc))
}

/// `ṽ_j = (z_j + Σ c_a Λ^{i_a} z_{j_a}) / norm`, so that `Λ^i ṽ_j` is read off the data.
#[derive(Debug, Clone)]
struct Combination {
    j: usize,
    atoms: Vec<((usize, usize), f64)>,
    norm: f64,
}

impl Combination {
    fn power(&self, data: &KrylovData, i: usize) -> Result<DVector<f64>> {
        let mut v = data.get(i, self.j)?.clone();
        for &((a, b), c) in &self.atoms {
            v.axpy(c, data.get(a + i, b)?, 1.0);
        }
        Ok(v / self.norm)
    }
}

/// Incremental Gram-Schmidt over the atoms, tracking each basis vector's atom coefficients.
#[derive(Default)]
struct AtomBasis {
    atoms: Vec<(usize, usize)>,
    q: Vec<DVector<f64>>,
    coef: Vec<Vec<f64>>,
}

impl AtomBasis {
    fn add(&mut self, pair: (usize, usize), v: &DVector<f64>) -> Result<()> {
        let l = self.atoms.len();
        let mut w = v.clone();
        let mut c = vec![0.0; l + 1];
        c[l] = 1.0;
        for _ in 0..2 {
            for m in 0..l {
                let p = self.q[m].dot(&w);
                w.axpy(-p, &self.q[m], 1.0);
                for (a, cm) in self.coef[m].iter().enumerate() {
                    c[a] -= p * cm;
                }
            }
        }
        let n = w.norm();
        if !(n > DEGENERATE_TOL * v.norm()) {
            return Err(LabError::Degenerate(format!("Krylov atom {pair:?} is numerically dependent")));
        }
        self.atoms.push(pair);
        self.q.push(w / n);
        self.coef.push(c.into_iter().map(|x| x / n).collect());
        Ok(())
    }

    /// Direction of `z_j` orthogonal to the current atoms.
    fn direction(&self, j: usize, z: &DVector<f64>) -> Result<(DVector<f64>, Combination)> {
        let mut r = z.clone();
        let mut c = vec![0.0; self.atoms.len()];
        for _ in 0..2 {
            for (m, q) in self.q.iter().enumerate() {
                let p = q.dot(&r);
                r.axpy(-p, q, 1.0);
                for (a, cm) in self.coef[m].iter().enumerate() {
                    c[a] -= p * cm;
                }
            }
        }
        let n = r.norm();
        if !(n > DEGENERATE_TOL * z.norm()) {
            return Err(LabError::Degenerate(format!("seed {j} lies in the Krylov span")));
        }
        let comb = Combination { j, atoms: self.atoms.iter().cloned().zip(c).collect(), norm: n };
        Ok((r / n, comb))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum RotationMode {
    Simulated,
    /// Negative control: every `Ũ_k` replaced by the identity.
    Identity,
}

/// Internal state of one simulation.
#[derive(Debug, Clone)]
pub struct SimState {
    pub v_tilde: Vec<DVector<f64>>,
    pub v_bar: Vec<DVector<f64>>,
    pub rotations: Vec<Rotation>,
    /// Largest seed index read when `v̄_k` was formed.
    pub touched_before_query: Vec<usize>,
    combos: Vec<Combination>,
}

#[derive(Debug, Clone)]
pub struct Simulation {
    pub transcript: Transcript,
    pub state: SimState,
}

/// Runs the simulated-sequence recursion on block-Krylov data alone.
pub fn simulate_from_krylov(alg: &dyn AdaptiveAlgorithm, data: &KrylovData, mode: RotationMode) -> Result<Simulation> {
    let k_max = data.k();
    let d = data.dim();
    if k_max * k_max >= d {
        return invalid(format!("need K² < d (K = {k_max}, d = {d})"));
    }
    let mut basis = AtomBasis::default();
    let mut st = SimState {
        v_tilde: Vec::new(),
        v_bar: Vec::new(),
        rotations: Vec::new(),
        touched_before_query: Vec::new(),
        combos: Vec::new(),
    };
    // rotated inputs {(Ũ_{1:k-1})ᵀ Λ^i ṽ_j}_{H_{k-1}}
    let rotated = |st: &SimState, k: usize| -> Result<Transcript> {
        let mut t = Transcript::default();
        if k == 0 {
            return Ok(t);
        }
        for &(i, j) in &extended_index_set(k)?.pairs {
            let v = st.combos[j - 1].power(data, i)?;
            t.push((i, j), apply_ut(&st.rotations, &v));
        }
        Ok(t)
    };
    for k in 1..=k_max {
        let inputs = rotated(&st, k - 1)?;
        st.touched_before_query.push(data.touched());
        let vbar = next_query(alg, k, d, &inputs)?;
        if k >= 2 {
            for p in new_pairs(k - 1) {
                basis.add(p, data.get(p.0, p.1)?)?;
            }
        }
        let (vt, comb) = basis.direction(k, data.get(0, k)?)?;
        st.combos.push(comb);
        let y = apply_ut(&st.rotations, &vt);
        let rot = match mode {
            RotationMode::Simulated => build_rotation(&inputs.vectors, &y, &vbar)?,
            RotationMode::Identity => Rotation::identity(d),
        };
        st.v_tilde.push(vt);
        st.v_bar.push(vbar);
        st.rotations.push(rot);
    }
    let transcript = rotated(&st, k_max)?;
    Ok(Simulation { transcript, state: st })
}

#[derive(Debug, Clone, Copy, Default, Serialize, Deserialize, PartialEq)]
pub struct IdentityResiduals {
    #[serde(rename = "P2_max")]
    pub p2: f64,
    #[serde(rename = "P3_max")]
    pub p3: f64,
    #[serde(rename = "P4_max")]
    pub p4: f64,
    /// `ṽ_k ⟂ {Λ^i z_j}_{H_{k-1}}`, relative.
    pub orth_max: f64,
    /// `Λ^i ṽ_j` read from the data vs computed with `Λ`.
    pub data_max: f64,
}

impl IdentityResiduals {
    pub fn max(&self) -> f64 {
        self.p2.max(self.p3).max(self.p4).max(self.orth_max).max(self.data_max)
    }

    pub fn merge(&self, o: &Self) -> Self {
        IdentityResiduals {
            p2: self.p2.max(o.p2),
            p3: self.p3.max(o.p3),
            p4: self.p4.max(o.p4),
            orth_max: self.orth_max.max(o.orth_max),
            data_max: self.data_max.max(o.data_max),
        }
    }
}

fn vmax(a: &DVector<f64>, b: &DVector<f64>) -> f64 {
    (a - b).amax()
}

/// White-box checks with `Λ` in hand: `ṽ_j = Ũ_{1:k} v̄_j` for `k ≥ j`, and `v̄_k`, `Ũ_k`
/// recomputed from `Λ_{k-1} = (Ũ_{1:k-1})ᵀ Λ Ũ_{1:k-1}` applied to the `v̄_j`.
pub fn identity_residuals(
    alg: &dyn AdaptiveAlgorithm,
    sim: &Simulation,
    data: &KrylovData,
    lambda: &DMatrix<f64>,
) -> Result<IdentityResiduals> {
    let st = &sim.state;
    let k_max = st.v_bar.len();
    let d = lambda.nrows();
    let mut r = IdentityResiduals::default();
    for k in 1..=k_max {
        for j in 1..=k {
            r.p2 = r.p2.max(vmax(&st.v_tilde[j - 1], &apply_u(&st.rotations[..k], &st.v_bar[j - 1])));
        }
        for &(i, j) in &extended_index_set(k_max)?.pairs {
            if j == k {
                let mut direct = st.v_tilde[j - 1].clone();
                for _ in 0..i {
                    direct = lambda * direct;
                }
                let from_data = st.combos[j - 1].power(data, i)?;
                r.data_max = r.data_max.max(vmax(&direct, &from_data) / direct.amax().max(1.0));
            }
        }
        if k >= 2 {
            for &(i, j) in &extended_index_set(k - 1)?.pairs {
                let a = data.get(i, j)?;
                r.orth_max = r.orth_max.max((a.dot(&st.v_tilde[k - 1]) / a.norm()).abs());
            }
        }
        // Λ_{k-1} and the recomputed query/rotation
        let u: DMatrix<f64> = st.rotations[..k - 1]
            .iter()
            .fold(DMatrix::identity(d, d), |acc, rot| acc * rot.to_matrix());
        let lk = u.transpose() * lambda * &u;
        let mut inputs = Transcript::default();
        if k >= 2 {
            for &(i, j) in &extended_index_set(k - 1)?.pairs {
                let mut v = st.v_bar[j - 1].clone();
                for _ in 0..i {
                    v = &lk * v;
                }
                inputs.push((i, j), v);
            }
        }
        let vbar = next_query(alg, k, d, &inputs)?;
        r.p3 = r.p3.max(vmax(&vbar, &st.v_bar[k - 1]));
        let y = u.transpose() * &st.v_tilde[k - 1];
        let rot = build_rotation(&inputs.vectors, &y, &vbar)?;
        r.p4 = r.p4.max((rot.to_matrix() - st.rotations[k - 1].to_matrix()).amax());
    }
    Ok(r)
}

/// Rotation-invariant Gram summaries `⟨v_a, Λ^p v_b⟩` (each distinct `(a ≤ b, p)` once) followed
/// by the first `coords` coordinates of every transcript vector.
pub fn transcript_summary(t: &Transcript, coords: usize) -> Vec<f64> {
    let mut seen = std::collections::BTreeSet::new();
    let mut out = Vec::new();
    for (x, &(i, a)) in t.pairs.iter().enumerate() {
        for (y, &(i2, b)) in t.pairs.iter().enumerate().skip(x) {
            if seen.insert((a.min(b), a.max(b), i + i2)) {
                out.push(t.vectors[x].dot(&t.vectors[y]));
            }
        }
    }
    for v in &t.vectors {
        out.extend(v.iter().take(coords));
    }
    out
}

/// Energy permutation test on pooled-standardized summaries. Features that are constant up to
/// rounding (pooled sd ≤ 1e−9·(1 + |mean|)) are dropped first, since standardizing them would
/// only amplify round-off.
pub fn transcript_two_sample_test(
    a: &[Vec<f64>],
    b: &[Vec<f64>],
    permutations: usize,
    rng: &mut LabRng,
) -> Result<TwoSampleTest> {
    let dim = a.first().map_or(0, |v| v.len());
    let n = (a.len() + b.len()) as f64;
    let keep: Vec<usize> = (0..dim)
        .filter(|&f| {
            let mean = a.iter().chain(b).map(|v| v[f]).sum::<f64>() / n;
            let var = a.iter().chain(b).map(|v| (v[f] - mean).powi(2)).sum::<f64>() / n;
            var.sqrt() > 1e-9 * (1.0 + mean.abs())
        })
        .collect();
    if keep.is_empty() {
        return Ok(TwoSampleTest { statistic: 0.0, p_value: 1.0, permutations });
    }
    let pick = |s: &[Vec<f64>]| s.iter().map(|v| keep.iter().map(|&f| v[f]).collect()).collect::<Vec<Vec<f64>>>();
    let (mut a, mut b) = (pick(a), pick(b));
    standardize_pooled(&mut a, &mut b);
    energy_test(&a, &b, permutations, rng)
}

/// Spectrum `1, …, κ` evenly spaced.
pub fn linear_spectrum(d: usize, kappa: f64) -> Vec<f64> {
    if d == 1 {
        return vec![1.0];
    }
    (0..d).map(|i| 1.0 + (kappa - 1.0) * i as f64 / (d - 1) as f64).collect()
}

fn rotated_spectrum(spectrum: &[f64], rng: &mut LabRng) -> DMatrix<f64> {
    let d = spectrum.len();
    let u = haar_orthogonal(d, rng);
    let m = u.transpose() * DMatrix::from_diagonal(&DVector::from_column_slice(spectrum)) * &u;
    (&m + m.transpose()) * 0.5
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ReductionConfig {
    pub algorithm: Algorithm,
    pub k: usize,
    /// Eigenvalues of `D`; `Λ = UᵀDU` with a fresh Haar `U` per transcript.
    pub spectrum: Vec<f64>,
    pub identity_runs: usize,
    pub per_side: usize,
    pub permutations: usize,
    pub coords: usize,
    /// Also run the identity-rotation negative control.
    pub control: bool,
}

impl ReductionConfig {
    pub fn new(algorithm: Algorithm, d: usize, k: usize) -> Self {
        ReductionConfig {
            algorithm,
            k,
            spectrum: linear_spectrum(d, 4.0),
            identity_runs: 1000,
            per_side: 2000,
            permutations: 500,
            coords: 2,
            control: true,
        }
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct ReductionReport {
    pub algorithm: Algorithm,
    pub d: usize,
    pub k: usize,
    pub identity_residuals: IdentityResiduals,
    /// Runs whose audit showed a seed read before it was allowed.
    pub p1_violations: usize,
    pub two_sample: TwoSampleTest,
    pub control: Option<TwoSampleTest>,
}

/// One simulated transcript from fresh Gaussian seeds on a fresh rotation.
pub fn simulated_transcript(
    alg: &dyn AdaptiveAlgorithm,
    spectrum: &[f64],
    k: usize,
    mode: RotationMode,
    rng: &mut LabRng,
) -> Result<(Simulation, KrylovData, DMatrix<f64>)> {
    let lambda = rotated_spectrum(spectrum, rng);
    let seeds: Vec<_> = (0..k).map(|_| gaussian_vector(spectrum.len(), rng)).collect();
    let data = KrylovData::generate(&lambda, &seeds)?;
    let sim = simulate_from_krylov(alg, &data, mode)?;
    Ok((sim, data, lambda))
}

pub fn adaptive_transcript(alg: &dyn AdaptiveAlgorithm, spectrum: &[f64], k: usize, rng: &mut LabRng) -> Result<Transcript> {
    let lambda = rotated_spectrum(spectrum, rng);
    run_adaptive(alg, &lambda, k)
}

fn p1_ok(st: &SimState) -> bool {
    st.touched_before_query.iter().enumerate().all(|(k0, &t)| t <= k0)
}

pub fn reduction_experiment(cfg: &ReductionConfig, stream: &RngStream) -> Result<ReductionReport> {
    let alg = cfg.algorithm;
    let (d, k) = (cfg.spectrum.len(), cfg.k);
    let ids = par_trials(&stream.child(0), cfg.identity_runs, |_, rng| -> Result<(IdentityResiduals, bool)> {
        let (sim, data, lambda) = simulated_transcript(&alg, &cfg.spectrum, k, RotationMode::Simulated, rng)?;
        Ok((identity_residuals(&alg, &sim, &data, &lambda)?, p1_ok(&sim.state)))
    });
    let mut residuals = IdentityResiduals::default();
    let mut p1_violations = 0;
    for r in ids {
        let (res, ok) = r?;
        residuals = residuals.merge(&res);
        p1_violations += usize::from(!ok);
    }
    let adaptive = collect(par_trials(&stream.child(1), cfg.per_side, |_, rng| {
        adaptive_transcript(&alg, &cfg.spectrum, k, rng).map(|t| transcript_summary(&t, cfg.coords))
    }))?;
    let simulate = |mode: RotationMode, s: &RngStream| {
        collect(par_trials(s, cfg.per_side, |_, rng| {
            simulated_transcript(&alg, &cfg.spectrum, k, mode, rng).map(|(sim, _, _)| transcript_summary(&sim.transcript, cfg.coords))
        }))
    };
    let sim = simulate(RotationMode::Simulated, &stream.child(2))?;
    let two_sample = transcript_two_sample_test(&adaptive, &sim, cfg.permutations, &mut stream.child(3).rng())?;
    let control = if cfg.control {
        let ctl = simulate(RotationMode::Identity, &stream.child(4))?;
        Some(transcript_two_sample_test(&adaptive, &ctl, cfg.permutations, &mut stream.child(5).rng())?)
    } else {
        None
    };
    Ok(ReductionReport { algorithm: alg, d, k, identity_residuals: residuals, p1_violations, two_sample, control })
}

fn collect<T>(v: Vec<Result<T>>) -> Result<Vec<T>> {
    v.into_iter().collect()
}

/// Haar rotation fixing `span(w)` and acting on its complement.
pub fn haar_fixing(w: &[DVector<f64>], d: usize, rng: &mut LabRng) -> Result<DMatrix<f64>> {
    let q = orthonormal_basis(w, 1e-10)?;
    let r = q.len();
    // complete to a basis of the complement in coordinate order
    let mut comp: Vec<DVector<f64>> = Vec::with_capacity(d - r);
    let mut all = q.clone();
    for i in 0..d {
        if comp.len() == d - r {
            break;
        }
        let mut e = unit(d, i);
        project_out(&mut e, &all);
        let n = e.norm();
        if n > 1e-6 {
            let e = e / n;
            all.push(e.clone());
            comp.push(e);
        }
    }
    let c = DMatrix::from_columns(&comp);
    let h = haar_orthogonal(d - r, rng);
    let mut v = &c * h * c.transpose();
    for qi in &q {
        v += qi * qi.transpose();
    }
    Ok(v)
}

#[derive(Debug, Clone, Copy, Serialize, Deserialize, PartialEq, Eq)]
#[serde(rename_all = "lowercase")]
pub enum ConditioningMode {
    /// `V` Haar on the complement of `W_m`.
    Haar,
    /// A fixed reflection swapping `e_1` and `e_2`, which does not fix `W_m`.
    FixedViolating,
}

/// Largest `k` with `k(k+1)/2 ≤ m`.
pub fn triangular_level(m: usize) -> usize {
    let mut k = 0;
    while (k + 1) * (k + 2) / 2 <= m {
        k += 1;
    }
    k
}

/// Compares summaries of `(X_k, U)` with those of `(X_k, UV)`, `V` fixing the first `m`
/// transcript vectors, through `⟨v_a, Λ'^p v_b⟩`, `⟨v_a, Λ' e_d⟩` and `⟨e_d, Λ' e_d⟩` where
/// `Λ' = U'ᵀ D U'`.
pub fn conditioning_lemma_check(
    alg: &dyn AdaptiveAlgorithm,
    spectrum: &[f64],
    m: usize,
    mode: ConditioningMode,
    per_side: usize,
    permutations: usize,
    stream: &RngStream,
) -> Result<TwoSampleTest> {
    let d = spectrum.len();
    let k = triangular_level(m);
    if m == 0 || k * k >= d {
        return invalid(format!("m = {m} gives k = {k}, need 1 <= k and k² < d"));
    }
    let dmat = DMatrix::from_diagonal(&DVector::from_column_slice(spectrum));
    let summary = |rotate: bool, rng: &mut LabRng| -> Result<Vec<f64>> {
        let u = haar_orthogonal(d, rng);
        let lambda = u.transpose() * &dmat * &u;
        let t = run_adaptive(alg, &lambda, k)?;
        let xs: Vec<_> = (1..=k).map(|j| t.get(0, j).unwrap().clone()).collect();
        let u2 = if rotate {
            let w: Vec<_> = enumeration_order(m).into_iter().map(|(i, j)| t.get(i, j).unwrap().clone()).collect();
            let v = match mode {
                ConditioningMode::Haar => haar_fixing(&w, d, rng)?,
                ConditioningMode::FixedViolating => {
                    let s = (unit(d, 0) - unit(d, 1)) / 2f64.sqrt();
                    DMatrix::identity(d, d) - &s * s.transpose() * 2.0
                }
            };
            &u * v
        } else {
            u
        };
        let lp = u2.transpose() * &dmat * &u2;
        let ed = unit(d, d - 1);
        let mut f = Vec::new();
        for a in 0..k {
            let mut pb: Vec<DVector<f64>> = xs.clone();
            for _ in 1..=3 {
                pb = pb.iter().map(|v| &lp * v).collect();
                for b in a..k {
                    f.push(xs[a].dot(&pb[b]));
                }
            }
            f.push(xs[a].dot(&(&lp * &ed)));
        }
        f.push(ed.dot(&(&lp * &ed)));
        Ok(f)
    };
    let a = collect(par_trials(&stream.child(0), per_side, |_, rng| summary(false, rng)))?;
    let b = collect(par_trials(&stream.child(1), per_side, |_, rng| summary(true, rng)))?;
    transcript_two_sample_test(&a, &b, permutations, &mut stream.child(2).rng())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::oracle::Diagonal;

    fn rng(seed: u64) -> LabRng {
        RngStream::new(seed).rng()
    }

    #[test]
    fn orthogonalized_direction_examples() {
        let v = orthogonalized_direction(&DVector::from_vec(vec![3.0, 4.0]), &[]).unwrap();
        assert!((v - DVector::from_vec(vec![0.6, 0.8])).amax() < 1e-15);
        let v = orthogonalized_direction(&DVector::from_vec(vec![1.0, 1.0, 0.0]), &[unit(3, 0)]).unwrap();
        assert!((v - unit(3, 1)).amax() < 1e-15);
        let mut r = rng(1);
        let basis: Vec<_> = (0..10).map(|_| gaussian_vector(64, &mut r)).collect();
        let v = orthogonalized_direction(&gaussian_vector(64, &mut r), &basis).unwrap();
        assert!((v.norm() - 1.0).abs() < 1e-12);
        for b in &basis {
            assert!(b.dot(&v).abs() / b.norm() < 1e-10);
        }
        assert!(orthogonalized_direction(&(&basis[0] * 2.0), &basis).is_err());
    }

    #[test]
    fn rotation_examples() {
        let u = build_rotation(&[unit(4, 0)], &unit(4, 1), &unit(4, 2)).unwrap().to_matrix();
        assert!((u.transpose() * unit(4, 0) - unit(4, 0)).amax() < 1e-15);
        assert!((u.transpose() * unit(4, 1) - unit(4, 2)).amax() < 1e-15);
        assert!((u.transpose() * &u - DMatrix::identity(4, 4)).amax() < 1e-15);
        let same = build_rotation(&[unit(4, 0)], &unit(4, 1), &unit(4, 1)).unwrap();
        assert!(same.w.is_none());
        assert!(build_rotation(&[unit(4, 0)], &unit(4, 0), &unit(4, 2)).is_err());
        assert!(build_rotation(&[unit(3, 0), unit(3, 1)], &unit(3, 2), &unit(3, 2)).is_err());
    }

    #[test]
    fn random_rotations_satisfy_postconditions() {
        let mut r = rng(2);
        for trial in 0..2000 {
            let d = 8 + (trial * 7) % 121;
            let nf = (trial % 6).min(d - 3);
            let fixed: Vec<_> = (0..nf).map(|_| gaussian_vector(d, &mut r)).collect();
            let y = orthogonalized_direction(&gaussian_vector(d, &mut r), &fixed).unwrap();
            let z = orthogonalized_direction(&gaussian_vector(d, &mut r), &fixed).unwrap();
            let u = build_rotation(&fixed, &y, &z).unwrap().to_matrix();
            assert!((u.transpose() * &u - DMatrix::identity(d, d)).amax() <= 1e-10);
            assert!((u.transpose() * &y - &z).amax() <= 1e-10);
            for x in &fixed {
                assert!((u.transpose() * x - x).amax() <= 1e-10 * x.amax().max(1.0));
            }
        }
    }

    #[test]
    fn adaptive_bookkeeping() {
        let lam = Diagonal(DVector::from_vec(linear_spectrum(10, 4.0)));
        let t = run_adaptive(&Algorithm::Fresh, &lam, 3).unwrap();
        assert_eq!(t.len(), extended_index_set(3).unwrap().len());
        for (&(i, j), v) in t.pairs.iter().zip(&t.vectors) {
            // Λ^i e_j = λ_j^i e_j
            let want = unit(10, j - 1) * lam.0[j - 1].powi(i as i32);
            assert!((v - want).amax() < 1e-12);
        }
        assert!(run_adaptive(&Algorithm::Fresh, &lam, 4).is_err());
    }

    #[test]
    fn transcript_contains_the_krylov_span() {
        let mut r = rng(3);
        let lam = rotated_spectrum(&linear_spectrum(30, 4.0), &mut r);
        let t = run_adaptive(&Algorithm::Power, &lam, 4).unwrap();
        let v1 = t.get(0, 1).unwrap().clone();
        let mut kry = vec![v1.clone()];
        for _ in 0..4 {
            let n = &lam * kry.last().unwrap();
            kry.push(n);
        }
        let rank = |vs: &[DVector<f64>]| DMatrix::from_columns(vs).svd(false, false).rank(1e-9);
        let mut both = t.vectors.clone();
        both.extend(kry.iter().cloned());
        assert_eq!(rank(&kry), 5);
        assert_eq!(rank(&both), rank(&t.vectors));
        // queries are unit and orthogonal to their inputs
        for k in 2..=4 {
            let v = t.get(0, k).unwrap();
            assert!((v.norm() - 1.0).abs() < 1e-10);
            for (&(i, j), w) in t.pairs.iter().zip(&t.vectors) {
                if i + j <= k && j < k {
                    assert!(w.dot(v).abs() / w.norm() < 1e-10);
                }
            }
        }
    }

    #[test]
    fn identities_hold_on_random_runs() {
        let spec = linear_spectrum(48, 4.0);
        let mut r = rng(4);
        for alg in Algorithm::ALL {
            for _ in 0..20 {
                let (sim, data, lam) = simulated_transcript(&alg, &spec, 4, RotationMode::Simulated, &mut r).unwrap();
                let res = identity_residuals(&alg, &sim, &data, &lam).unwrap();
                assert!(res.max() <= 1e-10, "{alg:?} {res:?}");
                assert!(p1_ok(&sim.state), "{:?}", sim.state.touched_before_query);
                assert_eq!(sim.transcript.len(), 14);
            }
        }
    }

    #[test]
    fn identical_sets_give_p_value_one() {
        let mut r = rng(5);
        let a: Vec<Vec<f64>> = (0..30).map(|_| gaussian_vector(3, &mut r).iter().cloned().collect()).collect();
        let t = transcript_two_sample_test(&a, &a, 200, &mut r).unwrap();
        assert_eq!(t.p_value, 1.0);
    }

    #[test]
    fn single_query_simulation_matches() {
        let spec = linear_spectrum(8, 4.0);
        let s = RngStream::new(6);
        for alg in [Algorithm::Fresh, Algorithm::Power] {
            let a: Vec<_> = par_trials(&s.child(0), 2000, |_, r| transcript_summary(&adaptive_transcript(&alg, &spec, 1, r).unwrap(), 2));
            let b: Vec<_> = par_trials(&s.child(1), 2000, |_, r| {
                transcript_summary(&simulated_transcript(&alg, &spec, 1, RotationMode::Simulated, r).unwrap().0.transcript, 2)
            });
            let t = transcript_two_sample_test(&a, &b, 300, &mut s.child(2).rng()).unwrap();
            assert!(t.p_value > 0.05, "{alg:?} {t:?}");
        }
    }

    #[test]
    fn same_pipeline_calibration() {
        let spec = linear_spectrum(12, 4.0);
        let s = RngStream::new(7);
        let mut accepted = 0;
        let meta = 40;
        for m in 0..meta {
            let sm = s.child(m);
            let draw = |st: &RngStream| par_trials(st, 150, |_, r| transcript_summary(&adaptive_transcript(&Algorithm::Power, &spec, 2, r).unwrap(), 2));
            let t = transcript_two_sample_test(&draw(&sm.child(0)), &draw(&sm.child(1)), 200, &mut sm.child(2).rng()).unwrap();
            accepted += usize::from(t.p_value > 0.05);
        }
        assert!(accepted as f64 >= 0.9 * meta as f64, "{accepted}/{meta}");
    }

    #[test]
    fn negative_control_rejects_small() {
        let spec = linear_spectrum(16, 4.0);
        let s = RngStream::new(8);
        let a: Vec<_> = par_trials(&s.child(0), 300, |_, r| transcript_summary(&adaptive_transcript(&Algorithm::Power, &spec, 3, r).unwrap(), 2));
        let b: Vec<_> = par_trials(&s.child(1), 300, |_, r| {
            transcript_summary(&simulated_transcript(&Algorithm::Power, &spec, 3, RotationMode::Identity, r).unwrap().0.transcript, 2)
        });
        let t = transcript_two_sample_test(&a, &b, 200, &mut s.child(2).rng()).unwrap();
        assert!(t.p_value < 0.05, "{t:?}");
    }

    #[test]
    fn triangular_levels() {
        assert_eq!(triangular_level(1), 1);
        assert_eq!(triangular_level(2), 1);
        assert_eq!(triangular_level(3), 2);
        assert_eq!(triangular_level(5), 2);
        assert_eq!(triangular_level(6), 3);
    }

    #[test]
    fn haar_fixing_fixes() {
        let mut r = rng(9);
        let w: Vec<_> = (0..3).map(|_| gaussian_vector(10, &mut r)).collect();
        let v = haar_fixing(&w, 10, &mut r).unwrap();
        assert!((v.transpose() * &v - DMatrix::identity(10, 10)).amax() < 1e-12);
        for x in &w {
            assert!((&v * x - x).amax() < 1e-12);
        }
    }

    #[test]
    fn conditioning_lemma_cases() {
        let spec = linear_spectrum(12, 4.0);
        let s = RngStream::new(10);
        for m in [1, 3, 4] {
            let t = conditioning_lemma_check(&Algorithm::Power, &spec, m, ConditioningMode::Haar, 400, 300, &s.child(m as u64)).unwrap();
            assert!(t.p_value > 0.05, "m = {m}: {t:?}");
        }
        let t = conditioning_lemma_check(&Algorithm::Power, &spec, 3, ConditioningMode::FixedViolating, 400, 300, &s.child(99)).unwrap();
        assert!(t.p_value < 0.05, "{t:?}");
    }
}
