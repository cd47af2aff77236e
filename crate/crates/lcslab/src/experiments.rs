use std::path::Path;

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};
use serde_json::{json, Value};

use lcslab_core::cheb::{inv_sqrt_approx, inv_sqrt_search};
use lcslab_core::gauss::{exact_factor, exact_kl_centered, kl_diagonal, plan, sample, Method, Spectrum};
use lcslab_core::hard::pair::{
    build_hard_pair, distinguisher_experiment, lp_threshold, pair_coupling, HardPair, HardPairConfig, DEFAULT_C0,
};
use lcslab_core::hard::wishart::{
    inverse_trace_bound, inverse_trace_query_experiment, posterior_minorization_check, smallest_eig_tail,
    TraceStrategy, INV_TRACE_C,
};
use lcslab_core::kakeya::checks::{structural_suite, StructuralConfig};
use lcslab_core::kakeya::{leakage_experiment, render_zero_sets, BitString, KakeyaPotential, Mollifier, Profile, Strategy};
use lcslab_core::lowdim::sample_many;
use lcslab_core::oracle::{Diagonal, MatVecOracle, Potential, QuadraticPotential};
use lcslab_core::reduction::{linear_spectrum, reduction_experiment, Algorithm, ReductionConfig};
use lcslab_core::rng::{par_trials, LabRng, RngStream};

use crate::config::{usage, ExperimentConfig, RunError};
use crate::output::{num, Artifact, Table};
use crate::suites;

pub const EXPERIMENTS: [&str; 14] = [
    "cheb",
    "gauss-sample",
    "gauss-kl",
    "lowdim-sample",
    "kakeya-render",
    "kakeya-leakage",
    "kakeya-invariants",
    "wishart-tail",
    "wishart-invtrace",
    "wishart-posterior",
    "hardpair-build",
    "hardpair-distinguish",
    "hardpair-couple",
    "reduce-sim",
];

/// Random-strategy queries per leakage trial; fixed so that bits per query compare across `N`.
pub const RANDOM_LEAK_QUERIES: usize = 20;

/// Runs the named experiment. `cfg.params` is replaced by the fully resolved parameters.
pub fn run(cfg: &mut ExperimentConfig) -> Result<Artifact, RunError> {
    let stream = RngStream::new(cfg.seed());
    let name = cfg.experiment.clone();
    if let Some(suite) = name.strip_prefix("suite-") {
        let report = suites::run_suite(suite, cfg)?;
        return Ok(Artifact::Json(serde_json::to_value(report).expect("report serializes")));
    }
    match name.as_str() {
        "cheb" => cheb(cfg.params()?),
        "gauss-sample" => gauss_sample(cfg.params()?, &stream),
        "gauss-kl" => gauss_kl(cfg.params()?),
        "lowdim-sample" => lowdim_sample(cfg.params()?, &stream),
        "kakeya-render" => kakeya_render(cfg.params()?),
        "kakeya-leakage" => kakeya_leakage(cfg.params()?, &stream),
        "kakeya-invariants" => kakeya_invariants(cfg.params()?, &stream),
        "wishart-tail" => wishart_tail(cfg.params()?, &stream),
        "wishart-invtrace" => wishart_invtrace(cfg.params()?, &stream),
        "wishart-posterior" => wishart_posterior(cfg.params()?, &stream),
        "hardpair-build" => hardpair_build(cfg.params()?, cfg.seed()),
        "hardpair-distinguish" => hardpair_distinguish(cfg.params()?, &stream),
        "hardpair-couple" => hardpair_couple(cfg.params()?, &stream),
        "reduce-sim" => reduce_sim(cfg.params()?, &stream),
        other => usage(format!(
            "unknown experiment '{other}'; known: {}, suite-<{}>",
            EXPERIMENTS.join(", "),
            suites::SUITES.join("|")
        )),
    }
}

pub fn parse_spectrum(s: &str) -> Result<Spectrum, RunError> {
    Spectrum::ALL.into_iter().find(|x| x.as_str() == s).ok_or_else(|| {
        RunError::Usage(format!("unknown spectrum '{s}' (uniform|two_cluster|cheb_extrema)"))
    })
}

fn parse_strategy(s: &str) -> Result<Strategy, RunError> {
    match s {
        "random" => Ok(Strategy::Random),
        "bisection" => Ok(Strategy::Bisection),
        _ => usage(format!("unknown strategy '{s}' (random|bisection)")),
    }
}

fn parse_trace_strategy(s: &str) -> Result<TraceStrategy, RunError> {
    TraceStrategy::ALL.into_iter().find(|x| x.as_str() == s).ok_or_else(|| {
        RunError::Usage(format!("unknown strategy '{s}' (coordinate|hutchinson|block-power)"))
    })
}

fn parse_bits(s: &str) -> Result<BitString, RunError> {
    BitString::parse(s).map_err(|e| RunError::Usage(e.to_string()))
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ChebParams {
    pub kappas: Vec<f64>,
    pub deltas: Vec<f64>,
    /// `search` (smallest certified degree) or `formula` (closed-form degree).
    pub method: String,
}

impl Default for ChebParams {
    fn default() -> Self {
        ChebParams { kappas: vec![4.0, 16.0, 64.0, 256.0], deltas: vec![0.1, 0.01, 0.001], method: "search".into() }
    }
}

fn cheb(p: ChebParams) -> Result<Artifact, RunError> {
    let mut t = Table::new(&["kappa", "delta", "degree", "max_error"]);
    for &kappa in &p.kappas {
        for &delta in &p.deltas {
            let c = match p.method.as_str() {
                "search" => inv_sqrt_search(kappa, delta)?,
                "formula" => inv_sqrt_approx(kappa, delta)?,
                m => return usage(format!("unknown method '{m}' (search|formula)")),
            };
            t.push(vec![num(kappa), num(delta), c.poly.degree().to_string(), num(c.max_error)]);
        }
    }
    Ok(Artifact::Table(t))
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct GaussSampleParams {
    pub kappa: f64,
    pub dim: usize,
    pub eps: f64,
    pub samples: usize,
    pub spectrum: String,
}

impl Default for GaussSampleParams {
    fn default() -> Self {
        GaussSampleParams { kappa: 16.0, dim: 256, eps: 0.1, samples: 10, spectrum: "uniform".into() }
    }
}

/// Draws one sample against `diag(eigs)` and returns the number of queries it used.
pub fn counted_sample(
    pl: &lcslab_core::gauss::KrylovSamplerPlan,
    eigs: &[f64],
    rng: &mut LabRng,
) -> lcslab_core::Result<usize> {
    let mut o = MatVecOracle::new(Diagonal(DVector::from_column_slice(eigs))).without_log();
    sample(pl, &mut o, rng)?;
    Ok(o.query_count())
}

fn gauss_sample(p: GaussSampleParams, stream: &RngStream) -> Result<Artifact, RunError> {
    let spec = parse_spectrum(&p.spectrum)?;
    let pl = plan(p.kappa, p.dim, p.eps)?;
    let eigs = spec.eigenvalues(p.dim, p.kappa);
    let counts = par_trials(stream, p.samples, |_, rng| counted_sample(&pl, &eigs, rng));
    let mut t = Table::new(&["sample_id", "query_count", "method"]);
    for (i, q) in counts.into_iter().enumerate() {
        t.push(vec![i.to_string(), q?.to_string(), pl.method.as_str().into()]);
    }
    Ok(Artifact::Table(t))
}

/// Closed-form divergence of the planned sampler on one diagonal test spectrum.
#[derive(Debug, Clone, Serialize)]
pub struct KlPoint {
    pub kappa: f64,
    pub dim: usize,
    pub eps: f64,
    pub spectrum: &'static str,
    pub method: &'static str,
    pub degree: usize,
    pub queries: usize,
    pub exact_kl: f64,
    /// The guarantee `ε²`.
    pub paper_bound: f64,
    /// `Σ_k (q(λ_k)²λ_k − 1)²`, Krylov path only.
    pub eig_bound: Option<f64>,
}

/// With `rng`, one sample is drawn and its queries counted; otherwise the plan's budget is reported.
pub fn kl_point(kappa: f64, d: usize, eps: f64, spec: Spectrum, rng: Option<&mut LabRng>) -> lcslab_core::Result<KlPoint> {
    let pl = plan(kappa, d, eps)?;
    let eigs = spec.eigenvalues(d, kappa);
    let (exact_kl, eig_bound) = match pl.method {
        Method::Krylov => {
            let (kl, b) = kl_diagonal(&pl.poly, &eigs);
            (kl, Some(b))
        }
        Method::Exact => {
            let lambda = DMatrix::from_diagonal(&DVector::from_column_slice(&eigs));
            let l = exact_factor(&lambda)?;
            let sigma_hat = &l * l.transpose();
            let sigma = DMatrix::from_diagonal(&DVector::from_iterator(d, eigs.iter().map(|x| 1.0 / x)));
            (exact_kl_centered(&((&sigma_hat + sigma_hat.transpose()) * 0.5), &sigma)?, None)
        }
    };
    let queries = match rng {
        Some(r) => counted_sample(&pl, &eigs, r)?,
        None => pl.query_budget(),
    };
    Ok(KlPoint {
        kappa,
        dim: d,
        eps,
        spectrum: spec.as_str(),
        method: pl.method.as_str(),
        degree: pl.degree,
        queries,
        exact_kl,
        paper_bound: eps * eps,
        eig_bound,
    })
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct GaussKlParams {
    pub kappas: Vec<f64>,
    pub dims: Vec<usize>,
    pub epss: Vec<f64>,
    pub spectra: Vec<String>,
}

impl Default for GaussKlParams {
    fn default() -> Self {
        GaussKlParams {
            kappas: vec![4.0, 16.0, 64.0, 256.0],
            dims: vec![16, 256, 4096],
            epss: vec![0.3, 0.1, 0.03],
            spectra: vec!["uniform".into()],
        }
    }
}

fn gauss_kl(p: GaussKlParams) -> Result<Artifact, RunError> {
    let specs = p.spectra.iter().map(|s| parse_spectrum(s)).collect::<Result<Vec<_>, _>>()?;
    let mut t = Table::new(&[
        "kappa",
        "dim",
        "eps",
        "degree",
        "exact_kl",
        "paper_bound",
        "spectrum",
        "method",
        "queries",
        "eig_bound",
    ]);
    for &kappa in &p.kappas {
        for &d in &p.dims {
            for &eps in &p.epss {
                for &s in &specs {
                    let k = kl_point(kappa, d, eps, s, None)?;
                    t.push(vec![
                        num(k.kappa),
                        k.dim.to_string(),
                        num(k.eps),
                        k.degree.to_string(),
                        num(k.exact_kl),
                        num(k.paper_bound),
                        k.spectrum.into(),
                        k.method.into(),
                        k.queries.to_string(),
                        k.eig_bound.map(num).unwrap_or_default(),
                    ]);
                }
            }
        }
    }
    Ok(Artifact::Table(t))
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct LowdimParams {
    pub dim: usize,
    pub kappa: f64,
    pub eps: f64,
    pub samples: usize,
    /// `quadratic`: `½ xᵀ diag(1..κ) x`; `kakeya`: a reduced-profile member with `½‖x‖²` added.
    pub potential: String,
    pub bits: String,
    pub slope_log2: i32,
    pub delta_log2: i32,
    pub max_dim: usize,
}

impl Default for LowdimParams {
    fn default() -> Self {
        LowdimParams {
            dim: 2,
            kappa: 100.0,
            eps: 0.01,
            samples: 100,
            potential: "quadratic".into(),
            bits: "1010".into(),
            slope_log2: 2,
            delta_log2: 4,
            max_dim: 6,
        }
    }
}

fn lowdim_table<P: Potential>(v: &P, p: &LowdimParams, stream: &RngStream) -> Result<Artifact, RunError> {
    let (rounding, draws) = sample_many(v, p.kappa, p.eps, p.samples, stream)?;
    let mut cols: Vec<String> = vec!["sample_id".into()];
    cols.extend((1..=p.dim).map(|i| format!("x{i}")));
    cols.extend(["proposals".into(), "total_queries".into()]);
    let mut t = Table { columns: cols, rows: Vec::new() };
    for (i, (x, props)) in draws.iter().enumerate() {
        let mut row = vec![i.to_string()];
        row.extend(x.iter().map(|&c| num(c)));
        row.push(props.to_string());
        row.push((rounding.queries + props).to_string());
        t.push(row);
    }
    Ok(Artifact::Table(t))
}

fn lowdim_sample(p: LowdimParams, stream: &RngStream) -> Result<Artifact, RunError> {
    if p.dim < 2 || p.dim > p.max_dim {
        return usage(format!("dim must lie in 2..={}", p.max_dim));
    }
    match p.potential.as_str() {
        "quadratic" => {
            let v = QuadraticPotential::diagonal(&linear_spectrum(p.dim, p.kappa))?;
            lowdim_table(&v, &p, stream)
        }
        "kakeya" => {
            if p.dim != 2 {
                return usage("the kakeya potential is two-dimensional");
            }
            let b = parse_bits(&p.bits)?;
            let v = KakeyaPotential::new(b, Profile::reduced(p.slope_log2, 0, p.delta_log2), Mollifier::Normalized)?;
            lowdim_table(&v, &p, stream)
        }
        other => usage(format!("unknown potential '{other}' (quadratic|kakeya)")),
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RenderParams {
    pub bits: Vec<String>,
    #[serde(rename = "N")]
    pub n: Option<usize>,
    pub window: f64,
    pub px: usize,
    pub radii: Vec<f64>,
}

impl Default for RenderParams {
    fn default() -> Self {
        RenderParams { bits: vec!["1010".into()], n: None, window: 1.0, px: 120, radii: Vec::new() }
    }
}

fn kakeya_render(p: RenderParams) -> Result<Artifact, RunError> {
    let strings = p.bits.iter().map(|s| parse_bits(s)).collect::<Result<Vec<_>, _>>()?;
    if let Some(n) = p.n {
        if let Some(b) = strings.iter().find(|b| b.len() != n) {
            return usage(format!("bit string {} does not have length N = {n}", b.to_string_bits()));
        }
    }
    Ok(Artifact::Svg(render_zero_sets(&strings, p.window, p.px, &p.radii)?))
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct LeakageParams {
    #[serde(rename = "N")]
    pub n: usize,
    pub strategy: String,
    pub trials: usize,
    /// Queries per trial; defaults to 20 for `random` and `N + 2` for `bisection`.
    pub queries: Option<usize>,
}

impl Default for LeakageParams {
    fn default() -> Self {
        LeakageParams { n: 16, strategy: "random".into(), trials: 10_000, queries: None }
    }
}

pub fn leak_queries(strategy: Strategy, n: usize) -> usize {
    match strategy {
        Strategy::Random => RANDOM_LEAK_QUERIES,
        Strategy::Bisection => n + 2,
    }
}

fn kakeya_leakage(p: LeakageParams, stream: &RngStream) -> Result<Artifact, RunError> {
    let s = parse_strategy(&p.strategy)?;
    let q = p.queries.unwrap_or_else(|| leak_queries(s, p.n));
    let r = leakage_experiment(p.n, q, s, p.trials, stream)?;
    Ok(Artifact::Json(json!({
        "N": r.n,
        "strategy": s.as_str(),
        "trials": r.trials,
        "avg_bits_per_query": r.avg_bits_per_query,
        "histogram": r.histogram,
        "queries_per_trial": r.n_queries,
        "capped": r.capped,
        "identified": r.identified,
        "identified_within_n_plus_2": r.identified_within_n_plus_2,
        "mean_queries_to_identify": r.mean_queries_to_identify,
    })))
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct InvariantParams {
    pub convexity_segments: usize,
    pub lipschitz_pairs: usize,
    pub p1_points: usize,
    pub p2_points: usize,
    pub p3_points_per_pair: usize,
    pub leak_points_per_pair: usize,
    pub induction_points: usize,
}

impl Default for InvariantParams {
    fn default() -> Self {
        let d = StructuralConfig::default();
        InvariantParams {
            convexity_segments: d.convexity_segments,
            lipschitz_pairs: d.lipschitz_pairs,
            p1_points: d.p1_points,
            p2_points: d.p2_points,
            p3_points_per_pair: d.p3_points_per_pair,
            leak_points_per_pair: d.leak_points_per_pair,
            induction_points: d.induction_points,
        }
    }
}

impl InvariantParams {
    pub fn structural(&self) -> StructuralConfig {
        StructuralConfig {
            convexity_segments: self.convexity_segments,
            lipschitz_pairs: self.lipschitz_pairs,
            p1_points: self.p1_points,
            p2_points: self.p2_points,
            p3_points_per_pair: self.p3_points_per_pair,
            leak_points_per_pair: self.leak_points_per_pair,
            induction_points: self.induction_points,
        }
    }
}

fn kakeya_invariants(p: InvariantParams, stream: &RngStream) -> Result<Artifact, RunError> {
    let checks = structural_suite(&p.structural(), stream)?;
    let passed = checks.iter().all(|c| c.passed());
    Ok(Artifact::Json(json!({ "passed": passed, "checks": checks })))
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TailParams {
    pub dim: usize,
    pub xs: Vec<f64>,
    pub trials: usize,
}

impl Default for TailParams {
    fn default() -> Self {
        TailParams { dim: 8, xs: vec![0.01, 0.04, 0.16, 0.25, 1.0], trials: 100_000 }
    }
}

fn wishart_tail(p: TailParams, stream: &RngStream) -> Result<Artifact, RunError> {
    let rows = smallest_eig_tail(p.dim, &p.xs, p.trials, stream)?;
    let mut t = Table::new(&["dim", "x", "hits", "trials", "p", "lo", "hi", "ratio"]);
    for r in rows {
        t.push(vec![
            p.dim.to_string(),
            num(r.x),
            r.hits.to_string(),
            r.trials.to_string(),
            num(r.p),
            num(r.lo),
            num(r.hi),
            num(r.ratio),
        ]);
    }
    Ok(Artifact::Table(t))
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct InvTraceParams {
    pub dims: Vec<usize>,
    pub c_prime: f64,
    pub trials: usize,
    pub query_dim: usize,
    pub query_ns: Vec<usize>,
    pub query_trials: usize,
    pub strategies: Vec<String>,
}

impl Default for InvTraceParams {
    fn default() -> Self {
        InvTraceParams {
            dims: vec![8, 32],
            c_prime: INV_TRACE_C,
            trials: 10_000,
            query_dim: 32,
            query_ns: vec![1, 2, 4, 8, 16, 32],
            query_trials: 1000,
            strategies: TraceStrategy::ALL.iter().map(|s| s.as_str().to_string()).collect(),
        }
    }
}

fn wishart_invtrace(p: InvTraceParams, stream: &RngStream) -> Result<Artifact, RunError> {
    let bounds = p
        .dims
        .iter()
        .enumerate()
        .map(|(i, &d)| inverse_trace_bound(d, p.c_prime, p.trials, &stream.child(0).child(i as u64)))
        .collect::<lcslab_core::Result<Vec<_>>>()?;
    let mut queries = Vec::new();
    for (i, s) in p.strategies.iter().enumerate() {
        let s = parse_trace_strategy(s)?;
        queries.extend(inverse_trace_query_experiment(
            p.query_dim,
            s,
            &p.query_ns,
            p.query_trials,
            &stream.child(1).child(i as u64),
        )?);
    }
    Ok(Artifact::Json(json!({ "c_prime": p.c_prime, "bounds": bounds, "queries": queries })))
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PosteriorParams {
    pub n: usize,
    pub dim: usize,
    pub trials: usize,
}

impl Default for PosteriorParams {
    fn default() -> Self {
        PosteriorParams { n: 3, dim: 8, trials: 2000 }
    }
}

fn wishart_posterior(p: PosteriorParams, stream: &RngStream) -> Result<Artifact, RunError> {
    let r = posterior_minorization_check(p.n, p.dim, p.trials, stream)?;
    Ok(Artifact::Json(serde_json::to_value(r).expect("report serializes")))
}

/// Depth at half the LP threshold `c₀√κ ln d`, at least 1.
pub fn half_threshold_k(kappa: f64, d: usize, c0: f64) -> usize {
    ((lp_threshold(kappa, d, c0) / 2.0).floor() as usize).max(1)
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PairParams {
    #[serde(rename = "K")]
    pub k: Option<usize>,
    pub kappa: f64,
    pub dim: usize,
    pub c0: f64,
    pub c1: Option<f64>,
}

impl Default for PairParams {
    fn default() -> Self {
        PairParams { k: None, kappa: 16.0, dim: 4096, c0: DEFAULT_C0, c1: None }
    }
}

impl PairParams {
    pub fn config(&self) -> HardPairConfig {
        let mut c = HardPairConfig::new(self.k.unwrap_or(1), self.kappa, self.dim);
        c.c0 = self.c0;
        c.k = self.k.unwrap_or_else(|| half_threshold_k(self.kappa, self.dim, self.c0));
        if let Some(c1) = self.c1 {
            c.c1 = c1;
        }
        c
    }
}

fn pair_json(pair: &HardPair, seed: u64) -> Value {
    let mut v = serde_json::to_value(pair).expect("pair serializes");
    v["seed"] = json!(seed);
    v["trace_gap"] = json!(pair.trace_gap());
    v
}

fn hardpair_build(p: PairParams, seed: u64) -> Result<Artifact, RunError> {
    let pair = build_hard_pair(p.config())?;
    Ok(Artifact::Json(pair_json(&pair, seed)))
}

/// Reads a pair written by `hardpair-build`, either bare or wrapped in an output document.
pub fn load_pair(path: &Path) -> Result<HardPair, RunError> {
    let text = std::fs::read_to_string(path).map_err(|e| RunError::Io(format!("{}: {e}", path.display())))?;
    let v: Value = serde_json::from_str(&text).map_err(|e| RunError::Usage(format!("{}: {e}", path.display())))?;
    let inner = v.get("result").cloned().unwrap_or(v);
    let pair: HardPair =
        serde_json::from_value(inner).map_err(|e| RunError::Usage(format!("{}: not a hard pair: {e}", path.display())))?;
    if pair.n.iter().sum::<usize>() != pair.config.d || pair.n_prime.iter().sum::<usize>() != pair.config.d {
        return usage(format!("{}: multiplicities do not sum to d", path.display()));
    }
    Ok(pair)
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PairTrialParams {
    /// Pair file from `hardpair-build`; when absent the pair is built from the fields below.
    pub pair: Option<String>,
    #[serde(rename = "K")]
    pub k: Option<usize>,
    pub kappa: f64,
    pub dim: usize,
    pub c0: f64,
    pub c1: Option<f64>,
    pub trials: usize,
}

impl Default for PairTrialParams {
    fn default() -> Self {
        let d = PairParams::default();
        PairTrialParams { pair: None, k: d.k, kappa: d.kappa, dim: d.dim, c0: d.c0, c1: d.c1, trials: 1000 }
    }
}

impl PairTrialParams {
    fn pair(&self) -> Result<HardPair, RunError> {
        match &self.pair {
            Some(path) => load_pair(Path::new(path)),
            None => {
                let pp = PairParams { k: self.k, kappa: self.kappa, dim: self.dim, c0: self.c0, c1: self.c1 };
                Ok(build_hard_pair(pp.config())?)
            }
        }
    }
}

fn pair_summary(pair: &HardPair) -> Value {
    json!({
        "config": pair.config,
        "N": pair.n,
        "N_prime": pair.n_prime,
        "trace": pair.trace,
        "trace_prime": pair.trace_prime,
        "trace_gap": pair.trace_gap(),
        "gap_bound": pair.gap_bound,
    })
}

fn hardpair_distinguish(p: PairTrialParams, stream: &RngStream) -> Result<Artifact, RunError> {
    let pair = p.pair()?;
    let r = distinguisher_experiment(&pair, p.trials, stream)?;
    Ok(Artifact::Json(json!({ "pair": pair_summary(&pair), "report": r })))
}

fn hardpair_couple(p: PairTrialParams, stream: &RngStream) -> Result<Artifact, RunError> {
    let pair = p.pair()?;
    let r = pair_coupling(&pair, p.trials, stream)?;
    Ok(Artifact::Json(json!({ "pair": pair_summary(&pair), "report": r })))
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ReduceParams {
    pub alg: String,
    pub dim: usize,
    #[serde(rename = "K")]
    pub k: usize,
    /// Identity-check runs.
    pub trials: usize,
    pub per_side: usize,
    pub permutations: usize,
    pub kappa: f64,
    pub coords: usize,
    pub control: bool,
    /// Use the spectrum `D` of a pair file instead of an even grid on `[1, κ]`.
    pub pair: Option<String>,
}

impl Default for ReduceParams {
    fn default() -> Self {
        ReduceParams {
            alg: "fresh".into(),
            dim: 48,
            k: 4,
            trials: 1000,
            per_side: 2000,
            permutations: 500,
            kappa: 4.0,
            coords: 2,
            control: true,
            pair: None,
        }
    }
}

impl ReduceParams {
    pub fn reduction_config(&self) -> Result<ReductionConfig, RunError> {
        let alg = Algorithm::parse(&self.alg).map_err(|e| RunError::Usage(e.to_string()))?;
        let mut c = ReductionConfig::new(alg, self.dim, self.k);
        c.spectrum = match &self.pair {
            Some(path) => {
                let pair = load_pair(Path::new(path))?;
                if pair.config.d != self.dim {
                    return usage(format!("pair has d = {}, run asks for dim = {}", pair.config.d, self.dim));
                }
                pair.diag().iter().copied().collect()
            }
            None => linear_spectrum(self.dim, self.kappa),
        };
        c.identity_runs = self.trials;
        c.per_side = self.per_side;
        c.permutations = self.permutations;
        c.coords = self.coords;
        c.control = self.control;
        Ok(c)
    }
}

fn reduce_sim(p: ReduceParams, stream: &RngStream) -> Result<Artifact, RunError> {
    let r = reduction_experiment(&p.reduction_config()?, stream)?;
    Ok(Artifact::Json(serde_json::to_value(r).expect("report serializes")))
}
