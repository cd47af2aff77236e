use std::path::PathBuf;

use clap::{Args, Parser, Subcommand};
use serde::Serialize;
use serde_json::Value;

use crate::config::{usage, ExperimentConfig, RunError};
use crate::experiments;
use crate::output::{emit, Artifact};
use crate::suites::SuiteReport;

#[derive(Parser, Debug)]
#[command(name = "lcslab", version = env!("LCSLAB_BUILD_ID"), about = "Query-complexity experiments for log-concave sampling")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

/// Flags shared by every subcommand.
#[derive(Args, Debug, Clone, Default)]
pub struct Common {
    /// Root seed; overrides the config file and LCSLAB_SEED.
    #[arg(long, global = true)]
    pub seed: Option<u64>,
    /// Output file (written atomically); stdout when omitted.
    #[arg(long, global = true)]
    pub out: Option<PathBuf>,
    /// JSON config file; flags given on the command line override its params.
    #[arg(long, global = true)]
    pub config: Option<PathBuf>,
}

#[derive(Subcommand, Debug)]
pub enum Command {
    /// Certified degree and error of the inverse square root approximation.
    Cheb(ChebArgs),
    /// Draw samples with the Krylov Gaussian sampler and count queries.
    GaussSample(GaussSampleArgs),
    /// Closed-form KL of the Gaussian sampler over a grid.
    GaussKl(GaussKlArgs),
    /// Ellipsoid rounding plus rejection sampling in low dimension.
    LowdimSample(LowdimArgs),
    /// Kakeya potential family.
    #[command(subcommand)]
    Kakeya(KakeyaCmd),
    /// Wishart facts.
    #[command(subcommand)]
    Wishart(WishartCmd),
    /// Moment-matched hard pairs.
    #[command(subcommand)]
    Hardpair(HardpairCmd),
    /// Simulation of adaptive algorithms from block Krylov data.
    #[command(subcommand)]
    ReduceSim(ReduceCmd),
    /// Run a named acceptance suite.
    Suite(SuiteArgs),
    /// Run whatever experiment a config file names.
    Run(RunArgs),
}

#[derive(Args, Debug, Serialize)]
pub struct ChebArgs {
    #[arg(long, value_delimiter = ',')]
    kappas: Option<Vec<f64>>,
    #[arg(long, value_delimiter = ',')]
    deltas: Option<Vec<f64>>,
    /// search | formula
    #[arg(long)]
    method: Option<String>,
    #[command(flatten)]
    #[serde(skip)]
    common: Common,
}

#[derive(Args, Debug, Serialize)]
pub struct GaussSampleArgs {
    #[arg(long)]
    kappa: Option<f64>,
    #[arg(long)]
    dim: Option<usize>,
    #[arg(long)]
    eps: Option<f64>,
    #[arg(long)]
    samples: Option<usize>,
    /// uniform | two_cluster | cheb_extrema
    #[arg(long)]
    spectrum: Option<String>,
    #[command(flatten)]
    #[serde(skip)]
    common: Common,
}

#[derive(Args, Debug, Serialize)]
pub struct GaussKlArgs {
    #[arg(long, value_delimiter = ',')]
    kappas: Option<Vec<f64>>,
    #[arg(long, value_delimiter = ',')]
    dims: Option<Vec<usize>>,
    #[arg(long, value_delimiter = ',')]
    epss: Option<Vec<f64>>,
    #[arg(long, value_delimiter = ',')]
    spectra: Option<Vec<String>>,
    #[command(flatten)]
    #[serde(skip)]
    common: Common,
}

#[derive(Args, Debug, Serialize)]
pub struct LowdimArgs {
    #[arg(long)]
    dim: Option<usize>,
    #[arg(long)]
    kappa: Option<f64>,
    #[arg(long)]
    eps: Option<f64>,
    #[arg(long)]
    samples: Option<usize>,
    /// quadratic | kakeya
    #[arg(long)]
    potential: Option<String>,
    /// Bit string of the kakeya potential.
    #[arg(long)]
    bits: Option<String>,
    #[arg(long)]
    slope_log2: Option<i32>,
    #[arg(long)]
    delta_log2: Option<i32>,
    #[command(flatten)]
    #[serde(skip)]
    common: Common,
}

#[derive(Subcommand, Debug)]
pub enum KakeyaCmd {
    /// SVG of the nested zero sets.
    Render(RenderArgs),
    /// Bits revealed per query by the leak oracle.
    Leakage(LeakageArgs),
    /// Structural property sweeps.
    Invariants(InvariantArgs),
}

#[derive(Args, Debug, Serialize)]
pub struct RenderArgs {
    #[arg(long, value_delimiter = ',')]
    bits: Option<Vec<String>>,
    #[arg(long = "N")]
    #[serde(rename = "N")]
    n: Option<usize>,
    #[arg(long)]
    window: Option<f64>,
    #[arg(long)]
    px: Option<usize>,
    #[arg(long, value_delimiter = ',')]
    radii: Option<Vec<f64>>,
    #[command(flatten)]
    #[serde(skip)]
    common: Common,
}

#[derive(Args, Debug, Serialize)]
pub struct LeakageArgs {
    #[arg(long = "N")]
    #[serde(rename = "N")]
    n: Option<usize>,
    /// random | bisection
    #[arg(long)]
    strategy: Option<String>,
    #[arg(long)]
    trials: Option<usize>,
    #[arg(long)]
    queries: Option<usize>,
    #[command(flatten)]
    #[serde(skip)]
    common: Common,
}

#[derive(Args, Debug, Serialize)]
pub struct InvariantArgs {
    #[arg(long)]
    convexity_segments: Option<usize>,
    #[arg(long)]
    lipschitz_pairs: Option<usize>,
    #[arg(long)]
    p1_points: Option<usize>,
    #[arg(long)]
    p2_points: Option<usize>,
    #[arg(long)]
    p3_points_per_pair: Option<usize>,
    #[arg(long)]
    leak_points_per_pair: Option<usize>,
    #[arg(long)]
    induction_points: Option<usize>,
    #[command(flatten)]
    #[serde(skip)]
    common: Common,
}

#[derive(Subcommand, Debug)]
pub enum WishartCmd {
    /// Lower tail of the smallest eigenvalue (CSV).
    Tail(TailArgs),
    /// Inverse trace bound and query-budget estimates.
    Invtrace(InvTraceArgs),
    /// Posterior block minorization check.
    Posterior(PosteriorArgs),
}

#[derive(Args, Debug, Serialize)]
pub struct TailArgs {
    #[arg(long)]
    dim: Option<usize>,
    #[arg(long, value_delimiter = ',')]
    xs: Option<Vec<f64>>,
    #[arg(long)]
    trials: Option<usize>,
    #[command(flatten)]
    #[serde(skip)]
    common: Common,
}

#[derive(Args, Debug, Serialize)]
pub struct InvTraceArgs {
    #[arg(long, value_delimiter = ',')]
    dims: Option<Vec<usize>>,
    #[arg(long)]
    c_prime: Option<f64>,
    #[arg(long)]
    trials: Option<usize>,
    #[arg(long)]
    query_dim: Option<usize>,
    #[arg(long, value_delimiter = ',')]
    query_ns: Option<Vec<usize>>,
    #[arg(long)]
    query_trials: Option<usize>,
    #[arg(long, value_delimiter = ',')]
    strategies: Option<Vec<String>>,
    #[command(flatten)]
    #[serde(skip)]
    common: Common,
}

#[derive(Args, Debug, Serialize)]
pub struct PosteriorArgs {
    #[arg(long)]
    n: Option<usize>,
    #[arg(long)]
    dim: Option<usize>,
    #[arg(long)]
    trials: Option<usize>,
    #[command(flatten)]
    #[serde(skip)]
    common: Common,
}

#[derive(Subcommand, Debug)]
pub enum HardpairCmd {
    /// Solve the moment LP and round to a pair of multiplicity vectors (JSON, reusable).
    Build(PairArgs),
    /// Single-sample distinguisher accuracy.
    Distinguish(PairTrialArgs),
    /// GOE-surrogate coupling success rate.
    Couple(PairTrialArgs),
}

#[derive(Args, Debug, Serialize)]
pub struct PairArgs {
    #[arg(long = "K")]
    #[serde(rename = "K")]
    k: Option<usize>,
    #[arg(long)]
    kappa: Option<f64>,
    #[arg(long)]
    dim: Option<usize>,
    #[arg(long)]
    c0: Option<f64>,
    #[arg(long)]
    c1: Option<f64>,
    #[command(flatten)]
    #[serde(skip)]
    common: Common,
}

#[derive(Args, Debug, Serialize)]
pub struct PairTrialArgs {
    /// Pair file written by `hardpair build`.
    #[arg(long)]
    pair: Option<String>,
    #[arg(long = "K")]
    #[serde(rename = "K")]
    k: Option<usize>,
    #[arg(long)]
    kappa: Option<f64>,
    #[arg(long)]
    dim: Option<usize>,
    #[arg(long)]
    c0: Option<f64>,
    #[arg(long)]
    c1: Option<f64>,
    #[arg(long)]
    trials: Option<usize>,
    #[command(flatten)]
    #[serde(skip)]
    common: Common,
}

#[derive(Subcommand, Debug)]
pub enum ReduceCmd {
    /// Identity residuals and the adaptive-vs-simulated two-sample test.
    Run(ReduceArgs),
}

#[derive(Args, Debug, Serialize)]
pub struct ReduceArgs {
    /// fresh | power | hybrid
    #[arg(long)]
    alg: Option<String>,
    #[arg(long)]
    dim: Option<usize>,
    #[arg(long = "K")]
    #[serde(rename = "K")]
    k: Option<usize>,
    #[arg(long)]
    trials: Option<usize>,
    #[arg(long)]
    per_side: Option<usize>,
    #[arg(long)]
    permutations: Option<usize>,
    #[arg(long)]
    kappa: Option<f64>,
    #[arg(long)]
    coords: Option<usize>,
    #[arg(long)]
    control: Option<bool>,
    #[arg(long)]
    pair: Option<String>,
    #[command(flatten)]
    #[serde(skip)]
    common: Common,
}

#[derive(Args, Debug)]
pub struct SuiteArgs {
    /// gauss | lowdim | kakeya | leakage | wishart | lp | krylov | reduction | determinism | all
    pub name: String,
    #[command(flatten)]
    pub common: Common,
}

#[derive(Args, Debug)]
pub struct RunArgs {
    #[command(flatten)]
    pub common: Common,
}

/// The flags that were actually given, as a parameter map.
fn overrides<T: Serialize>(args: &T) -> Value {
    let mut v = serde_json::to_value(args).expect("args serialize");
    if let Value::Object(m) = &mut v {
        m.retain(|_, x| !x.is_null());
    }
    v
}

impl Command {
    /// Experiment name, flag overrides and shared flags.
    fn resolve(&self) -> (Option<String>, Value, Common) {
        let empty = Value::Object(Default::default());
        let named = |n: &str, v: Value, c: &Common| (Some(n.to_string()), v, c.clone());
        match self {
            Command::Cheb(a) => named("cheb", overrides(a), &a.common),
            Command::GaussSample(a) => named("gauss-sample", overrides(a), &a.common),
            Command::GaussKl(a) => named("gauss-kl", overrides(a), &a.common),
            Command::LowdimSample(a) => named("lowdim-sample", overrides(a), &a.common),
            Command::Kakeya(KakeyaCmd::Render(a)) => named("kakeya-render", overrides(a), &a.common),
            Command::Kakeya(KakeyaCmd::Leakage(a)) => named("kakeya-leakage", overrides(a), &a.common),
            Command::Kakeya(KakeyaCmd::Invariants(a)) => named("kakeya-invariants", overrides(a), &a.common),
            Command::Wishart(WishartCmd::Tail(a)) => named("wishart-tail", overrides(a), &a.common),
            Command::Wishart(WishartCmd::Invtrace(a)) => named("wishart-invtrace", overrides(a), &a.common),
            Command::Wishart(WishartCmd::Posterior(a)) => named("wishart-posterior", overrides(a), &a.common),
            Command::Hardpair(HardpairCmd::Build(a)) => named("hardpair-build", overrides(a), &a.common),
            Command::Hardpair(HardpairCmd::Distinguish(a)) => named("hardpair-distinguish", overrides(a), &a.common),
            Command::Hardpair(HardpairCmd::Couple(a)) => named("hardpair-couple", overrides(a), &a.common),
            Command::ReduceSim(ReduceCmd::Run(a)) => named("reduce-sim", overrides(a), &a.common),
            Command::Suite(a) => named(&format!("suite-{}", a.name), empty, &a.common),
            Command::Run(a) => (None, empty, a.common.clone()),
        }
    }
}

/// Builds the resolved config for a parsed command line.
pub fn build_config(cmd: &Command) -> Result<ExperimentConfig, RunError> {
    let (name, flags, common) = cmd.resolve();
    let mut cfg = match (&common.config, &name) {
        (Some(path), _) => {
            let c = ExperimentConfig::load(path)?;
            if let Some(n) = &name {
                if &c.experiment != n {
                    return usage(format!("{} is a config for '{}', not '{n}'", path.display(), c.experiment));
                }
            }
            c
        }
        (None, Some(n)) => ExperimentConfig::new(n, Value::Object(Default::default())),
        (None, None) => return usage("`run` needs --config"),
    };
    match (&mut cfg.params, flags) {
        (Value::Object(p), Value::Object(f)) => p.extend(f),
        (Value::Null, f) => cfg.params = f,
        _ => return usage("params must be a JSON object"),
    }
    cfg.resolve_seed(common.seed)?;
    if common.out.is_some() {
        cfg.out = common.out.clone();
    }
    Ok(cfg)
}

/// Outcome of a successful run: suites report whether all criteria passed.
pub enum Outcome {
    Done,
    Suite(SuiteReport),
}

pub fn execute(cmd: &Command) -> Result<Outcome, RunError> {
    let mut cfg = build_config(cmd)?;
    let artifact = experiments::run(&mut cfg)?;
    emit(&cfg, &artifact)?;
    if cfg.experiment.starts_with("suite-") {
        if let Artifact::Json(v) = &artifact {
            let r: SuiteReport = serde_json::from_value(v.clone()).expect("suite report");
            return Ok(Outcome::Suite(r));
        }
    }
    Ok(Outcome::Done)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn parse(args: &[&str]) -> Command {
        let mut v = vec!["lcslab"];
        v.extend_from_slice(args);
        Cli::try_parse_from(v).unwrap().command
    }

    #[test]
    fn flags_become_params() {
        let cmd = parse(&["kakeya", "leakage", "--N", "12", "--strategy", "bisection", "--seed", "4"]);
        let cfg = build_config(&cmd).unwrap();
        assert_eq!(cfg.experiment, "kakeya-leakage");
        assert_eq!(cfg.params, serde_json::json!({"N": 12, "strategy": "bisection"}));
        assert_eq!(cfg.seed, Some(4));
    }

    #[test]
    fn lists_split_on_commas() {
        let cmd = parse(&["gauss-kl", "--kappas", "4,16", "--dims", "16"]);
        let cfg = build_config(&cmd).unwrap();
        assert_eq!(cfg.params["kappas"], serde_json::json!([4.0, 16.0]));
    }

    #[test]
    fn config_file_must_match_subcommand_and_flags_override() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("c.json");
        std::fs::write(&p, r#"{"experiment": "cheb", "seed": 8, "params": {"kappas": [4.0], "method": "formula"}}"#)
            .unwrap();
        let ps = p.to_str().unwrap();
        let cfg = build_config(&parse(&["cheb", "--config", ps, "--method", "search"])).unwrap();
        assert_eq!(cfg.params["method"], "search");
        assert_eq!(cfg.params["kappas"], serde_json::json!([4.0]));
        assert_eq!(cfg.seed, Some(8));
        let err = build_config(&parse(&["gauss-kl", "--config", ps])).unwrap_err();
        assert_eq!(err.exit_code(), 2);
        let run = build_config(&parse(&["run", "--config", ps])).unwrap();
        assert_eq!(run.experiment, "cheb");
    }

    #[test]
    fn run_without_config_is_usage() {
        assert_eq!(build_config(&parse(&["run"])).unwrap_err().exit_code(), 2);
    }
}
