use std::path::{Path, PathBuf};

use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};
use serde_json::Value;
use sha2::{Digest, Sha256};

use lcslab_core::LabError;

/// Failures of a run, split by exit code.
#[derive(Debug)]
pub enum RunError {
    /// Bad arguments, unknown experiment or schema violation (exit 2).
    Usage(String),
    /// A numerical routine refused or failed (exit 1).
    Numerical(LabError),
    /// Reading configs or writing outputs failed (exit 1).
    Io(String),
}

impl RunError {
    pub fn exit_code(&self) -> i32 {
        match self {
            RunError::Usage(_) => 2,
            RunError::Numerical(_) | RunError::Io(_) => 1,
        }
    }

    pub fn kind(&self) -> &'static str {
        match self {
            RunError::Usage(_) => "usage",
            RunError::Numerical(_) => "numerical",
            RunError::Io(_) => "io",
        }
    }
}

impl std::fmt::Display for RunError {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            RunError::Usage(m) => write!(f, "{m}"),
            RunError::Numerical(e) => write!(f, "{e}"),
            RunError::Io(m) => write!(f, "{m}"),
        }
    }
}

impl std::error::Error for RunError {}

impl From<LabError> for RunError {
    fn from(e: LabError) -> Self {
        RunError::Numerical(e)
    }
}

impl From<std::io::Error> for RunError {
    fn from(e: std::io::Error) -> Self {
        RunError::Io(e.to_string())
    }
}

pub fn usage<T>(msg: impl Into<String>) -> Result<T, RunError> {
    Err(RunError::Usage(msg.into()))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Format {
    Csv,
    Json,
    Svg,
}

/// A fully resolved experiment description; its canonical JSON is echoed into every output.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub experiment: String,
    #[serde(default)]
    pub seed: Option<u64>,
    #[serde(default = "empty_params")]
    pub params: Value,
    #[serde(default, skip_serializing)]
    pub out: Option<PathBuf>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub format: Option<Format>,
}

fn empty_params() -> Value {
    Value::Object(Default::default())
}

pub const DEFAULT_SEED: u64 = 20_240_601;

impl ExperimentConfig {
    pub fn new(experiment: &str, params: Value) -> Self {
        ExperimentConfig { experiment: experiment.into(), seed: None, params, out: None, format: None }
    }

    pub fn load(path: &Path) -> Result<Self, RunError> {
        let text = std::fs::read_to_string(path).map_err(|e| RunError::Io(format!("{}: {e}", path.display())))?;
        serde_json::from_str(&text).map_err(|e| RunError::Usage(format!("{}: {e}", path.display())))
    }

    /// Seed precedence: explicit flag, then the config file, then `LCSLAB_SEED`, then the default.
    pub fn resolve_seed(&mut self, flag: Option<u64>) -> Result<u64, RunError> {
        let env = match std::env::var("LCSLAB_SEED") {
            Ok(s) => Some(s.trim().parse::<u64>().map_err(|_| RunError::Usage(format!("LCSLAB_SEED={s} is not a u64")))?),
            Err(_) => None,
        };
        let seed = flag.or(self.seed).or(env).unwrap_or(DEFAULT_SEED);
        self.seed = Some(seed);
        Ok(seed)
    }

    pub fn seed(&self) -> u64 {
        self.seed.unwrap_or(DEFAULT_SEED)
    }

    /// Deserializes the parameter map, rejecting unknown keys and wrong types.
    pub fn params<T: DeserializeOwned + Serialize>(&mut self) -> Result<T, RunError> {
        let p: T = serde_json::from_value(self.params.clone())
            .map_err(|e| RunError::Usage(format!("{}: bad params: {e}", self.experiment)))?;
        // echo defaults too, so the header shows everything that was used
        self.params = serde_json::to_value(&p).map_err(|e| RunError::Usage(e.to_string()))?;
        Ok(p)
    }

    pub fn canonical_json(&self) -> String {
        serde_json::to_string(self).expect("config serializes")
    }

    /// First 16 hex digits of the SHA-256 of the canonical JSON.
    pub fn hash(&self) -> String {
        let digest = Sha256::digest(self.canonical_json().as_bytes());
        digest.iter().take(8).map(|b| format!("{b:02x}")).collect()
    }
}
