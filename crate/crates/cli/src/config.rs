//! Run configuration: one JSON file names the network, evidence, policy,
//! node roles, and output directory for every subcommand.

use std::path::{Path, PathBuf};

use gammasort_core::compiler::Policy;
use serde::{Deserialize, Serialize};

use crate::CliError;

pub const CONFIG_SCHEMA_VERSION: u32 = 1;

fn default_out_dir() -> PathBuf {
    PathBuf::from("out")
}
fn default_batches() -> usize {
    5
}
fn default_samples() -> usize {
    gammasort_core::simulator::DEFAULT_SAMPLES
}
fn default_curve_points() -> usize {
    512
}

/// The run configuration document. Relative paths are resolved against
/// the directory containing the config file itself, so a config travels
/// with its data.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    pub schema_version: u32,
    /// Network JSON file.
    pub network: PathBuf,
    /// Evidence JSON file (flat `{label: state-or-number}`); optional.
    #[serde(default)]
    pub evidence: Option<PathBuf>,
    /// Loss policy: reject threshold ĉ, divert cost Λ₀, error cost Λ₁.
    #[serde(default)]
    pub policy: Option<Policy>,
    /// Base seed for staging batches.
    #[serde(default)]
    pub seed: u64,
    /// Where artifacts are written.
    #[serde(default = "default_out_dir")]
    pub out_dir: PathBuf,
    /// Node labels for the line roles.
    #[serde(default)]
    pub sensor: Option<String>,
    #[serde(default)]
    pub target: Option<String>,
    #[serde(default)]
    pub assay: Option<String>,
    /// Compiled model consumed by `report` (default: `<out_dir>/model.json`).
    #[serde(default)]
    pub model: Option<PathBuf>,
    /// Batches staged by `simulate` (seeds `seed..seed+batches`).
    #[serde(default = "default_batches")]
    pub batches: usize,
    #[serde(default = "default_samples")]
    pub samples_per_batch: usize,
    /// Rows in the report's decision-curve CSV.
    #[serde(default = "default_curve_points")]
    pub curve_points: usize,
}

impl RunConfig {
    /// Load a config file and resolve its relative paths against the
    /// file's own directory.
    pub fn load(path: &Path) -> Result<RunConfig, CliError> {
        let text = std::fs::read_to_string(path).map_err(|e| {
            CliError::io(format!("cannot read config {}: {e}", path.display()))
        })?;
        let mut cfg: RunConfig = serde_json::from_str(&text).map_err(|e| {
            CliError::io(format!("cannot parse config {}: {e}", path.display()))
        })?;
        if cfg.schema_version != CONFIG_SCHEMA_VERSION {
            return Err(CliError::usage(format!(
                "config schema {} unsupported (expected {CONFIG_SCHEMA_VERSION})",
                cfg.schema_version
            )));
        }
        let base = path.parent().unwrap_or(Path::new("."));
        cfg.network = resolve(base, &cfg.network);
        cfg.evidence = cfg.evidence.map(|p| resolve(base, &p));
        cfg.model = cfg.model.map(|p| resolve(base, &p));
        cfg.out_dir = resolve(base, &cfg.out_dir);
        Ok(cfg)
    }

    pub fn policy(&self) -> Result<Policy, CliError> {
        let p = self
            .policy
            .ok_or_else(|| CliError::usage("config is missing the \"policy\" field"))?;
        p.check()
            .map_err(|e| CliError::usage(format!("invalid policy: {e}")))?;
        Ok(p)
    }

    pub fn role<'a>(&'a self, name: &str) -> Result<&'a str, CliError> {
        let value = match name {
            "sensor" => &self.sensor,
            "target" => &self.target,
            "assay" => &self.assay,
            _ => unreachable!("unknown role {name}"),
        };
        value
            .as_deref()
            .ok_or_else(|| CliError::usage(format!("config is missing the \"{name}\" field")))
    }

    /// The compiled-model path `report` reads.
    pub fn model_path(&self) -> PathBuf {
        self.model
            .clone()
            .unwrap_or_else(|| self.out_dir.join("model.json"))
    }
}

fn resolve(base: &Path, p: &Path) -> PathBuf {
    if p.is_absolute() {
        p.to_path_buf()
    } else {
        base.join(p)
    }
}
