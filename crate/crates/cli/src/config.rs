use std::path::{Path, PathBuf};

use bkl_core::levy_motion::LevyModel;
use bkl_core::offspring::BranchingSpec;
use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::error::CliError;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Mode {
    Simulate,
    Ode,
    Pde,
    Shoot,
    Estimate,
    Verify,
    EmitPlotData,
}

impl Mode {
    pub fn name(self) -> &'static str {
        match self {
            Mode::Simulate => "simulate",
            Mode::Ode => "ode",
            Mode::Pde => "pde",
            Mode::Shoot => "shoot",
            Mode::Estimate => "estimate",
            Mode::Verify => "verify",
            Mode::EmitPlotData => "emit_plot_data",
        }
    }
}

fn default_replicas() -> u64 {
    1000
}

/// One experiment, read from a JSON file.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub spec: BranchingSpec,
    pub model: LevyModel,
    pub mode: Mode,
    /// Mode-specific settings, validated when the mode runs.
    #[serde(default = "empty_object")]
    pub parameters: serde_json::Value,
    pub seed: u64,
    #[serde(default = "default_replicas")]
    pub replicas: u64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub output: Option<PathBuf>,
    /// Worker threads; `BKL_THREADS` takes precedence.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub threads: Option<usize>,
}

fn empty_object() -> serde_json::Value {
    serde_json::Value::Object(Default::default())
}

impl ExperimentConfig {
    pub fn load(path: &Path) -> Result<Self, CliError> {
        let text = std::fs::read_to_string(path).map_err(|e| CliError::Config(format!("{}: {e}", path.display())))?;
        Self::from_json(&text)
    }

    pub fn from_json(text: &str) -> Result<Self, CliError> {
        let cfg: ExperimentConfig = serde_json::from_str(text).map_err(|e| CliError::Config(e.to_string()))?;
        if !cfg.parameters.is_object() {
            return Err(CliError::Config("parameters must be a JSON object".into()));
        }
        Ok(cfg)
    }

    /// Typed view of `parameters`.
    pub fn parameters<P: DeserializeOwned>(&self) -> Result<P, CliError> {
        serde_json::from_value(self.parameters.clone()).map_err(|e| CliError::Config(format!("parameters for {}: {e}", self.mode.name())))
    }

    /// SHA-256 of the canonical JSON of everything that affects results:
    /// the output path and thread count are left out.
    pub fn hash(&self) -> String {
        let mut value = serde_json::to_value(self).expect("config serializes");
        if let Some(map) = value.as_object_mut() {
            map.remove("output");
            map.remove("threads");
        }
        hex::encode(Sha256::digest(value.to_string().as_bytes()))
    }

    pub fn threads(&self) -> usize {
        let env = std::env::var("BKL_THREADS").ok().and_then(|s| s.trim().parse::<usize>().ok()).filter(|&n| n > 0);
        env.or(self.threads.filter(|&n| n > 0)).unwrap_or_else(bkl_core::ensemble::default_threads)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    const BASE: &str = r#"{
        "spec": {"law": {"kind": "binary"}, "beta": 1.0},
        "model": {"kind": "brownian", "sigma2": 1.0},
        "mode": "ode",
        "parameters": {"t_values": [10.0]},
        "seed": 7
    }"#;

    #[test]
    fn unknown_keys_are_rejected() {
        let bad = BASE.replace("\"seed\": 7", "\"seed\": 7, \"sede\": 8");
        assert!(matches!(ExperimentConfig::from_json(&bad), Err(CliError::Config(_))));
        let nested = BASE.replace("\"sigma2\": 1.0}", "\"sigma2\": 1.0, \"drift\": 0.1}");
        assert!(matches!(ExperimentConfig::from_json(&nested), Err(CliError::Config(_))));
    }

    #[test]
    fn hash_ignores_output_and_threads_but_not_seed() {
        let a = ExperimentConfig::from_json(BASE).unwrap();
        let mut b = a.clone();
        b.output = Some("elsewhere".into());
        b.threads = Some(3);
        assert_eq!(a.hash(), b.hash());
        b.seed = 8;
        assert_ne!(a.hash(), b.hash());
        assert_eq!(a.hash().len(), 64);
    }

    #[test]
    fn infeasible_spec_is_a_config_error() {
        let bad = BASE.replace("\"beta\": 1.0", "\"beta\": -1.0");
        assert!(matches!(ExperimentConfig::from_json(&bad), Err(CliError::Config(_))));
    }
}
