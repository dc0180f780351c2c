//! The `evo.config.json` run configuration.
//!
//! Relative paths are resolved against the directory holding the config
//! file. Unknown keys are rejected at every level.

use std::path::{Path, PathBuf};

use chrono::NaiveDate;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use super::CliError;
use crate::model::{VersionDateTable, VersionId};
use crate::sandbox::SandboxConfig;
use crate::synth::StagingLayout;
use crate::taskgen::client::{MockConfig, RemoteConfig};
use crate::taskgen::GenConfig;

pub const CONFIG_FILE: &str = "evo.config.json";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Config {
    pub versions: VersionsConfig,
    pub staging_paths: StagingPaths,
    /// Crates whose source snapshots are analyzed; empty means all.
    #[serde(default)]
    pub crates: Vec<String>,
    #[serde(default)]
    pub model: ModelConfig,
    #[serde(default)]
    pub sandbox: SandboxConfig,
    #[serde(default)]
    pub rag: RagConfig,
    #[serde(default)]
    pub usages: UsagesConfig,
    #[serde(default)]
    pub seed: u64,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct VersionsConfig {
    /// Consecutive release pairs, `[from, to]`.
    pub pairs: Vec<(VersionId, VersionId)>,
    /// Releases at or after this version are scanned for control items.
    #[serde(default)]
    pub control_cutoff: Option<VersionId>,
    #[serde(default = "default_control_n")]
    pub control_n: usize,
    /// Release-date table; the shipped one when absent.
    #[serde(default)]
    pub dates: Option<PathBuf>,
}

fn default_control_n() -> usize {
    50
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct StagingPaths {
    /// Directory of `RELEASES-<version>.md` files.
    pub notes: PathBuf,
    /// Directory with one doc tree per version.
    pub docs: PathBuf,
    /// Directory with one source snapshot per version.
    pub src: PathBuf,
    /// JSON-Lines repository index for usage mining.
    #[serde(default)]
    pub repo_index: Option<PathBuf>,
}

impl From<&StagingLayout> for StagingPaths {
    fn from(l: &StagingLayout) -> Self {
        Self {
            notes: l.notes.clone(),
            docs: l.docs.clone(),
            src: l.src.clone(),
            repo_index: Some(l.repo_index.clone()),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Backend {
    Mock,
    Remote,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ModelConfig {
    pub backend: Backend,
    pub model_id: String,
    pub cutoff_date: Option<NaiveDate>,
    pub temperature: f64,
    pub max_tokens: u32,
    pub retries: u32,
    pub augment_target: usize,
    /// Directory overriding some or all built-in prompt templates.
    pub prompts_dir: Option<PathBuf>,
    /// Candidates drawn per task during evaluation.
    pub samples: u32,
    pub mock: MockConfig,
    pub remote: RemoteConfig,
}

impl Default for ModelConfig {
    fn default() -> Self {
        let gen = GenConfig::default();
        Self {
            backend: Backend::Mock,
            model_id: "mock".into(),
            cutoff_date: None,
            temperature: gen.temperature,
            max_tokens: gen.max_tokens,
            retries: gen.retries,
            augment_target: gen.augment_target,
            prompts_dir: None,
            samples: 1,
            mock: MockConfig::default(),
            remote: RemoteConfig::default(),
        }
    }
}

impl ModelConfig {
    pub fn gen_config(&self) -> GenConfig {
        GenConfig {
            retries: self.retries,
            temperature: self.temperature,
            max_tokens: self.max_tokens,
            augment_target: self.augment_target,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RagConfig {
    pub k: usize,
    /// Upper bound on summary length, in whitespace-separated tokens.
    pub token_budget: usize,
}

impl Default for RagConfig {
    fn default() -> Self {
        Self { k: 3, token_budget: 512 }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct UsagesConfig {
    pub max_per_api: usize,
    /// Probe-compile snippets to reach the strongest verification tier.
    pub compile_probe: bool,
}

impl Default for UsagesConfig {
    fn default() -> Self {
        Self { max_per_api: 3, compile_probe: false }
    }
}

/// A parsed config plus where it came from.
#[derive(Debug, Clone)]
pub struct LoadedConfig {
    pub config: Config,
    pub base_dir: PathBuf,
    /// SHA-256 of the config file bytes.
    pub hash: String,
}

impl LoadedConfig {
    pub fn load(path: &Path) -> Result<Self, CliError> {
        let bytes = std::fs::read(path).map_err(|_| CliError::MissingInput(path.to_path_buf()))?;
        let config: Config =
            serde_json::from_slice(&bytes).map_err(|e| CliError::Config(format!("{}: {e}", path.display())))?;
        if config.versions.pairs.is_empty() {
            return Err(CliError::Config("versions.pairs is empty".into()));
        }
        if let Some((a, b)) = config.versions.pairs.iter().find(|(a, b)| a >= b) {
            return Err(CliError::Config(format!("version pair {a} -> {b} is not increasing")));
        }
        let base_dir = path.parent().map(Path::to_path_buf).unwrap_or_default();
        Ok(Self { config, base_dir, hash: hex::encode(Sha256::digest(&bytes)) })
    }

    pub fn resolve(&self, p: &Path) -> PathBuf {
        if p.is_absolute() {
            p.to_path_buf()
        } else {
            self.base_dir.join(p)
        }
    }

    pub fn dates(&self) -> Result<VersionDateTable, CliError> {
        match &self.config.versions.dates {
            None => Ok(VersionDateTable::shipped()),
            Some(p) => {
                let path = self.resolve(p);
                if !path.is_file() {
                    return Err(CliError::MissingInput(path));
                }
                VersionDateTable::load(&path).map_err(|e| CliError::Config(e.to_string()))
            }
        }
    }
}

impl Config {
    /// A config for a corpus written by [`crate::synth::write_staging`] with
    /// the mock backend and the host's stable toolchain as fallback.
    pub fn for_staging(layout: &StagingLayout, from: VersionId, to: VersionId) -> Self {
        Self {
            versions: VersionsConfig { pairs: vec![(from, to)], control_cutoff: Some(from), control_n: 5, dates: None },
            staging_paths: layout.into(),
            crates: Vec::new(),
            model: ModelConfig { cutoff_date: NaiveDate::from_ymd_opt(2024, 7, 1), ..ModelConfig::default() },
            sandbox: SandboxConfig { fallback_toolchain: Some("stable".into()), ..SandboxConfig::default() },
            rag: RagConfig::default(),
            usages: UsagesConfig::default(),
            seed: 0,
        }
    }

    pub fn write(&self, path: &Path) -> Result<(), CliError> {
        let text = serde_json::to_string_pretty(self).map_err(|e| CliError::Config(e.to_string()))?;
        std::fs::write(path, text + "\n").map_err(|e| CliError::Io { path: path.to_path_buf(), source: e })
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn minimal() -> serde_json::Value {
        serde_json::json!({
            "versions": {"pairs": [["1.76.0", "1.77.0"]]},
            "staging_paths": {"notes": "n", "docs": "d", "src": "s"}
        })
    }

    fn load(v: &serde_json::Value) -> Result<LoadedConfig, CliError> {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join(CONFIG_FILE);
        std::fs::write(&path, v.to_string()).unwrap();
        LoadedConfig::load(&path)
    }

    #[test]
    fn defaults_fill_optional_sections() {
        let c = load(&minimal()).unwrap().config;
        assert_eq!(c.rag, RagConfig { k: 3, token_budget: 512 });
        assert_eq!(c.model.retries, 3);
        assert_eq!(c.model.temperature, 0.7);
        assert_eq!(c.versions.control_n, 50);
        assert_eq!(c.sandbox.compile_timeout_secs, 30);
    }

    #[test]
    fn unknown_keys_are_rejected() {
        let mut v = minimal();
        v["rag"] = serde_json::json!({"k": 2, "topk": 5});
        assert!(matches!(load(&v), Err(CliError::Config(_))));
        let mut v = minimal();
        v["extra"] = serde_json::json!(1);
        assert!(matches!(load(&v), Err(CliError::Config(_))));
    }

    #[test]
    fn pairs_must_increase() {
        let mut v = minimal();
        v["versions"]["pairs"] = serde_json::json!([["1.77.0", "1.76.0"]]);
        assert!(matches!(load(&v), Err(CliError::Config(_))));
    }

    #[test]
    fn staging_config_round_trips() {
        let c = Config::for_staging(&StagingLayout::default(), VersionId::new(1, 76, 0), VersionId::new(1, 77, 0));
        let text = serde_json::to_string(&c).unwrap();
        assert_eq!(serde_json::from_str::<Config>(&text).unwrap(), c);
    }
}
