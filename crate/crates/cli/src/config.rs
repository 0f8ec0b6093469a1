//! TOML run configuration.

use std::path::{Path, PathBuf};

use curricula::clip_pipeline::WindowingConfig;
use curricula::curriculum::{ConvergencePolicy, TrainingProfile};
use curricula::trainer::{AdamWConfig, Architecture};
use serde::{Deserialize, Serialize};

use crate::CliError;

/// Everything a run needs. The effective config (after flag overrides and
/// path resolution) is archived as `config.toml` in every run directory.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    #[serde(default)]
    pub master_seed: u64,
    /// Strategy names run by `run` when no `--strategy` is given.
    #[serde(default = "default_strategies")]
    pub strategies: Vec<String>,
    pub target_per_class: usize,
    #[serde(default = "TrainingProfile::desk")]
    pub profile: TrainingProfile,
    #[serde(default)]
    pub windowing: WindowingConfig,
    #[serde(default)]
    pub convergence: ConvergencePolicy,
    #[serde(default)]
    pub model: ModelConfig,
    pub paths: Paths,
}

fn default_strategies() -> Vec<String> {
    ["naive", "two_step_ft_s_to_r", "progressive"].map(String::from).to_vec()
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ModelConfig {
    pub architecture: Architecture,
    pub adamw: AdamWConfig,
    pub reset_optimizer: bool,
}

impl Default for ModelConfig {
    fn default() -> Self {
        Self {
            architecture: Architecture::Linear,
            adamw: AdamWConfig::default(),
            reset_optimizer: false,
        }
    }
}

/// Input and output locations. A `bundle` directory (as written by `bench`)
/// supplies any manifest, feature or registry path left unset.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct Paths {
    #[serde(skip_serializing_if = "Option::is_none")]
    pub bundle: Option<PathBuf>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub syn_manifest: Option<PathBuf>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub real_manifest: Option<PathBuf>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub target_manifest: Option<PathBuf>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub features: Option<PathBuf>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub registry: Option<PathBuf>,
    pub out: PathBuf,
    pub exclude_subjects: Vec<String>,
}

impl RunConfig {
    pub fn parse(text: &str) -> Result<Self, CliError> {
        toml::from_str(text).map_err(|e| CliError::input(format!("config: {e}")))
    }

    /// Reads `path` and makes every relative path absolute against its directory.
    pub fn load(path: &Path) -> Result<Self, CliError> {
        let text = std::fs::read_to_string(path).map_err(|e| CliError::input(format!("{}: {e}", path.display())))?;
        let mut cfg = Self::parse(&text)?;
        let base = match path.parent() {
            Some(p) if !p.as_os_str().is_empty() => p,
            _ => Path::new("."),
        };
        let base = std::path::absolute(base).map_err(|e| CliError::input(format!("{}: {e}", base.display())))?;
        cfg.resolve_paths(&base);
        Ok(cfg)
    }

    pub fn resolve_paths(&mut self, base: &Path) {
        let fix = |p: &mut PathBuf| {
            if p.is_relative() {
                *p = base.join(&*p);
            }
        };
        let ps = &mut self.paths;
        for p in [
            &mut ps.bundle,
            &mut ps.syn_manifest,
            &mut ps.real_manifest,
            &mut ps.target_manifest,
            &mut ps.features,
            &mut ps.registry,
        ]
        .into_iter()
        .flatten()
        {
            fix(p);
        }
        fix(&mut ps.out);
    }

    pub fn to_toml(&self) -> Result<String, CliError> {
        toml::to_string(self).map_err(|e| CliError::input(format!("config serialization: {e}")))
    }

    pub fn validate(&self) -> Result<(), CliError> {
        self.profile.validate().map_err(CliError::input)?;
        self.convergence.validate().map_err(CliError::input)?;
        self.windowing.validate().map_err(CliError::input)?;
        Ok(())
    }

    fn path_or_bundle(&self, explicit: &Option<PathBuf>, rel: &str, what: &str) -> Result<PathBuf, CliError> {
        explicit
            .clone()
            .or_else(|| self.paths.bundle.as_ref().map(|b| b.join(rel)))
            .ok_or_else(|| CliError::input(format!("no {what} path: set paths.{what} or paths.bundle")))
    }

    pub fn syn_manifest(&self) -> Result<PathBuf, CliError> {
        self.path_or_bundle(&self.paths.syn_manifest, "manifests/syn.manifest", "syn_manifest")
    }

    pub fn real_manifest(&self) -> Result<PathBuf, CliError> {
        self.path_or_bundle(&self.paths.real_manifest, "manifests/real_ground.manifest", "real_manifest")
    }

    pub fn target_manifest(&self) -> Result<PathBuf, CliError> {
        self.path_or_bundle(&self.paths.target_manifest, "manifests/target.manifest", "target_manifest")
    }

    pub fn features_dir(&self) -> Result<PathBuf, CliError> {
        self.path_or_bundle(&self.paths.features, "features", "features")
    }

    /// Registry file, if one is configured or the bundle has one.
    pub fn registry_path(&self) -> Option<PathBuf> {
        self.paths
            .registry
            .clone()
            .or_else(|| self.paths.bundle.as_ref().map(|b| b.join("registry.tsv")).filter(|p| p.exists()))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    const MINIMAL: &str = r#"
target_per_class = 30
[paths]
bundle = "bench"
out = "out"
"#;

    #[test]
    fn defaults_fill_in() {
        let c = RunConfig::parse(MINIMAL).unwrap();
        assert_eq!(c.profile, TrainingProfile::desk());
        assert_eq!(c.convergence, ConvergencePolicy::default());
        assert_eq!(c.strategies.len(), 3);
        assert_eq!(c.model.architecture, Architecture::Linear);
    }

    #[test]
    fn toml_round_trip() {
        let mut c = RunConfig::parse(MINIMAL).unwrap();
        c.model.architecture = Architecture::OneHidden { width: 8 };
        c.convergence.eval_every = Some(7);
        let back = RunConfig::parse(&c.to_toml().unwrap()).unwrap();
        assert_eq!(back, c);
    }

    #[test]
    fn shipped_config_parses() {
        let c = RunConfig::parse(include_str!("../config/desk.toml")).unwrap();
        c.validate().unwrap();
        assert_eq!(c.convergence.patience, 3);
        assert_eq!(c.strategies.len(), 4);
    }

    #[test]
    fn unknown_keys_are_rejected() {
        assert!(RunConfig::parse("target_per_class = 1\nbogus = 2\n[paths]\nout = \"o\"\n").is_err());
    }

    #[test]
    fn relative_paths_resolve_against_config_dir() {
        let mut c = RunConfig::parse(MINIMAL).unwrap();
        c.resolve_paths(Path::new("/data/exp"));
        assert_eq!(c.paths.out, PathBuf::from("/data/exp/out"));
        assert_eq!(c.syn_manifest().unwrap(), PathBuf::from("/data/exp/bench/manifests/syn.manifest"));
    }
}
