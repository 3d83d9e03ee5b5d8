//! Experiment configuration files.
//!
//! ```toml
//! seeds = [1, 2]
//! output_dir = "out"
//! ablations = ["identity", "shuffle-all", { name = "nv", kind = "pos_filter", pos_set = ["noun", "verb"] }]
//!
//! [corpus]
//! train = "train.tsv"
//! validation = "valid.tsv"
//!
//! [windows]
//! prefix_len = 512
//! strata = [{ name = "mid_range", start = 0, end = 256 }, { name = "long_range", start = 256, end = 512 }]
//!
//! [model]
//! class = "ngram"
//! order = 3
//! ```
//!
//! Relative paths are resolved against the directory holding the file.

use std::collections::HashSet;
use std::path::{Path, PathBuf};

use ctxinfo::ablate::AblationSpec;
use ctxinfo::metrics::BootstrapConfig;
use ctxinfo::models::{CacheConfig, NGramConfig, SeparatorPolicy};
use ctxinfo::windows::WindowConfig;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::RunError;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum CorpusFormat {
    /// Tab-separated annotated tokens.
    #[default]
    Sidecar,
    /// Whitespace-tokenized text without annotations.
    Plain,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CorpusPaths {
    pub train: PathBuf,
    pub validation: PathBuf,
    #[serde(default)]
    pub format: CorpusFormat,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum Paradigm {
    /// One model per arm, trained and evaluated on that arm's windows.
    #[default]
    TrainAndEval,
    /// One model per seed trained on randomly truncated prefixes; ablations
    /// are applied only at evaluation.
    EvalOnly,
}

fn default_order() -> usize {
    3
}

fn default_discount() -> f64 {
    0.75
}

fn default_lambda() -> f64 {
    0.2
}

fn default_timeout() -> u64 {
    60
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "class", rename_all = "snake_case")]
pub enum ModelConfig {
    Ngram {
        #[serde(default = "default_order")]
        order: usize,
        #[serde(default = "default_discount")]
        discount: f64,
    },
    Cache {
        #[serde(default = "default_order")]
        order: usize,
        #[serde(default = "default_discount")]
        discount: f64,
        #[serde(default = "default_lambda")]
        lambda: f64,
    },
    Adapter {
        /// `tcp://host:port` or a command line.
        address: String,
        #[serde(default = "default_timeout")]
        timeout_secs: u64,
    },
}

impl Default for ModelConfig {
    fn default() -> Self {
        ModelConfig::Ngram {
            order: default_order(),
            discount: default_discount(),
        }
    }
}

impl ModelConfig {
    pub fn ngram(&self) -> Option<NGramConfig> {
        match *self {
            ModelConfig::Ngram { order, discount } => Some(NGramConfig {
                order,
                discount,
                separator: SeparatorPolicy::Transparent,
            }),
            _ => None,
        }
    }

    pub fn cache(&self) -> Option<CacheConfig> {
        match *self {
            ModelConfig::Cache {
                order,
                discount,
                lambda,
            } => Some(CacheConfig {
                base: NGramConfig {
                    order,
                    discount,
                    separator: SeparatorPolicy::Boundary,
                },
                lambda,
            }),
            _ => None,
        }
    }
}

/// An ablation given by preset name or spelled out.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum AblationEntry {
    Preset(String),
    Spec(AblationSpec),
}

impl AblationEntry {
    pub fn resolve(&self) -> Result<AblationSpec, RunError> {
        match self {
            AblationEntry::Preset(name) => {
                AblationSpec::preset(name).map_err(|e| RunError::Config(e.to_string()))
            }
            AblationEntry::Spec(spec) => Ok(spec.clone()),
        }
    }
}

fn default_threshold() -> f64 {
    0.8
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExperimentConfig {
    pub corpus: CorpusPaths,
    #[serde(default)]
    pub windows: WindowConfig,
    pub ablations: Vec<AblationEntry>,
    #[serde(default)]
    pub model: ModelConfig,
    pub seeds: Vec<u64>,
    pub output_dir: PathBuf,
    #[serde(default)]
    pub paradigm: Paradigm,
    /// Share of training tokens covered by the common-word set.
    #[serde(default = "default_threshold")]
    pub frequency_threshold: f64,
    #[serde(default)]
    pub bootstrap: BootstrapConfig,
}

/// Arm names taken by the two reference models.
pub const FULL_ARM: &str = "full";
pub const NONE_ARM: &str = "none";

impl ExperimentConfig {
    pub fn from_toml(text: &str, base: &Path) -> Result<Self, RunError> {
        let mut config: Self =
            toml::from_str(text).map_err(|e| RunError::Config(e.to_string()))?;
        config.resolve_paths(base);
        config.validate()?;
        Ok(config)
    }

    pub fn load(path: &Path) -> Result<Self, RunError> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| RunError::Config(format!("{}: {e}", path.display())))?;
        Self::from_toml(&text, path.parent().unwrap_or(Path::new(".")))
    }

    fn resolve_paths(&mut self, base: &Path) {
        for p in [
            &mut self.corpus.train,
            &mut self.corpus.validation,
            &mut self.output_dir,
        ] {
            if p.is_relative() {
                *p = base.join(&*p);
            }
        }
    }

    pub fn specs(&self) -> Result<Vec<AblationSpec>, RunError> {
        self.ablations.iter().map(AblationEntry::resolve).collect()
    }

    pub fn validate(&self) -> Result<(), RunError> {
        let bad = |m: String| Err(RunError::Config(m));
        if self.seeds.is_empty() {
            return bad("at least one seed is required".into());
        }
        let mut seen = HashSet::new();
        for &s in &self.seeds {
            if !seen.insert(s) {
                return bad(format!("seed {s} listed twice"));
            }
        }
        self.windows
            .validate()
            .map_err(|e| RunError::Config(e.to_string()))?;
        let mut names = HashSet::new();
        for spec in self.specs()? {
            spec.validate().map_err(|e| RunError::Config(e.to_string()))?;
            if spec.name == FULL_ARM || spec.name == NONE_ARM {
                return bad(format!("spec name `{}` is reserved", spec.name));
            }
            if spec.name.is_empty() || spec.name.contains(['/', '\\']) {
                return bad(format!("invalid spec name `{}`", spec.name));
            }
            if !names.insert(spec.name.clone()) {
                return bad(format!("spec name `{}` is not unique", spec.name));
            }
        }
        if !(self.frequency_threshold > 0.0 && self.frequency_threshold < 1.0) {
            return bad(format!(
                "frequency_threshold {} outside (0, 1)",
                self.frequency_threshold
            ));
        }
        self.bootstrap
            .validate()
            .map_err(|e| RunError::Config(e.to_string()))?;
        let model = match &self.model {
            ModelConfig::Ngram { .. } => self.ngram_config().validate(),
            ModelConfig::Cache { .. } => self.model.cache().unwrap().validate(),
            ModelConfig::Adapter { address, .. } if address.trim().is_empty() => {
                return bad("empty adapter address".into())
            }
            ModelConfig::Adapter { .. } => Ok(()),
        };
        model.map_err(|e| RunError::Config(e.to_string()))
    }

    fn ngram_config(&self) -> NGramConfig {
        self.model.ngram().unwrap_or_default()
    }

    /// SHA-256 of the canonical JSON form, excluding the output directory.
    /// Seeds are included, so a seed override changes the hash.
    pub fn hash(&self) -> String {
        let mut canonical = self.clone();
        canonical.output_dir = PathBuf::new();
        let value = serde_json::to_value(&canonical).expect("config serializes");
        let text = serde_json::to_string(&value).expect("value serializes");
        hex::encode(Sha256::digest(text.as_bytes()))
    }
}
