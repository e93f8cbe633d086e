//! The single declarative pipeline config (TOML).
//!
//! Relative paths are resolved against the directory holding the config
//! file. Only the API credential comes from the environment.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::benchmarks::{ClassifierKind, ForestConfig, MnlConfig, NeuralConfig, TrainConfig};
use crate::dataset::ColumnMap;
use crate::evaluation::FailureAccounting;
use crate::gateway::BackendConfig;
use crate::prompting::PromptTemplateConfig;

#[derive(Debug, thiserror::Error)]
pub enum ConfigError {
    #[error("cannot read config {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("cannot parse config {path}: {source}")]
    Parse {
        path: PathBuf,
        #[source]
        source: toml::de::Error,
    },
    #[error("invalid config: {0}")]
    Invalid(String),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct DatasetConfig {
    pub path: PathBuf,
    /// Single-byte field delimiter; tab for the public release.
    pub delimiter: String,
    pub columns: ColumnMap,
}

impl Default for DatasetConfig {
    fn default() -> Self {
        DatasetConfig {
            path: PathBuf::from("data/swissmetro.dat"),
            delimiter: "\t".into(),
            columns: ColumnMap::default(),
        }
    }
}

impl DatasetConfig {
    pub fn delimiter_byte(&self) -> Result<u8, ConfigError> {
        match self.delimiter.as_bytes() {
            [b] => Ok(*b),
            _ => Err(ConfigError::Invalid(format!(
                "delimiter must be a single byte, got {:?}",
                self.delimiter
            ))),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(default)]
pub struct SamplingConfig {
    pub n_train: usize,
    pub n_test: usize,
    pub seed: u64,
}

impl Default for SamplingConfig {
    fn default() -> Self {
        SamplingConfig {
            n_train: 1000,
            n_test: 200,
            seed: 42,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct LlmConfig {
    #[serde(flatten)]
    pub backend: BackendConfig,
    pub cache_dir: PathBuf,
}

impl Default for LlmConfig {
    fn default() -> Self {
        LlmConfig {
            backend: BackendConfig::default(),
            cache_dir: PathBuf::from(".llm-cache"),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct BenchmarksConfig {
    /// Z-score the six numeric features with training-set statistics.
    pub standardize: bool,
    pub mnl: MnlConfig,
    pub rf: ForestConfig,
    pub nn: NeuralConfig,
}

impl Default for BenchmarksConfig {
    fn default() -> Self {
        BenchmarksConfig {
            standardize: true,
            mnl: MnlConfig::default(),
            rf: ForestConfig::default(),
            nn: NeuralConfig::default(),
        }
    }
}

impl BenchmarksConfig {
    pub fn train_config(&self, kind: ClassifierKind) -> TrainConfig {
        match kind {
            ClassifierKind::Mnl => TrainConfig::Mnl(self.mnl.clone()),
            ClassifierKind::Rf => TrainConfig::Rf(self.rf.clone()),
            ClassifierKind::Nn => TrainConfig::Nn(self.nn.clone()),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct PipelineConfig {
    pub out_dir: PathBuf,
    /// Cap on test situations sent to the model (and scored).
    pub max_samples: Option<usize>,
    pub parse_failure_accounting: FailureAccounting,
    pub dataset: DatasetConfig,
    pub sampling: SamplingConfig,
    pub prompt: PromptTemplateConfig,
    pub llm: LlmConfig,
    pub benchmarks: BenchmarksConfig,
}

impl Default for PipelineConfig {
    fn default() -> Self {
        PipelineConfig {
            out_dir: PathBuf::from("out"),
            max_samples: None,
            parse_failure_accounting: FailureAccounting::Exclude,
            dataset: DatasetConfig::default(),
            sampling: SamplingConfig::default(),
            prompt: PromptTemplateConfig::default(),
            llm: LlmConfig::default(),
            benchmarks: BenchmarksConfig::default(),
        }
    }
}

fn resolve(base: &Path, p: &Path) -> PathBuf {
    if p.is_absolute() {
        p.to_path_buf()
    } else {
        base.join(p)
    }
}

impl PipelineConfig {
    pub fn from_toml_str(text: &str, base_dir: &Path) -> Result<Self, toml::de::Error> {
        let mut cfg: PipelineConfig = toml::from_str(text)?;
        cfg.resolve_paths(base_dir);
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Self, ConfigError> {
        let text = std::fs::read_to_string(path).map_err(|source| ConfigError::Io {
            path: path.to_path_buf(),
            source,
        })?;
        let base = path.parent().unwrap_or(Path::new("."));
        let cfg = Self::from_toml_str(&text, base).map_err(|source| ConfigError::Parse {
            path: path.to_path_buf(),
            source,
        })?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn resolve_paths(&mut self, base: &Path) {
        self.out_dir = resolve(base, &self.out_dir);
        self.dataset.path = resolve(base, &self.dataset.path);
        self.llm.cache_dir = resolve(base, &self.llm.cache_dir);
    }

    /// Applies the `--seed` override to sampling and every benchmark.
    pub fn set_seed(&mut self, seed: u64) {
        self.sampling.seed = seed;
        self.benchmarks.mnl.seed = seed;
        self.benchmarks.rf.seed = seed;
        self.benchmarks.nn.seed = seed;
    }

    pub fn validate(&self) -> Result<(), ConfigError> {
        let invalid = |e: &dyn std::fmt::Display| ConfigError::Invalid(e.to_string());
        if self.sampling.n_train == 0 || self.sampling.n_test == 0 {
            return Err(ConfigError::Invalid("n_train and n_test must be positive".into()));
        }
        if self.max_samples == Some(0) {
            return Err(ConfigError::Invalid("max_samples must be positive".into()));
        }
        self.dataset.delimiter_byte()?;
        self.dataset.columns.validate().map_err(|e| invalid(&e))?;
        self.prompt.validate().map_err(|e| invalid(&e))?;
        self.llm.backend.validate().map_err(|e| invalid(&e))?;
        Ok(())
    }

    /// Hex digest of the whole config, recorded in reports.
    pub fn digest(&self) -> String {
        digest_json(self)
    }
}

/// SHA-256 of the JSON encoding of `value`.
pub fn digest_json<T: Serialize + ?Sized>(value: &T) -> String {
    let bytes = serde_json::to_vec(value).expect("value serializes");
    hex::encode(Sha256::digest(bytes))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::gateway::{BackendKind, MockRule};
    use crate::mode::ModeLabel;

    #[test]
    fn defaults_from_empty_document() {
        let cfg = PipelineConfig::from_toml_str("", Path::new("/base")).unwrap();
        assert_eq!(cfg.sampling, SamplingConfig { n_train: 1000, n_test: 200, seed: 42 });
        assert_eq!(cfg.llm.backend.temperature, 0.0);
        assert_eq!(cfg.llm.backend.model_name, "gpt-3.5-turbo-1106");
        assert_eq!(cfg.llm.backend.max_parallel_requests, 4);
        assert_eq!(cfg.dataset.path, PathBuf::from("/base/data/swissmetro.dat"));
        assert_eq!(cfg.benchmarks.rf.n_trees, 100);
        assert_eq!(cfg.benchmarks.nn.hidden_units, 100);
        cfg.validate().unwrap();
    }

    #[test]
    fn documented_keys_parse() {
        let text = r#"
out_dir = "results"
max_samples = 20
parse_failure_accounting = "count_as_incorrect"

[dataset]
path = "/data/sm.csv"
delimiter = ","
[dataset.columns]
choice = "CHOICE"
[dataset.columns.choice_codes]
1 = "Train"
2 = "Swissmetro"
3 = "Car"

[sampling]
n_train = 300
n_test = 60
seed = 7

[llm]
backend_kind = "http_chat"
model_name = "some-model"
cache_dir = "cache"
[llm.mock.rule]
kind = "fixed"
mode = "Car"

[benchmarks]
standardize = false
[benchmarks.rf]
n_trees = 10
"#;
        let cfg = PipelineConfig::from_toml_str(text, Path::new("/cfg")).unwrap();
        cfg.validate().unwrap();
        assert_eq!(cfg.out_dir, PathBuf::from("/cfg/results"));
        assert_eq!(cfg.dataset.path, PathBuf::from("/data/sm.csv"));
        assert_eq!(cfg.dataset.delimiter_byte().unwrap(), b',');
        assert_eq!(cfg.llm.backend.backend_kind, BackendKind::HttpChat);
        assert_eq!(cfg.llm.backend.mock.rule, MockRule::Fixed { mode: ModeLabel::Car });
        assert_eq!(cfg.llm.cache_dir, PathBuf::from("/cfg/cache"));
        assert_eq!(cfg.parse_failure_accounting, FailureAccounting::CountAsIncorrect);
        assert!(!cfg.benchmarks.standardize);
        assert_eq!(cfg.benchmarks.rf.n_trees, 10);
        assert_eq!(cfg.benchmarks.nn.max_epochs, 200);
    }

    #[test]
    fn invalid_values() {
        let cfg = PipelineConfig::from_toml_str("[sampling]\nn_test = 0", Path::new(".")).unwrap();
        assert!(cfg.validate().is_err());
        let cfg = PipelineConfig::from_toml_str("[dataset]\ndelimiter = \"ab\"", Path::new(".")).unwrap();
        assert!(cfg.validate().is_err());
        let cfg = PipelineConfig::from_toml_str("[llm]\ntemperature = -1.0", Path::new(".")).unwrap();
        assert!(cfg.validate().is_err());
    }

    #[test]
    fn digest_tracks_content() {
        let a = PipelineConfig::default();
        let mut b = a.clone();
        assert_eq!(a.digest(), b.digest());
        b.set_seed(1);
        assert_ne!(a.digest(), b.digest());
    }
}
