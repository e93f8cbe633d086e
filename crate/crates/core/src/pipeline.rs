//! Stage orchestration: ingest → sample → prompts → model replies →
//! benchmarks → report.
//!
//! Every stage writes its output to `<out_dir>/stages/<stage>-<digest>.json`
//! where the digest covers the stage's inputs (config section plus upstream
//! digest). An existing artifact is loaded instead of recomputed.

use std::collections::{BTreeMap, HashSet};
use std::path::{Path, PathBuf};

use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::benchmarks::{self, BenchmarkError, ClassifierKind, ClassifierModel, FeatureScaler};
use crate::config::{digest_json, ConfigError, PipelineConfig};
use crate::dataset::{self, ChoiceSituation, DatasetError, ExclusionSummary, Split};
use crate::evaluation::{self, CaseRecord, EvalError, EvaluationReport};
use crate::gateway::{BackendKind, CompletionCache, Gateway, GatewayError, ModelCompletion};
use crate::mode::ModeLabel;
use crate::parsing::{parse_response, ParsePath};
use crate::prompting::{build_prompt, render_input_summary, Prompt, PromptError};

#[derive(Debug, thiserror::Error)]
pub enum PipelineError {
    #[error("config: {0}")]
    Config(#[from] ConfigError),
    #[error("ingest stage: {0}")]
    Ingest(#[source] DatasetError),
    #[error("sample stage: {0}")]
    Sample(#[source] DatasetError),
    #[error("prompt stage: {0}")]
    Prompt(#[from] PromptError),
    #[error("predict-llm stage: {0}")]
    Llm(#[from] GatewayError),
    #[error("predict-llm stage: live backend requires --max-samples to cap API calls")]
    UncappedLiveRun,
    #[error("fit-bench stage ({kind}): {source}")]
    Bench {
        kind: ClassifierKind,
        #[source]
        source: BenchmarkError,
    },
    #[error("fit-bench stage: train and test sets share {0} situation ids")]
    Leakage(usize),
    #[error("evaluate stage: {0}")]
    Evaluate(#[from] EvalError),
    #[error("{stage} stage: artifact {path}: {message}")]
    Artifact {
        stage: &'static str,
        path: PathBuf,
        message: String,
    },
    #[error("no test situation {0}")]
    UnknownSituation(String),
}

/// A stage output and where it lives.
#[derive(Debug, Clone)]
pub struct Stage<T> {
    pub digest: String,
    pub path: PathBuf,
    pub value: T,
    /// True when the artifact already existed and was loaded.
    pub reused: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct IngestArtifact {
    pub source_sha256: String,
    pub summary: ExclusionSummary,
    pub situations: Vec<ChoiceSituation>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LlmOutcome {
    pub situation_id: String,
    pub completion: Option<ModelCompletion>,
    pub error: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BenchArtifact {
    pub models: Vec<ClassifierModel>,
    /// Per kind, predictions for the evaluated test situations in order.
    pub predictions: BTreeMap<ClassifierKind, Vec<ModeLabel>>,
}

fn sha256_hex(bytes: &[u8]) -> String {
    hex::encode(Sha256::digest(bytes))
}

pub struct Pipeline {
    cfg: PipelineConfig,
}

impl Pipeline {
    pub fn new(cfg: PipelineConfig) -> Result<Self, PipelineError> {
        cfg.validate()?;
        Ok(Pipeline { cfg })
    }

    pub fn config(&self) -> &PipelineConfig {
        &self.cfg
    }

    pub fn out_dir(&self) -> &Path {
        &self.cfg.out_dir
    }

    pub fn report_dir(&self) -> PathBuf {
        self.cfg.out_dir.join("report")
    }

    fn stage<T, F>(&self, stage: &'static str, digest: String, compute: F) -> Result<Stage<T>, PipelineError>
    where
        T: Serialize + DeserializeOwned,
        F: FnOnce() -> Result<T, PipelineError>,
    {
        let dir = self.cfg.out_dir.join("stages");
        let path = dir.join(format!("{stage}-{}.json", &digest[..16]));
        let artifact_err = |path: &Path, message: String| PipelineError::Artifact {
            stage,
            path: path.to_path_buf(),
            message,
        };
        if path.exists() {
            let text = std::fs::read_to_string(&path).map_err(|e| artifact_err(&path, e.to_string()))?;
            let value = serde_json::from_str(&text).map_err(|e| artifact_err(&path, e.to_string()))?;
            tracing::info!(stage, path = %path.display(), "reusing stage artifact");
            return Ok(Stage { digest, path, value, reused: true });
        }
        let value = compute()?;
        std::fs::create_dir_all(&dir).map_err(|e| artifact_err(&dir, e.to_string()))?;
        let tmp = path.with_extension("json.tmp");
        let text = serde_json::to_string(&value).expect("artifact serializes");
        std::fs::write(&tmp, text).map_err(|e| artifact_err(&tmp, e.to_string()))?;
        std::fs::rename(&tmp, &path).map_err(|e| artifact_err(&path, e.to_string()))?;
        Ok(Stage { digest, path, value, reused: false })
    }

    pub fn ingest(&self) -> Result<Stage<IngestArtifact>, PipelineError> {
        let ds = &self.cfg.dataset;
        let bytes = std::fs::read(&ds.path).map_err(|source| {
            PipelineError::Ingest(DatasetError::Io {
                path: ds.path.clone(),
                source,
            })
        })?;
        let source_sha256 = sha256_hex(&bytes);
        let digest = digest_json(&(&source_sha256, &ds.delimiter, &ds.columns));
        self.stage("ingest", digest, || {
            let table = dataset::load_raw(&ds.path, &ds.columns, ds.delimiter_byte()?).map_err(PipelineError::Ingest)?;
            let (situations, summary) =
                dataset::to_choice_situations(&table, &ds.columns).map_err(PipelineError::Ingest)?;
            Ok(IngestArtifact {
                source_sha256,
                summary,
                situations,
            })
        })
    }

    pub fn sample(&self) -> Result<Stage<Split>, PipelineError> {
        let ingest = self.ingest()?;
        let s = &self.cfg.sampling;
        let digest = digest_json(&(&ingest.digest, s));
        self.stage("sample", digest, || {
            dataset::balanced_split(&ingest.value.situations, s.n_train, s.n_test, s.seed).map_err(PipelineError::Sample)
        })
    }

    /// Test situations that are sent to the model and scored, after the
    /// `max_samples` cap.
    pub fn evaluated_test_set(&self, split: &Split) -> Vec<ChoiceSituation> {
        let n = self.cfg.max_samples.unwrap_or(usize::MAX).min(split.test.len());
        split.test[..n].to_vec()
    }

    pub fn prompts(&self, situations: &[ChoiceSituation]) -> Result<Vec<Prompt>, PipelineError> {
        situations
            .iter()
            .map(|s| build_prompt(s, &self.cfg.prompt).map_err(PipelineError::from))
            .collect()
    }

    /// Prompt for one test situation, by position or id.
    pub fn dump_prompt(&self, index: usize, id: Option<&str>) -> Result<Prompt, PipelineError> {
        let split = self.sample()?;
        let situation = match id {
            Some(id) => split
                .value
                .test
                .iter()
                .find(|s| s.situation_id == id)
                .ok_or_else(|| PipelineError::UnknownSituation(id.to_string()))?,
            None => split
                .value
                .test
                .get(index)
                .ok_or_else(|| PipelineError::UnknownSituation(format!("#{index}")))?,
        };
        Ok(build_prompt(situation, &self.cfg.prompt)?)
    }

    pub fn predict_llm(&self) -> Result<Stage<Vec<LlmOutcome>>, PipelineError> {
        let backend = &self.cfg.llm.backend;
        if backend.backend_kind == BackendKind::HttpChat && self.cfg.max_samples.is_none() {
            return Err(PipelineError::UncappedLiveRun);
        }
        let split = self.sample()?;
        let test = self.evaluated_test_set(&split.value);
        let prompts = self.prompts(&test)?;
        let texts: Vec<&str> = prompts.iter().map(|p| p.full_text.as_str()).collect();
        // Transport settings do not change replies and stay out of the digest.
        let digest = digest_json(&(
            &split.digest,
            &texts,
            backend.backend_kind,
            &backend.model_name,
            backend.temperature,
            &backend.system_message,
            &backend.mock,
        ));
        self.stage("llm", digest, || {
            let cache = CompletionCache::open(&self.cfg.llm.cache_dir).map_err(GatewayError::Cache)?;
            let gateway = Gateway::new(backend.clone(), cache)?;
            let results = gateway.batch_complete(&prompts);
            tracing::info!(
                prompts = prompts.len(),
                network_attempts = gateway.network_attempts(),
                "model replies collected"
            );
            Ok(results
                .into_iter()
                .zip(&prompts)
                .map(|(r, p)| match r {
                    Ok(c) => LlmOutcome {
                        situation_id: p.situation_id.clone(),
                        completion: Some(c),
                        error: None,
                    },
                    Err(e) => {
                        tracing::warn!(situation = %p.situation_id, error = %e.error, "completion failed");
                        LlmOutcome {
                            situation_id: p.situation_id.clone(),
                            completion: None,
                            error: Some(e.error.to_string()),
                        }
                    }
                })
                .collect())
        })
    }

    fn scaler(&self, train: &[ChoiceSituation]) -> Result<FeatureScaler, PipelineError> {
        if self.cfg.benchmarks.standardize {
            benchmarks::fit_scaler(train).map_err(|source| PipelineError::Bench {
                kind: ClassifierKind::Mnl,
                source,
            })
        } else {
            Ok(FeatureScaler::identity())
        }
    }

    pub fn fit_bench(&self) -> Result<Stage<BenchArtifact>, PipelineError> {
        let split = self.sample()?;
        let digest = digest_json(&(&split.digest, &self.cfg.benchmarks, self.cfg.max_samples));
        self.stage("bench", digest, || {
            let train = &split.value.train;
            let test = self.evaluated_test_set(&split.value);
            let train_ids: HashSet<&str> = train.iter().map(|s| s.situation_id.as_str()).collect();
            let shared = split
                .value
                .test
                .iter()
                .filter(|s| train_ids.contains(s.situation_id.as_str()))
                .count();
            if shared > 0 {
                return Err(PipelineError::Leakage(shared));
            }
            let scaler = self.scaler(train)?;
            let mut models = Vec::new();
            let mut predictions = BTreeMap::new();
            for kind in ClassifierKind::ALL {
                let cfg = self.cfg.benchmarks.train_config(kind);
                let model = benchmarks::fit_classifier(&cfg, train, &scaler)
                    .map_err(|source| PipelineError::Bench { kind, source })?;
                tracing::info!(%kind, epochs = model.loss_curve.len(), "benchmark fitted");
                predictions.insert(kind, test.iter().map(|s| model.predict_situation(s)).collect());
                models.push(model);
            }
            Ok(BenchArtifact { models, predictions })
        })
    }

    /// Writes fitted models as versioned JSON documents, one per kind.
    pub fn save_models(&self, bench: &BenchArtifact) -> Result<Vec<PathBuf>, PipelineError> {
        let dir = self.cfg.out_dir.join("models");
        std::fs::create_dir_all(&dir).map_err(|e| PipelineError::Artifact {
            stage: "fit-bench",
            path: dir.clone(),
            message: e.to_string(),
        })?;
        bench
            .models
            .iter()
            .map(|m| {
                let path = dir.join(format!("{}.json", m.kind.name()));
                std::fs::write(&path, m.to_json()).map_err(|e| PipelineError::Artifact {
                    stage: "fit-bench",
                    path: path.clone(),
                    message: e.to_string(),
                })?;
                Ok(path)
            })
            .collect()
    }

    /// Reloads models written by [`Pipeline::save_models`] and predicts the
    /// evaluated test set without refitting.
    pub fn load_models(&self, dir: &Path) -> Result<BenchArtifact, PipelineError> {
        let split = self.sample()?;
        let test = self.evaluated_test_set(&split.value);
        let mut models = Vec::new();
        let mut predictions = BTreeMap::new();
        for kind in ClassifierKind::ALL {
            let path = dir.join(format!("{}.json", kind.name()));
            let text = std::fs::read_to_string(&path).map_err(|e| PipelineError::Artifact {
                stage: "fit-bench",
                path: path.clone(),
                message: e.to_string(),
            })?;
            let model = ClassifierModel::from_json(&text).map_err(|source| PipelineError::Bench { kind, source })?;
            predictions.insert(kind, test.iter().map(|s| model.predict_situation(s)).collect());
            models.push(model);
        }
        Ok(BenchArtifact { models, predictions })
    }

    pub fn case_records(&self) -> Result<Vec<CaseRecord>, PipelineError> {
        let split = self.sample()?;
        let test = self.evaluated_test_set(&split.value);
        let llm = self.predict_llm()?;
        let bench = self.fit_bench()?;

        Ok(test
            .iter()
            .enumerate()
            .map(|(i, s)| {
                let outcome = llm.value.iter().find(|o| o.situation_id == s.situation_id);
                let raw = outcome
                    .and_then(|o| o.completion.as_ref())
                    .map(|c| c.text.clone())
                    .unwrap_or_default();
                let error = outcome.and_then(|o| o.error.clone());
                let parsed = if error.is_none() { parse_response(&raw).ok() } else { None };
                if parsed.is_none() && error.is_none() {
                    tracing::warn!(situation = %s.situation_id, raw = %raw, "unparseable model reply");
                }
                CaseRecord {
                    situation_id: s.situation_id.clone(),
                    input: render_input_summary(s),
                    llm_prediction: parsed.as_ref().map(|p| p.mode),
                    llm_reason: parsed.as_ref().map(|p| p.reason.clone()).unwrap_or_default(),
                    llm_parse_path: parsed.as_ref().map(|p| p.parse_path),
                    llm_raw_text: raw,
                    llm_error: error,
                    benchmark_predictions: bench
                        .value
                        .predictions
                        .iter()
                        .map(|(k, preds)| (*k, preds[i]))
                        .collect(),
                    actual: s.chosen,
                }
            })
            .collect())
    }

    pub fn evaluate(&self) -> Result<EvaluationReport, PipelineError> {
        let records = self.case_records()?;
        Ok(evaluation::write_report(
            &records,
            &self.cfg.digest(),
            self.cfg.parse_failure_accounting,
            &self.report_dir(),
        )?)
    }
}

/// Runs every stage and writes the report.
pub fn run_pipeline(cfg: PipelineConfig) -> Result<EvaluationReport, PipelineError> {
    Pipeline::new(cfg)?.evaluate()
}

/// Share of strict-format parses among replies, for smoke checks.
pub fn strict_parse_rate(records: &[CaseRecord]) -> f64 {
    if records.is_empty() {
        return 0.0;
    }
    let strict = records
        .iter()
        .filter(|r| r.llm_parse_path == Some(ParsePath::Strict))
        .count();
    strict as f64 / records.len() as f64
}
