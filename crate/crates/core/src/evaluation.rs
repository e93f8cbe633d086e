//! Accuracy, support-weighted F1, confusion matrices, and the report files.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::benchmarks::ClassifierKind;
use crate::mode::ModeLabel;
use crate::parsing::ParsePath;

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum MetricError {
    #[error("prediction and label lists differ in length ({pred} vs {actual})")]
    LengthMismatch { pred: usize, actual: usize },
    #[error("metric of an empty list")]
    EmptyInput,
}

#[derive(Debug, thiserror::Error)]
pub enum EvalError {
    #[error(transparent)]
    Metric(#[from] MetricError),
    #[error("no case records to report")]
    NoRecords,
    #[error("writing {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
}

/// Rows are actual classes, columns predicted, both in [`ModeLabel`] order.
pub type ConfusionMatrix = [[u64; 3]; 3];

fn check_lengths(pred: usize, actual: usize) -> Result<(), MetricError> {
    if pred != actual {
        return Err(MetricError::LengthMismatch { pred, actual });
    }
    Ok(())
}

fn check_non_empty(pred: usize, actual: usize) -> Result<(), MetricError> {
    check_lengths(pred, actual)?;
    if actual == 0 {
        return Err(MetricError::EmptyInput);
    }
    Ok(())
}

pub fn confusion_matrix(pred: &[ModeLabel], actual: &[ModeLabel]) -> Result<ConfusionMatrix, MetricError> {
    check_lengths(pred.len(), actual.len())?;
    let mut m = [[0u64; 3]; 3];
    for (p, a) in pred.iter().zip(actual) {
        m[a.index()][p.index()] += 1;
    }
    Ok(m)
}

pub fn accuracy(pred: &[ModeLabel], actual: &[ModeLabel]) -> Result<f64, MetricError> {
    check_non_empty(pred.len(), actual.len())?;
    let hits = pred.iter().zip(actual).filter(|(p, a)| p == a).count();
    Ok(hits as f64 / actual.len() as f64)
}

pub fn weighted_f1(pred: &[ModeLabel], actual: &[ModeLabel]) -> Result<f64, MetricError> {
    let pred: Vec<Option<ModeLabel>> = pred.iter().copied().map(Some).collect();
    weighted_f1_with_missing(&pred, actual)
}

/// Accuracy where a missing prediction counts as wrong.
pub fn accuracy_with_missing(pred: &[Option<ModeLabel>], actual: &[ModeLabel]) -> Result<f64, MetricError> {
    check_non_empty(pred.len(), actual.len())?;
    let hits = pred.iter().zip(actual).filter(|(p, a)| **p == Some(**a)).count();
    Ok(hits as f64 / actual.len() as f64)
}

/// Weighted F1 where a missing prediction is a miss for its true class and
/// a false positive for no class.
pub fn weighted_f1_with_missing(pred: &[Option<ModeLabel>], actual: &[ModeLabel]) -> Result<f64, MetricError> {
    check_non_empty(pred.len(), actual.len())?;
    let mut tp = [0u64; 3];
    let mut predicted = [0u64; 3];
    let mut support = [0u64; 3];
    for (p, a) in pred.iter().zip(actual) {
        support[a.index()] += 1;
        if let Some(p) = p {
            predicted[p.index()] += 1;
            if p == a {
                tp[p.index()] += 1;
            }
        }
    }
    let mut total = 0.0;
    for c in 0..3 {
        if support[c] == 0 {
            continue;
        }
        let precision = if predicted[c] == 0 { 0.0 } else { tp[c] as f64 / predicted[c] as f64 };
        let recall = tp[c] as f64 / support[c] as f64;
        let f1 = if precision + recall == 0.0 {
            0.0
        } else {
            2.0 * precision * recall / (precision + recall)
        };
        total += f1 * support[c] as f64;
    }
    Ok(total / actual.len() as f64)
}

/// How unparseable or failed model replies enter the LLM headline metrics.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum FailureAccounting {
    /// Drop them from numerator and denominator.
    #[default]
    Exclude,
    CountAsIncorrect,
}

/// One test situation with every predictor's output.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CaseRecord {
    pub situation_id: String,
    pub input: String,
    /// `None` when the reply could not be parsed or the request failed.
    pub llm_prediction: Option<ModeLabel>,
    pub llm_reason: String,
    pub llm_parse_path: Option<ParsePath>,
    /// Raw reply text, kept so failures can be inspected.
    pub llm_raw_text: String,
    /// Gateway error message when no reply was obtained.
    pub llm_error: Option<String>,
    pub benchmark_predictions: BTreeMap<ClassifierKind, ModeLabel>,
    pub actual: ModeLabel,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PredictorMetrics {
    pub model: String,
    /// Records scored (failures excluded).
    pub n: usize,
    pub accuracy: f64,
    pub weighted_f1: f64,
    pub confusion: ConfusionMatrix,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LlmFailureMetrics {
    pub parse_failures: usize,
    pub request_failures: usize,
    /// Metrics over all records with failures counted as incorrect.
    pub accuracy_failures_as_incorrect: f64,
    pub weighted_f1_failures_as_incorrect: f64,
    /// Metrics over parsed records only.
    pub accuracy_failures_excluded: f64,
    pub weighted_f1_failures_excluded: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvaluationReport {
    pub n_records: usize,
    pub accounting: FailureAccounting,
    pub config_digest: String,
    /// LLM first, then benchmarks in [`ClassifierKind`] order.
    pub predictors: Vec<PredictorMetrics>,
    pub llm: LlmFailureMetrics,
}

fn metrics_for(model: &str, pred: &[ModeLabel], actual: &[ModeLabel]) -> Result<PredictorMetrics, MetricError> {
    let (accuracy, weighted_f1) = if actual.is_empty() {
        (0.0, 0.0)
    } else {
        (self::accuracy(pred, actual)?, self::weighted_f1(pred, actual)?)
    };
    Ok(PredictorMetrics {
        model: model.to_string(),
        n: actual.len(),
        accuracy,
        weighted_f1,
        confusion: confusion_matrix(pred, actual)?,
    })
}

impl EvaluationReport {
    /// Computes every metric from the case records alone.
    pub fn from_records(
        records: &[CaseRecord],
        config_digest: &str,
        accounting: FailureAccounting,
    ) -> Result<Self, EvalError> {
        if records.is_empty() {
            return Err(EvalError::NoRecords);
        }
        let actual: Vec<ModeLabel> = records.iter().map(|r| r.actual).collect();
        let llm_all: Vec<Option<ModeLabel>> = records.iter().map(|r| r.llm_prediction).collect();
        let (llm_pred, llm_actual): (Vec<ModeLabel>, Vec<ModeLabel>) = records
            .iter()
            .filter_map(|r| r.llm_prediction.map(|p| (p, r.actual)))
            .unzip();

        let excluded = metrics_for("LLM", &llm_pred, &llm_actual)?;
        let llm = LlmFailureMetrics {
            parse_failures: records
                .iter()
                .filter(|r| r.llm_prediction.is_none() && r.llm_error.is_none())
                .count(),
            request_failures: records.iter().filter(|r| r.llm_error.is_some()).count(),
            accuracy_failures_as_incorrect: accuracy_with_missing(&llm_all, &actual)?,
            weighted_f1_failures_as_incorrect: weighted_f1_with_missing(&llm_all, &actual)?,
            accuracy_failures_excluded: excluded.accuracy,
            weighted_f1_failures_excluded: excluded.weighted_f1,
        };
        let headline = match accounting {
            FailureAccounting::Exclude => excluded,
            FailureAccounting::CountAsIncorrect => PredictorMetrics {
                n: records.len(),
                accuracy: llm.accuracy_failures_as_incorrect,
                weighted_f1: llm.weighted_f1_failures_as_incorrect,
                ..excluded
            },
        };

        let mut predictors = vec![headline];
        for kind in ClassifierKind::ALL {
            let (pred, act): (Vec<ModeLabel>, Vec<ModeLabel>) = records
                .iter()
                .filter_map(|r| r.benchmark_predictions.get(&kind).map(|p| (*p, r.actual)))
                .unzip();
            if !act.is_empty() {
                predictors.push(metrics_for(kind.name(), &pred, &act)?);
            }
        }
        Ok(EvaluationReport {
            n_records: records.len(),
            accounting,
            config_digest: config_digest.to_string(),
            predictors,
            llm,
        })
    }

    /// Plain-text summary laid out as Models / Accuracy / F1-score.
    pub fn render_text(&self) -> String {
        let mut s = String::new();
        let _ = writeln!(s, "{:<8}{:>10}{:>10}{:>6}", "Models", "Accuracy", "F1-score", "N");
        for p in &self.predictors {
            let _ = writeln!(s, "{:<8}{:>10.3}{:>10.3}{:>6}", p.model, p.accuracy, p.weighted_f1, p.n);
        }
        let _ = writeln!(s);
        let failures = self.llm.parse_failures + self.llm.request_failures;
        let _ = writeln!(
            s,
            "LLM failures: {} unparseable, {} request errors, out of {} records",
            self.llm.parse_failures, self.llm.request_failures, self.n_records
        );
        let _ = writeln!(
            s,
            "LLM with failures excluded:       accuracy {:.3}, F1 {:.3} (n = {})",
            self.llm.accuracy_failures_excluded,
            self.llm.weighted_f1_failures_excluded,
            self.n_records - failures
        );
        let _ = writeln!(
            s,
            "LLM with failures as incorrect:   accuracy {:.3}, F1 {:.3} (n = {})",
            self.llm.accuracy_failures_as_incorrect, self.llm.weighted_f1_failures_as_incorrect, self.n_records
        );
        let _ = writeln!(s, "Headline accounting: {:?}", self.accounting);
        for p in &self.predictors {
            let _ = writeln!(s);
            let _ = writeln!(s, "{} confusion (rows actual, columns predicted)", p.model);
            let _ = writeln!(s, "{:<12}{:>8}{:>8}{:>12}", "", "Train", "Car", "Swissmetro");
            for mode in ModeLabel::ALL {
                let row = p.confusion[mode.index()];
                let _ = writeln!(s, "{:<12}{:>8}{:>8}{:>12}", mode.name(), row[0], row[1], row[2]);
            }
        }
        let _ = writeln!(s);
        let _ = writeln!(s, "config digest: {}", self.config_digest);
        s
    }
}

pub const SUMMARY_JSON: &str = "summary.json";
pub const SUMMARY_TEXT: &str = "summary.txt";
pub const CASE_LOG: &str = "cases.jsonl";

/// Writes `summary.json`, `summary.txt` and `cases.jsonl` (one record per
/// line) under `out_dir`. The output is a pure function of the inputs.
pub fn write_report(
    records: &[CaseRecord],
    config_digest: &str,
    accounting: FailureAccounting,
    out_dir: &Path,
) -> Result<EvaluationReport, EvalError> {
    let report = EvaluationReport::from_records(records, config_digest, accounting)?;
    let io = |path: PathBuf| move |source| EvalError::Io { path, source };
    std::fs::create_dir_all(out_dir).map_err(io(out_dir.to_path_buf()))?;

    let mut json = serde_json::to_string_pretty(&report).expect("report serializes");
    json.push('\n');
    let path = out_dir.join(SUMMARY_JSON);
    std::fs::write(&path, json).map_err(io(path.clone()))?;

    let path = out_dir.join(SUMMARY_TEXT);
    std::fs::write(&path, report.render_text()).map_err(io(path.clone()))?;

    let mut log = String::new();
    for r in records {
        log.push_str(&serde_json::to_string(r).expect("record serializes"));
        log.push('\n');
    }
    let path = out_dir.join(CASE_LOG);
    std::fs::write(&path, log).map_err(io(path.clone()))?;
    Ok(report)
}

/// Reads a case log written by [`write_report`].
pub fn read_case_log(path: &Path) -> Result<Vec<CaseRecord>, EvalError> {
    let text = std::fs::read_to_string(path).map_err(|source| EvalError::Io {
        path: path.to_path_buf(),
        source,
    })?;
    text.lines()
        .filter(|l| !l.trim().is_empty())
        .map(|l| {
            serde_json::from_str(l).map_err(|e| EvalError::Io {
                path: path.to_path_buf(),
                source: std::io::Error::new(std::io::ErrorKind::InvalidData, e),
            })
        })
        .collect()
}
