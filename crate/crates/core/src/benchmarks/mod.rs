//! Supervised baselines over the eight survey features: pooled multinomial
//! logit, a random forest and a one-hidden-layer neural network.

pub mod forest;
pub mod mlp;
pub mod mnl;

use serde::{Deserialize, Serialize};

use crate::dataset::ChoiceSituation;
use crate::mode::ModeLabel;

pub use forest::{Forest, ForestConfig};
pub use mlp::{Mlp, NeuralConfig};
pub use mnl::{MnlConfig, MnlParams};

pub const N_FEATURES: usize = 8;
pub const N_NUMERIC: usize = 6;
pub const N_CLASSES: usize = 3;

/// Names of the encoded features, in vector order.
pub const FEATURE_NAMES: [&str; N_FEATURES] = [
    "train_tt",
    "train_cost",
    "car_tt",
    "car_cost",
    "sm_tt",
    "sm_cost",
    "is_regular_train_user",
    "owns_annual_pass",
];

#[derive(Debug, thiserror::Error)]
pub enum BenchmarkError {
    #[error("training set is empty")]
    EmptyTrainingSet,
    #[error("class {0} is missing from the training set")]
    ClassMissing(ModeLabel),
    #[error("training loss became non-finite at epoch {epoch}")]
    NonFiniteLoss { epoch: usize },
    #[error("invalid training config: {0}")]
    InvalidConfig(String),
    #[error("model document: {0}")]
    Document(String),
}

/// Encoded features: six numeric values then two binaries.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FeatureVector(pub [f64; N_FEATURES]);

fn raw_numeric(s: &ChoiceSituation) -> [f64; N_NUMERIC] {
    [
        f64::from(s.travel_time_min.train),
        f64::from(s.travel_cost.train),
        f64::from(s.travel_time_min.car),
        f64::from(s.travel_cost.car),
        f64::from(s.travel_time_min.swissmetro),
        f64::from(s.travel_cost.swissmetro),
    ]
}

/// Per-feature mean and population standard deviation of the numeric
/// features, fitted on training data.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FeatureScaler {
    pub means: [f64; N_NUMERIC],
    pub stds: [f64; N_NUMERIC],
    /// Features with zero spread; they encode to 0.
    pub degenerate: [bool; N_NUMERIC],
    /// When false the scaler passes raw values through.
    pub standardize: bool,
}

impl FeatureScaler {
    pub fn identity() -> Self {
        FeatureScaler {
            means: [0.0; N_NUMERIC],
            stds: [1.0; N_NUMERIC],
            degenerate: [false; N_NUMERIC],
            standardize: false,
        }
    }
}

pub fn fit_scaler(train: &[ChoiceSituation]) -> Result<FeatureScaler, BenchmarkError> {
    if train.is_empty() {
        return Err(BenchmarkError::EmptyTrainingSet);
    }
    let n = train.len() as f64;
    let mut means = [0.0; N_NUMERIC];
    for s in train {
        for (m, x) in means.iter_mut().zip(raw_numeric(s)) {
            *m += x;
        }
    }
    means.iter_mut().for_each(|m| *m /= n);
    let mut vars = [0.0; N_NUMERIC];
    for s in train {
        for ((v, x), m) in vars.iter_mut().zip(raw_numeric(s)).zip(means) {
            *v += (x - m) * (x - m);
        }
    }
    let stds = vars.map(|v| (v / n).sqrt());
    let degenerate = stds.map(|s| !(s > 1e-12));
    Ok(FeatureScaler {
        means,
        stds,
        degenerate,
        standardize: true,
    })
}

pub fn encode_features(situation: &ChoiceSituation, scaler: &FeatureScaler) -> FeatureVector {
    let raw = raw_numeric(situation);
    let mut out = [0.0; N_FEATURES];
    for i in 0..N_NUMERIC {
        out[i] = if !scaler.standardize {
            raw[i]
        } else if scaler.degenerate[i] {
            0.0
        } else {
            (raw[i] - scaler.means[i]) / scaler.stds[i]
        };
    }
    out[6] = if situation.is_regular_train_user { 1.0 } else { 0.0 };
    out[7] = if situation.owns_annual_pass { 1.0 } else { 0.0 };
    FeatureVector(out)
}

/// Numerically stable softmax.
pub fn softmax(logits: &[f64]) -> Vec<f64> {
    let max = logits.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let exps: Vec<f64> = logits.iter().map(|z| (z - max).exp()).collect();
    let sum: f64 = exps.iter().sum();
    exps.into_iter().map(|e| e / sum).collect()
}

/// Index of the largest entry; ties go to the lowest index.
pub fn argmax(values: &[f64]) -> usize {
    let mut best = 0;
    for (i, v) in values.iter().enumerate().skip(1) {
        if *v > values[best] {
            best = i;
        }
    }
    best
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum ClassifierKind {
    #[serde(rename = "MNL")]
    Mnl,
    #[serde(rename = "RF")]
    Rf,
    #[serde(rename = "NN")]
    Nn,
}

impl ClassifierKind {
    pub const ALL: [ClassifierKind; 3] = [ClassifierKind::Mnl, ClassifierKind::Rf, ClassifierKind::Nn];

    pub fn name(self) -> &'static str {
        match self {
            ClassifierKind::Mnl => "MNL",
            ClassifierKind::Rf => "RF",
            ClassifierKind::Nn => "NN",
        }
    }
}

impl std::fmt::Display for ClassifierKind {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.name())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind")]
pub enum TrainConfig {
    #[serde(rename = "MNL")]
    Mnl(MnlConfig),
    #[serde(rename = "RF")]
    Rf(ForestConfig),
    #[serde(rename = "NN")]
    Nn(NeuralConfig),
}

impl TrainConfig {
    pub fn kind(&self) -> ClassifierKind {
        match self {
            TrainConfig::Mnl(_) => ClassifierKind::Mnl,
            TrainConfig::Rf(_) => ClassifierKind::Rf,
            TrainConfig::Nn(_) => ClassifierKind::Nn,
        }
    }

    pub fn seed(&self) -> u64 {
        match self {
            TrainConfig::Mnl(c) => c.seed,
            TrainConfig::Rf(c) => c.seed,
            TrainConfig::Nn(c) => c.seed,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case")]
pub enum ModelParams {
    Mnl(MnlParams),
    Rf(Forest),
    Nn(Mlp),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ClassifierModel {
    pub kind: ClassifierKind,
    pub seed: u64,
    pub scaler: FeatureScaler,
    pub params: ModelParams,
    /// Training-set objective per accepted epoch; empty for forests.
    pub loss_curve: Vec<f64>,
}

pub const MODEL_FORMAT_VERSION: u32 = 1;

#[derive(Serialize, Deserialize)]
struct ModelDocument {
    format_version: u32,
    #[serde(flatten)]
    model: ClassifierModel,
}

impl ClassifierModel {
    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(&ModelDocument {
            format_version: MODEL_FORMAT_VERSION,
            model: self.clone(),
        })
        .expect("model serializes")
    }

    pub fn from_json(text: &str) -> Result<Self, BenchmarkError> {
        let doc: ModelDocument = serde_json::from_str(text).map_err(|e| BenchmarkError::Document(e.to_string()))?;
        if doc.format_version != MODEL_FORMAT_VERSION {
            return Err(BenchmarkError::Document(format!(
                "unsupported format version {}",
                doc.format_version
            )));
        }
        Ok(doc.model)
    }

    pub fn predict_situation(&self, situation: &ChoiceSituation) -> ModeLabel {
        predict_label(self, &encode_features(situation, &self.scaler))
    }
}

fn encode_all(train: &[ChoiceSituation], scaler: &FeatureScaler) -> (Vec<FeatureVector>, Vec<usize>) {
    train
        .iter()
        .map(|s| (encode_features(s, scaler), s.chosen.index()))
        .unzip()
}

fn require_all_classes(labels: &[usize]) -> Result<(), BenchmarkError> {
    for mode in ModeLabel::ALL {
        if !labels.contains(&mode.index()) {
            return Err(BenchmarkError::ClassMissing(mode));
        }
    }
    Ok(())
}

pub fn fit_classifier(
    cfg: &TrainConfig,
    train: &[ChoiceSituation],
    scaler: &FeatureScaler,
) -> Result<ClassifierModel, BenchmarkError> {
    if train.is_empty() {
        return Err(BenchmarkError::EmptyTrainingSet);
    }
    let (xs, ys) = encode_all(train, scaler);
    let (params, loss_curve) = match cfg {
        TrainConfig::Mnl(c) => {
            require_all_classes(&ys)?;
            let (p, curve) = mnl::fit(&xs, &ys, c)?;
            (ModelParams::Mnl(p), curve)
        }
        TrainConfig::Nn(c) => {
            require_all_classes(&ys)?;
            let (p, curve) = mlp::fit(&xs, &ys, c)?;
            (ModelParams::Nn(p), curve)
        }
        TrainConfig::Rf(c) => (ModelParams::Rf(forest::fit(&xs, &ys, c)?), Vec::new()),
    };
    Ok(ClassifierModel {
        kind: cfg.kind(),
        seed: cfg.seed(),
        scaler: scaler.clone(),
        params,
        loss_curve,
    })
}

pub fn predict_proba(model: &ClassifierModel, x: &FeatureVector) -> [f64; N_CLASSES] {
    let p = match &model.params {
        ModelParams::Mnl(p) => p.probabilities(x),
        ModelParams::Nn(p) => p.probabilities(&x.0),
        ModelParams::Rf(f) => f.probabilities(x),
    };
    [p[0], p[1], p[2]]
}

pub fn predict_label(model: &ClassifierModel, x: &FeatureVector) -> ModeLabel {
    ModeLabel::from_index(argmax(&predict_proba(model, x))).expect("three classes")
}
