use serde::{Deserialize, Serialize};

use super::{BackendKind, CallError, CompletionBackend};
use crate::mode::{ModeLabel, PerMode};
use crate::prompting::{parse_travel_characteristics, Prompt};

/// How the offline backend answers.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum MockRule {
    MinTime,
    MinCost,
    /// Minimum of travel time plus travel cost, equal weights.
    GeneralizedCost,
    Fixed { mode: ModeLabel },
    /// Replies without any recognisable prediction.
    Malformed,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(default)]
pub struct MockConfig {
    pub rule: MockRule,
    /// Prompts for these situation ids fail with a non-retryable error.
    pub fail_situations: Vec<String>,
}

impl Default for MockConfig {
    fn default() -> Self {
        MockConfig {
            rule: MockRule::GeneralizedCost,
            fail_situations: Vec::new(),
        }
    }
}

/// Lowest value, ties to the earlier mode.
fn argmin(values: &PerMode<u64>) -> ModeLabel {
    ModeLabel::ALL
        .into_iter()
        .min_by_key(|m| (values[*m], *m))
        .expect("three modes")
}

/// Answers by reading the travel characteristics back out of the prompt
/// text, so replies depend on nothing but the prompt.
#[derive(Debug, Clone)]
pub struct MockBackend {
    cfg: MockConfig,
}

impl MockBackend {
    pub fn new(cfg: MockConfig) -> Self {
        MockBackend { cfg }
    }

    pub fn reply(&self, prompt_text: &str) -> Result<String, CallError> {
        let chars = || {
            parse_travel_characteristics(prompt_text)
                .ok_or_else(|| CallError::Rejected {
                    status: 400,
                    body: "prompt carries no travel characteristics".into(),
                })
        };
        let widen = |v: PerMode<u32>| PerMode::from_fn(|m| u64::from(v[m]));
        let text = match &self.cfg.rule {
            MockRule::MinTime => {
                let (t, _) = chars()?;
                let m = argmin(&widen(t));
                format!("Prediction: {m}\nReason: {m} has the lowest travel time ({} minutes).", t[m])
            }
            MockRule::MinCost => {
                let (_, c) = chars()?;
                let m = argmin(&widen(c));
                format!("Prediction: {m}\nReason: {m} has the lowest travel cost ({} Swiss francs).", c[m])
            }
            MockRule::GeneralizedCost => {
                let (t, c) = chars()?;
                let g = PerMode::from_fn(|m| u64::from(t[m]) + u64::from(c[m]));
                let m = argmin(&g);
                format!(
                    "Prediction: {m}\nReason: {m} has the lowest sum of travel time and travel cost ({}).",
                    g[m]
                )
            }
            MockRule::Fixed { mode } => format!("Prediction: {mode}\nReason: fixed answer."),
            MockRule::Malformed => "I am not sure which option suits this person best.".to_string(),
        };
        Ok(text)
    }
}

impl CompletionBackend for MockBackend {
    fn kind(&self) -> BackendKind {
        BackendKind::Mock
    }

    fn send(&self, prompt: &Prompt) -> Result<String, CallError> {
        if self.cfg.fail_situations.contains(&prompt.situation_id) {
            return Err(CallError::Forced(format!(
                "mock failure for situation {}",
                prompt.situation_id
            )));
        }
        self.reply(&prompt.full_text)
    }
}
