//! Zero-shot prompt rendering.
//!
//! A prompt has five components: the task description, the travel
//! characteristics as a dictionary, the individual attributes in plain
//! sentences, a guide of thinking (domain knowledge plus arithmetic hints),
//! and the output-format instruction. No labelled examples are ever
//! included.
//!
//! The default wording is a reconstruction; every text is overridable
//! through [`PromptTemplateConfig`].

use std::collections::{BTreeMap, BTreeSet};
use std::fmt;
use std::sync::OnceLock;

use regex::Regex;
use serde::{Deserialize, Serialize};

use crate::dataset::ChoiceSituation;
use crate::mode::{ModeLabel, PerMode};

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum PromptError {
    #[error("invalid comparison: minimum {x_min} against {x_other}")]
    InvalidComparison { x_other: u32, x_min: u32 },
    #[error("invalid prompt template: {0}")]
    InvalidTemplate(String),
}

/// Percent by which `x_min` undercuts `x_other`, rounded half-up.
pub fn percent_saving(x_other: u32, x_min: u32) -> Result<u32, PromptError> {
    if x_other == 0 || x_min > x_other {
        return Err(PromptError::InvalidComparison { x_other, x_min });
    }
    let (o, m) = (u64::from(x_other), u64::from(x_min));
    // floor(100 (o - m) / o + 1/2) in exact integer arithmetic
    Ok(((200 * (o - m) + o) / (2 * o)) as u32)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum HintAttribute {
    TravelTime,
    TravelCost,
}

impl HintAttribute {
    fn phrase(self) -> &'static str {
        match self {
            HintAttribute::TravelTime => "travel time",
            HintAttribute::TravelCost => "travel cost",
        }
    }
}

/// Order in which modes are listed inside hint sentences.
const HINT_LISTING_ORDER: [ModeLabel; 3] = [ModeLabel::Car, ModeLabel::Train, ModeLabel::Swissmetro];

/// Which mode minimises one attribute and how much it saves against the others.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ArithmeticHint {
    pub attribute: HintAttribute,
    pub min_modes: Vec<ModeLabel>,
    pub savings: BTreeMap<ModeLabel, u32>,
}

fn join_and(items: &[String]) -> String {
    match items {
        [] => String::new(),
        [one] => one.clone(),
        [head @ .., last] => format!("{} and {}", head.join(", "), last),
    }
}

impl ArithmeticHint {
    fn compute(attribute: HintAttribute, values: &PerMode<u32>) -> ArithmeticHint {
        let min = ModeLabel::ALL.iter().map(|m| values[*m]).min().unwrap_or(0);
        let min_modes: Vec<ModeLabel> = HINT_LISTING_ORDER
            .into_iter()
            .filter(|m| values[*m] == min)
            .collect();
        let savings = ModeLabel::ALL
            .into_iter()
            .filter(|m| values[*m] != min)
            .map(|m| {
                let p = percent_saving(values[m], min).expect("minimum never exceeds another value");
                (m, p)
            })
            .collect();
        ArithmeticHint { attribute, min_modes, savings }
    }

    /// The hint as one sentence, e.g.
    /// "Swissmetro has the lowest travel time, saving 62% compared to Car and 68% compared to Train."
    pub fn sentence(&self) -> String {
        let attr = self.attribute.phrase();
        if self.savings.is_empty() {
            return format!("All three modes have the same {attr}.");
        }
        let names: Vec<String> = self.min_modes.iter().map(|m| m.to_string()).collect();
        let head = if names.len() == 1 {
            format!("{} has the lowest {attr}", names[0])
        } else {
            format!("{} are tied for the lowest {attr}", join_and(&names))
        };
        let parts: Vec<String> = HINT_LISTING_ORDER
            .iter()
            .filter_map(|m| self.savings.get(m).map(|p| format!("{p}% compared to {m}")))
            .collect();
        format!("{head}, saving {}.", join_and(&parts))
    }
}

/// Time hint then cost hint.
pub fn compute_hints(situation: &ChoiceSituation) -> Vec<ArithmeticHint> {
    vec![
        ArithmeticHint::compute(HintAttribute::TravelTime, &situation.travel_time_min),
        ArithmeticHint::compute(HintAttribute::TravelCost, &situation.travel_cost),
    ]
}

fn render_values(values: &PerMode<u32>) -> String {
    format!(
        "{{Train: {}, Car: {}, Swissmetro: {}}}",
        values.train, values.car, values.swissmetro
    )
}

pub fn render_travel_characteristics(situation: &ChoiceSituation) -> String {
    format!(
        "{{Travel time: {}, Travel cost: {}}}",
        render_values(&situation.travel_time_min),
        render_values(&situation.travel_cost)
    )
}

fn characteristics_regex() -> &'static Regex {
    static RE: OnceLock<Regex> = OnceLock::new();
    RE.get_or_init(|| {
        Regex::new(
            r"\{Travel time: \{Train: (\d+), Car: (\d+), Swissmetro: (\d+)\}, Travel cost: \{Train: (\d+), Car: (\d+), Swissmetro: (\d+)\}\}",
        )
        .expect("static regex")
    })
}

/// Inverse of [`render_travel_characteristics`]: finds the first dictionary
/// in `text` and returns (times, costs).
pub fn parse_travel_characteristics(text: &str) -> Option<(PerMode<u32>, PerMode<u32>)> {
    let caps = characteristics_regex().captures(text)?;
    let n = |i: usize| caps[i].parse::<u32>().ok();
    Some((
        PerMode::new(n(1)?, n(2)?, n(3)?),
        PerMode::new(n(4)?, n(5)?, n(6)?),
    ))
}

/// Number of characteristics dictionaries in `text`.
pub fn count_travel_characteristics(text: &str) -> usize {
    characteristics_regex().find_iter(text).count()
}

pub fn render_individual_attributes(situation: &ChoiceSituation) -> String {
    let regular = if situation.is_regular_train_user {
        "The person is a regular Train user."
    } else {
        "The person is not a regular Train user."
    };
    let pass = if situation.owns_annual_pass {
        "He/She owns the Train annual pass."
    } else {
        "He/She does not own the Train annual pass."
    };
    format!("{regular} {pass}")
}

/// Table-style input summary: characteristics then attributes.
pub fn render_input_summary(situation: &ChoiceSituation) -> String {
    format!(
        "{}. {}",
        render_travel_characteristics(situation),
        render_individual_attributes(situation)
    )
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PromptComponent {
    Task,
    Characteristics,
    Attributes,
    Guide,
    OutputFormat,
}

impl PromptComponent {
    pub const ALL: [PromptComponent; 5] = [
        PromptComponent::Task,
        PromptComponent::Characteristics,
        PromptComponent::Attributes,
        PromptComponent::Guide,
        PromptComponent::OutputFormat,
    ];

    pub fn key(self) -> &'static str {
        match self {
            PromptComponent::Task => "task",
            PromptComponent::Characteristics => "characteristics",
            PromptComponent::Attributes => "attributes",
            PromptComponent::Guide => "guide",
            PromptComponent::OutputFormat => "output_format",
        }
    }
}

impl fmt::Display for PromptComponent {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.key())
    }
}

pub const DEFAULT_TASK_DESCRIPTION: &str = "Your task is to predict the travel mode choice of a person. \
There are three available modes: Train, Car, and Swissmetro. Swissmetro is a new high-speed underground \
maglev train. You will be given the travel time (in minutes) and the travel cost (in Swiss francs) of \
each mode in a dictionary format, followed by a description of the person.";

pub const DEFAULT_DOMAIN_KNOWLEDGE: [&str; 3] = [
    "People make trade-offs between travel time and travel cost. A mode that is both faster and cheaper \
is usually preferred, and a large saving in travel time can outweigh a small increase in travel cost, \
and vice versa.",
    "Regular Train users tend to prefer Train.",
    "People who own the Train annual pass tend to prefer Train, because the pass already covers their Train fare.",
];

pub const DEFAULT_OUTPUT_FORMAT: &str = "Please predict which mode the person will choose and give the \
reasons that support your prediction. Reply using exactly the following format:
Prediction: <Train, Car, or Swissmetro>
Reason: <your reasons>";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct PromptTemplateConfig {
    pub task_description_text: String,
    pub domain_knowledge_texts: Vec<String>,
    pub output_format_text: String,
    pub component_order: Vec<PromptComponent>,
}

impl Default for PromptTemplateConfig {
    fn default() -> Self {
        PromptTemplateConfig {
            task_description_text: DEFAULT_TASK_DESCRIPTION.to_string(),
            domain_knowledge_texts: DEFAULT_DOMAIN_KNOWLEDGE.iter().map(|s| s.to_string()).collect(),
            output_format_text: DEFAULT_OUTPUT_FORMAT.to_string(),
            component_order: PromptComponent::ALL.to_vec(),
        }
    }
}

impl PromptTemplateConfig {
    pub fn validate(&self) -> Result<(), PromptError> {
        let blank = |s: &str| s.trim().is_empty();
        if blank(&self.task_description_text) || blank(&self.output_format_text) {
            return Err(PromptError::InvalidTemplate("template texts must be non-empty".into()));
        }
        if self.domain_knowledge_texts.iter().any(|t| blank(t)) {
            return Err(PromptError::InvalidTemplate("domain knowledge texts must be non-empty".into()));
        }
        let unique: BTreeSet<_> = self.component_order.iter().collect();
        if self.component_order.len() != 5 || unique.len() != 5 {
            return Err(PromptError::InvalidTemplate(
                "component_order must list each of the five components exactly once".into(),
            ));
        }
        Ok(())
    }
}

/// A rendered prompt and its parts.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Prompt {
    pub situation_id: String,
    pub full_text: String,
    pub components: BTreeMap<PromptComponent, String>,
    pub component_order: Vec<PromptComponent>,
    pub hints: Vec<ArithmeticHint>,
}

pub const COMPONENT_SEPARATOR: &str = "\n\n";

impl Prompt {
    /// Joins components in `order` with blank lines.
    pub fn assemble(components: &BTreeMap<PromptComponent, String>, order: &[PromptComponent]) -> String {
        order
            .iter()
            .filter_map(|c| components.get(c).map(String::as_str))
            .collect::<Vec<_>>()
            .join(COMPONENT_SEPARATOR)
    }
}

pub fn build_prompt(situation: &ChoiceSituation, cfg: &PromptTemplateConfig) -> Result<Prompt, PromptError> {
    cfg.validate()?;
    let hints = compute_hints(situation);

    let mut guide: Vec<String> = cfg.domain_knowledge_texts.clone();
    guide.extend(hints.iter().map(ArithmeticHint::sentence));

    let components = BTreeMap::from([
        (PromptComponent::Task, cfg.task_description_text.clone()),
        (PromptComponent::Characteristics, render_travel_characteristics(situation)),
        (PromptComponent::Attributes, render_individual_attributes(situation)),
        (PromptComponent::Guide, guide.join("\n")),
        (PromptComponent::OutputFormat, cfg.output_format_text.clone()),
    ]);
    let full_text = Prompt::assemble(&components, &cfg.component_order);
    Ok(Prompt {
        situation_id: situation.situation_id.clone(),
        full_text,
        components,
        component_order: cfg.component_order.clone(),
        hints,
    })
}

#[cfg(test)]
mod tests {
    use proptest::prelude::*;

    use super::*;

    pub(crate) fn situation(times: [u32; 3], costs: [u32; 3], regular: bool, pass: bool) -> ChoiceSituation {
        ChoiceSituation {
            situation_id: "case".into(),
            travel_time_min: PerMode::new(times[0], times[1], times[2]),
            travel_cost: PerMode::new(costs[0], costs[1], costs[2]),
            is_regular_train_user: regular,
            owns_annual_pass: pass,
            chosen: ModeLabel::Swissmetro,
        }
    }

    fn case1() -> ChoiceSituation {
        situation([106, 90, 34], [72, 70, 78], false, false)
    }

    #[test]
    fn published_percentages() {
        assert_eq!(percent_saving(90, 34), Ok(62));
        assert_eq!(percent_saving(106, 34), Ok(68));
        assert_eq!(percent_saving(130, 92), Ok(29));
        assert_eq!(percent_saving(95, 92), Ok(3));
        assert_eq!(percent_saving(50, 50), Ok(0));
    }

    #[test]
    fn percent_saving_rejects_bad_input() {
        assert!(percent_saving(0, 0).is_err());
        assert!(percent_saving(10, 11).is_err());
        // exact half rounds up: 1/8 = 12.5%
        assert_eq!(percent_saving(8, 7), Ok(13));
    }

    #[test]
    fn case1_hints() {
        let hints = compute_hints(&case1());
        assert_eq!(hints[0].attribute, HintAttribute::TravelTime);
        assert_eq!(hints[0].min_modes, vec![ModeLabel::Swissmetro]);
        assert_eq!(
            hints[0].savings,
            BTreeMap::from([(ModeLabel::Car, 62), (ModeLabel::Train, 68)])
        );
        // (72-70)/72 = 2.78% -> 3, (78-70)/78 = 10.26% -> 10
        assert_eq!(hints[1].min_modes, vec![ModeLabel::Car]);
        assert_eq!(
            hints[1].savings,
            BTreeMap::from([(ModeLabel::Train, 3), (ModeLabel::Swissmetro, 10)])
        );
        assert_eq!(
            hints[0].sentence(),
            "Swissmetro has the lowest travel time, saving 62% compared to Car and 68% compared to Train."
        );
        assert_eq!(
            hints[1].sentence(),
            "Car has the lowest travel cost, saving 3% compared to Train and 10% compared to Swissmetro."
        );
    }

    #[test]
    fn ties() {
        let s = situation([60, 60, 60], [10, 10, 20], false, false);
        let hints = compute_hints(&s);
        assert_eq!(hints[0].min_modes.len(), 3);
        assert!(hints[0].savings.is_empty());
        assert_eq!(hints[0].sentence(), "All three modes have the same travel time.");
        assert_eq!(hints[1].min_modes, vec![ModeLabel::Car, ModeLabel::Train]);
        assert_eq!(
            hints[1].sentence(),
            "Car and Train are tied for the lowest travel cost, saving 50% compared to Swissmetro."
        );
    }

    #[test]
    fn characteristics_format() {
        assert_eq!(
            render_travel_characteristics(&case1()),
            "{Travel time: {Train: 106, Car: 90, Swissmetro: 34}, Travel cost: {Train: 72, Car: 70, Swissmetro: 78}}"
        );
        let case4 = situation([95, 130, 92], [29, 44, 32], false, false);
        assert_eq!(
            render_travel_characteristics(&case4),
            "{Travel time: {Train: 95, Car: 130, Swissmetro: 92}, Travel cost: {Train: 29, Car: 44, Swissmetro: 32}}"
        );
        let big = situation([1560, 1, 2], [5040, 0, 0], false, false);
        let text = render_travel_characteristics(&big);
        assert!(text.contains("Train: 1560,") && text.contains("Train: 5040,"));
        assert!(!text.contains('.'));
    }

    #[test]
    fn attribute_sentences() {
        assert_eq!(
            render_individual_attributes(&situation([1, 1, 1], [1, 1, 1], false, false)),
            "The person is not a regular Train user. He/She does not own the Train annual pass."
        );
        assert_eq!(
            render_individual_attributes(&situation([1, 1, 1], [1, 1, 1], true, false)),
            "The person is a regular Train user. He/She does not own the Train annual pass."
        );
        assert_eq!(
            render_individual_attributes(&situation([1, 1, 1], [1, 1, 1], true, true)),
            "The person is a regular Train user. He/She owns the Train annual pass."
        );
        assert_eq!(
            render_individual_attributes(&situation([1, 1, 1], [1, 1, 1], false, true)),
            "The person is not a regular Train user. He/She owns the Train annual pass."
        );
    }

    #[test]
    fn case1_prompt() {
        let cfg = PromptTemplateConfig::default();
        let p = build_prompt(&case1(), &cfg).unwrap();
        assert_eq!(p, build_prompt(&case1(), &cfg).unwrap());
        assert!(p.full_text.contains(
            "{Travel time: {Train: 106, Car: 90, Swissmetro: 34}, Travel cost: {Train: 72, Car: 70, Swissmetro: 78}}"
        ));
        assert!(p.full_text.contains("saving 62% compared to Car"));
        let keys: Vec<&str> = p.components.keys().map(|c| c.key()).collect();
        assert_eq!(keys, ["task", "characteristics", "attributes", "guide", "output_format"]);
        assert_eq!(p.situation_id, "case");
    }

    #[test]
    fn custom_order_and_validation() {
        let mut cfg = PromptTemplateConfig::default();
        cfg.component_order.reverse();
        let p = build_prompt(&case1(), &cfg).unwrap();
        assert!(p.full_text.starts_with(DEFAULT_OUTPUT_FORMAT));
        assert!(p.full_text.ends_with(DEFAULT_TASK_DESCRIPTION));

        cfg.component_order.pop();
        assert!(build_prompt(&case1(), &cfg).is_err());
        let cfg = PromptTemplateConfig {
            domain_knowledge_texts: vec!["  ".into()],
            ..Default::default()
        };
        assert!(cfg.validate().is_err());
    }

    #[test]
    fn characteristics_parse_back() {
        let s = case1();
        let text = format!("prefix {} suffix", render_travel_characteristics(&s));
        assert_eq!(
            parse_travel_characteristics(&text),
            Some((s.travel_time_min, s.travel_cost))
        );
        assert_eq!(parse_travel_characteristics("nothing"), None);
    }

    fn arb_situation() -> impl Strategy<Value = ChoiceSituation> {
        (
            proptest::array::uniform3(1u32..800),
            proptest::array::uniform3(0u32..800),
            any::<bool>(),
            any::<bool>(),
        )
            .prop_map(|(t, c, r, p)| situation(t, c, r, p))
    }

    proptest! {
        #[test]
        fn saving_monotone(other in 1u32..100_000, a in 0u32..100_000, b in 0u32..100_000) {
            let (lo, hi) = (a.min(b).min(other), a.max(b).min(other));
            prop_assert_eq!(percent_saving(other, other), Ok(0));
            prop_assert!(percent_saving(other, lo).unwrap() >= percent_saving(other, hi).unwrap());
            prop_assert!(percent_saving(other, hi).unwrap() <= 100);
        }

        #[test]
        fn every_mode_in_exactly_one_hint_slot(s in arb_situation()) {
            for hint in compute_hints(&s) {
                prop_assert!(!hint.min_modes.is_empty());
                for m in ModeLabel::ALL {
                    let in_min = hint.min_modes.contains(&m);
                    let in_savings = hint.savings.contains_key(&m);
                    prop_assert!(in_min ^ in_savings);
                }
            }
        }

        #[test]
        fn full_text_reassembles(s in arb_situation()) {
            let p = build_prompt(&s, &PromptTemplateConfig::default()).unwrap();
            prop_assert_eq!(Prompt::assemble(&p.components, &p.component_order), p.full_text.clone());
            prop_assert_eq!(count_travel_characteristics(&p.full_text), 1);
        }
    }
}
