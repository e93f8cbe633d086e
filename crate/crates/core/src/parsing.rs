//! Extraction of a predicted mode and its reason from free-form model text.
//!
//! The strict path expects a `Prediction: <mode>` line and a `Reason:` line.
//! When that fails, the fallback accepts a single unambiguous mode name
//! following the last "Prediction" token.

use std::collections::BTreeSet;
use std::sync::OnceLock;

use regex::Regex;
use serde::{Deserialize, Serialize};

use crate::mode::ModeLabel;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ParsePath {
    Strict,
    Fallback,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Prediction {
    pub situation_id: String,
    pub mode: ModeLabel,
    pub reason: String,
    pub parse_path: ParsePath,
}

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
#[error("could not extract a travel mode from response: {text:?}")]
pub struct ParseFailure {
    pub text: String,
}

fn prediction_line() -> &'static Regex {
    static RE: OnceLock<Regex> = OnceLock::new();
    RE.get_or_init(|| Regex::new(r"(?i)^[\s*#>-]*prediction\s*\**\s*:\s*(.*)$").expect("static regex"))
}

fn reason_line() -> &'static Regex {
    static RE: OnceLock<Regex> = OnceLock::new();
    RE.get_or_init(|| Regex::new(r"(?im)^[\s*#>-]*reasons?\s*\**\s*:\**").expect("static regex"))
}

fn mode_word() -> &'static Regex {
    static RE: OnceLock<Regex> = OnceLock::new();
    RE.get_or_init(|| Regex::new(r"(?i)\b(train|car|swissmetro)\b").expect("static regex"))
}

/// A label in strict position, tolerating decoration like `**Car**.` or `"SM"`.
fn strict_label(raw: &str) -> Option<ModeLabel> {
    let cleaned = raw.trim().trim_matches(|c: char| {
        c.is_whitespace() || matches!(c, '*' | '.' | '"' | '\'' | '`' | '<' | '>' | '[' | ']')
    });
    if cleaned.eq_ignore_ascii_case("sm") {
        return Some(ModeLabel::Swissmetro);
    }
    cleaned.parse().ok()
}

/// Text after the last `Reason:` marker, trimmed.
fn reason_after_marker(text: &str) -> Option<String> {
    let m = reason_line().find_iter(text).last()?;
    Some(text[m.end()..].trim().to_string())
}

fn strict(text: &str) -> Option<(ModeLabel, String)> {
    let mode = text
        .lines()
        .filter_map(|l| prediction_line().captures(l))
        .find_map(|c| strict_label(&c[1]))?;
    let reason = reason_after_marker(text)?;
    Some((mode, reason))
}

fn fallback(text: &str) -> Option<(ModeLabel, String)> {
    let lower = text.to_ascii_lowercase();
    let start = lower.rfind("prediction")? + "prediction".len();
    let region = &text[start..];
    let end = region.to_ascii_lowercase().find("reason").unwrap_or(region.len());
    let modes: BTreeSet<ModeLabel> = mode_word()
        .find_iter(&region[..end])
        .filter_map(|m| m.as_str().parse().ok())
        .collect();
    if modes.len() != 1 {
        return None;
    }
    let mode = *modes.iter().next()?;
    Some((mode, reason_after_marker(text).unwrap_or_default()))
}

/// Parses a model reply. The returned prediction has an empty
/// `situation_id`; callers attach the id of the prompt they sent.
pub fn parse_response(text: &str) -> Result<Prediction, ParseFailure> {
    let (mode, reason, parse_path) = if let Some((m, r)) = strict(text) {
        (m, r, ParsePath::Strict)
    } else if let Some((m, r)) = fallback(text) {
        (m, r, ParsePath::Fallback)
    } else {
        return Err(ParseFailure { text: text.to_string() });
    };
    Ok(Prediction {
        situation_id: String::new(),
        mode,
        reason,
        parse_path,
    })
}

/// The canonical reply format.
pub fn render_response(mode: ModeLabel, reason: &str) -> String {
    format!("Prediction: {mode}\nReason: {reason}")
}

#[cfg(test)]
mod tests {
    use proptest::prelude::*;

    use super::*;

    #[test]
    fn strict_examples() {
        let p = parse_response("Prediction: Swissmetro\nReason: lowest travel time.").unwrap();
        assert_eq!(p.mode, ModeLabel::Swissmetro);
        assert_eq!(p.reason, "lowest travel time.");
        assert_eq!(p.parse_path, ParsePath::Strict);

        let p = parse_response("Sure! Based on the data...\nPrediction: car\nReason: cheapest option").unwrap();
        assert_eq!((p.mode, p.reason.as_str(), p.parse_path), (ModeLabel::Car, "cheapest option", ParsePath::Strict));
    }

    #[test]
    fn no_label_fails() {
        let err = parse_response("I cannot determine the mode.").unwrap_err();
        assert_eq!(err.text, "I cannot determine the mode.");
    }

    #[test]
    fn strict_decorations_and_sm_alias() {
        let p = parse_response("**Prediction:** **Train**.\n**Reason:** habit").unwrap();
        assert_eq!((p.mode, p.parse_path), (ModeLabel::Train, ParsePath::Strict));
        assert_eq!(p.reason, "habit");

        let p = parse_response("Prediction: SM\nReason: fast").unwrap();
        assert_eq!(p.mode, ModeLabel::Swissmetro);
    }

    #[test]
    fn echoed_template_is_skipped() {
        let text = "Prediction: <Train, Car, or Swissmetro>\nPrediction: Car\nReason: r";
        assert_eq!(parse_response(text).unwrap().mode, ModeLabel::Car);
    }

    #[test]
    fn multi_line_reason() {
        let p = parse_response("Prediction: Train\nReason: first line\nsecond line\n").unwrap();
        assert_eq!(p.reason, "first line\nsecond line");
    }

    #[test]
    fn fallback_paths() {
        let p = parse_response("My prediction is that the person takes the Car.").unwrap();
        assert_eq!((p.mode, p.parse_path), (ModeLabel::Car, ParsePath::Fallback));
        assert_eq!(p.reason, "");

        // reason present but label line malformed
        let p = parse_response("Prediction - Swissmetro\nReason: fastest, unlike Train").unwrap();
        assert_eq!((p.mode, p.parse_path), (ModeLabel::Swissmetro, ParsePath::Fallback));
        assert_eq!(p.reason, "fastest, unlike Train");

        // prediction line without reason falls back but keeps the label
        let p = parse_response("Prediction: Train").unwrap();
        assert_eq!((p.mode, p.parse_path), (ModeLabel::Train, ParsePath::Fallback));
    }

    #[test]
    fn fallback_rejects_ambiguity_and_sm() {
        assert!(parse_response("Prediction: Car or Train, hard to say").is_err());
        assert!(parse_response("prediction unclear, maybe SM").is_err());
        assert!(parse_response("Swissmetro is fast").is_err());
    }

    fn arb_reason() -> impl Strategy<Value = String> {
        "[A-Za-z0-9 ,.%'()-]{0,80}".prop_map(|s| s.trim().to_string())
    }

    fn mode_mentioned(text: &str, mode: ModeLabel) -> bool {
        let lower = text.to_ascii_lowercase();
        lower.contains(&mode.name().to_ascii_lowercase())
            || (mode == ModeLabel::Swissmetro && lower.contains("sm"))
    }

    proptest! {
        #[test]
        fn strict_round_trip(idx in 0usize..3, reason in arb_reason()) {
            let mode = ModeLabel::ALL[idx];
            let p = parse_response(&render_response(mode, &reason)).unwrap();
            prop_assert_eq!(p.mode, mode);
            prop_assert_eq!(p.reason, reason);
            prop_assert_eq!(p.parse_path, ParsePath::Strict);
        }

        #[test]
        fn label_always_in_text(text in "(Prediction: )?(Train|car|SM|Swissmetro|bus|sm)?[a-z :\n]{0,40}(Reason: [a-z ]{0,10})?") {
            if let Ok(p) = parse_response(&text) {
                prop_assert!(mode_mentioned(&text, p.mode));
            }
        }
    }
}
