//! Extraction of the meta-action from a free-form reply.
//!
//! The reply is scanned from its last line upwards for a line of the form
//! `decision: <NAME>`. Case, surrounding whitespace and punctuation, and
//! markdown emphasis are ignored. Accepted names are the five canonical
//! actions (with `_`, `-` or spaces) and these synonyms:
//!
//! | synonym | action |
//! |---|---|
//! | accelerate | FASTER |
//! | decelerate | SLOWER |
//! | keep speed, maintain, maintain speed | IDLE |
//! | change lane left | LANE_LEFT |
//! | change lane right | LANE_RIGHT |

use once_cell::sync::Lazy;
use regex::Regex;
use thiserror::Error;

use crate::sim::MetaAction;

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum DecodeError {
    #[error("no decision line in response")]
    NoDecisionLine,
    #[error("unknown action {0:?}")]
    UnknownAction(String),
}

static DECISION_LINE: Lazy<Regex> = Lazy::new(|| Regex::new(r"(?i)^decision\s*:\s*(.*)$").unwrap());

fn is_trim_char(c: char) -> bool {
    c.is_whitespace() || (c.is_ascii_punctuation() && c != '_')
}

fn lookup(name: &str) -> Option<MetaAction> {
    let normalized = name
        .to_lowercase()
        .replace(['_', '-'], " ")
        .split_whitespace()
        .collect::<Vec<_>>()
        .join(" ");
    let action = match normalized.as_str() {
        "lane left" | "change lane left" => MetaAction::LaneLeft,
        "lane right" | "change lane right" => MetaAction::LaneRight,
        "idle" | "keep speed" | "maintain" | "maintain speed" => MetaAction::Idle,
        "faster" | "accelerate" => MetaAction::Faster,
        "slower" | "decelerate" => MetaAction::Slower,
        _ => return None,
    };
    Some(action)
}

pub fn decode_action(response: &str) -> Result<MetaAction, DecodeError> {
    for line in response.lines().rev() {
        let cleaned: String = line.chars().filter(|c| !matches!(c, '*' | '`')).collect();
        let cleaned = cleaned.trim_matches(is_trim_char);
        let Some(caps) = DECISION_LINE.captures(cleaned) else { continue };
        let name = caps[1].trim_matches(is_trim_char);
        return lookup(name).ok_or_else(|| DecodeError::UnknownAction(name.to_string()));
    }
    Err(DecodeError::NoDecisionLine)
}

#[cfg(test)]
mod tests {
    use super::*;
    use MetaAction::*;

    #[test]
    fn canonical_and_synonyms() {
        assert_eq!(decode_action("...reasoning...\ndecision: SLOWER"), Ok(Slower));
        assert_eq!(decode_action("Decision:  change lane right."), Ok(LaneRight));
        assert_eq!(decode_action("decision: keep speed"), Ok(Idle));
        assert_eq!(decode_action("decision: Accelerate!"), Ok(Faster));
        assert_eq!(decode_action("**Decision:** `LANE_LEFT`"), Ok(LaneLeft));
    }

    #[test]
    fn last_decision_line_wins() {
        assert_eq!(decode_action("decision: FASTER\nOn second thought...\ndecision: IDLE\n\n"), Ok(Idle));
    }

    #[test]
    fn failures() {
        assert_eq!(decode_action("I think we should be careful."), Err(DecodeError::NoDecisionLine));
        assert_eq!(decode_action(""), Err(DecodeError::NoDecisionLine));
        assert_eq!(decode_action("decision: turn around"), Err(DecodeError::UnknownAction("turn around".into())));
    }
}
