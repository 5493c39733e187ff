//! Learning from finished episodes.
//!
//! Safe episodes contribute a few key frames as success experiences. For an
//! episode that ended in a collision, the decisive frame (the last decision
//! before the crash) is sent to the corrector backend, and its corrected
//! reasoning is stored as a correction experience.

use std::io::Write;

use chrono::Utc;
use once_cell::sync::Lazy;
use regex::Regex;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::gateway::{Backend, ChatMessage, GatewayError};
use crate::memory::{Experience, ExperienceKind, MemoryError, MemoryStore, Source, StoreOutcome};
use crate::reasoning::{decode_action, Backends, DecisionRecord, EpisodeRecord, Termination};
use crate::sim::MetaAction;

/// Versioned system prompt for the corrector.
pub const REFLECTION_SYSTEM_PROMPT: &str = include_str!("../assets/reflection_prompt_v1.txt");

pub const SCENARIO_HEADER: &str = "Scenario description:";
pub const ORIGINAL_HEADER: &str = "Original reasoning:";
pub const REFLECTION_REQUEST: &str = "The decision above led to a collision.";

/// Frames always considered when a safe episode has few maneuvers.
pub const PAD_FRAMES: [usize; 3] = [0, 10, 20];
pub const MAX_KEY_FRAMES: usize = 3;

#[derive(Debug, Error)]
pub enum ReflectionError {
    #[error("episode has not finished")]
    Unfinished,
    #[error("episode is not {0}")]
    WrongClass(&'static str),
    #[error("episode has no decision frames")]
    NoFrames,
    #[error("corrector reply is missing the {0:?} section")]
    MissingSection(&'static str),
    #[error("corrector reply has an empty {0:?} section")]
    EmptySection(&'static str),
    #[error("corrected reasoning has no valid decision: {0}")]
    Undecodable(String),
    #[error(transparent)]
    Gateway(#[from] GatewayError),
    #[error(transparent)]
    Memory(#[from] MemoryError),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum SessionClass {
    Safe,
    Unsafe,
}

/// Safe for completed episodes, unsafe for collisions. Decoder failures and
/// aborted episodes are excluded (`None`).
pub fn classify_session(ep: &EpisodeRecord) -> Result<Option<SessionClass>, ReflectionError> {
    match ep.terminated_by {
        None => Err(ReflectionError::Unfinished),
        Some(Termination::Completed) => Ok(Some(SessionClass::Safe)),
        Some(Termination::Collision) => Ok(Some(SessionClass::Unsafe)),
        Some(Termination::DecoderFailure | Termination::Aborted) => Ok(None),
    }
}

/// Key frames of a safe episode: every non-IDLE frame first, padded with
/// frames 0, 10 and 20, at most three, in frame order.
pub fn sample_key_frames(ep: &EpisodeRecord) -> Vec<&DecisionRecord> {
    let mut picked: Vec<usize> = ep
        .records
        .iter()
        .filter(|r| r.action != MetaAction::Idle)
        .map(|r| r.frame)
        .take(MAX_KEY_FRAMES)
        .collect();
    for pad in PAD_FRAMES {
        if picked.len() >= MAX_KEY_FRAMES {
            break;
        }
        if !picked.contains(&pad) && ep.records.iter().any(|r| r.frame == pad) {
            picked.push(pad);
        }
    }
    picked.sort_unstable();
    picked
        .into_iter()
        .filter_map(|f| ep.records.iter().find(|r| r.frame == f))
        .collect()
}

/// The last decision before the collision.
pub fn decisive_frame(ep: &EpisodeRecord) -> Option<&DecisionRecord> {
    ep.records.last()
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct CorrectionResult {
    pub error_analysis: String,
    pub corrected_reasoning: String,
    pub corrected_action: MetaAction,
    pub tips: String,
}

pub fn reflection_messages(record: &DecisionRecord) -> Vec<ChatMessage> {
    vec![
        ChatMessage::system(REFLECTION_SYSTEM_PROMPT),
        ChatMessage::user(format!(
            "{SCENARIO_HEADER}\n{}\n\n{ORIGINAL_HEADER}\n{}\n\n{REFLECTION_REQUEST} Identify the mistake in the original reasoning, then give the corrected reasoning and decision and tips for the future.",
            record.scenario_text.text.trim_end(),
            record.response.trim(),
        )),
    ]
}

static SECTION: Lazy<Regex> = Lazy::new(|| {
    Regex::new(r"(?im)^[\s*#>]*(error analysis|corrected reasoning|tips)[\s*]*:[ \t*]*").unwrap()
});

const SECTIONS: [&str; 3] = ["error analysis", "corrected reasoning", "tips"];

/// Splits a corrector reply into its three sections.
pub fn parse_correction(reply: &str) -> Result<CorrectionResult, ReflectionError> {
    let mut found: Vec<(usize, usize, usize)> = Vec::new();
    for m in SECTION.captures_iter(reply) {
        let whole = m.get(0).unwrap();
        let name = m[1].to_lowercase();
        let idx = SECTIONS.iter().position(|s| *s == name).unwrap();
        if !found.iter().any(|f| f.0 == idx) {
            found.push((idx, whole.start(), whole.end()));
        }
    }
    found.sort_by_key(|f| f.1);
    let mut bodies: [Option<String>; 3] = [None, None, None];
    for (n, &(idx, _, end)) in found.iter().enumerate() {
        let stop = found.get(n + 1).map_or(reply.len(), |next| next.1);
        bodies[idx] = Some(reply[end..stop].trim().to_string());
    }
    let mut take = |i: usize| -> Result<String, ReflectionError> {
        let label = ["Error analysis", "Corrected reasoning", "Tips"][i];
        match bodies[i].take() {
            None => Err(ReflectionError::MissingSection(label)),
            Some(b) if b.is_empty() => Err(ReflectionError::EmptySection(label)),
            Some(b) => Ok(b),
        }
    };
    let error_analysis = take(0)?;
    let corrected_reasoning = take(1)?;
    let tips = take(2)?;
    let corrected_action =
        decode_action(&corrected_reasoning).map_err(|e| ReflectionError::Undecodable(e.to_string()))?;
    Ok(CorrectionResult {
        error_analysis,
        corrected_reasoning,
        corrected_action,
        tips,
    })
}

/// Asks the corrector to fix the decisive frame of an unsafe episode.
pub fn correct_unsafe(ep: &EpisodeRecord, corrector: &Backend) -> Result<CorrectionResult, ReflectionError> {
    if classify_session(ep)? != Some(SessionClass::Unsafe) {
        return Err(ReflectionError::WrongClass("unsafe"));
    }
    let frame = decisive_frame(ep).ok_or(ReflectionError::NoFrames)?;
    let reply = corrector.chat(&reflection_messages(frame))?;
    parse_correction(&reply)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ReflectionMode {
    SuccessHarvest,
    Correction,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ReflectionOutcome {
    pub episode_id: String,
    pub mode: ReflectionMode,
    pub added: Vec<Experience>,
    pub decisive_frame: Option<usize>,
    /// Ids of items replaced because their description matched a new one.
    pub superseded: Vec<String>,
    pub correction: Option<CorrectionResult>,
}

fn new_experience(
    backends: &Backends,
    store: &MemoryStore,
    record: &DecisionRecord,
    reasoning: String,
    action: MetaAction,
    kind: ExperienceKind,
) -> Result<Experience, ReflectionError> {
    let key = backends.embedder.embed(&record.scenario_text.key_text)?;
    if key.dim() != store.dim() {
        return Err(MemoryError::DimMismatch {
            expected: store.dim(),
            found: key.dim(),
        }
        .into());
    }
    Ok(Experience {
        id: uuid::Uuid::new_v4().to_string(),
        key,
        description: record.scenario_text.key_text.clone(),
        reasoning,
        action,
        kind,
        created_at: Utc::now(),
        source: Source::Sim,
    })
}

/// Reflects on a finished episode and stores what it teaches. Returns `None`
/// for excluded episodes (decoder failure or aborted).
pub fn apply_reflection(
    ep: &EpisodeRecord,
    episode_id: &str,
    store: &mut MemoryStore,
    backends: &Backends,
) -> Result<Option<ReflectionOutcome>, ReflectionError> {
    let Some(class) = classify_session(ep)? else {
        return Ok(None);
    };
    let (mode, experiences, decisive, correction) = match class {
        SessionClass::Safe => {
            let experiences = sample_key_frames(ep)
                .into_iter()
                .map(|r| new_experience(backends, store, r, r.response.clone(), r.action, ExperienceKind::Success))
                .collect::<Result<Vec<_>, _>>()?;
            (ReflectionMode::SuccessHarvest, experiences, None, None)
        }
        SessionClass::Unsafe => {
            let correction = correct_unsafe(ep, &backends.corrector)?;
            let frame = decisive_frame(ep).ok_or(ReflectionError::NoFrames)?;
            let exp = new_experience(
                backends,
                store,
                frame,
                correction.corrected_reasoning.clone(),
                correction.corrected_action,
                ExperienceKind::Correction,
            )?;
            (ReflectionMode::Correction, vec![exp], Some(frame.frame), Some(correction))
        }
    };
    let mut superseded = Vec::new();
    for exp in &experiences {
        if let StoreOutcome::Replaced { superseded: old } = store.store_experience(exp.clone())? {
            superseded.push(old);
        }
    }
    Ok(Some(ReflectionOutcome {
        episode_id: episode_id.to_string(),
        mode,
        added: experiences,
        decisive_frame: decisive,
        superseded,
        correction,
    }))
}

/// One line of the reflection audit log.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct AuditEntry {
    pub episode_id: String,
    pub mode: ReflectionMode,
    pub added_ids: Vec<String>,
    pub decisive_frame: Option<usize>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub superseded: Vec<String>,
}

impl From<&ReflectionOutcome> for AuditEntry {
    fn from(o: &ReflectionOutcome) -> Self {
        Self {
            episode_id: o.episode_id.clone(),
            mode: o.mode,
            added_ids: o.added.iter().map(|e| e.id.clone()).collect(),
            decisive_frame: o.decisive_frame,
            superseded: o.superseded.clone(),
        }
    }
}

pub fn write_audit<W: Write>(mut out: W, entries: &[AuditEntry]) -> std::io::Result<()> {
    for e in entries {
        serde_json::to_writer(&mut out, e)?;
        out.write_all(b"\n")?;
    }
    out.flush()
}

#[cfg(test)]
mod tests {
    use super::*;

    const WELL_FORMED: &str = "Error analysis: The lane change ignored vehicle 408, which was only slightly ahead.\n\
        Corrected reasoning: Vehicle 408 in the right lane is 3 m ahead, so the time to collision is too short to safely change lanes. Decelerating keeps a safe gap.\n\
        decision: SLOWER\n\
        Tips: It's important to ensure that there's enough space and time to safely complete the lane change without causing a collision.";

    #[test]
    fn parses_three_sections() {
        let c = parse_correction(WELL_FORMED).unwrap();
        assert_eq!(c.corrected_action, MetaAction::Slower);
        assert!(c.error_analysis.starts_with("The lane change"));
        assert!(c.corrected_reasoning.ends_with("decision: SLOWER"));
        assert!(c.tips.starts_with("It's important"));
    }

    #[test]
    fn headers_are_case_insensitive_and_tolerate_markdown() {
        let reply = "**ERROR ANALYSIS:** too close\n\n## corrected reasoning:\nslow down\ndecision: decelerate\n\n*Tips*: keep distance";
        let c = parse_correction(reply).unwrap();
        assert_eq!(c.error_analysis, "too close");
        assert_eq!(c.corrected_action, MetaAction::Slower);
        assert_eq!(c.tips, "keep distance");
    }

    #[test]
    fn missing_tips_is_an_error() {
        let reply = WELL_FORMED.split("Tips:").next().unwrap();
        assert!(matches!(parse_correction(reply), Err(ReflectionError::MissingSection("Tips"))));
    }

    #[test]
    fn undecodable_correction_is_an_error() {
        let reply = "Error analysis: x\nCorrected reasoning: be careful\nTips: y";
        assert!(matches!(parse_correction(reply), Err(ReflectionError::Undecodable(_))));
        let reply = "Error analysis: x\nCorrected reasoning:\nTips: y";
        assert!(matches!(parse_correction(reply), Err(ReflectionError::EmptySection(_))));
    }
}
