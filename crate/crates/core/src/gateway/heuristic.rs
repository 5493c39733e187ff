//! Deterministic rule-based stand-ins for the driver and corrector LLMs.
//!
//! Driver rules, first match wins:
//! 1. ego-lane TTC < 3 s or gap < safe gap (speed × 1.5 s): SLOWER
//! 2. ego-lane gap < 1.5 × safe gap and a lane change (left first) has
//!    TTC ≥ 6 s to its leader and ≥ 2 s to its follower: that lane change
//! 3. no leader within 60 m and speed below the top level: FASTER
//! 4. otherwise IDLE

use std::fmt::Write as _;

use crate::descriptor::{fmt2, ordinal, parse_description, time_to_collision, DescribedScene, Relation, Side};
use crate::reasoning::decode_action;
use crate::reflection::{ORIGINAL_HEADER, REFLECTION_REQUEST, SCENARIO_HEADER};
use crate::sim::{MetaAction, IDM};

use super::GatewayError;

pub const TTC_BRAKE: f64 = 3.0;
pub const TTC_CHANGE_AHEAD: f64 = 6.0;
pub const TTC_CHANGE_BEHIND: f64 = 2.0;
pub const FREE_ROAD_GAP: f64 = 60.0;
pub const CHANGE_GAP_FACTOR: f64 = 1.5;
pub const TOP_SPEED: f64 = 32.0;
const TOP_SPEED_TOLERANCE: f64 = 0.5;

/// Marker that identifies a driving scenario inside a user message.
pub const SCENARIO_MARKER: &str = "You are driving on a road with";

struct Verdict {
    action: MetaAction,
    reasoning: String,
}

fn fmt_ttc(ttc: f64) -> String {
    if ttc.is_finite() {
        format!("{} s", fmt2(ttc))
    } else {
        "unbounded because the gap is not closing".to_string()
    }
}

/// TTC toward a vehicle, with overlapping footprints treated as zero.
fn ttc(gap: f64, closing: f64) -> f64 {
    if gap <= 0.0 {
        0.0
    } else {
        time_to_collision(gap, closing)
    }
}

fn side_lane_clear(scene: &DescribedScene, side: Side, out: &mut String) -> bool {
    let name = if side == Side::Left { "left" } else { "right" };
    let exists = match side {
        Side::Left => scene.ego_lane > 0,
        _ => scene.ego_lane + 1 < scene.lanes,
    };
    if !exists {
        let _ = write!(out, " There is no lane to my {name}.");
        return false;
    }
    let ahead = scene
        .vehicle(Relation { side, ahead: true })
        .map_or(f64::INFINITY, |v| ttc(v.gap(), scene.speed - v.speed));
    let behind = scene
        .vehicle(Relation { side, ahead: false })
        .map_or(f64::INFINITY, |v| ttc(v.gap(), v.speed - scene.speed));
    let ok = ahead >= TTC_CHANGE_AHEAD && behind >= TTC_CHANGE_BEHIND;
    let _ = write!(
        out,
        " In the {name} lane the time to collision is {} with the vehicle ahead and {} with the vehicle behind, so changing {name} is {}.",
        fmt_ttc(ahead),
        fmt_ttc(behind),
        if ok { "safe" } else { "not safe" },
    );
    ok
}

fn decide(scene: &DescribedScene) -> Verdict {
    let v = scene.speed;
    let safe_gap = v * IDM.time_headway;
    let mut r = format!(
        "I am driving at {} m/s in the {} of {} lanes, so the ideal following distance is {} m.",
        fmt2(v),
        ordinal(scene.ego_lane + 1),
        scene.lanes,
        fmt2(safe_gap),
    );
    let leader = scene.vehicle(Relation { side: Side::Same, ahead: true });
    let (gap, lead_ttc) = match leader {
        Some(l) => {
            let gap = l.gap();
            let t = ttc(gap, v - l.speed);
            let _ = write!(
                r,
                " Vehicle {} is ahead in my lane with a gap of {} m at {} m/s, so the time to collision is {}.",
                l.id,
                fmt2(gap),
                fmt2(l.speed),
                fmt_ttc(t),
            );
            (gap, t)
        }
        None => {
            r.push_str(" There is no vehicle ahead of me in my lane.");
            (f64::INFINITY, f64::INFINITY)
        }
    };

    if lead_ttc < TTC_BRAKE || gap < safe_gap {
        r.push_str(" The gap is too short or closing too fast, so I must slow down.");
        return Verdict { action: MetaAction::Slower, reasoning: r };
    }
    if gap < CHANGE_GAP_FACTOR * safe_gap {
        for (side, action) in [(Side::Left, MetaAction::LaneLeft), (Side::Right, MetaAction::LaneRight)] {
            if side_lane_clear(scene, side, &mut r) {
                return Verdict { action, reasoning: r };
            }
        }
    }
    if gap > FREE_ROAD_GAP && v + TOP_SPEED_TOLERANCE < TOP_SPEED {
        r.push_str(" The road ahead is clear and I am below the top speed, so I can accelerate.");
        return Verdict { action: MetaAction::Faster, reasoning: r };
    }
    r.push_str(" Keeping the current speed is safe.");
    Verdict { action: MetaAction::Idle, reasoning: r }
}

/// Rule-based driving decision for a scenario description.
pub fn heuristic_drive(scenario_text: &str) -> Result<String, GatewayError> {
    let scene = parse_description(scenario_text).map_err(|e| GatewayError::MalformedScenario(e.to_string()))?;
    let verdict = decide(&scene);
    Ok(format!("{}\ndecision: {}", verdict.reasoning, verdict.action))
}

fn between<'a>(text: &'a str, start: &str, end: &str) -> Option<&'a str> {
    let from = text.find(start)? + start.len();
    let rest = &text[from..];
    let to = rest.find(end).unwrap_or(rest.len());
    Some(rest[..to].trim())
}

/// Rule-based reflection reply in the three-section corrector format.
///
/// The corrected decision is the driver rule's decision for the scene, except
/// that repeating the action that just crashed is replaced by SLOWER.
pub fn heuristic_correct(prompt: &str) -> Result<String, GatewayError> {
    let scenario = between(prompt, SCENARIO_HEADER, ORIGINAL_HEADER)
        .ok_or_else(|| GatewayError::MalformedScenario("missing scenario section".into()))?;
    let original = between(prompt, ORIGINAL_HEADER, REFLECTION_REQUEST).unwrap_or_default();
    let scene = parse_description(scenario).map_err(|e| GatewayError::MalformedScenario(e.to_string()))?;
    let previous = decode_action(original).ok();
    let mut verdict = decide(&scene);
    if previous == Some(verdict.action) && verdict.action != MetaAction::Slower {
        verdict.action = MetaAction::Slower;
        verdict
            .reasoning
            .push_str(" That choice already led to a collision here, so decelerating is the safer option.");
    }
    let previous = previous.map_or("the previous decision".to_string(), |a| format!("the previous decision {a}"));
    Ok(format!(
        "Error analysis: {previous} did not leave enough space and time to the surrounding vehicles, which caused the collision.\n\
         Corrected reasoning: {}\ndecision: {}\n\
         Tips: Check the gap and time to collision to every vehicle in the target lane before acting, and slow down when either is short.",
        verdict.reasoning, verdict.action,
    ))
}
