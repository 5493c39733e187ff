//! Natural-language scenario descriptions and the safety metrics used when
//! reasoning about them.
//!
//! The description is a single paragraph:
//!
//! ```text
//! You are driving on a road with {lanes} lanes, and you are currently driving in the
//! {ordinal} lane from the left. Your current position is {x} m, your speed is {v} m/s,
//! and your acceleration is {a} m/s². Vehicle {id} is in the {relation} at {d} m,
//! driving at {v} m/s with acceleration {a} m/s². ... Your available actions are:
//! LANE_LEFT, IDLE, LANE_RIGHT, FASTER, SLOWER. {intention}
//! ```
//!
//! Numbers use two decimals. Distances are center to center. The memory key
//! is everything before "Your available actions".

use std::fmt::Write as _;

use once_cell::sync::Lazy;
use regex::Regex;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::sim::{ScenarioObservation, VehicleState, IDM, VEHICLE_LENGTH};

pub const DEFAULT_INTENTION: &str = "Your driving intention is to drive safely and avoid collisions.";
pub const NO_NEIGHBORS: &str = "There are no other vehicles driving near you.";
pub const ACTIONS_SENTENCE: &str = "Your available actions are: LANE_LEFT, IDLE, LANE_RIGHT, FASTER, SLOWER.";
const ACTIONS_MARKER: &str = "Your available actions";

#[derive(Debug, Error)]
pub enum DescriptorError {
    #[error("malformed scenario text: {0}")]
    Malformed(String),
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ScenarioText {
    pub text: String,
    /// Prefix of `text` that is embedded as the memory key.
    pub key_text: String,
}

impl ScenarioText {
    /// The actions and intention sentences that follow the key text.
    pub fn suffix(&self) -> &str {
        &self.text[self.key_text.len()..]
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Side {
    Same,
    Left,
    Right,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct Relation {
    pub side: Side,
    pub ahead: bool,
}

impl Relation {
    pub const SLOTS: [Relation; 6] = [
        Relation { side: Side::Same, ahead: true },
        Relation { side: Side::Same, ahead: false },
        Relation { side: Side::Left, ahead: true },
        Relation { side: Side::Left, ahead: false },
        Relation { side: Side::Right, ahead: true },
        Relation { side: Side::Right, ahead: false },
    ];

    pub fn phrase(self) -> &'static str {
        match (self.side, self.ahead) {
            (Side::Same, true) => "same lane ahead",
            (Side::Same, false) => "same lane behind",
            (Side::Left, true) => "left lane ahead",
            (Side::Left, false) => "left lane behind",
            (Side::Right, true) => "right lane ahead",
            (Side::Right, false) => "right lane behind",
        }
    }

    fn of(ego: &VehicleState, other: &VehicleState) -> Option<Relation> {
        let side = if other.lane_index == ego.lane_index {
            Side::Same
        } else if other.lane_index + 1 == ego.lane_index {
            Side::Left
        } else if other.lane_index == ego.lane_index + 1 {
            Side::Right
        } else {
            return None;
        };
        Some(Relation {
            side,
            ahead: other.longitudinal_pos >= ego.longitudinal_pos,
        })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct KeyVehicle {
    pub relation: Relation,
    pub vehicle: VehicleState,
}

/// Nearest vehicle ahead and behind in the ego lane and each adjacent lane,
/// in slot order (same, left, right; ahead before behind). Empty slots are
/// skipped.
pub fn select_key_vehicles(obs: &ScenarioObservation) -> Vec<KeyVehicle> {
    let ego = &obs.ego;
    let mut best: [Option<&VehicleState>; 6] = [None; 6];
    for other in &obs.others {
        let Some(rel) = Relation::of(ego, other) else { continue };
        let slot = Relation::SLOTS.iter().position(|r| *r == rel).unwrap();
        let dist = (other.longitudinal_pos - ego.longitudinal_pos).abs();
        let closer = match best[slot] {
            None => true,
            Some(cur) => {
                let cur_dist = (cur.longitudinal_pos - ego.longitudinal_pos).abs();
                dist < cur_dist || (dist == cur_dist && other.id < cur.id)
            }
        };
        if closer {
            best[slot] = Some(other);
        }
    }
    Relation::SLOTS
        .iter()
        .zip(best)
        .filter_map(|(rel, v)| {
            v.map(|v| KeyVehicle {
                relation: *rel,
                vehicle: v.clone(),
            })
        })
        .collect()
}

/// Two-decimal rendering that never prints a negative zero.
pub fn fmt2(x: f64) -> String {
    let s = format!("{x:.2}");
    if s == "-0.00" {
        "0.00".to_string()
    } else {
        s
    }
}

pub fn ordinal(n: usize) -> String {
    const WORDS: [&str; 10] = [
        "first", "second", "third", "fourth", "fifth", "sixth", "seventh", "eighth", "ninth", "tenth",
    ];
    match n {
        1..=10 => WORDS[n - 1].to_string(),
        _ => format!("{n}th"),
    }
}

fn parse_ordinal(s: &str) -> Option<usize> {
    (1..=10)
        .find(|&n| ordinal(n) == s)
        .or_else(|| s.strip_suffix("th")?.parse().ok())
}

pub fn describe_scenario(obs: &ScenarioObservation, intention: &str) -> ScenarioText {
    let ego = &obs.ego;
    let mut text = format!(
        "You are driving on a road with {} lanes, and you are currently driving in the {} lane from the left. \
         Your current position is {} m, your speed is {} m/s, and your acceleration is {} m/s². ",
        obs.lanes,
        ordinal(ego.lane_index + 1),
        fmt2(ego.longitudinal_pos),
        fmt2(ego.speed),
        fmt2(ego.acceleration),
    );
    let keys = select_key_vehicles(obs);
    if keys.is_empty() {
        text.push_str(NO_NEIGHBORS);
        text.push(' ');
    }
    for k in &keys {
        let v = &k.vehicle;
        let _ = write!(
            text,
            "Vehicle {} is in the {} at {} m, driving at {} m/s with acceleration {} m/s². ",
            v.id,
            k.relation.phrase(),
            fmt2((v.longitudinal_pos - ego.longitudinal_pos).abs()),
            fmt2(v.speed),
            fmt2(v.acceleration),
        );
    }
    let key_text = text.clone();
    text.push_str(ACTIONS_SENTENCE);
    text.push(' ');
    text.push_str(intention);
    ScenarioText { text, key_text }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SafetyAssessment {
    pub leader_id: Option<crate::sim::VehicleId>,
    /// Bumper-to-bumper distance (m).
    pub gap: f64,
    pub closing_speed: f64,
    pub ttc: f64,
    pub safe_gap: f64,
}

pub fn time_to_collision(gap: f64, closing_speed: f64) -> f64 {
    if closing_speed > 0.0 {
        gap / closing_speed
    } else {
        f64::INFINITY
    }
}

/// Gap, closing speed and time to collision against the nearest vehicle
/// ahead of the ego in `lane`.
pub fn assess_safety(obs: &ScenarioObservation, lane: usize) -> SafetyAssessment {
    let ego = &obs.ego;
    let safe_gap = ego.speed * IDM.time_headway;
    let leader = obs
        .others
        .iter()
        .filter(|v| v.lane_index == lane && v.longitudinal_pos >= ego.longitudinal_pos)
        .min_by(|a, b| {
            a.longitudinal_pos
                .total_cmp(&b.longitudinal_pos)
                .then(a.id.cmp(&b.id))
        });
    match leader {
        None => SafetyAssessment {
            leader_id: None,
            gap: f64::INFINITY,
            closing_speed: 0.0,
            ttc: f64::INFINITY,
            safe_gap,
        },
        Some(l) => {
            let gap = (l.longitudinal_pos - ego.longitudinal_pos - (l.length + ego.length) / 2.0).max(0.0);
            let closing_speed = ego.speed - l.speed;
            SafetyAssessment {
                leader_id: Some(l.id),
                gap,
                closing_speed,
                ttc: time_to_collision(gap, closing_speed),
                safe_gap,
            }
        }
    }
}

/// A key vehicle recovered from description text.
#[derive(Debug, Clone, PartialEq)]
pub struct DescribedVehicle {
    pub id: u32,
    pub relation: Relation,
    /// Center-to-center distance (m).
    pub distance: f64,
    pub speed: f64,
    pub acceleration: f64,
}

impl DescribedVehicle {
    /// Bumper gap assuming the standard vehicle length.
    pub fn gap(&self) -> f64 {
        self.distance - VEHICLE_LENGTH
    }
}

/// The structured content of a description, recovered from its text.
#[derive(Debug, Clone, PartialEq)]
pub struct DescribedScene {
    pub lanes: usize,
    /// 0-based lane index of the ego.
    pub ego_lane: usize,
    pub position: f64,
    pub speed: f64,
    pub acceleration: f64,
    pub vehicles: Vec<DescribedVehicle>,
}

impl DescribedScene {
    pub fn vehicle(&self, relation: Relation) -> Option<&DescribedVehicle> {
        self.vehicles.iter().find(|v| v.relation == relation)
    }
}

static HEADER: Lazy<Regex> = Lazy::new(|| {
    Regex::new(
        r"You are driving on a road with (\d+) lanes, and you are currently driving in the (\w+) lane from the left\. Your current position is (-?\d+\.\d+) m, your speed is (-?\d+\.\d+) m/s, and your acceleration is (-?\d+\.\d+) m/s²\.",
    )
    .unwrap()
});

static VEHICLE: Lazy<Regex> = Lazy::new(|| {
    Regex::new(
        r"Vehicle (\d+) is in the (same|left|right) lane (ahead|behind) at (-?\d+\.\d+) m, driving at (-?\d+\.\d+) m/s with acceleration (-?\d+\.\d+) m/s²\.",
    )
    .unwrap()
});

/// Parses a description produced by [`describe_scenario`]. Only the key-text
/// portion is read.
pub fn parse_description(text: &str) -> Result<DescribedScene, DescriptorError> {
    let scene = text.split(ACTIONS_MARKER).next().unwrap_or_default();
    let bad = |what: &str| DescriptorError::Malformed(what.to_string());
    let caps = HEADER.captures(scene).ok_or_else(|| bad("missing ego header"))?;
    let num = |s: &str| s.parse::<f64>().map_err(|_| bad("bad number"));
    let lanes: usize = caps[1].parse().map_err(|_| bad("bad lane count"))?;
    let ego_lane = parse_ordinal(&caps[2]).ok_or_else(|| bad("bad lane ordinal"))?;
    if ego_lane == 0 || ego_lane > lanes {
        return Err(bad("ego lane outside road"));
    }
    let vehicles = VEHICLE
        .captures_iter(scene)
        .map(|c| {
            let side = match &c[2] {
                "same" => Side::Same,
                "left" => Side::Left,
                _ => Side::Right,
            };
            Ok(DescribedVehicle {
                id: c[1].parse().map_err(|_| bad("bad vehicle id"))?,
                relation: Relation { side, ahead: &c[3] == "ahead" },
                distance: num(&c[4])?,
                speed: num(&c[5])?,
                acceleration: num(&c[6])?,
            })
        })
        .collect::<Result<Vec<_>, _>>()?;
    Ok(DescribedScene {
        lanes,
        ego_lane: ego_lane - 1,
        position: num(&caps[3])?,
        speed: num(&caps[4])?,
        acceleration: num(&caps[5])?,
        vehicles,
    })
}
