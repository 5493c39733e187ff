#![allow(dead_code)]

use chrono::{TimeZone, Utc};
use kdrive::descriptor::{describe_scenario, DEFAULT_INTENTION};
use kdrive::gateway::{hash_embed, EmbeddingVector, LOCAL_EMBEDDING_DIM};
use kdrive::memory::{Experience, ExperienceKind, RecallResult, Source};
use kdrive::reasoning::{build_prompt, DecisionRecord, EpisodeRecord, Termination, SYSTEM_PROMPT};
use kdrive::sim::{
    observe, spawn_traffic, EnvConfig, MetaAction, ScenarioObservation, StepEvents, VehicleId, VehicleState,
    VEHICLE_LENGTH, VEHICLE_WIDTH,
};

pub fn vehicle(id: u32, lane: usize, x: f64, v: f64) -> VehicleState {
    VehicleState {
        id: VehicleId(id),
        longitudinal_pos: x,
        lane_index: lane,
        lateral_offset: 0.0,
        speed: v,
        acceleration: 0.0,
        length: VEHICLE_LENGTH,
        width: VEHICLE_WIDTH,
        is_ego: id == 0,
    }
}

pub fn observation(lanes: usize, ego: VehicleState, others: Vec<VehicleState>) -> ScenarioObservation {
    ScenarioObservation { ego, others, lanes, time: 0.0 }
}

/// Four lanes, ego in the second lane at 100 m and 25 m/s, vehicle 7 30 m ahead.
pub fn golden_observation() -> ScenarioObservation {
    observation(4, vehicle(0, 1, 100.0, 25.0), vec![vehicle(7, 1, 130.0, 20.0)])
}

pub fn reasoning_for(action: MetaAction) -> String {
    format!("Considering the surrounding vehicles, the best choice now is {action}.\ndecision: {action}")
}

pub fn experience(id: &str, key: EmbeddingVector, description: &str, action: MetaAction) -> Experience {
    Experience {
        id: id.to_string(),
        key,
        description: description.to_string(),
        reasoning: reasoning_for(action),
        action,
        kind: ExperienceKind::Init,
        created_at: Utc.with_ymd_and_hms(2024, 1, 1, 0, 0, 0).unwrap(),
        source: Source::External,
    }
}

pub fn hashed_experience(id: &str, description: &str, action: MetaAction) -> Experience {
    experience(id, hash_embed(description, LOCAL_EMBEDDING_DIM), description, action)
}

pub fn recall_result(id: &str, action: MetaAction, similarity: f64) -> RecallResult {
    let desc = format!("Scenario remembered as {id}.");
    RecallResult {
        experience: hashed_experience(id, &desc, action),
        similarity,
    }
}

/// A decision record at `frame` whose scenario text is unique per (lanes, frame).
pub fn decision(lanes: usize, frame: usize, action: MetaAction, collision: bool) -> DecisionRecord {
    let mut world = spawn_traffic(&EnvConfig::new(lanes, 0.0, 0)).unwrap();
    world.frame = frame;
    world.vehicles[0].longitudinal_pos += 25.0 * frame as f64;
    let observation = observe(&world);
    let scenario_text = describe_scenario(&observation, DEFAULT_INTENTION);
    let prompt = build_prompt(SYSTEM_PROMPT, &scenario_text, &[]);
    DecisionRecord {
        frame,
        observation,
        scenario_text,
        recalled: Vec::new(),
        prompt,
        response: reasoning_for(action),
        action,
        latency: 0.0,
        attempts: 1,
        decoder_failure: false,
        events: StepEvents {
            collision,
            collided_with: collision.then_some(VehicleId(1)),
            off_road: false,
        },
    }
}

/// A finished episode with the given per-frame actions. Unsafe episodes
/// collide on their last frame.
pub fn episode(lanes: usize, actions: &[MetaAction], termination: Termination) -> EpisodeRecord {
    let n = actions.len();
    let collided = termination == Termination::Collision;
    let records: Vec<DecisionRecord> = actions
        .iter()
        .enumerate()
        .map(|(f, &a)| decision(lanes, f, a, collided && f + 1 == n))
        .collect();
    let success_steps = if collided { n - 1 } else { n };
    EpisodeRecord {
        config: EnvConfig::new(lanes, 0.0, 0),
        records,
        terminated_by: Some(termination),
        success_steps,
        abort_reason: None,
    }
}

pub fn correction_reply(action: MetaAction) -> String {
    format!(
        "Error analysis: The previous decision closed the gap to the stopped vehicle ahead too quickly.\n\
         Corrected reasoning: The vehicle ahead is stopped and the gap is short, so I must brake now.\n\
         decision: {action}\n\
         Tips: Always check the time to collision with the vehicle ahead before accelerating."
    )
}
