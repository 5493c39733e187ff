//! Closed-loop driving: describe the scene, recall experiences, prompt the
//! driver backend, decode its decision and step the simulator.

mod decode;
mod prompt;

use std::io::Write;

use serde::{Deserialize, Serialize};
use thiserror::Error;
use tracing::{debug, warn};

pub use decode::{decode_action, DecodeError};
pub use prompt::{build_prompt, PromptBundle, Shot, FORMAT_REMINDER, SYSTEM_PROMPT, SYSTEM_PROMPT_VERSION};

use crate::descriptor::{describe_scenario, ScenarioText, DEFAULT_INTENTION};
use crate::gateway::{Backend, BackendConfig, ChatMessage, GatewayError};
use crate::memory::{ExperienceKind, MemoryError, MemoryStore, RecallResult};
use crate::sim::{
    observe, spawn_traffic, step_env, EnvConfig, MetaAction, ScenarioObservation, SimError, StepEvents,
    TraceFrame, WorldState,
};

/// Chat attempts per frame before falling back.
pub const MAX_DECODE_ATTEMPTS: u32 = 3;
pub const FALLBACK_ACTION: MetaAction = MetaAction::Slower;

#[derive(Debug, Error)]
pub enum ReasoningError {
    #[error(transparent)]
    Gateway(#[from] GatewayError),
    #[error(transparent)]
    Memory(#[from] MemoryError),
    #[error(transparent)]
    Sim(#[from] SimError),
}

/// The driver, corrector and embedding backends used by one agent.
#[derive(Debug)]
pub struct Backends {
    pub driver: Backend,
    pub corrector: Backend,
    pub embedder: Backend,
}

impl Backends {
    /// Embeddings go through a backend built from the driver's config.
    pub fn new(driver: BackendConfig, corrector: BackendConfig) -> Result<Self, GatewayError> {
        Ok(Self {
            embedder: Backend::new(driver.clone())?,
            driver: Backend::new(driver)?,
            corrector: Backend::new(corrector)?,
        })
    }

    pub fn offline() -> Self {
        Self::new(BackendConfig::heuristic(), BackendConfig::heuristic()).expect("heuristic config is valid")
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DriveSettings {
    /// Number of experiences recalled into the prompt.
    pub k: usize,
    pub intention: String,
    pub system_prompt: String,
}

impl Default for DriveSettings {
    fn default() -> Self {
        Self {
            k: 3,
            intention: DEFAULT_INTENTION.to_string(),
            system_prompt: SYSTEM_PROMPT.to_string(),
        }
    }
}

impl DriveSettings {
    pub fn with_k(k: usize) -> Self {
        Self { k, ..Self::default() }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DecisionRecord {
    pub frame: usize,
    pub observation: ScenarioObservation,
    pub scenario_text: ScenarioText,
    pub recalled: Vec<RecallResult>,
    pub prompt: PromptBundle,
    /// The last reply received from the driver backend.
    pub response: String,
    pub action: MetaAction,
    /// Seconds spent in chat calls; zero for local backends.
    pub latency: f64,
    pub attempts: u32,
    pub decoder_failure: bool,
    /// What happened while the action was executed.
    pub events: StepEvents,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Termination {
    Completed,
    Collision,
    DecoderFailure,
    Aborted,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EpisodeRecord {
    pub config: EnvConfig,
    pub records: Vec<DecisionRecord>,
    /// `None` while the episode is still running.
    pub terminated_by: Option<Termination>,
    pub success_steps: usize,
    pub abort_reason: Option<String>,
}

impl EpisodeRecord {
    pub fn is_finished(&self) -> bool {
        self.terminated_by.is_some()
    }

    pub fn trace(&self) -> Vec<TraceFrame> {
        self.records
            .iter()
            .map(|r| TraceFrame::new(r.frame, &r.observation, r.action, r.events))
            .collect()
    }
}

/// One decision: observe, describe, recall, prompt, chat, decode.
///
/// A reply without a valid decision line is retried with a format reminder
/// up to two more times; after that the record carries the fallback action
/// and `decoder_failure`. Transport errors propagate.
pub fn decide_frame(
    world: &WorldState,
    store: &MemoryStore,
    backends: &Backends,
    settings: &DriveSettings,
) -> Result<DecisionRecord, ReasoningError> {
    let observation = observe(world);
    let scenario_text = describe_scenario(&observation, &settings.intention);
    let recalled = if settings.k == 0 || store.is_empty() {
        Vec::new()
    } else {
        let key = backends.embedder.embed(&scenario_text.key_text)?;
        store.recall(&key, settings.k)?
    };
    let prompt = build_prompt(&settings.system_prompt, &scenario_text, &recalled);

    let mut messages = prompt.to_messages();
    let mut latency = 0.0;
    let mut response = String::new();
    let mut decoded = None;
    let mut attempts = 0;
    while attempts < MAX_DECODE_ATTEMPTS {
        attempts += 1;
        match backends.driver.timed_chat(&messages) {
            Ok((reply, secs)) => {
                latency += secs;
                match decode_action(&reply) {
                    Ok(action) => {
                        response = reply;
                        decoded = Some(action);
                        break;
                    }
                    Err(err) => {
                        debug!(frame = world.frame, %err, "undecodable reply");
                        messages.push(ChatMessage::assistant(reply.clone()));
                        messages.push(ChatMessage::user(FORMAT_REMINDER));
                        response = reply;
                    }
                }
            }
            Err(GatewayError::MalformedResponse(err)) => {
                debug!(frame = world.frame, %err, "malformed reply");
            }
            Err(err) => return Err(err.into()),
        }
    }
    if decoded.is_none() {
        warn!(frame = world.frame, "no decodable decision after {attempts} attempts, falling back");
    }
    Ok(DecisionRecord {
        frame: world.frame,
        observation,
        scenario_text,
        recalled,
        prompt,
        response,
        action: decoded.unwrap_or(FALLBACK_ACTION),
        latency,
        attempts,
        decoder_failure: decoded.is_none(),
        events: StepEvents::default(),
    })
}

/// Runs one episode from the spawn layout of `config`.
pub fn run_episode(
    config: &EnvConfig,
    store: &MemoryStore,
    backends: &Backends,
    settings: &DriveSettings,
) -> Result<EpisodeRecord, ReasoningError> {
    let world = spawn_traffic(config)?;
    Ok(run_episode_from(world, store, backends, settings))
}

/// Runs one episode from a prepared world.
///
/// Success steps count the frames completed without collision. A collision
/// or a decoder failure ends the episode; a backend error ends it as aborted
/// with the frames recorded so far.
pub fn run_episode_from(
    mut world: WorldState,
    store: &MemoryStore,
    backends: &Backends,
    settings: &DriveSettings,
) -> EpisodeRecord {
    let mut ep = EpisodeRecord {
        config: world.config.clone(),
        records: Vec::new(),
        terminated_by: None,
        success_steps: 0,
        abort_reason: None,
    };
    let max_frames = world.config.max_decision_frames;
    while ep.records.len() < max_frames {
        let mut record = match decide_frame(&world, store, backends, settings) {
            Ok(r) => r,
            Err(err) => {
                ep.terminated_by = Some(Termination::Aborted);
                ep.abort_reason = Some(err.to_string());
                return ep;
            }
        };
        if record.decoder_failure {
            ep.records.push(record);
            ep.terminated_by = Some(Termination::DecoderFailure);
            return ep;
        }
        let (next, events) = match step_env(&world, record.action) {
            Ok(step) => step,
            Err(err) => {
                ep.records.push(record);
                ep.terminated_by = Some(Termination::Aborted);
                ep.abort_reason = Some(err.to_string());
                return ep;
            }
        };
        record.events = events;
        ep.records.push(record);
        if events.collision {
            ep.terminated_by = Some(Termination::Collision);
            return ep;
        }
        ep.success_steps += 1;
        world = next;
    }
    ep.terminated_by = Some(Termination::Completed);
    ep
}

#[derive(Serialize)]
struct RecalledView<'a> {
    id: &'a str,
    similarity: f64,
    kind: ExperienceKind,
    action: MetaAction,
}

#[derive(Serialize)]
struct DecisionView<'a> {
    frame: usize,
    observation: &'a ScenarioObservation,
    scenario_text: &'a ScenarioText,
    recalled: Vec<RecalledView<'a>>,
    prompt: &'a PromptBundle,
    response: &'a str,
    action: MetaAction,
    latency: f64,
    attempts: u32,
    decoder_failure: bool,
    events: &'a StepEvents,
}

/// Writes one decision record per line. Embedding vectors are left out.
pub fn write_decision_records<W: Write>(mut out: W, records: &[DecisionRecord]) -> std::io::Result<()> {
    for r in records {
        let view = DecisionView {
            frame: r.frame,
            observation: &r.observation,
            scenario_text: &r.scenario_text,
            recalled: r
                .recalled
                .iter()
                .map(|x| RecalledView {
                    id: &x.experience.id,
                    similarity: x.similarity,
                    kind: x.experience.kind,
                    action: x.experience.action,
                })
                .collect(),
            prompt: &r.prompt,
            response: &r.response,
            action: r.action,
            latency: r.latency,
            attempts: r.attempts,
            decoder_failure: r.decoder_failure,
            events: &r.events,
        };
        serde_json::to_writer(&mut out, &view)?;
        out.write_all(b"\n")?;
    }
    out.flush()
}
