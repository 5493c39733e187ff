//! Multi-lane straight highway with a meta-action controlled ego vehicle and
//! IDM/MOBIL background traffic.

mod config;
mod idm;
mod spawn;
mod step;
mod trace;
mod world;

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};
use thiserror::Error;

pub use config::{
    EnvConfig, Layout, EGO_START_LEVEL, LANE_WIDTH, MAX_OBSERVED, PERCEPTION_RANGE, VEHICLE_LENGTH,
    VEHICLE_WIDTH,
};
pub use idm::{
    idm_acceleration, idm_acceleration_with, mobil_incentive, mobil_should_change, IdmParams,
    LaneContext, MobilParams, MobilSubject, Neighbor, IDM, MOBIL,
};
pub use spawn::{spawn_traffic, MIN_SPAWN_GAP};
pub use step::step_env;
pub use trace::{write_trace, TraceFrame};
pub use world::{
    detect_collision, observe, DriverState, ScenarioObservation, StepEvents, VehicleId,
    VehicleState, WorldState,
};

#[derive(Debug, Error)]
pub enum SimError {
    #[error("invalid environment config: {0}")]
    InvalidConfig(String),
    #[error("pre-collision state: leader gap is not positive")]
    PreCollision,
    #[error("cannot step a world that already has a collision")]
    AlreadyCrashed,
}

/// The five discrete ego commands.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "SCREAMING_SNAKE_CASE")]
pub enum MetaAction {
    LaneLeft,
    Idle,
    LaneRight,
    Faster,
    Slower,
}

impl MetaAction {
    pub const ALL: [MetaAction; 5] = [
        MetaAction::LaneLeft,
        MetaAction::Idle,
        MetaAction::LaneRight,
        MetaAction::Faster,
        MetaAction::Slower,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            MetaAction::LaneLeft => "LANE_LEFT",
            MetaAction::Idle => "IDLE",
            MetaAction::LaneRight => "LANE_RIGHT",
            MetaAction::Faster => "FASTER",
            MetaAction::Slower => "SLOWER",
        }
    }
}

impl fmt::Display for MetaAction {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for MetaAction {
    type Err = String;

    /// Exact canonical names only. Free-form LLM output goes through
    /// `reasoning::decode_action`.
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        MetaAction::ALL
            .into_iter()
            .find(|a| a.as_str() == s)
            .ok_or_else(|| format!("unknown meta-action {s:?}"))
    }
}
