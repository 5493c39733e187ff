use serde::{Deserialize, Serialize};

use super::SimError;

/// Lane width in meters.
pub const LANE_WIDTH: f64 = 4.0;
pub const VEHICLE_LENGTH: f64 = 5.0;
pub const VEHICLE_WIDTH: f64 = 2.0;
/// Longitudinal perception range, applied both ahead and behind the ego.
pub const PERCEPTION_RANGE: f64 = 100.0;
/// Maximum number of surrounding vehicles in one observation.
pub const MAX_OBSERVED: usize = 32;
/// Index into the speed levels the ego starts at.
pub const EGO_START_LEVEL: usize = 3;

/// How the initial world is laid out.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case", tag = "kind")]
pub enum Layout {
    /// Seeded random traffic scaled by density.
    #[default]
    Random,
    /// Ego in the leftmost lane with one stopped vehicle `distance` meters
    /// ahead (center to center). Density is ignored.
    StoppedLeader { distance: f64 },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EnvConfig {
    pub lanes: usize,
    pub density: f64,
    pub seed: u64,
    pub max_decision_frames: usize,
    pub decision_hz: f64,
    pub physics_substeps: usize,
    pub ego_speed_levels: Vec<f64>,
    pub npc_speed_range: (f64, f64),
    #[serde(default)]
    pub layout: Layout,
}

impl Default for EnvConfig {
    fn default() -> Self {
        Self {
            lanes: 4,
            density: 2.0,
            seed: 0,
            max_decision_frames: 30,
            decision_hz: 1.0,
            physics_substeps: 10,
            ego_speed_levels: vec![10.0, 15.0, 20.0, 25.0, 32.0],
            npc_speed_range: (15.0, 25.0),
            layout: Layout::Random,
        }
    }
}

impl EnvConfig {
    pub fn new(lanes: usize, density: f64, seed: u64) -> Self {
        Self {
            lanes,
            density,
            seed,
            ..Self::default()
        }
    }

    pub fn with_layout(mut self, layout: Layout) -> Self {
        self.layout = layout;
        self
    }

    /// Label in the `lane-{L}-density-{D}` form used for result files.
    pub fn label(&self) -> String {
        format!("lane-{}-density-{}", self.lanes, self.density)
    }

    /// Seconds per decision frame.
    pub fn frame_duration(&self) -> f64 {
        1.0 / self.decision_hz
    }

    pub fn validate(&self) -> Result<(), SimError> {
        let invalid = |msg: &str| Err(SimError::InvalidConfig(msg.to_string()));
        if self.lanes == 0 {
            return invalid("lanes must be at least 1");
        }
        if !(self.density.is_finite() && self.density >= 0.0) {
            return invalid("density must be a nonnegative finite number");
        }
        if !(self.decision_hz.is_finite() && self.decision_hz > 0.0) {
            return invalid("decision_hz must be positive");
        }
        if self.physics_substeps == 0 {
            return invalid("physics_substeps must be positive");
        }
        if self.ego_speed_levels.len() <= EGO_START_LEVEL {
            return invalid("ego_speed_levels needs at least 4 levels");
        }
        if self.ego_speed_levels.windows(2).any(|w| w[0] >= w[1]) {
            return invalid("ego_speed_levels must be strictly increasing");
        }
        if self.ego_speed_levels[0] < 0.0 {
            return invalid("ego_speed_levels must be nonnegative");
        }
        let (lo, hi) = self.npc_speed_range;
        if !(lo.is_finite() && hi.is_finite() && lo >= 0.0 && lo <= hi) {
            return invalid("npc_speed_range must satisfy 0 <= min <= max");
        }
        if let Layout::StoppedLeader { distance } = self.layout {
            if !(distance.is_finite() && distance > 0.0) {
                return invalid("stopped leader distance must be positive");
            }
        }
        Ok(())
    }

    /// Number of background vehicles for the random layout: `ceil(5 * lanes * density)`.
    pub fn npc_count(&self) -> usize {
        (5.0 * self.lanes as f64 * self.density).ceil() as usize
    }
}
