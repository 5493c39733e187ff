use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::config::{EnvConfig, LANE_WIDTH, MAX_OBSERVED, PERCEPTION_RANGE};

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(transparent)]
pub struct VehicleId(pub u32);

impl std::fmt::Display for VehicleId {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        self.0.fmt(f)
    }
}

/// Kinematic state of one vehicle. Lane 0 is the leftmost lane.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct VehicleState {
    pub id: VehicleId,
    pub longitudinal_pos: f64,
    pub lane_index: usize,
    /// Offset from the lane center, nonzero only while changing lanes.
    pub lateral_offset: f64,
    pub speed: f64,
    pub acceleration: f64,
    pub length: f64,
    pub width: f64,
    pub is_ego: bool,
}

impl VehicleState {
    /// Lateral position of the vehicle center, measured from the leftmost lane center.
    pub fn lateral_pos(&self) -> f64 {
        self.lane_index as f64 * LANE_WIDTH + self.lateral_offset
    }

    /// The lane the vehicle is leaving, if it is mid lane change.
    pub fn origin_lane(&self) -> Option<usize> {
        if self.lateral_offset > 0.0 {
            Some(self.lane_index + 1)
        } else if self.lateral_offset < 0.0 {
            self.lane_index.checked_sub(1)
        } else {
            None
        }
    }

    /// Whether the vehicle's body is (at least partly) in `lane`.
    pub fn occupies(&self, lane: usize) -> bool {
        self.lane_index == lane || self.origin_lane() == Some(lane)
    }
}

/// Per-vehicle control state that is not observable by other agents.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DriverState {
    pub desired_speed: f64,
    /// Lateral offset at the start of the current lane change.
    pub lane_change_start: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct WorldState {
    pub time: f64,
    /// Ego first.
    pub vehicles: Vec<VehicleState>,
    /// Parallel to `vehicles`.
    pub drivers: Vec<DriverState>,
    pub config: EnvConfig,
    pub rng_state: ChaCha8Rng,
    pub ego_target_level: usize,
    pub ego_target_lane: usize,
    pub frame: usize,
    pub crashed: bool,
}

impl WorldState {
    pub fn ego(&self) -> &VehicleState {
        &self.vehicles[0]
    }

    pub fn ego_target_speed(&self) -> f64 {
        self.config.ego_speed_levels[self.ego_target_level]
    }

    /// Adds a background vehicle and returns its id.
    pub fn push_npc(&mut self, lane: usize, pos: f64, speed: f64, desired_speed: f64) -> VehicleId {
        let id = VehicleId(self.vehicles.iter().map(|v| v.id.0).max().unwrap_or(0) + 1);
        self.vehicles.push(VehicleState::npc(id, lane, pos, speed));
        self.drivers.push(DriverState {
            desired_speed,
            lane_change_start: 0.0,
        });
        id
    }
}

impl VehicleState {
    pub(crate) fn npc(id: VehicleId, lane: usize, pos: f64, speed: f64) -> Self {
        Self {
            id,
            longitudinal_pos: pos,
            lane_index: lane,
            lateral_offset: 0.0,
            speed,
            acceleration: 0.0,
            length: super::config::VEHICLE_LENGTH,
            width: super::config::VEHICLE_WIDTH,
            is_ego: false,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScenarioObservation {
    pub ego: VehicleState,
    pub others: Vec<VehicleState>,
    pub lanes: usize,
    pub time: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
pub struct StepEvents {
    pub collision: bool,
    pub collided_with: Option<VehicleId>,
    pub off_road: bool,
}

/// Strict overlap of the two vehicle footprints. Touching edges do not count.
pub fn detect_collision(a: &VehicleState, b: &VehicleState) -> bool {
    let dx = (a.longitudinal_pos - b.longitudinal_pos).abs();
    let dy = (a.lateral_pos() - b.lateral_pos()).abs();
    dx < (a.length + b.length) / 2.0 && dy < (a.width + b.width) / 2.0
}

/// Ego plus every other vehicle within the perception range, nearest first,
/// capped at 32 vehicles.
pub fn observe(state: &WorldState) -> ScenarioObservation {
    let ego = state.ego().clone();
    let mut others: Vec<VehicleState> = state.vehicles[1..]
        .iter()
        .filter(|v| (v.longitudinal_pos - ego.longitudinal_pos).abs() <= PERCEPTION_RANGE)
        .cloned()
        .collect();
    others.sort_by(|a, b| {
        let da = (a.longitudinal_pos - ego.longitudinal_pos).abs();
        let db = (b.longitudinal_pos - ego.longitudinal_pos).abs();
        da.total_cmp(&db).then(a.id.cmp(&b.id))
    });
    others.truncate(MAX_OBSERVED);
    ScenarioObservation {
        ego,
        others,
        lanes: state.config.lanes,
        time: state.time,
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn car(x: f64, lane: usize, offset: f64) -> VehicleState {
        let mut v = VehicleState::npc(VehicleId(1), lane, x, 20.0);
        v.lateral_offset = offset;
        v
    }

    #[test]
    fn identical_centers_collide() {
        assert!(detect_collision(&car(10.0, 1, 0.0), &car(10.0, 1, 0.0)));
    }

    #[test]
    fn edge_contact_is_not_a_collision() {
        assert!(!detect_collision(&car(0.0, 1, 0.0), &car(5.0, 1, 0.0)));
        assert!(detect_collision(&car(0.0, 1, 0.0), &car(4.999, 1, 0.0)));
    }

    #[test]
    fn partial_lateral_overlap() {
        // dx 3 < 5 and dy 1.5 < 2.
        assert!(detect_collision(&car(0.0, 1, 0.0), &car(3.0, 1, 1.5)));
        // Adjacent lanes are 4 m apart: no overlap.
        assert!(!detect_collision(&car(0.0, 1, 0.0), &car(0.0, 2, 0.0)));
    }

    #[test]
    fn origin_lane_during_change() {
        let v = car(0.0, 1, 2.0);
        assert_eq!(v.origin_lane(), Some(2));
        assert!(v.occupies(1) && v.occupies(2) && !v.occupies(0));
        let v = car(0.0, 1, -2.0);
        assert_eq!(v.origin_lane(), Some(0));
    }

    proptest! {
        #[test]
        fn collision_is_symmetric(
            x1 in -20.0f64..20.0, x2 in -20.0f64..20.0,
            l1 in 0usize..4, l2 in 0usize..4,
            o1 in -4.0f64..4.0, o2 in -4.0f64..4.0,
            len1 in 3.0f64..8.0, len2 in 3.0f64..8.0,
        ) {
            let mut a = car(x1, l1, o1);
            a.length = len1;
            let mut b = car(x2, l2, o2);
            b.length = len2;
            prop_assert_eq!(detect_collision(&a, &b), detect_collision(&b, &a));
        }
    }
}
