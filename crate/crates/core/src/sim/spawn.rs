//! Seeded initial traffic layout.
//!
//! Randomness comes from ChaCha8 (`rand_chacha`) seeded with
//! `seed_from_u64(config.seed)`. Stream 0 draws the ego lane and then one lane
//! per background vehicle, in vehicle order. Vehicle `i` (0-based) draws its
//! speed and then its spacing jitter from its own stream `i + 1` of the same
//! seed, so adding vehicles never perturbs the draws of earlier ones.
//!
//! Uniform reals are `lo + (hi - lo) * ((next_u64 >> 11) * 2^-53)`; lane picks
//! are `next_u64 % lanes`.
//!
//! Within a lane, vehicles are chained alternately ahead of and behind an
//! anchor (the ego in its own lane, otherwise the lane's first vehicle). The
//! center-to-center distance to the chain end is
//! `max(10 + jitter * 30 / density, length + s0 + closing² / (2 b))`, where
//! `closing` is how much faster the follower is than the leader.

use rand_chacha::rand_core::{RngCore, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::config::{EnvConfig, Layout, EGO_START_LEVEL, VEHICLE_LENGTH, VEHICLE_WIDTH};
use super::idm::IDM;
use super::world::{DriverState, VehicleId, VehicleState, WorldState};
use super::SimError;

/// Minimum center-to-center distance between vehicles in the same lane at spawn.
pub const MIN_SPAWN_GAP: f64 = 10.0;
const SPACING_SPREAD: f64 = 30.0;

pub(crate) fn unit_f64(rng: &mut ChaCha8Rng) -> f64 {
    (rng.next_u64() >> 11) as f64 * (1.0 / (1u64 << 53) as f64)
}

fn uniform(rng: &mut ChaCha8Rng, lo: f64, hi: f64) -> f64 {
    lo + (hi - lo) * unit_f64(rng)
}

fn vehicle_stream(seed: u64, index: usize) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(index as u64 + 1);
    rng
}

#[derive(Clone, Copy)]
struct ChainEnd {
    pos: f64,
    speed: f64,
}

fn spacing(follower_speed: f64, leader_speed: f64, jitter: f64, density: f64) -> f64 {
    let base = MIN_SPAWN_GAP + jitter * SPACING_SPREAD / density;
    let closing = (follower_speed - leader_speed).max(0.0);
    let safe = VEHICLE_LENGTH + IDM.min_gap + closing * closing / (2.0 * IDM.b_comfort);
    base.max(safe)
}

fn ego_vehicle(config: &EnvConfig, lane: usize) -> VehicleState {
    VehicleState {
        id: VehicleId(0),
        longitudinal_pos: 0.0,
        lane_index: lane,
        lateral_offset: 0.0,
        speed: config.ego_speed_levels[EGO_START_LEVEL],
        acceleration: 0.0,
        length: VEHICLE_LENGTH,
        width: VEHICLE_WIDTH,
        is_ego: true,
    }
}

/// Builds the initial world for `config`. Identical configs give bit-identical worlds.
pub fn spawn_traffic(config: &EnvConfig) -> Result<WorldState, SimError> {
    config.validate()?;
    let mut master = ChaCha8Rng::seed_from_u64(config.seed);

    let ego_lane = match config.layout {
        Layout::StoppedLeader { .. } => 0,
        Layout::Random => (master.next_u64() % config.lanes as u64) as usize,
    };
    let ego = ego_vehicle(config, ego_lane);
    let ego_speed = ego.speed;
    let mut state = WorldState {
        time: 0.0,
        vehicles: vec![ego],
        drivers: vec![DriverState {
            desired_speed: ego_speed,
            lane_change_start: 0.0,
        }],
        config: config.clone(),
        rng_state: master.clone(),
        ego_target_level: EGO_START_LEVEL,
        ego_target_lane: ego_lane,
        frame: 0,
        crashed: false,
    };

    match config.layout {
        Layout::StoppedLeader { distance } => {
            state.push_npc(ego_lane, distance, 0.0, 0.0);
        }
        Layout::Random => spawn_random(config, &mut master, &mut state, ego_lane, ego_speed),
    }
    state.rng_state = master;
    Ok(state)
}

fn spawn_random(
    config: &EnvConfig,
    master: &mut ChaCha8Rng,
    state: &mut WorldState,
    ego_lane: usize,
    ego_speed: f64,
) {
    let (lo, hi) = config.npc_speed_range;
    let count = config.npc_count();

    let mut ahead: Vec<Option<ChainEnd>> = vec![None; config.lanes];
    let mut behind: Vec<Option<ChainEnd>> = vec![None; config.lanes];
    let mut placed: Vec<usize> = vec![0; config.lanes];
    let anchor = ChainEnd { pos: 0.0, speed: ego_speed };
    ahead[ego_lane] = Some(anchor);
    behind[ego_lane] = Some(anchor);

    for i in 0..count {
        let lane = (master.next_u64() % config.lanes as u64) as usize;
        let mut rng = vehicle_stream(config.seed, i);
        let speed = uniform(&mut rng, lo, hi);
        let jitter = unit_f64(&mut rng);

        let pos = match (ahead[lane], behind[lane]) {
            (Some(front), Some(back)) => {
                let go_ahead = placed[lane].is_multiple_of(2);
                placed[lane] += 1;
                if go_ahead {
                    let pos = front.pos + spacing(front.speed, speed, jitter, config.density);
                    ahead[lane] = Some(ChainEnd { pos, speed });
                    pos
                } else {
                    let pos = back.pos - spacing(speed, back.speed, jitter, config.density);
                    behind[lane] = Some(ChainEnd { pos, speed });
                    pos
                }
            }
            _ => {
                let spread = MIN_SPAWN_GAP + SPACING_SPREAD / config.density;
                let pos = (jitter - 0.5) * spread;
                let end = Some(ChainEnd { pos, speed });
                ahead[lane] = end;
                behind[lane] = end;
                pos
            }
        };
        state.push_npc(lane, pos, speed, speed);
    }
}
