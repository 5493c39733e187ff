use super::config::LANE_WIDTH;
use super::idm::{idm_or_brake, mobil_incentive, LaneContext, MobilSubject, Neighbor, IDM, MOBIL};
use super::world::{detect_collision, StepEvents, WorldState};
use super::{MetaAction, SimError};

/// Proportional gain of the ego speed tracker (1/s).
const EGO_SPEED_GAIN: f64 = 1.0 / 0.6;

fn desired_speed(state: &WorldState, i: usize) -> f64 {
    if i == 0 {
        state.ego_target_speed()
    } else {
        state.drivers[i].desired_speed
    }
}

/// Nearest vehicles ahead and behind vehicle `i` among those occupying `lane`.
fn neighbors(state: &WorldState, i: usize, lane: usize) -> LaneContext {
    let me = &state.vehicles[i];
    let mut ctx = LaneContext::default();
    for (j, other) in state.vehicles.iter().enumerate() {
        if j == i || !other.occupies(lane) {
            continue;
        }
        let dx = other.longitudinal_pos - me.longitudinal_pos;
        let n = Neighbor {
            gap: dx.abs() - (me.length + other.length) / 2.0,
            speed: other.speed,
            desired_speed: desired_speed(state, j),
        };
        let slot = if dx >= 0.0 { &mut ctx.leader } else { &mut ctx.follower };
        if slot.is_none_or(|cur| n.gap < cur.gap) {
            *slot = Some(n);
        }
    }
    ctx
}

fn acceleration(state: &WorldState, i: usize) -> f64 {
    let me = &state.vehicles[i];
    let v_des = desired_speed(state, i);
    let mut lanes = vec![me.lane_index];
    lanes.extend(me.origin_lane());
    let following = lanes
        .into_iter()
        .filter_map(|lane| neighbors(state, i, lane).leader)
        .map(|l| idm_or_brake(&IDM, me.speed, v_des, l.gap, me.speed - l.speed))
        .reduce(f64::min);

    let a = if i == 0 {
        let tracking = ((v_des - me.speed) * EGO_SPEED_GAIN).clamp(-IDM.b_max, IDM.a_max);
        following.map_or(tracking, |f| tracking.min(f))
    } else {
        following.unwrap_or_else(|| idm_or_brake(&IDM, me.speed, v_des, f64::INFINITY, 0.0))
    };
    a.clamp(-IDM.b_max, IDM.a_max)
}

fn start_lane_change(state: &mut WorldState, i: usize, target: usize) {
    let v = &mut state.vehicles[i];
    let offset = (v.lane_index as f64 - target as f64) * LANE_WIDTH;
    v.lane_index = target;
    v.lateral_offset = offset;
    state.drivers[i].lane_change_start = offset;
}

fn apply_ego_action(state: &mut WorldState, action: MetaAction) {
    let levels = state.config.ego_speed_levels.len();
    let lane = state.vehicles[0].lane_index;
    match action {
        MetaAction::Faster => state.ego_target_level = (state.ego_target_level + 1).min(levels - 1),
        MetaAction::Slower => state.ego_target_level = state.ego_target_level.saturating_sub(1),
        MetaAction::LaneLeft if lane > 0 => {
            state.ego_target_lane = lane - 1;
            start_lane_change(state, 0, lane - 1);
        }
        MetaAction::LaneRight if lane + 1 < state.config.lanes => {
            state.ego_target_lane = lane + 1;
            start_lane_change(state, 0, lane + 1);
        }
        _ => {}
    }
}

/// Each background vehicle, in order, may start one MOBIL lane change.
fn npc_lane_changes(state: &mut WorldState) {
    for i in 1..state.vehicles.len() {
        let v = &state.vehicles[i];
        // Stalled vehicles (desired speed 0) stay in their lane.
        if v.lateral_offset != 0.0 || state.drivers[i].desired_speed <= 0.0 {
            continue;
        }
        let lane = v.lane_index;
        let subject = MobilSubject {
            speed: v.speed,
            desired_speed: state.drivers[i].desired_speed,
            length: v.length,
            lane: neighbors(state, i, lane),
        };
        let mut best: Option<(usize, f64)> = None;
        let candidates = [lane.checked_sub(1), Some(lane + 1).filter(|&l| l < state.config.lanes)];
        for target in candidates.into_iter().flatten() {
            let ctx = neighbors(state, i, target);
            if let Some(gain) = mobil_incentive(&subject, &ctx, &IDM, &MOBIL) {
                if gain > MOBIL.threshold && best.is_none_or(|(_, g)| gain > g) {
                    best = Some((target, gain));
                }
            }
        }
        if let Some((target, _)) = best {
            start_lane_change(state, i, target);
        }
    }
}

/// Advances the world by one decision frame under the given ego action.
///
/// The frame is integrated with forward Euler in `physics_substeps` equal
/// substeps. Lane changes finish within the frame. The first ego collision
/// ends the frame early.
pub fn step_env(state: &WorldState, ego_action: MetaAction) -> Result<(WorldState, StepEvents), SimError> {
    if state.crashed {
        return Err(SimError::AlreadyCrashed);
    }
    let mut s = state.clone();
    let n = s.config.physics_substeps;
    let frame_dt = s.config.frame_duration();
    let dt = frame_dt / n as f64;
    let start_time = s.time;

    apply_ego_action(&mut s, ego_action);
    npc_lane_changes(&mut s);

    let mut events = StepEvents::default();
    for k in 0..n {
        let accels: Vec<f64> = (0..s.vehicles.len()).map(|i| acceleration(&s, i)).collect();
        let last = k + 1 == n;
        for ((v, d), a) in s.vehicles.iter_mut().zip(s.drivers.iter_mut()).zip(accels) {
            v.acceleration = a;
            v.longitudinal_pos += v.speed * dt;
            v.speed = (v.speed + a * dt).max(0.0);
            if d.lane_change_start != 0.0 {
                if last {
                    v.lateral_offset = 0.0;
                    d.lane_change_start = 0.0;
                } else {
                    v.lateral_offset = d.lane_change_start * (n - 1 - k) as f64 / n as f64;
                }
            }
        }
        s.time = start_time + frame_dt * (k + 1) as f64 / n as f64;

        let ego = &s.vehicles[0];
        if let Some(other) = s.vehicles[1..].iter().find(|o| detect_collision(ego, o)) {
            events.collision = true;
            events.collided_with = Some(other.id);
            s.crashed = true;
            break;
        }
    }
    s.frame += 1;
    Ok((s, events))
}
