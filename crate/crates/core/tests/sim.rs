mod common;

use common::*;
use kdrive::sim::{observe, spawn_traffic, step_env, EnvConfig, MetaAction, MAX_OBSERVED, PERCEPTION_RANGE};

#[test]
fn observation_keeps_vehicles_in_range() {
    let mut world = spawn_traffic(&EnvConfig::new(4, 0.0, 0)).unwrap();
    // 10 within 100 m, 30 beyond.
    for i in 0..40 {
        let x = if i < 10 { -90.0 + 20.0 * i as f64 } else { 150.0 + 10.0 * i as f64 };
        world.push_npc(i % 4, x, 20.0, 20.0);
    }
    let obs = observe(&world);
    assert_eq!(obs.others.len(), 10);
    assert!(obs
        .others
        .iter()
        .all(|v| (v.longitudinal_pos - obs.ego.longitudinal_pos).abs() <= PERCEPTION_RANGE));
}

#[test]
fn observation_is_capped_nearest_first() {
    let mut world = spawn_traffic(&EnvConfig::new(4, 0.0, 0)).unwrap();
    for i in 0..50 {
        world.push_npc(i % 4, -98.0 + 4.0 * i as f64, 20.0, 20.0);
    }
    let obs = observe(&world);
    assert_eq!(obs.others.len(), MAX_OBSERVED);
    let dist: Vec<f64> = obs.others.iter().map(|v| v.longitudinal_pos.abs()).collect();
    assert!(dist.windows(2).all(|w| w[0] <= w[1]));
}

#[test]
fn spawn_rejects_bad_configs() {
    assert!(spawn_traffic(&EnvConfig::new(0, 1.0, 0)).is_err());
    assert!(spawn_traffic(&EnvConfig::new(3, -1.0, 0)).is_err());
}

#[test]
fn thirty_frames_of_dense_traffic_are_reproducible() {
    let run = || {
        let mut w = spawn_traffic(&EnvConfig::new(5, 3.0, 11)).unwrap();
        let mut xs = Vec::new();
        for f in 0..30 {
            let action = MetaAction::ALL[f % 5];
            match step_env(&w, action) {
                Ok((next, ev)) => {
                    xs.push(next.ego().longitudinal_pos.to_bits());
                    if ev.collision {
                        break;
                    }
                    w = next;
                }
                Err(_) => break,
            }
        }
        xs
    };
    assert_eq!(run(), run());
}

#[test]
fn golden_observation_helper_matches_layout() {
    let obs = golden_observation();
    assert_eq!((obs.lanes, obs.ego.lane_index, obs.others.len()), (4, 1, 1));
}
