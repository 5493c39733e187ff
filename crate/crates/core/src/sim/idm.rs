//! Intelligent Driver Model car following and the MOBIL lane-change rule.

use serde::{Deserialize, Serialize};

use super::SimError;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct IdmParams {
    /// Maximum acceleration (m/s²).
    pub a_max: f64,
    /// Comfortable deceleration (m/s²).
    pub b_comfort: f64,
    /// Hard braking limit (m/s²), the lower clamp of the output.
    pub b_max: f64,
    pub delta: f64,
    /// Desired time headway (s).
    pub time_headway: f64,
    /// Jam distance (m).
    pub min_gap: f64,
}

impl Default for IdmParams {
    fn default() -> Self {
        Self {
            a_max: 3.0,
            b_comfort: 2.0,
            b_max: 5.0,
            delta: 4.0,
            time_headway: 1.5,
            min_gap: 5.0,
        }
    }
}

pub const IDM: IdmParams = IdmParams {
    a_max: 3.0,
    b_comfort: 2.0,
    b_max: 5.0,
    delta: 4.0,
    time_headway: 1.5,
    min_gap: 5.0,
};

/// IDM acceleration for a vehicle at speed `v` wanting `v_des`, with bumper
/// gap `gap` to its leader and approach rate `dv = v - v_leader`.
///
/// Pass `f64::INFINITY` as the gap when there is no leader. A desired speed
/// of zero describes a vehicle that wants to stand still.
pub fn idm_acceleration(v: f64, v_des: f64, gap: f64, dv: f64) -> Result<f64, SimError> {
    idm_acceleration_with(&IDM, v, v_des, gap, dv)
}

pub fn idm_acceleration_with(
    p: &IdmParams,
    v: f64,
    v_des: f64,
    gap: f64,
    dv: f64,
) -> Result<f64, SimError> {
    if gap <= 0.0 {
        return Err(SimError::PreCollision);
    }
    let free = if v_des > 0.0 {
        (v / v_des).powf(p.delta)
    } else if v > 0.0 {
        f64::INFINITY
    } else {
        1.0
    };
    let interaction = if gap.is_finite() {
        let s_star = p.min_gap + v * p.time_headway + v * dv / (2.0 * (p.a_max * p.b_comfort).sqrt());
        (s_star / gap).powi(2)
    } else {
        0.0
    };
    let a = p.a_max * (1.0 - free - interaction);
    Ok(a.clamp(-p.b_max, p.a_max))
}

/// IDM acceleration that maps an overlapping leader to full braking instead
/// of an error. Used inside the integrator where overlap is a collision that
/// the caller reports separately.
pub(crate) fn idm_or_brake(p: &IdmParams, v: f64, v_des: f64, gap: f64, dv: f64) -> f64 {
    idm_acceleration_with(p, v, v_des, gap, dv).unwrap_or(-p.b_max)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MobilParams {
    pub politeness: f64,
    /// Minimum net acceleration gain to change lanes (m/s²).
    pub threshold: f64,
    /// Largest deceleration the new follower may be forced into (m/s²).
    pub b_safe: f64,
}

pub const MOBIL: MobilParams = MobilParams {
    politeness: 0.3,
    threshold: 0.2,
    b_safe: 2.0,
};

impl Default for MobilParams {
    fn default() -> Self {
        MOBIL
    }
}

/// A neighbor as seen from the vehicle considering a lane change.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Neighbor {
    /// Bumper-to-bumper gap to the subject vehicle (m).
    pub gap: f64,
    pub speed: f64,
    pub desired_speed: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct LaneContext {
    pub leader: Option<Neighbor>,
    pub follower: Option<Neighbor>,
}

/// The vehicle evaluating a lane change, together with its current lane.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MobilSubject {
    pub speed: f64,
    pub desired_speed: f64,
    pub length: f64,
    pub lane: LaneContext,
}

fn accel_behind(p: &IdmParams, speed: f64, desired: f64, leader: Option<(f64, f64)>) -> f64 {
    match leader {
        Some((gap, leader_speed)) => idm_or_brake(p, speed, desired, gap, speed - leader_speed),
        None => idm_or_brake(p, speed, desired, f64::INFINITY, 0.0),
    }
}

/// Net MOBIL incentive for moving into `target`, or `None` when the move is
/// unsafe (overlap in the target lane, or the new follower would have to
/// brake harder than `b_safe`).
pub fn mobil_incentive(
    subject: &MobilSubject,
    target: &LaneContext,
    idm: &IdmParams,
    mobil: &MobilParams,
) -> Option<f64> {
    if target.leader.is_some_and(|n| n.gap <= 0.0) || target.follower.is_some_and(|n| n.gap <= 0.0) {
        return None;
    }

    // New follower: before (behind the new leader) and after (behind us).
    let (nf_gain, nf_after) = match target.follower {
        Some(nf) => {
            let before_leader = target
                .leader
                .map(|nl| (nf.gap + subject.length + nl.gap, nl.speed));
            let before = accel_behind(idm, nf.speed, nf.desired_speed, before_leader);
            let after = accel_behind(idm, nf.speed, nf.desired_speed, Some((nf.gap, subject.speed)));
            (after - before, after)
        }
        None => (0.0, 0.0),
    };
    if nf_after < -mobil.b_safe {
        return None;
    }

    let own_before = accel_behind(
        idm,
        subject.speed,
        subject.desired_speed,
        subject.lane.leader.map(|l| (l.gap, l.speed)),
    );
    let own_after = accel_behind(
        idm,
        subject.speed,
        subject.desired_speed,
        target.leader.map(|l| (l.gap, l.speed)),
    );

    // Old follower: before (behind us) and after (behind our old leader).
    let of_gain = match subject.lane.follower {
        Some(of) => {
            let before = accel_behind(idm, of.speed, of.desired_speed, Some((of.gap, subject.speed)));
            let after_leader = subject
                .lane
                .leader
                .map(|ol| (of.gap + subject.length + ol.gap, ol.speed));
            let after = accel_behind(idm, of.speed, of.desired_speed, after_leader);
            after - before
        }
        None => 0.0,
    };

    Some(own_after - own_before + mobil.politeness * (nf_gain + of_gain))
}

/// MOBIL decision: safe and the incentive exceeds the threshold.
pub fn mobil_should_change(subject: &MobilSubject, target: &LaneContext) -> bool {
    mobil_incentive(subject, target, &IDM, &MOBIL).is_some_and(|gain| gain > MOBIL.threshold)
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    // Independent single-expression evaluation used as the oracle.
    fn oracle(v: f64, v0: f64, s: f64, dv: f64) -> f64 {
        (3.0 * (1.0
            - (v / v0).powi(4)
            - ((5.0 + v * 1.5 + v * dv / (2.0 * 6.0_f64.sqrt())) / s).powi(2)))
        .clamp(-5.0, 3.0)
    }

    #[test]
    fn free_road_at_desired_speed_is_zero() {
        assert_eq!(idm_acceleration(20.0, 20.0, f64::INFINITY, 0.0).unwrap(), 0.0);
    }

    #[test]
    fn standing_start_is_a_max() {
        assert_eq!(idm_acceleration(0.0, 20.0, f64::INFINITY, 0.0).unwrap(), 3.0);
    }

    #[test]
    fn matches_closed_form() {
        let a = idm_acceleration(20.0, 25.0, 20.0, 5.0).unwrap();
        // 3 * (1 - 0.4096 - ((5 + 30 + 100/(2*sqrt 6)) / 20)^2), clamped.
        let expected = oracle(20.0, 25.0, 20.0, 5.0);
        assert!((a - expected).abs() < 1e-12);
        assert_eq!(a, -5.0);
        let a = idm_acceleration(10.0, 25.0, 80.0, -1.0).unwrap();
        assert!((a - oracle(10.0, 25.0, 80.0, -1.0)).abs() < 1e-12);
        assert!(a > -5.0 && a < 3.0);
    }

    #[test]
    fn overlapping_leader_is_an_error() {
        assert!(matches!(idm_acceleration(10.0, 20.0, 0.0, 0.0), Err(SimError::PreCollision)));
        assert!(matches!(idm_acceleration(10.0, 20.0, -1.0, 0.0), Err(SimError::PreCollision)));
    }

    #[test]
    fn stopped_vehicle_stays_put() {
        assert_eq!(idm_acceleration(0.0, 0.0, f64::INFINITY, 0.0).unwrap(), 0.0);
        assert_eq!(idm_acceleration(1.0, 0.0, f64::INFINITY, 0.0).unwrap(), -5.0);
    }

    fn n(gap: f64, speed: f64) -> Neighbor {
        Neighbor { gap, speed, desired_speed: 25.0 }
    }

    #[test]
    fn mobil_empty_target_with_blocked_lane() {
        let subject = MobilSubject {
            speed: 20.0,
            desired_speed: 25.0,
            length: 5.0,
            lane: LaneContext { leader: Some(n(10.0, 10.0)), follower: None },
        };
        // Oracle: own gain = idm(free) - idm(blocked) = 3(1-0.4096) - (-5) > 0.2.
        let own_after = 3.0 * (1.0 - (20.0f64 / 25.0).powi(4));
        assert!(own_after - (-5.0) > 0.2);
        assert!(mobil_should_change(&subject, &LaneContext::default()));
    }

    #[test]
    fn mobil_rejects_close_fast_follower() {
        let subject = MobilSubject {
            speed: 20.0,
            desired_speed: 25.0,
            length: 5.0,
            lane: LaneContext { leader: Some(n(10.0, 10.0)), follower: None },
        };
        let target = LaneContext { leader: None, follower: Some(n(2.0, 25.0)) };
        // Oracle: the follower would need (5 + 37.5 + 5*25/(2 sqrt 6))^2/2^2 in
        // interaction alone, far past b_safe.
        assert!(oracle(25.0, 25.0, 2.0, 5.0) < -2.0);
        assert!(!mobil_should_change(&subject, &target));
    }

    #[test]
    fn mobil_identical_lanes_no_change() {
        let lane = LaneContext { leader: Some(n(30.0, 20.0)), follower: None };
        let subject = MobilSubject { speed: 20.0, desired_speed: 25.0, length: 5.0, lane };
        assert!(!mobil_should_change(&subject, &lane));

        let lane = LaneContext { leader: Some(n(30.0, 20.0)), follower: Some(n(60.0, 20.0)) };
        let subject = MobilSubject { speed: 20.0, desired_speed: 25.0, length: 5.0, lane };
        let gain = mobil_incentive(&subject, &lane, &IDM, &MOBIL).unwrap();
        assert!(gain.abs() < 1e-12);
        assert!(!mobil_should_change(&subject, &lane));
    }

    proptest! {
        #[test]
        fn idm_output_bounded(v in 0.0f64..40.0, v_des in 0.1f64..40.0, gap in 0.01f64..500.0, dv in -30.0f64..30.0) {
            let a = idm_acceleration(v, v_des, gap, dv).unwrap();
            prop_assert!((-5.0..=3.0).contains(&a));
            prop_assert!((a - oracle(v, v_des, gap, dv)).abs() < 1e-9);
        }
    }
}
