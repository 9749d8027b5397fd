use serde::{Deserialize, Serialize};

use super::scenario::{lane_center, ScenarioConfig};
use crate::dynamics::VehicleState;

/// `3 s^2 - 2 s^3` on `[0, 1]`, flat outside.
pub fn smoothstep(s: f64) -> f64 {
    let s = s.clamp(0.0, 1.0);
    s * s * (3.0 - 2.0 * s)
}

fn smoothstep_slope(s: f64) -> f64 {
    if (0.0..=1.0).contains(&s) {
        6.0 * s * (1.0 - s)
    } else {
        0.0
    }
}

/// Reference states for steps `0..=horizon`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReferenceTrajectory {
    pub points: Vec<VehicleState>,
}

impl ReferenceTrajectory {
    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }

    /// Point at step `t`, holding the last point past the end.
    pub fn at(&self, t: usize) -> VehicleState {
        self.points[t.min(self.points.len() - 1)]
    }

    /// Replaces the lateral profile from step `from` on with a new smoothstep
    /// from the current reference offset to `y_target` over `duration` seconds.
    pub fn replan_lateral(&mut self, from: usize, y_target: f64, duration: f64, dt: f64) {
        if from >= self.points.len() {
            return;
        }
        let y0 = self.points[from].y;
        let dy = y_target - y0;
        for (i, p) in self.points.iter_mut().enumerate().skip(from) {
            let s = (i - from) as f64 * dt / duration;
            p.y = y0 + dy * smoothstep(s);
            let lateral_rate = dy * smoothstep_slope(s) / duration;
            p.phi = lateral_rate.atan2(p.v.max(1e-9));
        }
    }
}

/// Constant-speed longitudinal motion from the vehicle's start with a
/// smoothstep lateral move from its start offset to the target lane centre.
pub fn make_reference(scenario: &ScenarioConfig, start: VehicleState, target_lane: usize) -> ReferenceTrajectory {
    let y_target = lane_center(target_lane, scenario.lane_width);
    let dy = y_target - start.y;
    let v = scenario.v_ref;
    let dur = scenario.maneuver_duration;
    let points = (0..=scenario.horizon)
        .map(|t| {
            let time = t as f64 * scenario.dt;
            let s = (time - scenario.maneuver_start) / dur;
            let lateral_rate = dy * smoothstep_slope(s) / dur;
            let phi = if v > 0.0 { lateral_rate.atan2(v) } else { 0.0 };
            VehicleState::new(start.x + v * time, start.y + dy * smoothstep(s), phi, v)
        })
        .collect();
    ReferenceTrajectory { points }
}

/// First time (s) at which the reference is within `tol` of its final
/// lateral position and stays there.
pub fn reference_arrival_time(reference: &ReferenceTrajectory, y_target: f64, tol: f64, dt: f64) -> Option<f64> {
    let mut arrival = None;
    for (t, p) in reference.points.iter().enumerate() {
        if (p.y - y_target).abs() < tol {
            arrival.get_or_insert(t);
        } else {
            arrival = None;
        }
    }
    arrival.map(|t| t as f64 * dt)
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;

    fn scen() -> ScenarioConfig {
        ScenarioConfig::default()
    }

    #[test]
    fn same_lane_is_straight() {
        let s = scen();
        let start = VehicleState::new(0.0, lane_center(1, 3.7), 0.0, 15.0);
        let r = make_reference(&s, start, 1);
        assert_eq!(r.len(), s.horizon + 1);
        assert!(r.points.iter().all(|p| p.y == start.y && p.phi == 0.0));
    }

    #[test]
    fn lane_change_profile() {
        let s = ScenarioConfig { maneuver_duration: 2.0, ..scen() };
        let start = VehicleState::new(0.0, lane_center(0, 3.7), 0.0, 15.0);
        let r = make_reference(&s, start, 1);
        // s = 0.5 at t = 1 s (step 20).
        assert_abs_diff_eq!(r.at(20).y - start.y, 1.85, epsilon = 1e-12);
        assert_abs_diff_eq!(r.points.last().unwrap().y, lane_center(1, 3.7), epsilon = 1e-12);
        assert_abs_diff_eq!(r.points.last().unwrap().x - r.points[0].x, 75.0, epsilon = 1e-9);
        assert!(r.at(20).phi > 0.0);
    }

    #[test]
    fn consecutive_points_within_one_max_speed_step() {
        let s = scen();
        let start = VehicleState::new(3.0, lane_center(1, 3.7), 0.0, 15.0);
        let r = make_reference(&s, start, 0);
        let step = s.speed_bounds[1] * s.dt;
        for w in r.points.windows(2) {
            assert!((w[1].x - w[0].x).hypot(w[1].y - w[0].y) <= step);
        }
        // rightward change gives non-positive heading
        assert!(r.points.iter().all(|p| p.phi <= 0.0));
    }

    #[test]
    fn replan_is_continuous() {
        let s = scen();
        let start = VehicleState::new(0.0, lane_center(1, 3.7), 0.0, 15.0);
        let mut r = make_reference(&s, start, 0);
        let before = r.at(50).y;
        r.replan_lateral(50, lane_center(1, 3.7), 2.0, s.dt);
        assert_eq!(r.at(50).y, before);
        assert_abs_diff_eq!(r.points.last().unwrap().y, lane_center(1, 3.7), epsilon = 1e-12);
        assert!(r.at(60).phi > 0.0);
    }

    #[test]
    fn arrival_time() {
        let s = scen();
        let start = VehicleState::new(0.0, lane_center(1, 3.7), 0.0, 15.0);
        let r = make_reference(&s, start, 0);
        let t = reference_arrival_time(&r, lane_center(0, 3.7), 0.3, s.dt).unwrap();
        assert!(t > 2.0 && t < 3.0, "{t}");
    }
}
