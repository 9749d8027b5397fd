use std::f64::consts::PI;

use super::reference::ReferenceTrajectory;
use super::scenario::ScenarioConfig;
use crate::dynamics::{wrap_angle, ControlInput, VehicleState};
use crate::uncertainty::UncertaintyFrame;

/// Own state (4), previous control (2), reference errors (3).
pub const EGO_FEATURES: usize = 9;
/// Presence, dx, dy, dphi, dv, confidence, safe distance.
pub const NEIGHBOR_FEATURES: usize = 7;

const POSITION_SCALE: f64 = 100.0;
const LATERAL_ERROR_SCALE: f64 = 1.0;
const HEADING_ERROR_SCALE: f64 = 0.2;
const SPEED_ERROR_SCALE: f64 = 5.0;

pub fn observation_dim(neighbor_slots: usize) -> usize {
    EGO_FEATURES + NEIGHBOR_FEATURES * neighbor_slots
}

pub(crate) struct ObservationInput<'a> {
    pub scenario: &'a ScenarioConfig,
    pub vehicles: &'a [VehicleState],
    pub obstacles: &'a [VehicleState],
    pub prev_controls: &'a [ControlInput],
    pub references: &'a [ReferenceTrajectory],
    pub frame: &'a UncertaintyFrame,
    pub t: usize,
    /// Divisor for safety distances, `d_min + d_max`.
    pub safe_distance_scale: f64,
}

/// Fixed-length observation of vehicle `k`. Neighbour slots hold the other
/// vehicles in index order, then obstacles nearest first; empty slots are
/// zero.
pub(crate) fn observe(inp: &ObservationInput<'_>, k: usize) -> Vec<f64> {
    let s = inp.scenario;
    let slots = s.neighbor_slots();
    let v_max = s.speed_bounds[1].max(1e-9);
    let ego = inp.vehicles[k];
    let u = inp.prev_controls[k];
    let r = inp.references[k].at(inp.t + s.lookahead_steps);
    let now = inp.references[k].at(inp.t);
    let mut obs = Vec::with_capacity(observation_dim(slots));
    obs.extend([ego.x / POSITION_SCALE, ego.y / POSITION_SCALE, ego.phi / PI, ego.v / v_max]);
    obs.extend([u.a / s.accel_bounds[1].abs().max(1e-9), u.delta / s.steer_bounds[1].abs().max(1e-9)]);
    obs.extend([
        (r.y - ego.y) / LATERAL_ERROR_SCALE,
        wrap_angle(r.phi - ego.phi) / HEADING_ERROR_SCALE,
        (now.v - ego.v) / SPEED_ERROR_SCALE,
    ]);

    let n_v = inp.vehicles.len();
    let mut objects: Vec<usize> = (0..n_v).filter(|j| *j != k).collect();
    let mut obstacles: Vec<usize> = (0..inp.obstacles.len()).collect();
    let dist = |o: &VehicleState| (o.x - ego.x).hypot(o.y - ego.y);
    obstacles.sort_by(|a, b| dist(&inp.obstacles[*a]).total_cmp(&dist(&inp.obstacles[*b])));
    objects.extend(obstacles.into_iter().map(|i| n_v + i));

    for slot in 0..slots {
        match objects.get(slot) {
            Some(&j) => {
                let truth = if j < n_v { inp.vehicles[j] } else { inp.obstacles[j - n_v] };
                let dev = inp.frame.perceived_deviation(k, j);
                obs.extend([
                    1.0,
                    (truth.x + dev.dx - ego.x) / POSITION_SCALE,
                    (truth.y + dev.dy - ego.y) / s.lane_width,
                    wrap_angle(truth.phi + dev.dphi - ego.phi) / PI,
                    (truth.v + dev.dv - ego.v) / v_max,
                    inp.frame.effective_confidence(k, j).value(),
                    inp.frame.safe_distance(k, j) / inp.safe_distance_scale,
                ]);
            }
            None => obs.extend([0.0; NEIGHBOR_FEATURES]),
        }
    }
    obs
}
