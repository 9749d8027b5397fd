use serde::{Deserialize, Serialize};

use crate::dynamics::{DynamicsLimits, VehicleGeometry, VehicleState};
use crate::error::{Error, Result};

/// A static obstacle dropped into a lane part-way through an episode,
/// followed by a reference replan toward the nearest free lane.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ObstacleEvent {
    /// Injection time (s).
    pub time: f64,
    /// Half-width of a uniform jitter applied to `time` at reset (s).
    pub time_jitter: f64,
    /// Longitudinal gap ahead of the foremost vehicle at injection (m).
    pub lead_distance: f64,
    /// Lane to block; `None` blocks the target lane of vehicle 0.
    pub lane: Option<usize>,
    /// Duration of the replanned lateral transition (s).
    pub replan_duration: f64,
    /// Chance that the event happens in a given episode.
    pub probability: f64,
}

impl Default for ObstacleEvent {
    fn default() -> Self {
        Self { time: 2.5, time_jitter: 0.0, lead_distance: 30.0, lane: None, replan_duration: 2.0, probability: 1.0 }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ScenarioConfig {
    pub n_vehicles: usize,
    /// Episode length in steps.
    pub horizon: usize,
    pub dt: f64,
    pub lane_count: usize,
    pub lane_width: f64,
    pub vehicle_length: f64,
    pub vehicle_width: f64,
    pub accel_bounds: [f64; 2],
    pub steer_bounds: [f64; 2],
    /// Control change per second.
    pub accel_rate: f64,
    pub steer_rate: f64,
    pub speed_bounds: [f64; 2],
    /// Nominal initial states, front vehicle first.
    pub initial_states: Vec<VehicleState>,
    pub target_lane: Vec<usize>,
    /// Uniform reset jitter on (x, y, v).
    pub initial_jitter: [f64; 3],
    pub d_min: f64,
    pub v_ref: f64,
    pub maneuver_start: f64,
    pub maneuver_duration: f64,
    /// Steps ahead at which reference errors are observed.
    pub lookahead_steps: usize,
    /// Neighbour slots in the observation; `None` means `n_vehicles`.
    pub neighbor_slots: Option<usize>,
    pub obstacle_event: Option<ObstacleEvent>,
    pub seed: u64,
}

impl Default for ScenarioConfig {
    fn default() -> Self {
        Self::platoon(2)
    }
}

impl ScenarioConfig {
    /// `n` vehicles in lane 1 spaced 20 m apart at 15 m/s, all targeting lane 0.
    pub fn platoon(n: usize) -> Self {
        let lane_width = 3.7;
        let v_ref = 15.0;
        let spacing = 20.0;
        let start_lane = 1;
        let y0 = lane_center(start_lane, lane_width);
        Self {
            n_vehicles: n,
            horizon: 100,
            dt: 0.05,
            lane_count: 3,
            lane_width,
            vehicle_length: 4.5,
            vehicle_width: 1.8,
            accel_bounds: [-4.0, 4.0],
            steer_bounds: [-0.3, 0.3],
            accel_rate: 1.0,
            steer_rate: 0.2,
            speed_bounds: [0.0, 30.0],
            initial_states: (0..n)
                .map(|k| VehicleState::new(spacing * (n - 1 - k) as f64, y0, 0.0, v_ref))
                .collect(),
            target_lane: vec![0; n],
            initial_jitter: [2.0, 0.2, 1.0],
            d_min: 10.0,
            v_ref,
            maneuver_start: 0.0,
            maneuver_duration: 3.0,
            lookahead_steps: 10,
            neighbor_slots: None,
            obstacle_event: None,
            seed: 0,
        }
    }

    pub fn limits(&self) -> DynamicsLimits {
        DynamicsLimits::from_rates(
            self.dt,
            (self.accel_bounds[0], self.accel_bounds[1]),
            (self.steer_bounds[0], self.steer_bounds[1]),
            self.accel_rate,
            self.steer_rate,
            (self.speed_bounds[0], self.speed_bounds[1]),
        )
    }

    pub fn geometry(&self) -> VehicleGeometry {
        let half = self.vehicle_length / 2.0;
        VehicleGeometry {
            length: self.vehicle_length,
            width: self.vehicle_width,
            lf: half,
            lr: half,
            lane_width: self.lane_width,
        }
    }

    pub fn neighbor_slots(&self) -> usize {
        self.neighbor_slots.unwrap_or(self.n_vehicles)
    }

    pub fn road_width(&self) -> f64 {
        self.lane_count as f64 * self.lane_width
    }

    pub fn validate(&self) -> Result<()> {
        let fail = |m: String| Err(Error::Config(m));
        if self.n_vehicles == 0 {
            return fail("n_vehicles must be at least 1".into());
        }
        if self.horizon == 0 {
            return fail("horizon must be at least 1".into());
        }
        if self.lane_count == 0 || !(self.lane_width > 0.0) {
            return fail("lane_count and lane_width must be positive".into());
        }
        if !(self.d_min > 0.0 && self.d_min.is_finite()) {
            return fail(format!("d_min must be positive, got {}", self.d_min));
        }
        if self.initial_states.len() != self.n_vehicles || self.target_lane.len() != self.n_vehicles {
            return fail(format!(
                "{} vehicles need as many initial states and target lanes (got {} and {})",
                self.n_vehicles,
                self.initial_states.len(),
                self.target_lane.len()
            ));
        }
        if let Some(l) = self.target_lane.iter().find(|l| **l >= self.lane_count) {
            return fail(format!("target lane {l} outside {} lanes", self.lane_count));
        }
        if self.initial_states.iter().any(|s| !s.is_finite()) {
            return fail("initial states must be finite".into());
        }
        if self.initial_jitter.iter().any(|j| !(*j >= 0.0)) {
            return fail("initial jitter must be non-negative".into());
        }
        if !(self.maneuver_duration > 0.0) || !(self.maneuver_start >= 0.0) || !(self.v_ref >= 0.0) {
            return fail("maneuver timing and v_ref must be non-negative".into());
        }
        if let Some(ev) = &self.obstacle_event {
            if ev.lane.is_some_and(|l| l >= self.lane_count) {
                return fail("obstacle lane outside the road".into());
            }
            if !(0.0..=1.0).contains(&ev.probability) || !(ev.replan_duration > 0.0) || !(ev.time_jitter >= 0.0) {
                return fail(format!("bad obstacle event {ev:?}"));
            }
        }
        self.geometry().validate()?;
        self.limits().validate()
    }
}

pub fn lane_center(lane: usize, lane_width: f64) -> f64 {
    (lane as f64 + 0.5) * lane_width
}

/// Weights of the per-step cost and the reward penalties.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct CostWeights {
    pub q_z: [f64; 4],
    pub q_u: [f64; 2],
    pub q_du: [f64; 2],
    pub sigma1: f64,
    pub sigma2: f64,
    pub collision_penalty: f64,
    /// Adds the terminal step cost for every remaining step when an episode
    /// ends on a collision or off-road event, so ending early is never
    /// cheaper than staying in the current state.
    pub terminal_cost_to_go: bool,
    /// Upper bound on the per-step cost charged for the remaining steps.
    /// The default is about one lane width of lateral error under the
    /// default weights, the cost of never changing lane.
    pub cost_to_go_cap: f64,
}

impl Default for CostWeights {
    fn default() -> Self {
        Self {
            q_z: [1.0, 100.0, 1.0, 0.1],
            q_u: [1.0, 1.0],
            q_du: [1.0, 1.0],
            sigma1: 10.0,
            sigma2: 10.0,
            collision_penalty: 100.0,
            terminal_cost_to_go: true,
            cost_to_go_cap: 1400.0,
        }
    }
}

impl CostWeights {
    pub fn validate(&self) -> Result<()> {
        let all = self.q_z.iter().chain(&self.q_u).chain(&self.q_du).chain([&self.sigma1, &self.sigma2, &self.collision_penalty, &self.cost_to_go_cap]);
        for w in all {
            if !(w.is_finite() && *w >= 0.0) {
                return Err(Error::Config(format!("cost weights must be finite and >= 0: {self:?}")));
            }
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn defaults_are_valid() {
        ScenarioConfig::default().validate().unwrap();
        ScenarioConfig::platoon(3).validate().unwrap();
        CostWeights::default().validate().unwrap();
    }

    #[test]
    fn rejects_bad_scenarios() {
        let mut s = ScenarioConfig::default();
        s.horizon = 0;
        assert!(s.validate().is_err());
        let mut s = ScenarioConfig::default();
        s.target_lane = vec![0, 5];
        assert!(s.validate().is_err());
        let mut s = ScenarioConfig::default();
        s.d_min = 0.0;
        assert!(s.validate().is_err());
        let mut s = ScenarioConfig::default();
        s.n_vehicles = 3;
        assert!(s.validate().is_err());
        let w = CostWeights { sigma1: -1.0, ..Default::default() };
        assert!(w.validate().is_err());
    }

    #[test]
    fn json_fills_defaults_and_rejects_unknown_keys() {
        let s: ScenarioConfig = serde_json::from_str(r#"{"horizon": 40}"#).unwrap();
        assert_eq!(s.horizon, 40);
        assert_eq!(s.lane_width, 3.7);
        assert!(serde_json::from_str::<ScenarioConfig>(r#"{"horizn": 40}"#).is_err());
    }
}
