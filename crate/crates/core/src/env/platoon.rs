use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::cost::{pair_margin, reward, step_cost};
use super::episode::{EpisodeRecord, TraceRow};
use super::observe::{observation_dim, observe, ObservationInput};
use super::reference::{make_reference, ReferenceTrajectory};
use super::scenario::{lane_center, CostWeights, ObstacleEvent, ScenarioConfig};
use crate::dynamics::{
    boxes_intersect, clamp_control, step_kinematics, vehicle_polytope, ControlInput, DynamicsLimits, OrientedBox,
    VehicleGeometry, VehicleState,
};
use crate::error::{Error, Result};
use crate::uncertainty::{UncertaintyConfig, UncertaintyFrame, UncertaintyModel};

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct EnvConfig {
    pub scenario: ScenarioConfig,
    pub weights: CostWeights,
    pub uncertainty: UncertaintyConfig,
}

impl EnvConfig {
    pub fn validate(&self) -> Result<()> {
        self.scenario.validate()?;
        self.weights.validate()?;
        self.uncertainty.validate()
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct StepInfo {
    pub collision: bool,
    pub off_road: Vec<bool>,
    /// Vehicles whose episode ended on their own collision or off-road event.
    pub terminal: Vec<bool>,
    pub step_cost: Vec<f64>,
    pub min_margin: Vec<f64>,
    pub safe_distance: Vec<f64>,
    pub outage_prob: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct StepOutput {
    pub observations: Vec<Vec<f64>>,
    pub rewards: Vec<f64>,
    /// Collision, off-road, or horizon reached.
    pub done: bool,
    pub info: StepInfo,
}

/// Maps a normalized action in `[-1, 1]^2` affinely onto the control bounds.
pub fn action_to_control(action: [f64; 2], limits: &DynamicsLimits) -> ControlInput {
    let mut u = [0.0; 2];
    for i in 0..2 {
        let a = action[i].clamp(-1.0, 1.0);
        let mid = 0.5 * (limits.u_max[i] + limits.u_min[i]);
        let half = 0.5 * (limits.u_max[i] - limits.u_min[i]);
        u[i] = mid + half * a;
    }
    ControlInput::from_array(u)
}

/// Inverse of [`action_to_control`], clamped to `[-1, 1]`.
pub fn control_to_action(u: ControlInput, limits: &DynamicsLimits) -> [f64; 2] {
    let u = u.to_array();
    let mut out = [0.0; 2];
    for i in 0..2 {
        let mid = 0.5 * (limits.u_max[i] + limits.u_min[i]);
        let half = 0.5 * (limits.u_max[i] - limits.u_min[i]);
        out[i] = if half > 0.0 { ((u[i] - mid) / half).clamp(-1.0, 1.0) } else { 0.0 };
    }
    out
}

/// Multi-vehicle lane-change episode.
#[derive(Debug, Clone)]
pub struct PlatoonEnv {
    cfg: EnvConfig,
    geom: VehicleGeometry,
    limits: DynamicsLimits,
    instance: u64,
    rng: ChaCha8Rng,
    model: UncertaintyModel,
    vehicles: Vec<VehicleState>,
    controls: Vec<ControlInput>,
    references: Vec<ReferenceTrajectory>,
    target_lane: Vec<usize>,
    obstacles: Vec<VehicleState>,
    pending_event: Option<(usize, ObstacleEvent)>,
    frame: UncertaintyFrame,
    t: usize,
    done: bool,
    record: EpisodeRecord,
}

impl PlatoonEnv {
    /// Builds the environment and resets it with the scenario seed. Distinct
    /// `instance` ids draw from distinct random streams.
    pub fn new(cfg: EnvConfig, instance: u64) -> Result<Self> {
        cfg.validate()?;
        let geom = cfg.scenario.geometry();
        let limits = cfg.scenario.limits();
        let mut rng = ChaCha8Rng::seed_from_u64(cfg.scenario.seed);
        rng.set_stream(instance);
        let n = cfg.scenario.n_vehicles;
        let model = UncertaintyModel::new(cfg.uncertainty.clone(), n, &mut rng)?;
        let d_min = cfg.scenario.d_min;
        let mut env = Self {
            geom,
            limits,
            instance,
            rng,
            model,
            vehicles: Vec::new(),
            controls: Vec::new(),
            references: Vec::new(),
            target_lane: Vec::new(),
            obstacles: Vec::new(),
            pending_event: None,
            frame: UncertaintyFrame::noiseless(n, n, d_min),
            t: 0,
            done: true,
            record: EpisodeRecord::new(n, cfg.scenario.dt, Vec::new(), (0.0, 0.0)),
            cfg,
        };
        env.reset(env.cfg.scenario.seed)?;
        Ok(env)
    }

    pub fn config(&self) -> &EnvConfig {
        &self.cfg
    }

    pub fn n_vehicles(&self) -> usize {
        self.cfg.scenario.n_vehicles
    }

    pub fn obs_dim(&self) -> usize {
        observation_dim(self.cfg.scenario.neighbor_slots())
    }

    pub fn geometry(&self) -> &VehicleGeometry {
        &self.geom
    }

    pub fn limits(&self) -> &DynamicsLimits {
        &self.limits
    }

    pub fn t(&self) -> usize {
        self.t
    }

    pub fn is_done(&self) -> bool {
        self.done
    }

    pub fn vehicles(&self) -> &[VehicleState] {
        &self.vehicles
    }

    pub fn controls(&self) -> &[ControlInput] {
        &self.controls
    }

    pub fn obstacles(&self) -> &[VehicleState] {
        &self.obstacles
    }

    pub fn references(&self) -> &[ReferenceTrajectory] {
        &self.references
    }

    pub fn frame(&self) -> &UncertaintyFrame {
        &self.frame
    }

    pub fn record(&self) -> &EpisodeRecord {
        &self.record
    }

    pub fn set_perception_noise(&mut self, enabled: bool) {
        self.model.set_perception_noise(enabled);
        self.cfg.uncertainty.perception_noise = enabled;
    }

    /// Starts a new episode. The same seed always yields the same episode
    /// for a given action sequence.
    pub fn reset(&mut self, seed: u64) -> Result<Vec<Vec<f64>>> {
        let s = &self.cfg.scenario;
        let n = s.n_vehicles;
        self.rng = ChaCha8Rng::seed_from_u64(seed);
        self.rng.set_stream(self.instance);
        let rng = &mut self.rng;

        let [jx, jy, jv] = s.initial_jitter;
        self.vehicles = s
            .initial_states
            .iter()
            .map(|z| {
                let dx = rng.random_range(-jx..=jx);
                let dy = rng.random_range(-jy..=jy);
                let dv = rng.random_range(-jv..=jv);
                VehicleState::new(z.x + dx, z.y + dy, z.phi, (z.v + dv).clamp(s.speed_bounds[0], s.speed_bounds[1]))
            })
            .collect();
        self.pending_event = s.obstacle_event.as_ref().and_then(|ev| {
            let draw: f64 = rng.random();
            let jitter: f64 = rng.random_range(-1.0..=1.0);
            let time = ev.time + ev.time_jitter * jitter;
            let step = ((time / s.dt).round() as usize).max(1);
            (draw < ev.probability).then(|| (step, ev.clone()))
        });
        self.target_lane = s.target_lane.clone();
        self.references = (0..n).map(|k| make_reference(s, self.vehicles[k], self.target_lane[k])).collect();
        self.controls = vec![ControlInput::default(); n];
        self.obstacles.clear();
        self.model = UncertaintyModel::new(self.cfg.uncertainty.clone(), n, &mut self.rng)?;
        self.t = 0;
        self.done = false;
        self.frame = self.model.refresh(&self.vehicles, &self.obstacles, s.d_min, &mut self.rng)?;

        let s = &self.cfg.scenario;
        let target_y = self.target_lane.iter().map(|l| lane_center(*l, s.lane_width)).collect();
        let window = (s.maneuver_start, s.maneuver_start + s.maneuver_duration);
        self.record = EpisodeRecord::new(n, s.dt, target_y, window);
        let (margins, safe) = self.margin_summary();
        let overlaps = self.intersections()?;
        self.record.intersections += overlaps.len();
        self.record.collision |= !overlaps.is_empty();
        for k in 0..n {
            self.push_row(k, 0.0, margins[k], safe[k]);
        }
        Ok(self.observations())
    }

    pub fn observations(&self) -> Vec<Vec<f64>> {
        (0..self.n_vehicles()).map(|k| self.observe(k)).collect()
    }

    pub fn observe(&self, k: usize) -> Vec<f64> {
        let inp = ObservationInput {
            scenario: &self.cfg.scenario,
            vehicles: &self.vehicles,
            obstacles: &self.obstacles,
            prev_controls: &self.controls,
            references: &self.references,
            frame: &self.frame,
            t: self.t,
            safe_distance_scale: self.cfg.scenario.d_min + self.cfg.uncertainty.perception.d_max,
        };
        observe(&inp, k)
    }

    /// Applies one normalized action per vehicle.
    pub fn step(&mut self, actions: &[[f64; 2]]) -> Result<StepOutput> {
        if self.done {
            return Err(Error::State("step called on a finished episode; call reset first".into()));
        }
        let n = self.n_vehicles();
        if actions.len() != n {
            return Err(Error::shape(format!("expected {n} actions, got {}", actions.len())));
        }
        if actions.iter().flatten().any(|a| !a.is_finite()) {
            return Err(Error::Numeric("action"));
        }
        let mut dcontrol = Vec::with_capacity(n);
        for k in 0..n {
            let raw = action_to_control(actions[k], &self.limits);
            let u = clamp_control(raw, self.controls[k], &self.limits);
            dcontrol.push(ControlInput::new(u.a - self.controls[k].a, u.delta - self.controls[k].delta));
            self.vehicles[k] = step_kinematics(self.vehicles[k], u, &self.geom, &self.limits)?;
            self.controls[k] = u;
        }
        self.t += 1;
        if let Some((step, ev)) = self.pending_event.clone() {
            if self.t == step {
                self.inject_obstacle(&ev);
                self.pending_event = None;
            }
        }
        let s = &self.cfg.scenario;
        self.frame = self.model.refresh(&self.vehicles, &self.obstacles, s.d_min, &mut self.rng)?;

        let overlaps = self.intersections()?;
        let collision = !overlaps.is_empty();
        let road = s.road_width();
        let off_road: Vec<bool> = self.vehicles.iter().map(|z| z.y < 0.0 || z.y > road).collect();
        let terminal: Vec<bool> =
            (0..n).map(|k| off_road[k] || overlaps.iter().any(|(a, b)| *a == k || *b == k)).collect();
        let done = collision || off_road.iter().any(|o| *o) || self.t >= s.horizon;
        let remaining = s.horizon.saturating_sub(self.t);

        let (min_margin, safe_distance) = self.margin_summary();
        let mut rewards = Vec::with_capacity(n);
        let mut costs = Vec::with_capacity(n);
        for k in 0..n {
            let f = step_cost(&self.vehicles[k], &self.references[k].at(self.t), self.controls[k], dcontrol[k], &self.cfg.weights);
            let margins = self.margins(k);
            rewards.push(reward(f, &margins, terminal[k], remaining, &self.cfg.weights));
            costs.push(f);
        }

        self.record.intersections += overlaps.len();
        self.record.collision |= collision;
        self.record.off_road |= off_road.iter().any(|o| *o);
        for k in 0..n {
            self.push_row(k, rewards[k], min_margin[k], safe_distance[k]);
        }
        self.done = done;
        self.record.complete = done && self.t >= self.cfg.scenario.horizon && !self.record.collision && !self.record.off_road;

        Ok(StepOutput {
            observations: self.observations(),
            rewards,
            done,
            info: StepInfo {
                collision,
                off_road,
                terminal,
                step_cost: costs,
                min_margin,
                safe_distance,
                outage_prob: self.frame.outage_prob.clone(),
            },
        })
    }

    fn push_row(&mut self, k: usize, reward: f64, min_margin: f64, safe_distance: f64) {
        let z = self.vehicles[k];
        let u = self.controls[k];
        self.record.rows.push(TraceRow {
            t: self.t,
            k,
            x: z.x,
            y: z.y,
            phi: z.phi,
            v: z.v,
            a: u.a,
            delta: u.delta,
            reward,
            min_margin,
            safe_distance,
            outage_prob: self.frame.outage_prob[k],
        });
    }

    fn object(&self, j: usize) -> &VehicleState {
        let n = self.vehicles.len();
        if j < n {
            &self.vehicles[j]
        } else {
            &self.obstacles[j - n]
        }
    }

    fn n_objects(&self) -> usize {
        self.vehicles.len() + self.obstacles.len()
    }

    /// Avoidance margins of vehicle `k` against every other object, measured
    /// on true states with the frame's safety distance.
    pub fn margins(&self, k: usize) -> Vec<(crate::dynamics::AvoidanceConstraint, f64)> {
        (0..self.n_objects())
            .filter(|j| *j != k)
            .map(|j| pair_margin(&self.vehicles[k], self.object(j), self.frame.safe_distance(k, j), &self.geom))
            .collect()
    }

    fn margin_summary(&self) -> (Vec<f64>, Vec<f64>) {
        let d_min = self.cfg.scenario.d_min;
        (0..self.n_vehicles())
            .map(|k| {
                let m = self.margins(k).iter().map(|p| p.1).fold(f64::INFINITY, f64::min);
                let d = (0..self.n_objects())
                    .filter(|j| *j != k)
                    .map(|j| self.frame.safe_distance(k, j))
                    .fold(f64::INFINITY, f64::min);
                (m, if d.is_finite() { d } else { d_min })
            })
            .unzip()
    }

    /// Pairs `(vehicle, object)` whose footprints intersect.
    pub fn intersections(&self) -> Result<Vec<(usize, usize)>> {
        let boxes: Vec<OrientedBox> = (0..self.n_objects())
            .map(|j| vehicle_polytope(self.object(j), &self.geom))
            .collect::<Result<_>>()?;
        let n = self.vehicles.len();
        let mut out = Vec::new();
        for a in 0..n {
            for b in (a + 1)..boxes.len() {
                if boxes_intersect(&boxes[a], &boxes[b]) {
                    out.push((a, b));
                }
            }
        }
        Ok(out)
    }

    fn inject_obstacle(&mut self, ev: &ObstacleEvent) {
        let s = &self.cfg.scenario;
        let blocked = ev.lane.unwrap_or(self.target_lane[0]);
        let front = self.vehicles.iter().map(|z| z.x).fold(f64::NEG_INFINITY, f64::max);
        self.obstacles.push(VehicleState::new(front + ev.lead_distance, lane_center(blocked, s.lane_width), 0.0, 0.0));
        for k in 0..self.vehicles.len() {
            if self.target_lane[k] != blocked {
                continue;
            }
            let y_ref = self.references[k].at(self.t).y;
            let free = (0..s.lane_count)
                .filter(|l| *l != blocked)
                .min_by(|a, b| {
                    let da = (lane_center(*a, s.lane_width) - y_ref).abs();
                    let db = (lane_center(*b, s.lane_width) - y_ref).abs();
                    da.total_cmp(&db)
                });
            if let Some(lane) = free {
                self.target_lane[k] = lane;
                let y = lane_center(lane, s.lane_width);
                self.references[k].replan_lateral(self.t, y, ev.replan_duration, s.dt);
                self.record.target_y[k] = y;
            }
        }
    }
}
