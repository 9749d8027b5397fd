use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::Path;
use std::time::{Duration, Instant};

use ndarray::Array2;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::dynamics::{boxes_intersect, vehicle_polytope, wrap_angle, ControlInput};
use crate::env::{
    control_to_action, is_success, EnvConfig, EpisodeRecord, PlatoonEnv, ScenarioConfig, TraceRow, ARRIVAL_TOLERANCE,
    HEADING_TOLERANCE,
};
use crate::error::{Error, Result};
use crate::sac::Policy;

/// Anything that can drive every vehicle of an environment.
pub trait Controller: Clone + Send {
    /// Called right after every reset.
    fn reset(&mut self, env: &PlatoonEnv);
    fn act(&mut self, env: &PlatoonEnv, obs: &[Vec<f64>]) -> Result<Vec<[f64; 2]>>;
}

/// Trained policy in deterministic mode, one hidden state per vehicle.
#[derive(Debug, Clone)]
pub struct PolicyController {
    pub policy: Policy,
    pub hidden: Array2<f64>,
    rng: ChaCha8Rng,
}

impl PolicyController {
    pub fn new(policy: Policy) -> Self {
        let hidden = Array2::zeros((0, policy.hidden_size()));
        Self { policy, hidden, rng: ChaCha8Rng::seed_from_u64(0) }
    }

    /// Fails when the policy was trained on a different observation layout.
    pub fn check_env(&self, env: &PlatoonEnv) -> Result<()> {
        if self.policy.net.obs_dim != env.obs_dim() {
            return Err(Error::shape(format!(
                "policy expects {} observation entries, scenario produces {}",
                self.policy.net.obs_dim,
                env.obs_dim()
            )));
        }
        Ok(())
    }
}

impl Controller for PolicyController {
    fn reset(&mut self, env: &PlatoonEnv) {
        self.hidden = Array2::zeros((env.n_vehicles(), self.policy.hidden_size()));
    }

    fn act(&mut self, _env: &PlatoonEnv, obs: &[Vec<f64>]) -> Result<Vec<[f64; 2]>> {
        let cols = obs.first().map_or(0, |o| o.len());
        let o = Array2::from_shape_fn((obs.len(), cols), |(i, j)| obs[i][j]);
        let (a, h) = self.policy.act(&o, &self.hidden, true, &mut self.rng)?;
        self.hidden = h;
        Ok(a.rows().into_iter().map(|r| [r[0], r[1]]).collect())
    }
}

/// Scripted tracker with access to the true state: pure pursuit on a
/// preview point of the reference plus a speed and gap loop.
#[derive(Debug, Clone, Copy)]
pub struct TrackingController {
    pub preview_steps: usize,
    pub speed_gain: f64,
    pub gap_gain: f64,
}

impl Default for TrackingController {
    fn default() -> Self {
        Self { preview_steps: 8, speed_gain: 2.0, gap_gain: 0.5 }
    }
}

impl Controller for TrackingController {
    fn reset(&mut self, _env: &PlatoonEnv) {}

    fn act(&mut self, env: &PlatoonEnv, _obs: &[Vec<f64>]) -> Result<Vec<[f64; 2]>> {
        let geom = env.geometry();
        let wheelbase = geom.lf + geom.lr;
        Ok(env
            .vehicles()
            .iter()
            .zip(env.references())
            .map(|(s, r)| {
                let next = r.at(env.t() + 1);
                let aim = r.at(env.t() + self.preview_steps);
                let (dx, dy) = (aim.x - s.x, aim.y - s.y);
                let dist = dx.hypot(dy).max(1.0);
                let alpha = wrap_angle(dy.atan2(dx) - s.phi);
                let delta = (2.0 * wheelbase * alpha.sin() / dist).atan();
                let a = self.speed_gain * (next.v - s.v) + self.gap_gain * (next.x - s.x);
                let act = control_to_action(ControlInput::new(a, delta), env.limits());
                [act[0].clamp(-1.0, 1.0), act[1].clamp(-1.0, 1.0)]
            })
            .collect())
    }
}

/// Negative control: the front vehicle brakes hard while everyone behind
/// accelerates into it.
#[derive(Debug, Clone, Copy, Default)]
pub struct CollidingController;

impl Controller for CollidingController {
    fn reset(&mut self, _env: &PlatoonEnv) {}

    fn act(&mut self, env: &PlatoonEnv, _obs: &[Vec<f64>]) -> Result<Vec<[f64; 2]>> {
        Ok((0..env.n_vehicles()).map(|k| if k == 0 { [-1.0, 0.0] } else { [1.0, 0.0] }).collect())
    }
}

/// Always commands zero acceleration and zero steering.
#[derive(Debug, Clone, Copy, Default)]
pub struct ZeroController;

impl Controller for ZeroController {
    fn reset(&mut self, _env: &PlatoonEnv) {}

    fn act(&mut self, env: &PlatoonEnv, _obs: &[Vec<f64>]) -> Result<Vec<[f64; 2]>> {
        Ok(vec![[0.0, 0.0]; env.n_vehicles()])
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EpisodeSummary {
    pub episode: usize,
    pub seed: u64,
    pub success: bool,
    pub collision: bool,
    pub off_road: bool,
    pub intersections: usize,
    pub navigation_time: Option<f64>,
    pub mean_return: f64,
    pub steps: usize,
}

/// Aggregate evaluation metrics. The compute time is left out of the JSON
/// form so that metric files are reproducible byte for byte.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricsReport {
    pub success_rate: f64,
    /// Mean over successful episodes (s); `None` without any success.
    pub navigation_time: Option<f64>,
    pub avg_velocity: f64,
    /// Time-mean signed heading inside the manoeuvre window (rad).
    pub avg_heading: f64,
    #[serde(skip)]
    pub avg_compute_time_per_step: f64,
    pub n_episodes: usize,
    pub episodes: Vec<EpisodeSummary>,
}

impl MetricsReport {
    pub fn from_records(records: &[EpisodeRecord], seeds: &[u64], compute: Duration, env_steps: usize) -> Result<Self> {
        if records.is_empty() {
            return Err(Error::invalid("metrics need at least one episode"));
        }
        let episodes: Vec<EpisodeSummary> = records
            .iter()
            .zip(seeds)
            .enumerate()
            .map(|(episode, (r, &seed))| EpisodeSummary {
                episode,
                seed,
                success: is_success(r),
                collision: r.collision,
                off_road: r.off_road,
                intersections: r.intersections,
                navigation_time: r.navigation_time(),
                mean_return: r.mean_return(),
                steps: r.steps(),
            })
            .collect();
        let n = records.len();
        let successes = episodes.iter().filter(|e| e.success).count();
        let nav: Vec<f64> = episodes.iter().filter_map(|e| e.navigation_time).collect();
        let (mut v_sum, mut v_n, mut h_sum, mut h_n) = (0.0, 0usize, 0.0, 0usize);
        for r in records {
            let (start, end) = r.maneuver_window;
            for row in r.rows.iter().filter(|row| row.t > 0) {
                v_sum += row.v;
                v_n += 1;
                let time = row.t as f64 * r.dt;
                if time >= start && time <= end {
                    h_sum += row.phi;
                    h_n += 1;
                }
            }
        }
        Ok(Self {
            success_rate: successes as f64 / n as f64,
            navigation_time: (!nav.is_empty()).then(|| nav.iter().sum::<f64>() / nav.len() as f64),
            avg_velocity: if v_n > 0 { v_sum / v_n as f64 } else { 0.0 },
            avg_heading: if h_n > 0 { h_sum / h_n as f64 } else { 0.0 },
            avg_compute_time_per_step: if env_steps > 0 { compute.as_secs_f64() / env_steps as f64 } else { 0.0 },
            n_episodes: n,
            episodes,
        })
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("metrics serialize")
    }

    /// Successful episodes that still had a footprint intersection.
    pub fn unsafe_successes(&self) -> usize {
        self.episodes.iter().filter(|e| e.success && e.intersections > 0).count()
    }
}

#[derive(Debug, Clone)]
pub struct Evaluation {
    pub report: MetricsReport,
    pub records: Vec<EpisodeRecord>,
    pub seeds: Vec<u64>,
}

/// Per-episode reset seeds derived from one evaluation seed.
pub fn episode_seeds(seed: u64, n: usize) -> Vec<u64> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    (0..n).map(|_| rng.random()).collect()
}

/// Worker count from `PLATOON_SIM_THREADS`, 1 when unset.
pub fn worker_threads() -> Result<usize> {
    match std::env::var("PLATOON_SIM_THREADS") {
        Err(_) => Ok(1),
        Ok(v) => match v.trim().parse::<usize>() {
            Ok(n) if n >= 1 => Ok(n),
            _ => Err(Error::Config(format!("PLATOON_SIM_THREADS must be a positive integer, got {v:?}"))),
        },
    }
}

/// Plays one episode to the end and returns its record and the time spent
/// inside policy and environment calls.
pub fn play_episode<C: Controller>(ctrl: &mut C, env: &mut PlatoonEnv, seed: u64) -> Result<(EpisodeRecord, Duration, usize)> {
    let mut obs = env.reset(seed)?;
    ctrl.reset(env);
    let mut spent = Duration::ZERO;
    let mut steps = 0;
    while !env.is_done() {
        let start = Instant::now();
        let actions = ctrl.act(env, &obs)?;
        let out = env.step(&actions)?;
        spent += start.elapsed();
        steps += 1;
        obs = out.observations;
    }
    Ok((env.record().clone(), spent, steps))
}

/// Runs `n` seeded episodes. Results do not depend on the worker count:
/// every episode has its own reset seed and a fresh controller copy.
pub fn run_episodes<C: Controller>(ctrl: &C, env_cfg: &EnvConfig, n: usize, seed: u64, threads: usize) -> Result<Evaluation> {
    if n == 0 {
        return Err(Error::invalid("need at least one episode"));
    }
    let seeds = episode_seeds(seed, n);
    let threads = threads.clamp(1, n);
    let chunk = n.div_ceil(threads);
    let results: Vec<Result<Vec<(EpisodeRecord, Duration, usize)>>> = std::thread::scope(|scope| {
        let handles: Vec<_> = seeds
            .chunks(chunk)
            .map(|part| {
                let mut ctrl = ctrl.clone();
                scope.spawn(move || {
                    let mut env = PlatoonEnv::new(env_cfg.clone(), 0)?;
                    part.iter().map(|&s| play_episode(&mut ctrl, &mut env, s)).collect()
                })
            })
            .collect();
        handles.into_iter().map(|h| h.join().expect("evaluation worker panicked")).collect()
    });
    let mut records = Vec::with_capacity(n);
    let mut spent = Duration::ZERO;
    let mut steps = 0;
    for part in results {
        for (r, d, s) in part? {
            records.push(r);
            spent += d;
            steps += s;
        }
    }
    let report = MetricsReport::from_records(&records, &seeds, spent, steps)?;
    Ok(Evaluation { report, records, seeds })
}

pub const TRACE_HEADER: &str = "t,k,x,y,phi,v,a,delta,reward,min_margin,safe_distance,outage_prob";

/// Writes the per-step trace as CSV. Floats use the shortest form that
/// parses back to the same value.
pub fn export_trace(record: &EpisodeRecord, path: &Path) -> Result<()> {
    let mut w = BufWriter::new(std::fs::File::create(path)?);
    writeln!(w, "{TRACE_HEADER}")?;
    for r in &record.rows {
        writeln!(
            w,
            "{},{},{},{},{},{},{},{},{},{},{},{}",
            r.t, r.k, r.x, r.y, r.phi, r.v, r.a, r.delta, r.reward, r.min_margin, r.safe_distance, r.outage_prob
        )?;
    }
    w.flush()?;
    Ok(())
}

pub fn read_trace(path: &Path) -> Result<Vec<TraceRow>> {
    let reader = BufReader::new(std::fs::File::open(path)?);
    let mut lines = reader.lines();
    let bad = |line: usize, what: &str| Error::invalid(format!("{}:{line}: {what}", path.display()));
    if lines.next().transpose()?.as_deref() != Some(TRACE_HEADER) {
        return Err(bad(1, "missing trace header"));
    }
    let mut rows = Vec::new();
    for (i, line) in lines.enumerate() {
        let line = line?;
        let f: Vec<&str> = line.split(',').collect();
        if f.len() != 12 {
            return Err(bad(i + 2, "expected 12 fields"));
        }
        let int = |s: &str| s.parse::<usize>().map_err(|_| bad(i + 2, "bad integer"));
        let num = |s: &str| s.parse::<f64>().map_err(|_| bad(i + 2, "bad number"));
        rows.push(TraceRow {
            t: int(f[0])?,
            k: int(f[1])?,
            x: num(f[2])?,
            y: num(f[3])?,
            phi: num(f[4])?,
            v: num(f[5])?,
            a: num(f[6])?,
            delta: num(f[7])?,
            reward: num(f[8])?,
            min_margin: num(f[9])?,
            safe_distance: num(f[10])?,
            outage_prob: num(f[11])?,
        });
    }
    Ok(rows)
}

/// Success decided from a trace alone: the horizon is reached, no vehicle
/// leaves the road, no two vehicle footprints meet at any step, and every
/// vehicle ends settled on its target lane. Obstacles are not in traces,
/// so this only covers scenarios without them.
pub fn success_from_trace(rows: &[TraceRow], scenario: &ScenarioConfig, target_y: &[f64]) -> Result<bool> {
    let n = scenario.n_vehicles;
    let geom = scenario.geometry();
    let road = scenario.road_width();
    let mut by_step: Vec<Vec<TraceRow>> = vec![Vec::new(); scenario.horizon + 1];
    for r in rows {
        if r.t > scenario.horizon || r.k >= n {
            return Err(Error::invalid(format!("trace row t={} k={} outside the scenario", r.t, r.k)));
        }
        by_step[r.t].push(*r);
    }
    if by_step[scenario.horizon].len() != n {
        return Ok(false);
    }
    for step in &by_step {
        if step.iter().any(|r| r.y < 0.0 || r.y > road) {
            return Ok(false);
        }
        let boxes = step
            .iter()
            .map(|r| vehicle_polytope(&crate::dynamics::VehicleState::new(r.x, r.y, r.phi, r.v), &geom))
            .collect::<Result<Vec<_>>>()?;
        for i in 0..boxes.len() {
            for j in i + 1..boxes.len() {
                if boxes_intersect(&boxes[i], &boxes[j]) {
                    return Ok(false);
                }
            }
        }
    }
    Ok(by_step[scenario.horizon]
        .iter()
        .all(|r| (r.y - target_y[r.k]).abs() < ARRIVAL_TOLERANCE && r.phi.abs() < HEADING_TOLERANCE))
}
