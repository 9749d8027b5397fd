use serde::{Deserialize, Serialize};

/// One vehicle at one step. Row `t = 0` is the reset state with zero
/// control and reward.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TraceRow {
    pub t: usize,
    pub k: usize,
    pub x: f64,
    pub y: f64,
    pub phi: f64,
    pub v: f64,
    pub a: f64,
    pub delta: f64,
    pub reward: f64,
    /// Smallest avoidance margin against any object (`inf` when alone).
    pub min_margin: f64,
    /// Smallest safety distance against any object (`d_min` when alone).
    pub safe_distance: f64,
    pub outage_prob: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EpisodeRecord {
    pub n_vehicles: usize,
    pub dt: f64,
    pub rows: Vec<TraceRow>,
    /// Lane-centre offset each vehicle must finish at.
    pub target_y: Vec<f64>,
    pub collision: bool,
    pub off_road: bool,
    /// Footprint intersections between any two objects, counted per step.
    pub intersections: usize,
    pub maneuver_window: (f64, f64),
    pub complete: bool,
}

/// Final lateral error below this counts as arrived (m).
pub const ARRIVAL_TOLERANCE: f64 = 0.3;
/// Final heading magnitude below this counts as settled (rad).
pub const HEADING_TOLERANCE: f64 = 0.1;

impl EpisodeRecord {
    pub fn new(n_vehicles: usize, dt: f64, target_y: Vec<f64>, maneuver_window: (f64, f64)) -> Self {
        Self {
            n_vehicles,
            dt,
            rows: Vec::new(),
            target_y,
            collision: false,
            off_road: false,
            intersections: 0,
            maneuver_window,
            complete: false,
        }
    }

    pub fn vehicle_rows(&self, k: usize) -> impl Iterator<Item = &TraceRow> {
        self.rows.iter().filter(move |r| r.k == k)
    }

    pub fn steps(&self) -> usize {
        self.rows.iter().map(|r| r.t).max().unwrap_or(0)
    }

    /// Sum of per-step rewards over vehicles and steps.
    pub fn total_reward(&self) -> f64 {
        self.rows.iter().map(|r| r.reward).sum()
    }

    /// Mean over vehicles of each vehicle's summed reward.
    pub fn mean_return(&self) -> f64 {
        if self.n_vehicles == 0 {
            return 0.0;
        }
        self.total_reward() / self.n_vehicles as f64
    }

    /// Time at which vehicle `k` first enters the arrival band and stays in
    /// it to the end of the episode.
    pub fn arrival_time(&self, k: usize) -> Option<f64> {
        let target = self.target_y[k];
        let mut arrival = None;
        for r in self.vehicle_rows(k) {
            if (r.y - target).abs() < ARRIVAL_TOLERANCE {
                arrival.get_or_insert(r.t);
            } else {
                arrival = None;
            }
        }
        arrival.map(|t| t as f64 * self.dt)
    }

    /// Latest arrival over all vehicles, for successful episodes.
    pub fn navigation_time(&self) -> Option<f64> {
        if !is_success(self) {
            return None;
        }
        (0..self.n_vehicles).map(|k| self.arrival_time(k)).try_fold(0.0f64, |acc, t| t.map(|t| acc.max(t)))
    }
}

/// No collision or off-road event, and every vehicle ends within
/// [`ARRIVAL_TOLERANCE`] of its target lane centre with a heading below
/// [`HEADING_TOLERANCE`].
pub fn is_success(ep: &EpisodeRecord) -> bool {
    if ep.collision || ep.off_road || ep.intersections > 0 || !ep.complete {
        return false;
    }
    (0..ep.n_vehicles).all(|k| match ep.vehicle_rows(k).last() {
        Some(last) => (last.y - ep.target_y[k]).abs() < ARRIVAL_TOLERANCE && last.phi.abs() < HEADING_TOLERANCE,
        None => false,
    })
}
