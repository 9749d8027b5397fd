use serde::{Deserialize, Serialize};

use super::eval::{episode_seeds, Controller};
use crate::dynamics::VehicleState;
use crate::env::{EnvConfig, PlatoonEnv, ReferenceTrajectory};
use crate::error::{Error, Result};
use crate::sac::CoreType;

/// Prediction horizons reported by default.
pub const DEFAULT_H_GRID: [usize; 5] = [1, 5, 10, 15, 20];

/// Feeds the controller's own actions back through the dynamics for `h`
/// steps, starting from a copy of `env`. Observations come from the
/// predicted states with perception noise switched off, so nothing from
/// the live episode corrects the prediction. Entry `i` holds every
/// vehicle's state after `i + 1` steps; once the copy terminates the last
/// state is repeated.
pub fn autoregressive_rollout<C: Controller>(ctrl: &mut C, env: &PlatoonEnv, h: usize) -> Result<Vec<Vec<VehicleState>>> {
    if h == 0 {
        return Err(Error::invalid("prediction horizon must be at least 1"));
    }
    let mut sim = env.clone();
    sim.set_perception_noise(false);
    let mut out = Vec::with_capacity(h);
    let mut obs = sim.observations();
    for _ in 0..h {
        if !sim.is_done() {
            let actions = ctrl.act(&sim, &obs)?;
            obs = sim.step(&actions)?.observations;
        }
        out.push(sim.vehicles().to_vec());
    }
    Ok(out)
}

/// Mean absolute position error over steps and the two position
/// components.
pub fn prediction_mae(predicted: &[[f64; 2]], reference: &[[f64; 2]]) -> Result<f64> {
    if predicted.len() != reference.len() {
        return Err(Error::shape(format!(
            "prediction has {} steps, reference has {}",
            predicted.len(),
            reference.len()
        )));
    }
    if predicted.is_empty() {
        return Err(Error::shape("empty prediction"));
    }
    let total: f64 = predicted
        .iter()
        .zip(reference)
        .map(|(p, r)| (p[0] - r[0]).abs() + (p[1] - r[1]).abs())
        .sum();
    Ok(total / (2 * predicted.len()) as f64)
}

/// Reference positions for the `h` steps after `t0`.
pub fn reference_positions(reference: &ReferenceTrajectory, t0: usize, h: usize) -> Vec<[f64; 2]> {
    (1..=h).map(|i| reference.at(t0 + i)).map(|z| [z.x, z.y]).collect()
}

/// Rollout MAE for each horizon, averaged over vehicles, start times and
/// episodes. Rollouts start every `stride` steps of a closed-loop episode
/// while the longest horizon still fits inside it.
pub fn rollout_mae<C: Controller>(
    ctrl: &C,
    env_cfg: &EnvConfig,
    h_values: &[usize],
    episodes: usize,
    seed: u64,
    stride: usize,
) -> Result<Vec<f64>> {
    let h_max = *h_values.iter().max().ok_or_else(|| Error::invalid("empty horizon grid"))?;
    if h_max == 0 || stride == 0 || episodes == 0 {
        return Err(Error::invalid("horizons, stride and episode count must be positive"));
    }
    let mut env = PlatoonEnv::new(env_cfg.clone(), 0)?;
    let mut sums = vec![0.0; h_values.len()];
    let mut count = 0usize;
    for s in episode_seeds(seed, episodes) {
        let mut obs = env.reset(s)?;
        let mut live = ctrl.clone();
        live.reset(&env);
        while !env.is_done() && env.t() + h_max <= env.config().scenario.horizon {
            if env.t() % stride == 0 {
                let t0 = env.t();
                let predicted = autoregressive_rollout(&mut live.clone(), &env, h_max)?;
                for k in 0..env.n_vehicles() {
                    let path: Vec<[f64; 2]> = predicted.iter().map(|step| [step[k].x, step[k].y]).collect();
                    let reference = reference_positions(&env.references()[k], t0, h_max);
                    for (i, &h) in h_values.iter().enumerate() {
                        sums[i] += prediction_mae(&path[..h], &reference[..h])?;
                    }
                    count += 1;
                }
            }
            let actions = live.act(&env, &obs)?;
            obs = env.step(&actions)?.observations;
        }
    }
    if count == 0 {
        return Err(Error::invalid("no rollout start fits inside the horizon"));
    }
    Ok(sums.into_iter().map(|s| s / count as f64).collect())
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CoreRow {
    pub core: CoreType,
    pub seeds: Vec<u64>,
    /// `per_seed[i][j]`: seed `i`, horizon `j`.
    pub per_seed: Vec<Vec<f64>>,
    pub median: Vec<f64>,
}

/// Median rollout MAE per core and horizon.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ComparisonTable {
    pub h_values: Vec<usize>,
    pub rows: Vec<CoreRow>,
}

impl ComparisonTable {
    pub fn row(&self, core: CoreType) -> Option<&CoreRow> {
        self.rows.iter().find(|r| r.core == core)
    }

    /// Whether the GRU median is no larger than the MLP median at `h`.
    pub fn gru_not_worse(&self, h: usize) -> Option<bool> {
        let j = self.h_values.iter().position(|&x| x == h)?;
        Some(self.row(CoreType::Gru)?.median[j] <= self.row(CoreType::Mlp)?.median[j])
    }

    pub fn to_csv(&self) -> String {
        let mut s = String::from("core,h,median_mae,per_seed_mae\n");
        for row in &self.rows {
            for (j, h) in self.h_values.iter().enumerate() {
                let seeds: Vec<String> = row.per_seed.iter().map(|v| v[j].to_string()).collect();
                s += &format!("{},{},{},{}\n", row.core, h, row.median[j], seeds.join(";"));
            }
        }
        s
    }
}

pub fn median(values: &[f64]) -> f64 {
    let mut v = values.to_vec();
    v.sort_by(f64::total_cmp);
    let n = v.len();
    if n == 0 {
        f64::NAN
    } else if n % 2 == 1 {
        v[n / 2]
    } else {
        0.5 * (v[n / 2 - 1] + v[n / 2])
    }
}

/// Builds the table from already trained controllers, given as
/// `(core, seed, controller)`.
pub fn compare_controllers<C: Controller>(
    entries: &[(CoreType, u64, C)],
    env_cfg: &EnvConfig,
    h_values: &[usize],
    episodes: usize,
    seed: u64,
) -> Result<ComparisonTable> {
    let mut rows: Vec<CoreRow> = Vec::new();
    for (core, run_seed, ctrl) in entries {
        let maes = rollout_mae(ctrl, env_cfg, h_values, episodes, seed, 10)?;
        match rows.iter_mut().find(|r| r.core == *core) {
            Some(row) => {
                row.seeds.push(*run_seed);
                row.per_seed.push(maes);
            }
            None => rows.push(CoreRow { core: *core, seeds: vec![*run_seed], per_seed: vec![maes], median: Vec::new() }),
        }
    }
    for row in &mut rows {
        row.median = (0..h_values.len())
            .map(|j| median(&row.per_seed.iter().map(|v| v[j]).collect::<Vec<_>>()))
            .collect();
    }
    Ok(ComparisonTable { h_values: h_values.to_vec(), rows })
}
