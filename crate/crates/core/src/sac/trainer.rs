use std::fmt::Write as _;
use std::path::Path;

use ndarray::Array2;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::agent::{actor_act, SacAgent, TrainerConfig};
use super::networks::CoreType;
use super::replay::{ReplayBuffer, Transition};
use crate::env::{is_success, PlatoonEnv};
use crate::error::{Error, Result};
use crate::nn::Checkpoint;

pub const ACTION_DIM: usize = 2;
/// Environment instance id used for validation episodes.
const VALIDATION_INSTANCE: u64 = 1 << 20;

/// One row per finished episode.
#[derive(Debug, Clone, PartialEq)]
pub struct EpisodeLog {
    pub episode: usize,
    /// Environment steps taken so far, including this episode.
    pub step: u64,
    /// Mean over vehicles of the summed per-step rewards.
    pub episode_return: f64,
    pub critic_loss1: Option<f64>,
    pub critic_loss2: Option<f64>,
    pub actor_loss: Option<f64>,
    pub alpha: f64,
    pub success: bool,
}

/// Outcome of one validation round.
#[derive(Debug, Clone, PartialEq)]
pub struct ValidationLog {
    pub step: u64,
    pub successes: usize,
    pub episodes: usize,
    pub mean_return: f64,
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct TrainingLog {
    pub episodes: Vec<EpisodeLog>,
    pub validations: Vec<ValidationLog>,
}

pub const VALIDATION_LOG_HEADER: &str = "step,successes,episodes,mean_return";

/// Validation episodes use reset seeds from this offset on, away from the
/// seeds evaluation draws.
pub const VALIDATION_SEED_BASE: u64 = 0x7661_6c69_0000_0000;

pub const TRAINING_LOG_HEADER: &str = "step,episode,return,critic_loss1,critic_loss2,actor_loss,alpha,success";

impl TrainingLog {
    pub fn to_csv(&self) -> String {
        let mut s = String::from(TRAINING_LOG_HEADER);
        s.push('\n');
        let opt = |v: Option<f64>| v.map(|x| format!("{x:?}")).unwrap_or_default();
        for e in &self.episodes {
            let _ = writeln!(
                s,
                "{},{},{:?},{},{},{},{:?},{}",
                e.step,
                e.episode,
                e.episode_return,
                opt(e.critic_loss1),
                opt(e.critic_loss2),
                opt(e.actor_loss),
                e.alpha,
                u8::from(e.success)
            );
        }
        s
    }

    pub fn validation_csv(&self) -> String {
        let mut s = String::from(VALIDATION_LOG_HEADER);
        s.push('\n');
        for v in &self.validations {
            let _ = writeln!(s, "{},{},{},{:?}", v.step, v.successes, v.episodes, v.mean_return);
        }
        s
    }

    pub fn write_csv(&self, path: &Path) -> Result<()> {
        std::fs::write(path, self.to_csv())?;
        Ok(())
    }

    /// Mean return over episodes `range`, clipped to what exists.
    pub fn mean_return(&self, range: std::ops::Range<usize>) -> Option<f64> {
        let end = range.end.min(self.episodes.len());
        let slice = self.episodes.get(range.start..end)?;
        if slice.is_empty() {
            return None;
        }
        Some(slice.iter().map(|e| e.episode_return).sum::<f64>() / slice.len() as f64)
    }
}

#[derive(Default)]
struct Running {
    sum: [f64; 3],
    count: usize,
}

impl Running {
    fn add(&mut self, l1: f64, l2: f64, la: f64) {
        self.sum[0] += l1;
        self.sum[1] += l2;
        self.sum[2] += la;
        self.count += 1;
    }

    fn mean(&self, i: usize) -> Option<f64> {
        (self.count > 0).then(|| self.sum[i] / self.count as f64)
    }
}

/// Off-policy loop: one shared agent drives every vehicle, each with its
/// own hidden states.
#[derive(Debug, Clone)]
pub struct Trainer {
    pub agent: SacAgent,
    buffer: ReplayBuffer,
    rng: ChaCha8Rng,
    env_steps: u64,
    episodes: usize,
    best: Option<(ValidationLog, SacAgent)>,
}

impl Trainer {
    pub fn new(cfg: &TrainerConfig, core: CoreType, obs_dim: usize) -> Result<Self> {
        cfg.validate()?;
        let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
        let agent = SacAgent::new(obs_dim, ACTION_DIM, &cfg.network(core), cfg, &mut rng)?;
        Ok(Self { agent, buffer: ReplayBuffer::new(cfg.buffer_capacity)?, rng, env_steps: 0, episodes: 0, best: None })
    }

    pub fn env_steps(&self) -> u64 {
        self.env_steps
    }

    pub fn buffer(&self) -> &ReplayBuffer {
        &self.buffer
    }

    /// The selected agent when validation ran, else the current one.
    pub fn checkpoint(&self) -> Result<Checkpoint> {
        match &self.best {
            Some((v, agent)) => agent.to_checkpoint(v.step),
            None => self.agent.to_checkpoint(self.env_steps),
        }
    }

    pub fn selected_agent(&self) -> &SacAgent {
        self.best.as_ref().map_or(&self.agent, |(_, a)| a)
    }

    pub fn selected(&self) -> Option<&ValidationLog> {
        self.best.as_ref().map(|(v, _)| v)
    }

    /// Deterministic episodes on the validation seeds with the current
    /// actor. The best round so far is kept; ties go to the later one.
    fn validate(&mut self, env: &mut PlatoonEnv) -> Result<ValidationLog> {
        let n = self.agent.cfg.validation_episodes;
        let hs = self.agent.hidden_size();
        let (mut successes, mut total) = (0, 0.0);
        for i in 0..n {
            let obs = env.reset(VALIDATION_SEED_BASE + i as u64)?;
            let mut obs = to_array(&obs);
            let mut h = Array2::zeros((env.n_vehicles(), hs));
            while !env.is_done() {
                let (a, h2) = actor_act(&self.agent.actor_net, &self.agent.actor, &obs, &h, true, &mut self.rng)?;
                h = h2;
                let act: Vec<[f64; 2]> = a.rows().into_iter().map(|r| [r[0], r[1]]).collect();
                obs = to_array(&env.step(&act)?.observations);
            }
            successes += usize::from(is_success(env.record()));
            total += env.record().mean_return();
        }
        let v = ValidationLog { step: self.env_steps, successes, episodes: n, mean_return: total / n as f64 };
        let better = match &self.best {
            None => true,
            Some((b, _)) => (v.successes, v.mean_return) >= (b.successes, b.mean_return),
        };
        if better {
            self.best = Some((v.clone(), self.agent.clone()));
        }
        Ok(v)
    }

    /// Runs until `max_iterations` environment steps have been taken. An
    /// episode cut short by the budget is not logged. On a non-finite loss
    /// the current parameters are written to `diagnostic` (when given) and
    /// training stops with [`Error::Diverged`].
    pub fn run(&mut self, env: &mut PlatoonEnv, diagnostic: Option<&Path>) -> Result<TrainingLog> {
        let cfg = self.agent.cfg.clone();
        if env.obs_dim() != self.agent.actor_net.obs_dim {
            return Err(Error::shape(format!(
                "environment observations have {} entries, networks expect {}",
                env.obs_dim(),
                self.agent.actor_net.obs_dim
            )));
        }
        let n = env.n_vehicles();
        let hs = self.agent.hidden_size();
        let mut log = TrainingLog::default();
        let mut val_env = PlatoonEnv::new(env.config().clone(), VALIDATION_INSTANCE)?;
        while self.env_steps < cfg.max_iterations {
            let seed: u64 = self.rng.random();
            let obs = env.reset(seed)?;
            let mut obs = to_array(&obs);
            let mut h = [Array2::zeros((n, hs)), Array2::zeros((n, hs)), Array2::zeros((n, hs))];
            let mut losses = Running::default();
            let mut finished = false;
            while self.env_steps < cfg.max_iterations {
                let (actions, h_actor) =
                    actor_act(&self.agent.actor_net, &self.agent.actor, &obs, &h[0], false, &mut self.rng)?;
                let h_q1 = self.agent.critic_net.advance_hidden(&self.agent.q1, &obs, &actions, &h[1])?;
                let h_q2 = self.agent.critic_net.advance_hidden(&self.agent.q2, &obs, &actions, &h[2])?;
                let act: Vec<[f64; 2]> = actions.rows().into_iter().map(|r| [r[0], r[1]]).collect();
                let out = env.step(&act)?;
                self.env_steps += 1;
                let next_obs = to_array(&out.observations);
                let next_h = [h_actor, h_q1, h_q2];
                for k in 0..n {
                    self.buffer.push(Transition {
                        obs: obs.row(k).to_vec(),
                        action: actions.row(k).to_vec(),
                        reward: out.rewards[k],
                        next_obs: next_obs.row(k).to_vec(),
                        done: out.info.terminal[k],
                        hidden: [h[0].row(k).to_vec(), h[1].row(k).to_vec(), h[2].row(k).to_vec()],
                        next_hidden: [
                            next_h[0].row(k).to_vec(),
                            next_h[1].row(k).to_vec(),
                            next_h[2].row(k).to_vec(),
                        ],
                    });
                }
                obs = next_obs;
                h = next_h;

                let ready = self.buffer.len() >= cfg.warmup.max(cfg.batch_size);
                if ready && self.env_steps % cfg.update_interval == 0 {
                    match self.update() {
                        Ok((l1, l2, la)) => losses.add(l1, l2, la),
                        Err(Error::Numeric(what)) => {
                            if let Some(path) = diagnostic {
                                self.checkpoint()?.save(path)?;
                            }
                            return Err(Error::Diverged { step: self.env_steps, reason: format!("non-finite {what}") });
                        }
                        Err(e) => return Err(e),
                    }
                }
                if cfg.validation_interval > 0 && self.env_steps % cfg.validation_interval == 0 {
                    log.validations.push(self.validate(&mut val_env)?);
                }
                if out.done {
                    finished = true;
                    break;
                }
            }
            if !finished {
                break;
            }
            let record = env.record();
            log.episodes.push(EpisodeLog {
                episode: self.episodes,
                step: self.env_steps,
                episode_return: record.mean_return(),
                critic_loss1: losses.mean(0),
                critic_loss2: losses.mean(1),
                actor_loss: losses.mean(2),
                alpha: cfg.alpha,
                success: is_success(record),
            });
            self.episodes += 1;
        }
        Ok(log)
    }

    /// One critic step, one actor step and a soft target update.
    pub fn update(&mut self) -> Result<(f64, f64, f64)> {
        let batch = self.buffer.sample(self.agent.cfg.batch_size, &mut self.rng)?;
        let targets = self.agent.bellman_target(&batch, &mut self.rng)?;
        let (l1, l2) = self.agent.update_critics(&batch, &targets)?;
        let la = self.agent.update_actor(&batch, &mut self.rng)?;
        self.agent.soft_update()?;
        Ok((l1, l2, la))
    }
}

fn to_array(rows: &[Vec<f64>]) -> Array2<f64> {
    let cols = rows.first().map_or(0, |r| r.len());
    Array2::from_shape_fn((rows.len(), cols), |(i, j)| rows[i][j])
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::env::EnvConfig;
    use crate::sac::Policy;

    fn small(max_iterations: u64) -> TrainerConfig {
        TrainerConfig {
            max_iterations,
            warmup: 64,
            batch_size: 16,
            hidden_size: 8,
            head_width: 16,
            ..Default::default()
        }
    }

    #[test]
    fn zero_budget_keeps_initialization() {
        let mut env = PlatoonEnv::new(EnvConfig::default(), 0).unwrap();
        let cfg = small(0);
        let mut t = Trainer::new(&cfg, CoreType::Gru, env.obs_dim()).unwrap();
        let fresh = Trainer::new(&cfg, CoreType::Gru, env.obs_dim()).unwrap();
        let log = t.run(&mut env, None).unwrap();
        assert!(log.episodes.is_empty());
        assert_eq!(t.checkpoint().unwrap(), fresh.checkpoint().unwrap());
    }

    #[test]
    fn training_is_deterministic() {
        let run = || {
            let mut env = PlatoonEnv::new(EnvConfig::default(), 0).unwrap();
            let mut t = Trainer::new(&small(300), CoreType::Gru, env.obs_dim()).unwrap();
            let log = t.run(&mut env, None).unwrap();
            (log.to_csv(), t.agent.actor.fingerprint())
        };
        let (a, fa) = run();
        let (b, fb) = run();
        assert_eq!(a, b);
        assert_eq!(fa, fb);
        assert!(a.starts_with(TRAINING_LOG_HEADER));
        assert!(a.lines().count() > 1);
    }

    #[test]
    fn validation_keeps_best_snapshot() {
        let mut env = PlatoonEnv::new(EnvConfig::default(), 0).unwrap();
        let cfg = TrainerConfig { validation_interval: 100, validation_episodes: 2, ..small(400) };
        let mut t = Trainer::new(&cfg, CoreType::Mlp, env.obs_dim()).unwrap();
        let log = t.run(&mut env, None).unwrap();
        assert_eq!(log.validations.len(), 4);
        let best = t.selected().unwrap().clone();
        assert!(log.validations.iter().all(|v| (v.successes, v.mean_return) <= (best.successes, best.mean_return)));
        let ck = t.checkpoint().unwrap();
        assert_eq!(ck.step, best.step);
        assert_eq!(Policy::from_checkpoint(&ck).unwrap().params.fingerprint(), t.selected_agent().actor.fingerprint());
        assert_eq!(log.validation_csv().lines().count(), 5);
    }

    #[test]
    fn validation_does_not_change_training() {
        let run = |interval| {
            let mut env = PlatoonEnv::new(EnvConfig::default(), 0).unwrap();
            let cfg = TrainerConfig { validation_interval: interval, validation_episodes: 1, ..small(300) };
            let mut t = Trainer::new(&cfg, CoreType::Gru, env.obs_dim()).unwrap();
            (t.run(&mut env, None).unwrap().to_csv(), t.agent.actor.fingerprint())
        };
        assert_eq!(run(0), run(150));
    }

    #[test]
    fn mismatched_observation_width_is_rejected() {
        let mut env = PlatoonEnv::new(EnvConfig::default(), 0).unwrap();
        let mut t = Trainer::new(&small(10), CoreType::Mlp, env.obs_dim() + 1).unwrap();
        assert!(matches!(t.run(&mut env, None), Err(Error::Shape(_))));
    }
}
