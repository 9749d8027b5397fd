use ndarray::{Array2, Axis};
use rand::Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use super::networks::{ActorNet, CriticNet, NetworkConfig};
use super::replay::Batch;
use crate::error::{Error, Result};
use crate::nn::{Checkpoint, Graph, InitScheme, NodeId, Optimizer, OptimizerConfig, OptimizerKind, ParamStore};

const HALF_LN_2PI: f64 = 0.918_938_533_204_672_8;

/// Hidden states fed to the one-step training graphs.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum HiddenMode {
    /// The rollout-time states stored with each transition.
    #[default]
    StoredHidden,
    /// Zero states at every update.
    ResetZero,
}

/// Learning hyper-parameters shared by the agent and the training loop.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TrainerConfig {
    pub gamma: f64,
    pub tau: f64,
    pub alpha: f64,
    pub batch_size: usize,
    pub actor_lr: f64,
    pub critic_lr: f64,
    /// Budget in environment steps.
    pub max_iterations: u64,
    /// Environment steps between gradient updates.
    pub update_interval: u64,
    /// Transitions required before the first update.
    pub warmup: usize,
    pub buffer_capacity: usize,
    pub seed: u64,
    /// Multiplies rewards inside the Bellman target.
    pub reward_scale: f64,
    pub hidden_mode: HiddenMode,
    /// Sample next actions from the target actor instead of the online one.
    pub use_target_actor: bool,
    pub optimizer: OptimizerKind,
    pub grad_clip: Option<f64>,
    pub hidden_size: usize,
    pub head_width: usize,
    /// Environment steps between validation rounds; 0 turns selection off.
    /// When on, the trainer keeps the agent that scored best on a fixed set
    /// of validation episodes and checkpoints that one.
    pub validation_interval: u64,
    pub validation_episodes: usize,
}

impl Default for TrainerConfig {
    fn default() -> Self {
        Self {
            gamma: 0.99,
            tau: 0.001,
            alpha: 0.2,
            batch_size: 64,
            actor_lr: 1e-4,
            critic_lr: 1e-4,
            max_iterations: 100_000,
            update_interval: 1,
            warmup: 1000,
            buffer_capacity: 10_000,
            seed: 0,
            reward_scale: 1.0,
            hidden_mode: HiddenMode::StoredHidden,
            use_target_actor: false,
            optimizer: OptimizerKind::Adam,
            grad_clip: Some(10.0),
            hidden_size: 64,
            head_width: 256,
            validation_interval: 0,
            validation_episodes: 10,
        }
    }
}

impl TrainerConfig {
    pub fn validate(&self) -> Result<()> {
        let bad = |m: &str| Err(Error::Config(m.to_string()));
        if !(0.0..1.0).contains(&self.gamma) {
            return bad("gamma must lie in [0, 1)");
        }
        if !(self.tau > 0.0 && self.tau <= 1.0) {
            return bad("tau must lie in (0, 1]");
        }
        if !(self.alpha >= 0.0 && self.alpha.is_finite()) {
            return bad("alpha must be >= 0");
        }
        if self.batch_size == 0 || self.buffer_capacity < self.batch_size {
            return bad("batch_size must be positive and fit in the buffer");
        }
        if self.update_interval == 0 {
            return bad("update_interval must be positive");
        }
        if !(self.reward_scale > 0.0 && self.reward_scale.is_finite()) {
            return bad("reward_scale must be positive");
        }
        if self.validation_interval > 0 && self.validation_episodes == 0 {
            return bad("validation needs at least one episode");
        }
        self.optimizer_config(self.actor_lr).validate()?;
        self.optimizer_config(self.critic_lr).validate()?;
        self.network(Default::default()).validate()
    }

    pub fn network(&self, core: super::networks::CoreType) -> NetworkConfig {
        NetworkConfig { core, hidden_size: self.hidden_size, head_width: self.head_width }
    }

    fn optimizer_config(&self, lr: f64) -> OptimizerConfig {
        OptimizerConfig { kind: self.optimizer, lr, grad_clip: self.grad_clip, ..OptimizerConfig::default() }
    }
}

/// Actor, twin critics, their targets and optimizer state.
#[derive(Debug, Clone)]
pub struct SacAgent {
    pub actor_net: ActorNet,
    pub critic_net: CriticNet,
    pub actor: ParamStore,
    pub q1: ParamStore,
    pub q2: ParamStore,
    pub actor_target: ParamStore,
    pub q1_target: ParamStore,
    pub q2_target: ParamStore,
    actor_opt: Optimizer,
    q1_opt: Optimizer,
    q2_opt: Optimizer,
    pub cfg: TrainerConfig,
}

fn zeros_like(h: &Array2<f64>) -> Array2<f64> {
    Array2::zeros(h.dim())
}

/// Standard-normal noise of the given shape.
pub fn normal_noise<R: Rng + ?Sized>(rows: usize, cols: usize, rng: &mut R) -> Array2<f64> {
    Array2::from_shape_simple_fn((rows, cols), || rng.sample(StandardNormal))
}

/// Records a reparameterized squashed-Gaussian sample and its log density.
/// Returns `(action, log_prob as B x 1)`.
pub fn squashed_sample(g: &mut Graph, mean: NodeId, log_std: NodeId, eps: &Array2<f64>) -> Result<(NodeId, NodeId)> {
    let act_dim = eps.ncols() as f64;
    let std = g.exp(log_std);
    let noise = g.input(eps.clone());
    let spread = g.mul(std, noise)?;
    let u = g.add(mean, spread)?;
    let action = g.tanh(u);
    let constant = eps.map_axis(Axis(1), |r| -0.5 * r.dot(&r) - act_dim * HALF_LN_2PI).insert_axis(Axis(1));
    let c = g.input(constant);
    let sum_ls = g.sum_cols(log_std);
    let neg_ls = g.scale(sum_ls, -1.0);
    let lp = g.add(neg_ls, c)?;
    let corr = g.log_one_minus_tanh_sq(u);
    let corr = g.sum_cols(corr);
    let log_prob = g.sub(lp, corr)?;
    Ok((action, log_prob))
}

impl SacAgent {
    pub fn new<R: Rng + ?Sized>(obs_dim: usize, act_dim: usize, net: &NetworkConfig, cfg: &TrainerConfig, rng: &mut R) -> Result<Self> {
        cfg.validate()?;
        net.validate()?;
        let actor_net = ActorNet::new(obs_dim, act_dim, net);
        let critic_net = CriticNet::new(obs_dim, act_dim, net);
        let actor = actor_net.init(InitScheme::UniformFanin, rng);
        let q1 = critic_net.init(InitScheme::UniformFanin, rng);
        let q2 = critic_net.init(InitScheme::UniformFanin, rng);
        let actor_opt = Optimizer::new(cfg.optimizer_config(cfg.actor_lr), &actor)?;
        let q1_opt = Optimizer::new(cfg.optimizer_config(cfg.critic_lr), &q1)?;
        let q2_opt = Optimizer::new(cfg.optimizer_config(cfg.critic_lr), &q2)?;
        Ok(Self {
            actor_target: actor.clone(),
            q1_target: q1.clone(),
            q2_target: q2.clone(),
            actor_net,
            critic_net,
            actor,
            q1,
            q2,
            actor_opt,
            q1_opt,
            q2_opt,
            cfg: cfg.clone(),
        })
    }

    pub fn hidden_size(&self) -> usize {
        self.actor_net.hidden_size()
    }

    fn hidden<'a>(&self, stored: &'a Array2<f64>, scratch: &'a mut Option<Array2<f64>>) -> &'a Array2<f64> {
        match self.cfg.hidden_mode {
            HiddenMode::StoredHidden => stored,
            HiddenMode::ResetZero => scratch.insert(zeros_like(stored)),
        }
    }

    /// Soft Bellman targets with fresh next-state action noise.
    pub fn bellman_target<R: Rng + ?Sized>(&self, batch: &Batch, rng: &mut R) -> Result<Array2<f64>> {
        let eps = normal_noise(batch.len(), self.actor_net.act_dim, rng);
        self.bellman_target_with_noise(batch, &eps)
    }

    /// `y = scale * r + gamma * (1 - done) * (min(Q1', Q2') - alpha * log pi(a'))`.
    pub fn bellman_target_with_noise(&self, batch: &Batch, eps: &Array2<f64>) -> Result<Array2<f64>> {
        if batch.is_empty() {
            return Err(Error::invalid("empty batch"));
        }
        let cfg = &self.cfg;
        let mut scratch = [None, None, None];
        let [s0, s1, s2] = &mut scratch;
        let h_actor = self.hidden(&batch.next_hidden[0], s0);
        let h_q1 = self.hidden(&batch.next_hidden[1], s1);
        let h_q2 = self.hidden(&batch.next_hidden[2], s2);
        let policy = if cfg.use_target_actor { &self.actor_target } else { &self.actor };

        let mut g = Graph::new();
        let obs = g.input(batch.next_obs.clone());
        let ha = g.input(h_actor.clone());
        let out = self.actor_net.forward(&mut g, policy, obs, ha)?;
        let (action, log_prob) = squashed_sample(&mut g, out.mean, out.log_std, eps)?;
        let h1 = g.input(h_q1.clone());
        let h2 = g.input(h_q2.clone());
        let (q1, _) = self.critic_net.forward(&mut g, &self.q1_target, obs, action, h1)?;
        let (q2, _) = self.critic_net.forward(&mut g, &self.q2_target, obs, action, h2)?;
        let q_min = g.min(q1, q2)?;

        let mut y = batch.reward.mapv(|r| cfg.reward_scale * r);
        let qv = g.value(q_min);
        let lp = g.value(log_prob);
        for i in 0..batch.len() {
            let cont = 1.0 - batch.done[[i, 0]];
            if cont != 0.0 && cfg.gamma != 0.0 {
                y[[i, 0]] += cfg.gamma * cont * (qv[[i, 0]] - cfg.alpha * lp[[i, 0]]);
            }
        }
        if y.iter().any(|v| !v.is_finite()) {
            return Err(Error::Numeric("bellman target"));
        }
        Ok(y)
    }

    /// Records `mean((Q(obs, a) - y)^2)` for one critic.
    pub fn critic_loss_graph(&self, store: &ParamStore, hidden: &Array2<f64>, batch: &Batch, targets: &Array2<f64>) -> Result<(Graph, NodeId)> {
        let mut g = Graph::new();
        let obs = g.input(batch.obs.clone());
        let act = g.input(batch.action.clone());
        let h = g.input(hidden.clone());
        let (q, _) = self.critic_net.forward(&mut g, store, obs, act, h)?;
        let y = g.input(targets.clone());
        let diff = g.sub(q, y)?;
        let sq = g.square(diff);
        let loss = g.mean(sq);
        Ok((g, loss))
    }

    /// One optimizer step on each critic. Returns the two pre-step losses.
    pub fn update_critics(&mut self, batch: &Batch, targets: &Array2<f64>) -> Result<(f64, f64)> {
        let mut scratch = [None, None];
        let [s1, s2] = &mut scratch;
        let h1 = self.hidden(&batch.hidden[1], s1).clone();
        let h2 = self.hidden(&batch.hidden[2], s2).clone();
        let mut losses = [0.0; 2];
        for (i, h) in [h1, h2].iter().enumerate() {
            let store = if i == 0 { &self.q1 } else { &self.q2 };
            let (g, loss) = self.critic_loss_graph(store, h, batch, targets)?;
            losses[i] = g.scalar(loss);
            if !losses[i].is_finite() {
                return Err(Error::Numeric("critic loss"));
            }
            let (store, opt) = if i == 0 { (&mut self.q1, &mut self.q1_opt) } else { (&mut self.q2, &mut self.q2_opt) };
            store.zero_grad();
            g.backprop_scalar(loss, store)?;
            opt.step(store)?;
        }
        Ok((losses[0], losses[1]))
    }

    /// Records `mean(alpha * log pi(a|s) - min(Q1, Q2)(s, a))` with `a`
    /// reparameterized through `eps`.
    pub fn actor_loss_graph(&self, actor: &ParamStore, batch: &Batch, eps: &Array2<f64>) -> Result<(Graph, NodeId)> {
        let mut scratch = [None, None, None];
        let [s0, s1, s2] = &mut scratch;
        let h_actor = self.hidden(&batch.hidden[0], s0);
        let h_q1 = self.hidden(&batch.hidden[1], s1);
        let h_q2 = self.hidden(&batch.hidden[2], s2);
        let mut g = Graph::new();
        let obs = g.input(batch.obs.clone());
        let ha = g.input(h_actor.clone());
        let out = self.actor_net.forward(&mut g, actor, obs, ha)?;
        let (action, log_prob) = squashed_sample(&mut g, out.mean, out.log_std, eps)?;
        let h1 = g.input(h_q1.clone());
        let h2 = g.input(h_q2.clone());
        let (q1, _) = self.critic_net.forward(&mut g, &self.q1, obs, action, h1)?;
        let (q2, _) = self.critic_net.forward(&mut g, &self.q2, obs, action, h2)?;
        let q_min = g.min(q1, q2)?;
        let ent = g.scale(log_prob, self.cfg.alpha);
        let per = g.sub(ent, q_min)?;
        let loss = g.mean(per);
        Ok((g, loss))
    }

    /// One optimizer step on the actor; critics are read but not modified.
    pub fn update_actor<R: Rng + ?Sized>(&mut self, batch: &Batch, rng: &mut R) -> Result<f64> {
        let eps = normal_noise(batch.len(), self.actor_net.act_dim, rng);
        self.update_actor_with_noise(batch, &eps)
    }

    pub fn update_actor_with_noise(&mut self, batch: &Batch, eps: &Array2<f64>) -> Result<f64> {
        let (g, loss) = self.actor_loss_graph(&self.actor, batch, eps)?;
        let value = g.scalar(loss);
        if !value.is_finite() {
            return Err(Error::Numeric("actor loss"));
        }
        self.actor.zero_grad();
        g.backprop_scalar(loss, &mut self.actor)?;
        self.actor_opt.step(&mut self.actor)?;
        Ok(value)
    }

    /// Polyak update of all three target stores.
    pub fn soft_update(&mut self) -> Result<()> {
        let tau = self.cfg.tau;
        soft_update(&self.q1, &mut self.q1_target, tau)?;
        soft_update(&self.q2, &mut self.q2_target, tau)?;
        soft_update(&self.actor, &mut self.actor_target, tau)
    }

    /// Fingerprint over the three target stores.
    pub fn target_fingerprint(&self) -> u64 {
        let a = self.actor_target.fingerprint();
        let b = self.q1_target.fingerprint();
        let c = self.q2_target.fingerprint();
        a ^ b.rotate_left(21) ^ c.rotate_left(42)
    }

    pub fn to_checkpoint(&self, step: u64) -> Result<Checkpoint> {
        let meta = serde_json::json!({
            "obs_dim": self.actor_net.obs_dim,
            "act_dim": self.actor_net.act_dim,
            "network": self.actor_net.config,
            "trainer": self.cfg,
        });
        let mut ck = Checkpoint::new(step, meta);
        ck.push_store("actor", &self.actor);
        ck.push_store("q1", &self.q1);
        ck.push_store("q2", &self.q2);
        ck.push_store("actor_target", &self.actor_target);
        ck.push_store("q1_target", &self.q1_target);
        ck.push_store("q2_target", &self.q2_target);
        Ok(ck)
    }

    /// Loads parameter values from a checkpoint written by an agent of the
    /// same layout. Optimizer state starts fresh.
    pub fn restore(&mut self, ck: &Checkpoint) -> Result<()> {
        ck.restore_store("actor", &mut self.actor)?;
        ck.restore_store("q1", &mut self.q1)?;
        ck.restore_store("q2", &mut self.q2)?;
        ck.restore_store("actor_target", &mut self.actor_target)?;
        ck.restore_store("q1_target", &mut self.q1_target)?;
        ck.restore_store("q2_target", &mut self.q2_target)
    }
}

/// `target <- tau * source + (1 - tau) * target`.
pub fn soft_update(source: &ParamStore, target: &mut ParamStore, tau: f64) -> Result<()> {
    target.soft_update_from(source, tau)
}

/// Network layout and policy parameters recovered from a checkpoint.
#[derive(Debug, Clone)]
pub struct Policy {
    pub net: ActorNet,
    pub params: ParamStore,
}

impl Policy {
    pub fn from_checkpoint(ck: &Checkpoint) -> Result<Self> {
        let meta = &ck.meta;
        let dim = |key: &str| {
            meta.get(key)
                .and_then(|v| v.as_u64())
                .map(|v| v as usize)
                .ok_or_else(|| Error::shape(format!("checkpoint metadata lacks {key}")))
        };
        let obs_dim = dim("obs_dim")?;
        let act_dim = dim("act_dim")?;
        let network: NetworkConfig = serde_json::from_value(
            meta.get("network").cloned().ok_or_else(|| Error::shape("checkpoint metadata lacks network"))?,
        )?;
        let net = ActorNet::new(obs_dim, act_dim, &network);
        let mut params = net.init(InitScheme::Zeros, &mut <rand_chacha::ChaCha8Rng as rand::SeedableRng>::seed_from_u64(0));
        ck.restore_store("actor", &mut params)?;
        Ok(Self { net, params })
    }

    pub fn from_agent(agent: &SacAgent) -> Self {
        Self { net: agent.actor_net.clone(), params: agent.actor.clone() }
    }

    pub fn hidden_size(&self) -> usize {
        self.net.hidden_size()
    }

    /// Batched action selection. `deterministic` returns `tanh(mean)`.
    pub fn act<R: Rng + ?Sized>(
        &self,
        obs: &Array2<f64>,
        hidden: &Array2<f64>,
        deterministic: bool,
        rng: &mut R,
    ) -> Result<(Array2<f64>, Array2<f64>)> {
        actor_act(&self.net, &self.params, obs, hidden, deterministic, rng)
    }
}

pub(crate) fn actor_act<R: Rng + ?Sized>(
    net: &ActorNet,
    store: &ParamStore,
    obs: &Array2<f64>,
    hidden: &Array2<f64>,
    deterministic: bool,
    rng: &mut R,
) -> Result<(Array2<f64>, Array2<f64>)> {
    let mut g = Graph::new();
    let o = g.input(obs.clone());
    let h = g.input(hidden.clone());
    let out = net.forward(&mut g, store, o, h)?;
    let mean = g.value(out.mean);
    let log_std = g.value(out.log_std);
    let limit = 1.0 - 1e-9;
    let action = if deterministic {
        mean.mapv(|m| m.tanh().clamp(-limit, limit))
    } else {
        let eps = normal_noise(mean.nrows(), mean.ncols(), rng);
        let mut a = mean.clone();
        ndarray::Zip::from(&mut a).and(log_std).and(&eps).for_each(|a, ls, e| {
            *a = (*a + ls.exp() * e).tanh().clamp(-limit, limit);
        });
        a
    };
    Ok((action, g.value(out.hidden).clone()))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::nn::{check_gradients, grad_check};
    use crate::sac::networks::CoreType;
    use crate::sac::replay::Transition;
    use approx::assert_abs_diff_eq;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    const OBS: usize = 5;
    const HID: usize = 4;

    fn cfg() -> TrainerConfig {
        TrainerConfig { hidden_size: HID, head_width: 8, grad_clip: None, ..Default::default() }
    }

    fn agent_with(cfg: &TrainerConfig, seed: u64) -> SacAgent {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        SacAgent::new(OBS, 2, &cfg.network(CoreType::Gru), cfg, &mut rng).unwrap()
    }

    fn batch(n: usize, seed: u64, done: bool) -> Batch {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut v = |k: usize, s: f64| (0..k).map(|_| rng.random_range(-s..s)).collect::<Vec<f64>>();
        let items: Vec<Transition> = (0..n)
            .map(|_| Transition {
                obs: v(OBS, 1.0),
                action: v(2, 0.9),
                reward: v(1, 3.0)[0],
                next_obs: v(OBS, 1.0),
                done,
                hidden: [v(HID, 0.5), v(HID, 0.5), v(HID, 0.5)],
                next_hidden: [v(HID, 0.5), v(HID, 0.5), v(HID, 0.5)],
            })
            .collect();
        let refs: Vec<&Transition> = items.iter().collect();
        Batch::from_transitions(&refs).unwrap()
    }

    /// Moves every parameter off exact zeros so ReLU kinks are not hit.
    fn jitter(store: &mut ParamStore, rng: &mut ChaCha8Rng) {
        let ids: Vec<_> = store.ids().collect();
        for id in ids {
            store.value_mut(id).mapv_inplace(|v| v + rng.random_range(-0.05..0.05));
        }
    }

    /// Makes a critic output the constant `c`.
    fn constant_critic(store: &mut ParamStore, c: f64) {
        let w = store.find("critic.head.2.w").unwrap();
        store.value_mut(w).fill(0.0);
        let b = store.find("critic.head.2.b").unwrap();
        store.value_mut(b).fill(c);
    }

    #[test]
    fn myopic_targets_equal_rewards() {
        let a = agent_with(&TrainerConfig { gamma: 0.0, ..cfg() }, 0);
        let b = batch(16, 1, false);
        let y = a.bellman_target(&b, &mut ChaCha8Rng::seed_from_u64(2)).unwrap();
        assert_eq!(y, b.reward);
    }

    #[test]
    fn terminal_cuts_bootstrap() {
        let a = agent_with(&cfg(), 0);
        let b = batch(16, 1, true);
        let y = a.bellman_target(&b, &mut ChaCha8Rng::seed_from_u64(2)).unwrap();
        assert_eq!(y, b.reward);
    }

    #[test]
    fn clipped_double_q_uses_minimum() {
        let mut a = agent_with(&TrainerConfig { alpha: 0.0, ..cfg() }, 0);
        constant_critic(&mut a.q1_target, 1.0);
        constant_critic(&mut a.q2_target, 2.0);
        let mut b = batch(8, 1, false);
        b.reward.fill(1.0);
        let y = a.bellman_target(&b, &mut ChaCha8Rng::seed_from_u64(2)).unwrap();
        for v in y.iter() {
            assert_abs_diff_eq!(*v, 1.0 + 0.99 * 1.0, epsilon = 1e-12);
        }
        // swapping which critic is lower changes nothing
        constant_critic(&mut a.q1_target, 2.0);
        constant_critic(&mut a.q2_target, 1.0);
        let y2 = a.bellman_target(&b, &mut ChaCha8Rng::seed_from_u64(2)).unwrap();
        assert_eq!(y, y2);
        // R = 1, min Q' = 2
        constant_critic(&mut a.q2_target, 2.0);
        let y3 = a.bellman_target(&b, &mut ChaCha8Rng::seed_from_u64(2)).unwrap();
        assert_abs_diff_eq!(y3[[0, 0]], 2.98, epsilon = 1e-12);
    }

    #[test]
    fn empty_batch_is_rejected() {
        let a = agent_with(&cfg(), 0);
        let b = batch(2, 1, false);
        let empty = Batch {
            obs: Array2::zeros((0, OBS)),
            action: Array2::zeros((0, 2)),
            reward: Array2::zeros((0, 1)),
            next_obs: Array2::zeros((0, OBS)),
            done: Array2::zeros((0, 1)),
            hidden: b.hidden.clone().map(|h| h.slice_move(ndarray::s![0..0, ..])),
            next_hidden: b.next_hidden.clone().map(|h| h.slice_move(ndarray::s![0..0, ..])),
        };
        assert!(matches!(a.bellman_target_with_noise(&empty, &Array2::zeros((0, 2))), Err(Error::InvalidArgument(_))));
    }

    #[test]
    fn soft_update_endpoints() {
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        let net = CriticNet::new(3, 2, &NetworkConfig { hidden_size: 3, head_width: 4, ..Default::default() });
        let src = net.init(InitScheme::UniformFanin, &mut rng);
        let mut tgt = net.init(InitScheme::UniformFanin, &mut rng);
        let before = tgt.fingerprint();
        soft_update(&src, &mut tgt, 0.0).unwrap();
        assert_eq!(tgt.fingerprint(), before);
        soft_update(&src, &mut tgt, 1.0).unwrap();
        assert_eq!(tgt.fingerprint(), src.fingerprint());

        let mut one = ParamStore::new();
        one.add("p", ndarray::array![[1.0]]);
        let mut zero = ParamStore::new();
        zero.add("p", ndarray::array![[0.0]]);
        soft_update(&one, &mut zero, 0.001).unwrap();
        assert_abs_diff_eq!(zero.blocks()[0].value[[0, 0]], 0.001, epsilon = 1e-15);

        let mut wrong = ParamStore::new();
        wrong.add("p", Array2::zeros((2, 2)));
        assert!(matches!(soft_update(&one, &mut wrong, 0.5), Err(Error::Shape(_))));
    }

    #[test]
    fn critic_fixed_point_and_null_step() {
        let mut a = agent_with(&cfg(), 0);
        let b = batch(16, 3, false);
        let (g, q) = {
            let mut g = Graph::new();
            let o = g.input(b.obs.clone());
            let act = g.input(b.action.clone());
            let h = g.input(b.hidden[1].clone());
            let (q, _) = a.critic_net.forward(&mut g, &a.q1, o, act, h).unwrap();
            (g, q)
        };
        let targets = g.value(q).clone();
        let before = a.q1.fingerprint();
        let (l1, _) = a.update_critics(&b, &targets).unwrap();
        assert_eq!(l1, 0.0);
        assert_eq!(a.q1.fingerprint(), before);

        let mut frozen = agent_with(&TrainerConfig { critic_lr: 0.0, actor_lr: 0.0, ..cfg() }, 0);
        let fp = (frozen.q1.fingerprint(), frozen.q2.fingerprint(), frozen.actor.fingerprint());
        let y = b.reward.clone();
        frozen.update_critics(&b, &y).unwrap();
        frozen.update_actor(&b, &mut ChaCha8Rng::seed_from_u64(0)).unwrap();
        assert_eq!(fp, (frozen.q1.fingerprint(), frozen.q2.fingerprint(), frozen.actor.fingerprint()));
    }

    #[test]
    fn critic_loss_decreases_on_frozen_batch() {
        let mut a = agent_with(&TrainerConfig { critic_lr: 1e-2, ..cfg() }, 0);
        let b = batch(32, 4, false);
        let y = a.bellman_target(&b, &mut ChaCha8Rng::seed_from_u64(0)).unwrap();
        let (first, _) = a.update_critics(&b, &y).unwrap();
        let mut last = first;
        for _ in 0..300 {
            last = a.update_critics(&b, &y).unwrap().0;
        }
        assert!(last < 0.5 * first, "{first} -> {last}");
    }

    #[test]
    fn flat_objective_gives_zero_actor_gradient() {
        let mut a = agent_with(&TrainerConfig { alpha: 0.0, ..cfg() }, 0);
        constant_critic(&mut a.q1, 3.0);
        constant_critic(&mut a.q2, 3.0);
        let b = batch(8, 5, false);
        let eps = normal_noise(8, 2, &mut ChaCha8Rng::seed_from_u64(1));
        let (g, loss) = a.actor_loss_graph(&a.actor, &b, &eps).unwrap();
        let mut store = a.actor.clone();
        store.zero_grad();
        // graph was recorded against `a.actor`, so rebuild on the clone
        let (g2, loss2) = a.actor_loss_graph(&store, &b, &eps).unwrap();
        g2.backprop_scalar(loss2, &mut store).unwrap();
        assert!(store.blocks().iter().all(|bl| bl.grad.iter().all(|v| *v == 0.0)));
        assert_abs_diff_eq!(g.scalar(loss), -3.0, epsilon = 1e-12);
    }

    #[test]
    fn entropy_objective_raises_log_std() {
        let mut a = agent_with(&TrainerConfig { alpha: 1.0, actor_lr: 1e-2, ..cfg() }, 0);
        constant_critic(&mut a.q1, 0.0);
        constant_critic(&mut a.q2, 0.0);
        // start narrow, well below where the squashed entropy peaks
        let b_id = a.actor.find("actor.head.2.b").unwrap();
        a.actor.value_mut(b_id).slice_mut(ndarray::s![.., 2..4]).fill(-3.0);
        let b = batch(16, 6, false);
        let mean_log_std = |a: &SacAgent| {
            let out = policy_forward_batch(a, &b);
            out.mean().unwrap()
        };
        let start = mean_log_std(&a);
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        for _ in 0..50 {
            a.update_actor(&b, &mut rng).unwrap();
        }
        assert!(mean_log_std(&a) > start + 0.1);
    }

    fn policy_forward_batch(a: &SacAgent, b: &Batch) -> Array2<f64> {
        let mut g = Graph::new();
        let o = g.input(b.obs.clone());
        let h = g.input(b.hidden[0].clone());
        let out = a.actor_net.forward(&mut g, &a.actor, o, h).unwrap();
        g.value(out.log_std).clone()
    }

    #[test]
    fn targets_change_only_through_soft_update() {
        let mut a = agent_with(&TrainerConfig { critic_lr: 1e-3, actor_lr: 1e-3, ..cfg() }, 0);
        let b = batch(16, 7, false);
        let fp = a.target_fingerprint();
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        for _ in 0..5 {
            let y = a.bellman_target(&b, &mut rng).unwrap();
            a.update_critics(&b, &y).unwrap();
            a.update_actor(&b, &mut rng).unwrap();
        }
        assert_eq!(a.target_fingerprint(), fp);
        a.soft_update().unwrap();
        assert_ne!(a.target_fingerprint(), fp);
    }

    #[test]
    fn critic_and_actor_losses_pass_grad_check() {
        for seed in 0..5 {
            for core in [CoreType::Gru, CoreType::Mlp] {
                let c = cfg();
                let mut rng = ChaCha8Rng::seed_from_u64(seed);
                let mut a = SacAgent::new(OBS, 2, &c.network(core), &c, &mut rng).unwrap();
                jitter(&mut a.actor, &mut rng);
                jitter(&mut a.q1, &mut rng);
                let b = batch(4, seed + 100, false);
                let y = a.bellman_target(&b, &mut rng).unwrap();
                let mut q1 = a.q1.clone();
                let h = b.hidden[1].clone();
                let r = grad_check(&mut q1, |s| a.critic_loss_graph(s, &h, &b, &y), 1e-5, 1e-4).unwrap();
                assert!(r.passed, "critic {core} seed {seed}: {r:?}");

                let eps = normal_noise(4, 2, &mut rng);
                let mut actor = a.actor.clone();
                let r = grad_check(&mut actor, |s| a.actor_loss_graph(s, &b, &eps), 1e-5, 1e-4).unwrap();
                assert!(r.passed, "actor {core} seed {seed}: {r:?}");
            }
        }
    }

    #[test]
    fn corrupted_actor_gradient_is_caught() {
        let a = agent_with(&cfg(), 1);
        let b = batch(4, 9, false);
        let eps = normal_noise(4, 2, &mut ChaCha8Rng::seed_from_u64(3));
        let mut probe = a.actor.clone();
        probe.zero_grad();
        let (g, loss) = a.actor_loss_graph(&probe, &b, &eps).unwrap();
        g.backprop_scalar(loss, &mut probe).unwrap();
        let mut grads: Vec<_> = probe.blocks().iter().map(|bl| bl.grad.clone()).collect();
        grads[0][[0, 0]] += 0.5;
        let mut actor = a.actor.clone();
        let r = check_gradients(
            &mut actor,
            &grads,
            |s| {
                let (g, l) = a.actor_loss_graph(s, &b, &eps)?;
                Ok(g.scalar(l))
            },
            1e-5,
            1e-4,
        )
        .unwrap();
        assert!(!r.passed);
    }

    #[test]
    fn reset_zero_mode_ignores_stored_hidden() {
        let a = agent_with(&TrainerConfig { hidden_mode: HiddenMode::ResetZero, ..cfg() }, 0);
        let b = batch(4, 1, false);
        let mut b0 = b.clone();
        for h in b0.hidden.iter_mut().chain(b0.next_hidden.iter_mut()) {
            h.fill(0.0);
        }
        let eps = normal_noise(4, 2, &mut ChaCha8Rng::seed_from_u64(1));
        assert_eq!(a.bellman_target_with_noise(&b, &eps).unwrap(), a.bellman_target_with_noise(&b0, &eps).unwrap());
        let s = agent_with(&cfg(), 0);
        assert_ne!(s.bellman_target_with_noise(&b, &eps).unwrap(), s.bellman_target_with_noise(&b0, &eps).unwrap());
    }

    #[test]
    fn checkpoint_restores_policy() {
        let a = agent_with(&cfg(), 4);
        let ck = a.to_checkpoint(17).unwrap();
        let p = Policy::from_checkpoint(&ck).unwrap();
        assert_eq!(p.params.fingerprint(), a.actor.fingerprint());
        let mut other = agent_with(&cfg(), 5);
        other.restore(&ck).unwrap();
        assert_eq!(other.target_fingerprint(), a.target_fingerprint());
        let bigger = TrainerConfig { hidden_size: HID + 1, ..cfg() };
        let mut wrong = agent_with(&bigger, 0);
        assert!(wrong.restore(&ck).is_err());
    }
}
