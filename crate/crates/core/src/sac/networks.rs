use ndarray::Array2;
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::nn::{init_params, Activation, Graph, InitScheme, Mlp, NodeId, ParamSpec, ParamStore, RecurrentCore};
use crate::nn::LayoutBuilder;

pub const LOG_STD_MIN: f64 = -20.0;
pub const LOG_STD_MAX: f64 = 2.0;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum CoreType {
    #[default]
    Gru,
    Mlp,
}

impl std::str::FromStr for CoreType {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "gru" => Ok(CoreType::Gru),
            "mlp" => Ok(CoreType::Mlp),
            other => Err(Error::invalid(format!("unknown core type {other:?}, expected gru or mlp"))),
        }
    }
}

impl std::fmt::Display for CoreType {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            CoreType::Gru => "gru",
            CoreType::Mlp => "mlp",
        })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct NetworkConfig {
    pub core: CoreType,
    pub hidden_size: usize,
    pub head_width: usize,
}

impl Default for NetworkConfig {
    fn default() -> Self {
        Self { core: CoreType::Gru, hidden_size: 64, head_width: 256 }
    }
}

impl NetworkConfig {
    pub fn validate(&self) -> Result<()> {
        if self.hidden_size == 0 || self.head_width == 0 {
            return Err(Error::Config("network sizes must be positive".into()));
        }
        Ok(())
    }
}

/// Recurrent core followed by two ReLU layers and a linear output layer.
#[derive(Debug, Clone, PartialEq)]
struct Trunk {
    core: RecurrentCore,
    head: Mlp,
}

impl Trunk {
    fn declare(layout: &mut LayoutBuilder, name: &str, input: usize, output: usize, cfg: &NetworkConfig) -> Self {
        let core =
            RecurrentCore::declare(layout, &format!("{name}.core"), cfg.core == CoreType::Gru, input, cfg.hidden_size);
        let w = cfg.head_width;
        let head = Mlp::declare(layout, &format!("{name}.head"), &[cfg.hidden_size, w, w, output], Activation::Relu);
        Self { core, head }
    }

    fn forward(&self, g: &mut Graph, store: &ParamStore, x: NodeId, h: NodeId) -> Result<(NodeId, NodeId)> {
        let h_new = self.core.forward(g, store, x, h)?;
        let y = self.head.forward(g, store, h_new)?;
        Ok((y, h_new))
    }
}

fn check_width(what: &str, got: usize, want: usize) -> Result<()> {
    if got != want {
        return Err(Error::shape(format!("{what} has width {got}, expected {want}")));
    }
    Ok(())
}

fn row_input(g: &mut Graph, what: &str, v: &[f64], want: usize) -> Result<NodeId> {
    check_width(what, v.len(), want)?;
    Ok(g.input_row(v))
}

/// Graph nodes produced by one actor pass.
#[derive(Debug, Clone, Copy)]
pub struct ActorNodes {
    pub mean: NodeId,
    /// Clamped to `[LOG_STD_MIN, LOG_STD_MAX]`.
    pub log_std: NodeId,
    pub hidden: NodeId,
}

/// Gaussian policy over `act_dim` pre-squash actions.
#[derive(Debug, Clone, PartialEq)]
pub struct ActorNet {
    trunk: Trunk,
    pub obs_dim: usize,
    pub act_dim: usize,
    pub config: NetworkConfig,
    specs: Vec<ParamSpec>,
}

impl ActorNet {
    pub fn new(obs_dim: usize, act_dim: usize, config: &NetworkConfig) -> Self {
        let mut layout = LayoutBuilder::default();
        let trunk = Trunk::declare(&mut layout, "actor", obs_dim, 2 * act_dim, config);
        Self { trunk, obs_dim, act_dim, config: config.clone(), specs: layout.specs }
    }

    pub fn specs(&self) -> &[ParamSpec] {
        &self.specs
    }

    pub fn init<R: Rng + ?Sized>(&self, scheme: InitScheme, rng: &mut R) -> ParamStore {
        init_params(&self.specs, scheme, rng)
    }

    pub fn hidden_size(&self) -> usize {
        self.config.hidden_size
    }

    /// Batched pass: `obs` is `B x obs_dim`, `h` is `B x hidden`.
    pub fn forward(&self, g: &mut Graph, store: &ParamStore, obs: NodeId, h: NodeId) -> Result<ActorNodes> {
        check_width("observation", g.value(obs).ncols(), self.obs_dim)?;
        check_width("hidden state", g.value(h).ncols(), self.hidden_size())?;
        let (y, hidden) = self.trunk.forward(g, store, obs, h)?;
        let mean = g.slice_cols(y, 0, self.act_dim)?;
        let raw = g.slice_cols(y, self.act_dim, 2 * self.act_dim)?;
        let log_std = g.clamp(raw, LOG_STD_MIN, LOG_STD_MAX);
        Ok(ActorNodes { mean, log_std, hidden })
    }
}

/// Q-network over the concatenated observation and action.
#[derive(Debug, Clone, PartialEq)]
pub struct CriticNet {
    trunk: Trunk,
    pub obs_dim: usize,
    pub act_dim: usize,
    pub config: NetworkConfig,
    specs: Vec<ParamSpec>,
}

impl CriticNet {
    pub fn new(obs_dim: usize, act_dim: usize, config: &NetworkConfig) -> Self {
        let mut layout = LayoutBuilder::default();
        let trunk = Trunk::declare(&mut layout, "critic", obs_dim + act_dim, 1, config);
        Self { trunk, obs_dim, act_dim, config: config.clone(), specs: layout.specs }
    }

    pub fn specs(&self) -> &[ParamSpec] {
        &self.specs
    }

    pub fn init<R: Rng + ?Sized>(&self, scheme: InitScheme, rng: &mut R) -> ParamStore {
        init_params(&self.specs, scheme, rng)
    }

    pub fn hidden_size(&self) -> usize {
        self.config.hidden_size
    }

    /// Batched pass returning `(Q as B x 1, new hidden)`.
    pub fn forward(&self, g: &mut Graph, store: &ParamStore, obs: NodeId, act: NodeId, h: NodeId) -> Result<(NodeId, NodeId)> {
        check_width("observation", g.value(obs).ncols(), self.obs_dim)?;
        check_width("action", g.value(act).ncols(), self.act_dim)?;
        check_width("hidden state", g.value(h).ncols(), self.hidden_size())?;
        let x = g.concat_cols(&[obs, act])?;
        self.trunk.forward(g, store, x, h)
    }

    /// Recurrent core only: the hidden state that follows `(obs, act)`.
    pub fn advance_hidden(&self, store: &ParamStore, obs: &Array2<f64>, act: &Array2<f64>, h: &Array2<f64>) -> Result<Array2<f64>> {
        let mut g = Graph::new();
        let o = g.input(obs.clone());
        let a = g.input(act.clone());
        let hi = g.input(h.clone());
        check_width("hidden state", h.ncols(), self.hidden_size())?;
        let x = g.concat_cols(&[o, a])?;
        let hn = self.trunk.core.forward(&mut g, store, x, hi)?;
        Ok(g.value(hn).clone())
    }
}

/// Mean, clamped log standard deviation and next hidden state for one sample.
#[derive(Debug, Clone, PartialEq)]
pub struct PolicyOutput {
    pub mean: Vec<f64>,
    pub log_std: Vec<f64>,
    pub hidden: Vec<f64>,
}

pub fn policy_forward(net: &ActorNet, store: &ParamStore, obs: &[f64], h_prev: &[f64]) -> Result<PolicyOutput> {
    let mut g = Graph::new();
    let o = row_input(&mut g, "observation", obs, net.obs_dim)?;
    let h = row_input(&mut g, "hidden state", h_prev, net.hidden_size())?;
    let n = net.forward(&mut g, store, o, h)?;
    let row = |id: NodeId| g.value(id).row(0).to_vec();
    Ok(PolicyOutput { mean: row(n.mean), log_std: row(n.log_std), hidden: row(n.hidden) })
}

/// Single-sample Q value and the critic's next hidden state.
pub fn critic_forward(net: &CriticNet, store: &ParamStore, obs: &[f64], action: &[f64], h_prev: &[f64]) -> Result<(f64, Vec<f64>)> {
    let mut g = Graph::new();
    let o = row_input(&mut g, "observation", obs, net.obs_dim)?;
    let a = row_input(&mut g, "action", action, net.act_dim)?;
    let h = row_input(&mut g, "hidden state", h_prev, net.hidden_size())?;
    let (q, hn) = net.forward(&mut g, store, o, a, h)?;
    Ok((g.value(q)[[0, 0]], g.value(hn).row(0).to_vec()))
}
