//! Dense layers, feedforward stacks and the GRU cell.

use serde::{Deserialize, Serialize};

use super::graph::{Graph, NodeId};
use super::params::{ParamId, ParamSpec, ParamStore};
use crate::error::{Error, Result};

/// Collects parameter specs while handing out the ids they will receive.
#[derive(Debug, Default)]
pub(crate) struct LayoutBuilder {
    pub(crate) specs: Vec<ParamSpec>,
}

impl LayoutBuilder {
    fn push(&mut self, spec: ParamSpec) -> ParamId {
        self.specs.push(spec);
        ParamId(self.specs.len() - 1)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Activation {
    Relu,
    Tanh,
    Identity,
}

impl Activation {
    fn apply(self, g: &mut Graph, x: NodeId) -> NodeId {
        match self {
            Activation::Relu => g.relu(x),
            Activation::Tanh => g.tanh(x),
            Activation::Identity => x,
        }
    }
}

/// `y = x W^T + b` with `W` of shape `out x in`.
#[derive(Debug, Clone, PartialEq)]
pub struct Dense {
    pub w: ParamId,
    pub b: ParamId,
    pub in_dim: usize,
    pub out_dim: usize,
}

impl Dense {
    pub(crate) fn declare(layout: &mut LayoutBuilder, name: &str, in_dim: usize, out_dim: usize) -> Self {
        let w = layout.push(ParamSpec::weight(format!("{name}.w"), out_dim, in_dim));
        let b = layout.push(ParamSpec::bias(format!("{name}.b"), out_dim));
        Self { w, b, in_dim, out_dim }
    }

    pub fn forward(&self, g: &mut Graph, store: &ParamStore, x: NodeId) -> Result<NodeId> {
        let w = g.param(store, self.w);
        let b = g.param(store, self.b);
        let h = g.matmul_t(x, w)?;
        g.add_row(h, b)
    }
}

/// Dense layers with a shared hidden activation and an identity output.
#[derive(Debug, Clone, PartialEq)]
pub struct Mlp {
    pub layers: Vec<Dense>,
    pub activation: Activation,
}

impl Mlp {
    pub(crate) fn declare(layout: &mut LayoutBuilder, name: &str, sizes: &[usize], activation: Activation) -> Self {
        let layers = sizes
            .windows(2)
            .enumerate()
            .map(|(i, w)| Dense::declare(layout, &format!("{name}.{i}"), w[0], w[1]))
            .collect();
        Self { layers, activation }
    }

    /// Standalone network over its own store.
    pub fn with_layout(sizes: &[usize], activation: Activation) -> (Self, Vec<ParamSpec>) {
        let mut layout = LayoutBuilder::default();
        let mlp = Self::declare(&mut layout, "mlp", sizes, activation);
        (mlp, layout.specs)
    }

    pub fn in_dim(&self) -> usize {
        self.layers.first().map_or(0, |l| l.in_dim)
    }

    pub fn out_dim(&self) -> usize {
        self.layers.last().map_or(0, |l| l.out_dim)
    }

    pub fn forward(&self, g: &mut Graph, store: &ParamStore, x: NodeId) -> Result<NodeId> {
        let mut h = x;
        let last = self.layers.len().saturating_sub(1);
        for (i, layer) in self.layers.iter().enumerate() {
            h = layer.forward(g, store, h)?;
            if i < last {
                h = self.activation.apply(g, h);
            }
        }
        Ok(h)
    }

    /// Single-sample evaluation.
    pub fn eval(&self, store: &ParamStore, x: &[f64]) -> Result<Vec<f64>> {
        if x.len() != self.in_dim() {
            return Err(Error::shape(format!("mlp expects {} inputs, got {}", self.in_dim(), x.len())));
        }
        let mut g = Graph::new();
        let xi = g.input_row(x);
        let y = self.forward(&mut g, store, xi)?;
        Ok(g.value(y).iter().copied().collect())
    }
}

/// Gated recurrent unit with
/// `z = s(W_z x + U_z h + b_z)`, `r = s(W_r x + U_r h + b_r)`,
/// `c = tanh(W_h x + U_h (r * h) + b_h)` and `h' = (1 - z) * h + z * c`.
#[derive(Debug, Clone, PartialEq)]
pub struct GruCell {
    pub w_z: ParamId,
    pub w_r: ParamId,
    pub w_h: ParamId,
    pub u_z: ParamId,
    pub u_r: ParamId,
    pub u_h: ParamId,
    pub b_z: ParamId,
    pub b_r: ParamId,
    pub b_h: ParamId,
    pub input_size: usize,
    pub hidden_size: usize,
}

impl GruCell {
    pub(crate) fn declare(layout: &mut LayoutBuilder, name: &str, input_size: usize, hidden_size: usize) -> Self {
        let mut w = |gate: &str| layout.push(ParamSpec::weight(format!("{name}.w_{gate}"), hidden_size, input_size));
        let (w_z, w_r, w_h) = (w("z"), w("r"), w("h"));
        let mut u = |gate: &str| layout.push(ParamSpec::weight(format!("{name}.u_{gate}"), hidden_size, hidden_size));
        let (u_z, u_r, u_h) = (u("z"), u("r"), u("h"));
        let mut b = |gate: &str| layout.push(ParamSpec::bias(format!("{name}.b_{gate}"), hidden_size));
        let (b_z, b_r, b_h) = (b("z"), b("r"), b("h"));
        Self { w_z, w_r, w_h, u_z, u_r, u_h, b_z, b_r, b_h, input_size, hidden_size }
    }

    /// Standalone cell over its own store, for tests and tools.
    pub fn with_layout(input_size: usize, hidden_size: usize) -> (Self, Vec<ParamSpec>) {
        let mut layout = LayoutBuilder::default();
        let cell = Self::declare(&mut layout, "gru", input_size, hidden_size);
        (cell, layout.specs)
    }

    fn gate(
        &self,
        g: &mut Graph,
        store: &ParamStore,
        x: NodeId,
        h: NodeId,
        (w, u, b): (ParamId, ParamId, ParamId),
    ) -> Result<NodeId> {
        let wp = g.param(store, w);
        let up = g.param(store, u);
        let bp = g.param(store, b);
        let xw = g.matmul_t(x, wp)?;
        let hu = g.matmul_t(h, up)?;
        let s = g.add(xw, hu)?;
        g.add_row(s, bp)
    }

    pub fn forward(&self, g: &mut Graph, store: &ParamStore, x: NodeId, h: NodeId) -> Result<NodeId> {
        let zp = self.gate(g, store, x, h, (self.w_z, self.u_z, self.b_z))?;
        let z = g.sigmoid(zp);
        let rp = self.gate(g, store, x, h, (self.w_r, self.u_r, self.b_r))?;
        let r = g.sigmoid(rp);
        let rh = g.mul(r, h)?;
        let cp = self.gate(g, store, x, rh, (self.w_h, self.u_h, self.b_h))?;
        let c = g.tanh(cp);
        let keep = g.affine(z, -1.0, 1.0);
        let old = g.mul(keep, h)?;
        let new = g.mul(z, c)?;
        g.add(old, new)
    }

    /// One step on a single sample.
    pub fn step(&self, store: &ParamStore, h_prev: &[f64], x: &[f64]) -> Result<Vec<f64>> {
        if x.len() != self.input_size || h_prev.len() != self.hidden_size {
            return Err(Error::shape(format!(
                "gru expects input {} and hidden {}, got {} and {}",
                self.input_size,
                self.hidden_size,
                x.len(),
                h_prev.len()
            )));
        }
        let mut g = Graph::new();
        let xi = g.input_row(x);
        let hi = g.input_row(h_prev);
        let out = self.forward(&mut g, store, xi, hi)?;
        Ok(g.value(out).iter().copied().collect())
    }
}

/// The recurrent block at the bottom of each network: a GRU, or a single
/// tanh dense layer that ignores the incoming hidden state.
#[derive(Debug, Clone, PartialEq)]
pub enum RecurrentCore {
    Gru(GruCell),
    Mlp(Dense),
}

impl RecurrentCore {
    pub(crate) fn declare(
        layout: &mut LayoutBuilder,
        name: &str,
        gru: bool,
        input_size: usize,
        hidden_size: usize,
    ) -> Self {
        if gru {
            RecurrentCore::Gru(GruCell::declare(layout, name, input_size, hidden_size))
        } else {
            RecurrentCore::Mlp(Dense::declare(layout, name, input_size, hidden_size))
        }
    }

    pub fn hidden_size(&self) -> usize {
        match self {
            RecurrentCore::Gru(c) => c.hidden_size,
            RecurrentCore::Mlp(d) => d.out_dim,
        }
    }

    pub fn input_size(&self) -> usize {
        match self {
            RecurrentCore::Gru(c) => c.input_size,
            RecurrentCore::Mlp(d) => d.in_dim,
        }
    }

    pub fn forward(&self, g: &mut Graph, store: &ParamStore, x: NodeId, h: NodeId) -> Result<NodeId> {
        match self {
            RecurrentCore::Gru(cell) => cell.forward(g, store, x, h),
            RecurrentCore::Mlp(dense) => {
                let y = dense.forward(g, store, x)?;
                Ok(g.tanh(y))
            }
        }
    }
}
