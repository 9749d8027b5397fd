use ndarray::Array2;
use rand::Rng;

use crate::error::{Error, Result};

/// One agent's step, with the recurrent states needed to replay it.
#[derive(Debug, Clone, PartialEq)]
pub struct Transition {
    pub obs: Vec<f64>,
    /// Squashed action in `[-1, 1]`.
    pub action: Vec<f64>,
    pub reward: f64,
    pub next_obs: Vec<f64>,
    /// True only on a terminal event (no bootstrap).
    pub done: bool,
    /// Actor, critic 1 and critic 2 hidden states at decision time.
    pub hidden: [Vec<f64>; 3],
    /// The same three states after the step.
    pub next_hidden: [Vec<f64>; 3],
}

/// Fixed-capacity ring buffer.
#[derive(Debug, Clone)]
pub struct ReplayBuffer {
    items: Vec<Transition>,
    capacity: usize,
    cursor: usize,
}

/// Column-stacked view of sampled transitions.
#[derive(Debug, Clone, PartialEq)]
pub struct Batch {
    pub obs: Array2<f64>,
    pub action: Array2<f64>,
    pub reward: Array2<f64>,
    pub next_obs: Array2<f64>,
    /// 1.0 where the transition is terminal.
    pub done: Array2<f64>,
    pub hidden: [Array2<f64>; 3],
    pub next_hidden: [Array2<f64>; 3],
}

impl Batch {
    pub fn len(&self) -> usize {
        self.obs.nrows()
    }

    pub fn is_empty(&self) -> bool {
        self.obs.nrows() == 0
    }

    pub fn from_transitions(items: &[&Transition]) -> Result<Self> {
        let first = items.first().ok_or_else(|| Error::invalid("empty batch"))?;
        let rows = |f: &dyn Fn(&Transition) -> &[f64], width: usize| -> Result<Array2<f64>> {
            let mut out = Array2::zeros((items.len(), width));
            for (i, t) in items.iter().enumerate() {
                let v = f(t);
                if v.len() != width {
                    return Err(Error::shape(format!("transition {i} has a field of width {}, expected {width}", v.len())));
                }
                out.row_mut(i).assign(&ndarray::ArrayView1::from(v));
            }
            Ok(out)
        };
        let scalar = |f: &dyn Fn(&Transition) -> f64| Array2::from_shape_fn((items.len(), 1), |(i, _)| f(items[i]));
        let h = |i: usize| rows(&|t| &t.hidden[i], first.hidden[i].len());
        let hn = |i: usize| rows(&|t| &t.next_hidden[i], first.next_hidden[i].len());
        Ok(Self {
            obs: rows(&|t| &t.obs, first.obs.len())?,
            action: rows(&|t| &t.action, first.action.len())?,
            reward: scalar(&|t| t.reward),
            next_obs: rows(&|t| &t.next_obs, first.next_obs.len())?,
            done: scalar(&|t| if t.done { 1.0 } else { 0.0 }),
            hidden: [h(0)?, h(1)?, h(2)?],
            next_hidden: [hn(0)?, hn(1)?, hn(2)?],
        })
    }
}

impl ReplayBuffer {
    pub fn new(capacity: usize) -> Result<Self> {
        if capacity == 0 {
            return Err(Error::Config("replay capacity must be positive".into()));
        }
        Ok(Self { items: Vec::with_capacity(capacity.min(1 << 16)), capacity, cursor: 0 })
    }

    pub fn len(&self) -> usize {
        self.items.len()
    }

    pub fn is_empty(&self) -> bool {
        self.items.is_empty()
    }

    pub fn capacity(&self) -> usize {
        self.capacity
    }

    pub fn push(&mut self, t: Transition) {
        if self.items.len() < self.capacity {
            self.items.push(t);
        } else {
            self.items[self.cursor] = t;
        }
        self.cursor = (self.cursor + 1) % self.capacity;
    }

    /// Draws `batch_size` distinct transitions. Refuses when fewer are stored.
    pub fn sample<R: Rng + ?Sized>(&self, batch_size: usize, rng: &mut R) -> Result<Batch> {
        if batch_size == 0 || self.items.len() < batch_size {
            return Err(Error::State(format!(
                "cannot sample {batch_size} transitions from a buffer holding {}",
                self.items.len()
            )));
        }
        let idx = rand::seq::index::sample(rng, self.items.len(), batch_size);
        let picked: Vec<&Transition> = idx.iter().map(|i| &self.items[i]).collect();
        Batch::from_transitions(&picked)
    }
}
