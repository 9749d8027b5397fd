use std::hash::{Hash, Hasher};
use std::sync::atomic::{AtomicU64, Ordering};

use ndarray::Array2;
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

static NEXT_STORE_ID: AtomicU64 = AtomicU64::new(1);

fn fresh_id() -> u64 {
    NEXT_STORE_ID.fetch_add(1, Ordering::Relaxed)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct ParamId(pub(crate) usize);

impl ParamId {
    pub fn index(self) -> usize {
        self.0
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum InitScheme {
    /// Weights uniform in `+-1/sqrt(fan_in)`, biases zero.
    #[default]
    UniformFanin,
    Zeros,
}

/// Shape of one parameter block. `fan_in == 0` marks a bias.
#[derive(Debug, Clone, PartialEq)]
pub struct ParamSpec {
    pub name: String,
    pub rows: usize,
    pub cols: usize,
    pub fan_in: usize,
}

impl ParamSpec {
    pub fn weight(name: impl Into<String>, rows: usize, cols: usize) -> Self {
        Self { name: name.into(), rows, cols, fan_in: cols }
    }

    pub fn bias(name: impl Into<String>, cols: usize) -> Self {
        Self { name: name.into(), rows: 1, cols, fan_in: 0 }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ParamBlock {
    pub name: String,
    pub value: Array2<f64>,
    pub grad: Array2<f64>,
}

/// Named parameter blocks with matching gradient accumulators.
#[derive(Debug)]
pub struct ParamStore {
    id: u64,
    blocks: Vec<ParamBlock>,
}

impl Clone for ParamStore {
    /// The copy is a distinct store: graphs built on it accumulate separately.
    fn clone(&self) -> Self {
        Self { id: fresh_id(), blocks: self.blocks.clone() }
    }
}

impl Default for ParamStore {
    fn default() -> Self {
        Self::new()
    }
}

impl ParamStore {
    pub fn new() -> Self {
        Self { id: fresh_id(), blocks: Vec::new() }
    }

    pub(crate) fn id(&self) -> u64 {
        self.id
    }

    pub fn add(&mut self, name: impl Into<String>, value: Array2<f64>) -> ParamId {
        let grad = Array2::zeros(value.raw_dim());
        self.blocks.push(ParamBlock { name: name.into(), value, grad });
        ParamId(self.blocks.len() - 1)
    }

    pub fn len(&self) -> usize {
        self.blocks.len()
    }

    pub fn is_empty(&self) -> bool {
        self.blocks.is_empty()
    }

    pub fn n_scalars(&self) -> usize {
        self.blocks.iter().map(|b| b.value.len()).sum()
    }

    pub fn blocks(&self) -> &[ParamBlock] {
        &self.blocks
    }

    pub fn block(&self, id: ParamId) -> &ParamBlock {
        &self.blocks[id.0]
    }

    pub fn value(&self, id: ParamId) -> &Array2<f64> {
        &self.blocks[id.0].value
    }

    pub fn value_mut(&mut self, id: ParamId) -> &mut Array2<f64> {
        &mut self.blocks[id.0].value
    }

    pub fn grad(&self, id: ParamId) -> &Array2<f64> {
        &self.blocks[id.0].grad
    }

    pub fn find(&self, name: &str) -> Option<ParamId> {
        self.blocks.iter().position(|b| b.name == name).map(ParamId)
    }

    pub fn ids(&self) -> impl Iterator<Item = ParamId> {
        (0..self.blocks.len()).map(ParamId)
    }

    pub fn zero_grad(&mut self) {
        for b in &mut self.blocks {
            b.grad.fill(0.0);
        }
    }

    pub(crate) fn grad_mut(&mut self, id: ParamId) -> &mut Array2<f64> {
        &mut self.blocks[id.0].grad
    }

    pub(crate) fn blocks_mut(&mut self) -> &mut [ParamBlock] {
        &mut self.blocks
    }

    fn check_layout(&self, other: &ParamStore) -> Result<()> {
        if self.blocks.len() != other.blocks.len() {
            return Err(Error::shape(format!(
                "stores have {} and {} blocks",
                self.blocks.len(),
                other.blocks.len()
            )));
        }
        for (a, b) in self.blocks.iter().zip(&other.blocks) {
            if a.value.dim() != b.value.dim() {
                return Err(Error::shape(format!(
                    "block {} is {:?} but {} is {:?}",
                    a.name,
                    a.value.dim(),
                    b.name,
                    b.value.dim()
                )));
            }
        }
        Ok(())
    }

    pub fn copy_values_from(&mut self, source: &ParamStore) -> Result<()> {
        self.check_layout(source)?;
        for (dst, src) in self.blocks.iter_mut().zip(&source.blocks) {
            dst.value.assign(&src.value);
        }
        Ok(())
    }

    /// Polyak averaging: `self <- tau * source + (1 - tau) * self`.
    pub fn soft_update_from(&mut self, source: &ParamStore, tau: f64) -> Result<()> {
        self.check_layout(source)?;
        if tau == 1.0 {
            return self.copy_values_from(source);
        }
        for (dst, src) in self.blocks.iter_mut().zip(&source.blocks) {
            dst.value.zip_mut_with(&src.value, |t, s| *t = tau * s + (1.0 - tau) * *t);
        }
        Ok(())
    }

    /// Hash of the exact bit patterns of every value.
    pub fn fingerprint(&self) -> u64 {
        let mut h = std::collections::hash_map::DefaultHasher::new();
        for b in &self.blocks {
            b.name.hash(&mut h);
            for v in b.value.iter() {
                v.to_bits().hash(&mut h);
            }
        }
        h.finish()
    }

    pub fn all_finite(&self) -> bool {
        self.blocks.iter().all(|b| b.value.iter().all(|v| v.is_finite()))
    }

    pub fn grads_finite(&self) -> bool {
        self.blocks.iter().all(|b| b.grad.iter().all(|v| v.is_finite()))
    }
}

/// Builds a store from `specs`, in order, so block `i` has `ParamId(i)`.
pub fn init_params<R: Rng + ?Sized>(specs: &[ParamSpec], scheme: InitScheme, rng: &mut R) -> ParamStore {
    let mut store = ParamStore::new();
    for spec in specs {
        let value = match scheme {
            InitScheme::UniformFanin if spec.fan_in > 0 => {
                let bound = 1.0 / (spec.fan_in as f64).sqrt();
                Array2::from_shape_simple_fn((spec.rows, spec.cols), || rng.random_range(-bound..bound))
            }
            _ => Array2::zeros((spec.rows, spec.cols)),
        };
        store.add(spec.name.clone(), value);
    }
    store
}
