use serde::{Deserialize, Serialize};

use super::params::ParamStore;
use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum OptimizerKind {
    Sgd,
    #[default]
    Adam,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct OptimizerConfig {
    pub kind: OptimizerKind,
    pub lr: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
    /// Global L2 norm clip applied before the update. `None` disables it.
    pub grad_clip: Option<f64>,
}

impl Default for OptimizerConfig {
    fn default() -> Self {
        Self { kind: OptimizerKind::Adam, lr: 3e-4, beta1: 0.9, beta2: 0.999, eps: 1e-8, grad_clip: Some(10.0) }
    }
}

impl OptimizerConfig {
    pub fn sgd(lr: f64) -> Self {
        Self { kind: OptimizerKind::Sgd, lr, grad_clip: None, ..Self::default() }
    }

    pub fn validate(&self) -> Result<()> {
        let ok = self.lr >= 0.0
            && self.lr.is_finite()
            && (0.0..1.0).contains(&self.beta1)
            && (0.0..1.0).contains(&self.beta2)
            && self.eps > 0.0
            && self.grad_clip.is_none_or(|c| c > 0.0);
        if ok {
            Ok(())
        } else {
            Err(Error::Config(format!("bad optimizer settings {self:?}")))
        }
    }
}

/// First-order optimizer state for one [`ParamStore`].
#[derive(Debug, Clone)]
pub struct Optimizer {
    pub config: OptimizerConfig,
    m: Vec<ndarray::Array2<f64>>,
    v: Vec<ndarray::Array2<f64>>,
    t: u64,
}

impl Optimizer {
    pub fn new(config: OptimizerConfig, store: &ParamStore) -> Result<Self> {
        config.validate()?;
        let zeros = || store.blocks().iter().map(|b| ndarray::Array2::zeros(b.value.dim())).collect();
        Ok(Self { config, m: zeros(), v: zeros(), t: 0 })
    }

    pub fn steps_taken(&self) -> u64 {
        self.t
    }

    /// Applies the accumulated gradients and leaves them in place.
    pub fn step(&mut self, store: &mut ParamStore) -> Result<()> {
        if store.len() != self.m.len() {
            return Err(Error::shape(format!("optimizer built for {} blocks, store has {}", self.m.len(), store.len())));
        }
        if !store.grads_finite() {
            return Err(Error::Numeric("gradients"));
        }
        let scale = match self.config.grad_clip {
            Some(c) => {
                let norm = store.blocks().iter().map(|b| b.grad.iter().map(|g| g * g).sum::<f64>()).sum::<f64>().sqrt();
                if norm > c { c / norm } else { 1.0 }
            }
            None => 1.0,
        };
        self.t += 1;
        let cfg = &self.config;
        match cfg.kind {
            OptimizerKind::Sgd => {
                for b in store.blocks_mut() {
                    let ParamBlockRef { value, grad } = split(b);
                    value.zip_mut_with(grad, |p, g| *p -= cfg.lr * scale * g);
                }
            }
            OptimizerKind::Adam => {
                let bc1 = 1.0 - cfg.beta1.powi(self.t.min(i32::MAX as u64) as i32);
                let bc2 = 1.0 - cfg.beta2.powi(self.t.min(i32::MAX as u64) as i32);
                for ((b, m), v) in store.blocks_mut().iter_mut().zip(&mut self.m).zip(&mut self.v) {
                    let ParamBlockRef { value, grad } = split(b);
                    ndarray::Zip::from(value).and(grad).and(m).and(v).for_each(|p, &g, m, v| {
                        let g = g * scale;
                        *m = cfg.beta1 * *m + (1.0 - cfg.beta1) * g;
                        *v = cfg.beta2 * *v + (1.0 - cfg.beta2) * g * g;
                        *p -= cfg.lr * (*m / bc1) / ((*v / bc2).sqrt() + cfg.eps);
                    });
                }
            }
        }
        Ok(())
    }
}

struct ParamBlockRef<'a> {
    value: &'a mut ndarray::Array2<f64>,
    grad: &'a ndarray::Array2<f64>,
}

fn split(b: &mut super::params::ParamBlock) -> ParamBlockRef<'_> {
    ParamBlockRef { value: &mut b.value, grad: &b.grad }
}

#[cfg(test)]
mod tests {
    use super::*;
    use ndarray::array;

    #[test]
    fn sgd_step() {
        let mut store = ParamStore::new();
        let w = store.add("w", array![[1.0, 2.0]]);
        store.grad_mut(w).assign(&array![[0.5, -1.0]]);
        let mut opt = Optimizer::new(OptimizerConfig::sgd(0.1), &store).unwrap();
        opt.step(&mut store).unwrap();
        assert_eq!(store.value(w), &array![[0.95, 2.1]]);
    }

    #[test]
    fn adam_first_step_is_lr_sized() {
        let mut store = ParamStore::new();
        let w = store.add("w", array![[0.0, 0.0]]);
        store.grad_mut(w).assign(&array![[3.0, -0.01]]);
        let cfg = OptimizerConfig { lr: 0.01, grad_clip: None, ..Default::default() };
        let mut opt = Optimizer::new(cfg, &store).unwrap();
        opt.step(&mut store).unwrap();
        assert!((store.value(w)[[0, 0]] + 0.01).abs() < 1e-8);
        assert!((store.value(w)[[0, 1]] - 0.01).abs() < 1e-6);
    }

    #[test]
    fn adam_minimises_quadratic() {
        let mut store = ParamStore::new();
        let w = store.add("w", array![[5.0]]);
        let cfg = OptimizerConfig { lr: 0.1, ..Default::default() };
        let mut opt = Optimizer::new(cfg, &store).unwrap();
        for _ in 0..500 {
            store.zero_grad();
            let x = store.value(w)[[0, 0]];
            store.grad_mut(w)[[0, 0]] = 2.0 * (x - 1.0);
            opt.step(&mut store).unwrap();
        }
        assert!((store.value(w)[[0, 0]] - 1.0).abs() < 1e-2);
    }

    #[test]
    fn rejects_bad_input() {
        let mut store = ParamStore::new();
        let w = store.add("w", array![[0.0]]);
        assert!(Optimizer::new(OptimizerConfig { lr: -1.0, ..Default::default() }, &store).is_err());
        let mut opt = Optimizer::new(OptimizerConfig::default(), &store).unwrap();
        store.grad_mut(w)[[0, 0]] = f64::NAN;
        assert!(matches!(opt.step(&mut store), Err(Error::Numeric(_))));
    }
}
