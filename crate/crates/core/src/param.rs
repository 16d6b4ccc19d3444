//! Named trainable parameters and the Adam optimizer.
//!
//! A [`ParamSet`] owns every tensor of a model together with its gradient
//! buffer and Adam moments. Parameters are addressed by stable [`ParamId`]s
//! (insertion order), and carry a `trainable` flag so fused models can freeze
//! their pre-trained bodies while the head trains.

use crate::error::{Error, Result};
use crate::tensor::Tensor;

#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct ParamId(pub(crate) usize);

impl ParamId {
    pub fn index(self) -> usize {
        self.0
    }
}

#[derive(Clone, Debug)]
pub struct Parameter {
    pub name: String,
    pub value: Tensor,
    pub grad: Tensor,
    pub trainable: bool,
    m: Tensor,
    v: Tensor,
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct AdamConfig {
    pub lr: f32,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
}

impl Default for AdamConfig {
    fn default() -> Self {
        AdamConfig {
            lr: 0.001,
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
        }
    }
}

#[derive(Clone, Debug, Default)]
pub struct ParamSet {
    params: Vec<Parameter>,
    /// Adam timestep, shared across the set; advances once per `adam_step`.
    step: u64,
}

impl ParamSet {
    pub fn new() -> Self {
        ParamSet::default()
    }

    pub fn add(&mut self, name: impl Into<String>, value: Tensor) -> ParamId {
        let name = name.into();
        debug_assert!(
            self.params.iter().all(|p| p.name != name),
            "duplicate parameter name {name}"
        );
        let shape = value.shape().to_vec();
        self.params.push(Parameter {
            name,
            grad: Tensor::zeros(&shape),
            m: Tensor::zeros(&shape),
            v: Tensor::zeros(&shape),
            value,
            trainable: true,
        });
        ParamId(self.params.len() - 1)
    }

    pub fn len(&self) -> usize {
        self.params.len()
    }

    pub fn is_empty(&self) -> bool {
        self.params.is_empty()
    }

    pub fn get(&self, id: ParamId) -> &Parameter {
        &self.params[id.0]
    }

    pub fn get_mut(&mut self, id: ParamId) -> &mut Parameter {
        &mut self.params[id.0]
    }

    pub fn ids(&self) -> impl Iterator<Item = ParamId> {
        (0..self.params.len()).map(ParamId)
    }

    pub fn iter(&self) -> impl Iterator<Item = (ParamId, &Parameter)> {
        self.params.iter().enumerate().map(|(i, p)| (ParamId(i), p))
    }

    pub fn by_name(&self, name: &str) -> Option<ParamId> {
        self.params.iter().position(|p| p.name == name).map(ParamId)
    }

    pub fn set_trainable(&mut self, id: ParamId, trainable: bool) {
        self.params[id.0].trainable = trainable;
    }

    pub fn zero_grads(&mut self) {
        for p in &mut self.params {
            p.grad.data_mut().fill(0.0);
        }
    }

    /// One Adam update over every trainable parameter, with bias correction.
    /// Moments are kept in f32 storage but the update math runs in f64.
    pub fn adam_step(&mut self, cfg: &AdamConfig) -> Result<()> {
        self.step += 1;
        let t = self.step as i32;
        let bc1 = 1.0 - cfg.beta1.powi(t);
        let bc2 = 1.0 - cfg.beta2.powi(t);
        for p in &mut self.params {
            if !p.trainable {
                continue;
            }
            for i in 0..p.value.len() {
                let g = p.grad.data()[i] as f64;
                if !g.is_finite() {
                    return Err(Error::State(format!(
                        "non-finite gradient in parameter {}",
                        p.name
                    )));
                }
                let m = cfg.beta1 * p.m.data()[i] as f64 + (1.0 - cfg.beta1) * g;
                let v = cfg.beta2 * p.v.data()[i] as f64 + (1.0 - cfg.beta2) * g * g;
                p.m.data_mut()[i] = m as f32;
                p.v.data_mut()[i] = v as f32;
                let m_hat = m / bc1;
                let v_hat = v / bc2;
                let delta = cfg.lr as f64 * m_hat / (v_hat.sqrt() + cfg.eps);
                p.value.data_mut()[i] -= delta as f32;
            }
        }
        Ok(())
    }

    /// Reset the optimizer moments and timestep (used when a new training
    /// phase starts over restored weights).
    pub fn reset_optimizer(&mut self) {
        self.step = 0;
        for p in &mut self.params {
            p.m.data_mut().fill(0.0);
            p.v.data_mut().fill(0.0);
        }
    }

    /// Snapshot of all parameter values, for checkpoint-in-memory use.
    pub fn snapshot(&self) -> Vec<Tensor> {
        self.params.iter().map(|p| p.value.clone()).collect()
    }

    pub fn restore(&mut self, snapshot: &[Tensor]) -> Result<()> {
        if snapshot.len() != self.params.len() {
            return Err(Error::State(format!(
                "snapshot has {} tensors, model has {}",
                snapshot.len(),
                self.params.len()
            )));
        }
        for (p, s) in self.params.iter_mut().zip(snapshot) {
            if p.value.shape() != s.shape() {
                return Err(Error::State(format!(
                    "snapshot shape {:?} does not match parameter {} {:?}",
                    s.shape(),
                    p.name,
                    p.value.shape()
                )));
            }
            p.value = s.clone();
        }
        Ok(())
    }
}
