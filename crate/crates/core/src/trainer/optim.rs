use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::{GroupFlags, ModelParams, ParamGroup};
use crate::scalar::Scalar;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct OptimizerConfig {
    pub learning_rate: f64,
    /// Learning rate of the cosine map during max phases.
    pub max_phase_learning_rate: f64,
    pub momentum: f64,
    /// Global gradient-norm clip; 0 disables.
    pub grad_clip: f64,
}

impl Default for OptimizerConfig {
    fn default() -> Self {
        OptimizerConfig {
            learning_rate: 0.01,
            max_phase_learning_rate: 0.01,
            momentum: 0.9,
            grad_clip: 5.0,
        }
    }
}

impl OptimizerConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.learning_rate >= 0.0 && self.max_phase_learning_rate >= 0.0) {
            return Err(Error::Config("learning rates must be >= 0".into()));
        }
        if !(0.0..1.0).contains(&self.momentum) {
            return Err(Error::Config("momentum must lie in [0, 1)".into()));
        }
        if !(self.grad_clip >= 0.0) {
            return Err(Error::Config("grad_clip must be >= 0".into()));
        }
        Ok(())
    }
}

/// SGD with heavy-ball momentum and per-group learning rates.
#[derive(Debug, Clone)]
pub struct OptimizerState<T> {
    pub group_lr: [f64; 5],
    pub momentum: f64,
    pub grad_clip: f64,
    pub velocity: ModelParams<T>,
    pub step: u64,
}

fn group_index(g: ParamGroup) -> usize {
    ParamGroup::ALL.iter().position(|&h| h == g).unwrap()
}

impl<T: Scalar> OptimizerState<T> {
    pub fn new(params: &ModelParams<T>, cfg: &OptimizerConfig) -> Self {
        let mut group_lr = [cfg.learning_rate; 5];
        group_lr[group_index(ParamGroup::CosineMap)] = cfg.max_phase_learning_rate;
        OptimizerState {
            group_lr,
            momentum: cfg.momentum,
            grad_clip: cfg.grad_clip,
            velocity: params.zeros_like(),
            step: 0,
        }
    }

    pub fn lr(&self, g: ParamGroup) -> f64 {
        self.group_lr[group_index(g)]
    }

    pub fn set_lr(&mut self, g: ParamGroup, lr: f64) {
        self.group_lr[group_index(g)] = lr;
    }

    /// Applies one update to the groups in `active`. Other groups, their
    /// velocities included, are not touched at all.
    pub fn apply(&mut self, params: &mut ModelParams<T>, grads: &ModelParams<T>, active: GroupFlags) {
        let mut clip = T::one();
        if self.grad_clip > 0.0 {
            let sq: f64 = grads
                .tensors()
                .iter()
                .filter(|t| active.is_trainable(t.group))
                .flat_map(|t| t.data.iter())
                .map(|v| v.as_f64() * v.as_f64())
                .sum();
            let n = sq.sqrt();
            if n > self.grad_clip {
                clip = T::of(self.grad_clip / n);
            }
        }
        let mu = T::of(self.momentum);
        let g_tensors = grads.tensors();
        let p_tensors = params.tensors_mut();
        let v_tensors = self.velocity.tensors_mut();
        let mut head_touched = false;
        for ((p, v), g) in p_tensors.into_iter().zip(v_tensors).zip(&g_tensors) {
            if !active.is_trainable(p.group) {
                continue;
            }
            let lr = T::of(self.group_lr[group_index(p.group)]);
            if lr == T::zero() {
                continue;
            }
            head_touched |= p.group == ParamGroup::IdHead;
            for ((w, vel), &gr) in p.data.iter_mut().zip(v.data.iter_mut()).zip(g.data) {
                *vel = mu * *vel + gr * clip;
                *w -= lr * *vel;
            }
        }
        if head_touched {
            params.renormalize_id_head();
        }
        self.step += 1;
    }
}
