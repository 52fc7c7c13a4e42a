//! Minibatch momentum SGD with a measured-KL accept/rollback rule.

use nalgebra::DMatrix;
use rand::seq::SliceRandom;
use rand::Rng;
use serde::{Deserialize, Serialize};

use super::buffer::RolloutBuffer;
use super::loss::{loss_and_gradients, total_loss, Batch, LossTerms};
use super::policy::{kl_divergence, ActorCritic};
use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum OptimizerKind {
    /// Heavy-ball SGD; `momentum` is the velocity decay.
    Momentum,
    /// Adam with `momentum` as β₁ and `second_moment_decay` as β₂.
    Adam,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct OptimConfig {
    pub kind: OptimizerKind,
    pub learning_rate: f64,
    pub momentum: f64,
    pub second_moment_decay: f64,
    pub minibatch: usize,
    pub epochs: usize,
    pub beta1: f64,
    pub beta2: f64,
    pub kl_bound: f64,
    /// Consecutive rejected epochs, across updates, before training halts.
    pub max_rollbacks: usize,
    /// Rescale each rollout's advantages to zero mean and unit variance.
    pub normalize_advantages: bool,
}

impl Default for OptimConfig {
    fn default() -> Self {
        Self {
            kind: OptimizerKind::Momentum,
            learning_rate: 5e-4,
            momentum: 0.9,
            second_moment_decay: 0.999,
            minibatch: 128,
            epochs: 4,
            beta1: 1.0,
            beta2: 0.01,
            kl_bound: 0.02,
            max_rollbacks: 8,
            normalize_advantages: true,
        }
    }
}

impl OptimConfig {
    pub fn validate(&self) -> Result<()> {
        let positive = [
            ("learning_rate", self.learning_rate),
            ("kl_bound", self.kl_bound),
            ("beta1", self.beta1),
        ];
        for (name, v) in positive {
            if !(v.is_finite() && v > 0.0) {
                return Err(Error::config(format!("optim.{name}"), "must be positive"));
            }
        }
        if !(0.0..1.0).contains(&self.momentum) {
            return Err(Error::config("optim.momentum", "must lie in [0, 1)"));
        }
        if !(0.0..1.0).contains(&self.second_moment_decay) {
            return Err(Error::config("optim.second_moment_decay", "must lie in [0, 1)"));
        }
        if !(self.beta2.is_finite() && self.beta2 >= 0.0) {
            return Err(Error::config("optim.beta2", "must be non-negative"));
        }
        if self.minibatch == 0 || self.epochs == 0 || self.max_rollbacks == 0 {
            return Err(Error::config("optim", "minibatch, epochs and max_rollbacks must be positive"));
        }
        Ok(())
    }
}

/// Optimiser state that outlives a single update.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Optimizer {
    pub policy: Moments,
    pub value: Moments,
    pub consecutive_rollbacks: usize,
}

/// Per-parameter first and second moments of one network.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Moments {
    pub first: Vec<f64>,
    pub second: Vec<f64>,
    pub steps: u64,
}

impl Moments {
    fn new(n: usize) -> Self {
        Self {
            first: vec![0.0; n],
            second: vec![0.0; n],
            steps: 0,
        }
    }

    fn step(&mut self, params: &mut [f64], grads: &[f64], lr: f64, cfg: &OptimConfig) {
        self.steps += 1;
        match cfg.kind {
            OptimizerKind::Momentum => {
                for ((p, v), g) in params.iter_mut().zip(&mut self.first).zip(grads) {
                    *v = cfg.momentum * *v + g;
                    *p -= lr * *v;
                }
            }
            OptimizerKind::Adam => {
                let (b1, b2) = (cfg.momentum, cfg.second_moment_decay);
                let c1 = 1.0 - b1.powi(self.steps as i32);
                let c2 = 1.0 - b2.powi(self.steps as i32);
                for (((p, m), v), g) in params.iter_mut().zip(&mut self.first).zip(&mut self.second).zip(grads) {
                    *m = b1 * *m + (1.0 - b1) * g;
                    *v = b2 * *v + (1.0 - b2) * g * g;
                    *p -= lr * (*m / c1) / ((*v / c2).sqrt() + 1e-8);
                }
            }
        }
    }
}

impl Optimizer {
    pub fn new(ac: &ActorCritic) -> Self {
        Self {
            policy: Moments::new(ac.policy.num_params()),
            value: Moments::new(ac.value.num_params()),
            consecutive_rollbacks: 0,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct UpdateStats {
    pub policy_objective: f64,
    pub value_loss: f64,
    pub entropy: f64,
    pub total_loss: f64,
    /// Mean `KL(old ‖ new)` of the parameters finally kept.
    pub kl: f64,
    pub accepted_epochs: usize,
    pub rollbacks: usize,
    pub final_learning_rate: f64,
}

/// Zero-mean, unit-variance copy; left centred only when the spread is ~0.
pub fn normalized(advantages: &[f64]) -> Vec<f64> {
    let n = advantages.len() as f64;
    let mean = advantages.iter().sum::<f64>() / n;
    let std = (advantages.iter().map(|a| (a - mean).powi(2)).sum::<f64>() / n).sqrt();
    let scale = if std > 1e-8 { 1.0 / std } else { 1.0 };
    advantages.iter().map(|a| (a - mean) * scale).collect()
}

fn gather(buffer: &RolloutBuffer, advantages: &[f64], indices: &[usize]) -> Batch {
    let width = buffer.transitions[0].observation.len();
    let mut observations = DMatrix::zeros(width, indices.len());
    for (c, &i) in indices.iter().enumerate() {
        observations.column_mut(c).copy_from_slice(&buffer.transitions[i].observation);
    }
    Batch {
        observations,
        masks: indices.iter().map(|&i| buffer.transitions[i].mask.clone()).collect(),
        actions: indices.iter().map(|&i| buffer.transitions[i].action).collect(),
        advantages: indices.iter().map(|&i| advantages[i]).collect(),
        returns: indices.iter().map(|&i| buffer.returns[i]).collect(),
    }
}

fn distributions(ac: &ActorCritic, batch: &Batch) -> Result<Vec<Vec<f64>>> {
    let logits = ac.policy.forward(&batch.observations);
    let logits = logits.output();
    (0..batch.len())
        .map(|b| {
            let column: Vec<f64> = logits.column(b).iter().copied().collect();
            super::policy::masked_softmax(&column, &batch.masks[b])
        })
        .collect()
}

fn mean_kl(old: &[Vec<f64>], new: &[Vec<f64>]) -> f64 {
    old.iter().zip(new).map(|(p, q)| kl_divergence(p, q)).sum::<f64>() / old.len() as f64
}

/// Runs `cfg.epochs` passes over `buffer` (whose advantages must be filled).
/// After each epoch the batch-mean `KL(π_old ‖ π_new)` against the rollout
/// policy is measured; an epoch that pushes it past `kl_bound` is undone and
/// the learning rate halved for the remaining epochs.
pub fn update(ac: &mut ActorCritic, opt: &mut Optimizer, buffer: &RolloutBuffer, cfg: &OptimConfig, rng: &mut impl Rng) -> Result<UpdateStats> {
    if buffer.is_empty() || buffer.advantages.len() != buffer.len() {
        return Err(Error::invalid("buffer is empty or its advantages are not computed"));
    }
    let advantages = if cfg.normalize_advantages {
        normalized(&buffer.advantages)
    } else {
        buffer.advantages.clone()
    };
    let all: Vec<usize> = (0..buffer.len()).collect();
    let full = gather(buffer, &advantages, &all);
    let old = distributions(ac, &full)?;
    let mut lr = cfg.learning_rate;
    let mut stats = UpdateStats::default();
    for _ in 0..cfg.epochs {
        let saved = (ac.clone(), opt.clone());
        let mut order = all.clone();
        order.shuffle(rng);
        for chunk in order.chunks(cfg.minibatch) {
            let batch = gather(buffer, &advantages, chunk);
            let (_, grads) = loss_and_gradients(ac, &batch, cfg.beta1, cfg.beta2)?;
            opt.policy.step(&mut ac.policy.params, &grads.policy, lr, cfg);
            opt.value.step(&mut ac.value.params, &grads.value, lr, cfg);
        }
        let kl = mean_kl(&old, &distributions(ac, &full)?);
        if kl.is_finite() && kl <= cfg.kl_bound {
            stats.accepted_epochs += 1;
            opt.consecutive_rollbacks = 0;
        } else {
            let rollbacks = opt.consecutive_rollbacks + 1;
            (*ac, *opt) = saved;
            opt.consecutive_rollbacks = rollbacks;
            stats.rollbacks += 1;
            lr *= 0.5;
            if rollbacks >= cfg.max_rollbacks {
                return Err(Error::TrustRegionExhausted { rollbacks, last_kl: kl });
            }
        }
    }
    let terms: LossTerms = total_loss(ac, &full, cfg.beta1, cfg.beta2)?;
    stats.policy_objective = terms.policy;
    stats.value_loss = terms.value;
    stats.entropy = terms.entropy;
    stats.total_loss = terms.total;
    stats.kl = mean_kl(&old, &distributions(ac, &full)?);
    stats.final_learning_rate = lr;
    Ok(stats)
}
