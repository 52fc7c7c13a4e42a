//! Masked categorical policy over the joint action space, plus the critic.

use nalgebra::DMatrix;
use rand::Rng;
use serde::{Deserialize, Serialize};

use super::nn::Mlp;
use crate::env::action::joint_action_count;
use crate::env::observation::{ObservationMatrix, FEATURES};
use crate::error::{Error, Result};

/// Softmax restricted to `mask`; masked-out entries get probability 0.
pub fn masked_softmax(logits: &[f64], mask: &[bool]) -> Result<Vec<f64>> {
    if logits.len() != mask.len() {
        return Err(Error::invalid("logits and mask differ in length"));
    }
    let max = logits
        .iter()
        .zip(mask)
        .filter(|(_, m)| **m)
        .map(|(l, _)| *l)
        .fold(f64::NEG_INFINITY, f64::max);
    if max == f64::NEG_INFINITY {
        return Err(Error::EmptyMask);
    }
    let mut probs: Vec<f64> = logits
        .iter()
        .zip(mask)
        .map(|(l, m)| if *m { (l - max).exp() } else { 0.0 })
        .collect();
    let total: f64 = probs.iter().sum();
    for p in &mut probs {
        *p /= total;
    }
    Ok(probs)
}

pub fn entropy(probs: &[f64]) -> f64 {
    -probs.iter().filter(|p| **p > 0.0).map(|p| p * p.ln()).sum::<f64>()
}

/// `KL(p ‖ q)` over the support of `p`.
pub fn kl_divergence(p: &[f64], q: &[f64]) -> f64 {
    p.iter()
        .zip(q)
        .filter(|(p, _)| **p > 0.0)
        .map(|(p, q)| p * (p.ln() - q.ln()))
        .sum()
}

pub fn sample(probs: &[f64], rng: &mut impl Rng) -> usize {
    let u: f64 = rng.gen();
    let mut acc = 0.0;
    let mut last = 0;
    for (i, p) in probs.iter().enumerate() {
        if *p > 0.0 {
            acc += p;
            last = i;
            if u < acc {
                return i;
            }
        }
    }
    last
}

pub fn argmax(probs: &[f64]) -> usize {
    probs
        .iter()
        .enumerate()
        .fold((0, f64::NEG_INFINITY), |best, (i, p)| if *p > best.1 { (i, *p) } else { best })
        .0
}

/// Per-feature input scaling applied before the networks.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ObservationScaling {
    pub scale: [f64; FEATURES],
}

impl Default for ObservationScaling {
    fn default() -> Self {
        Self {
            scale: [1.0 / 50.0, 1.0 / 8.0, 1.0 / 10.0, 1.0 / 5.0, 1.0],
        }
    }
}

impl ObservationScaling {
    pub fn apply(&self, obs: &ObservationMatrix) -> Vec<f64> {
        obs.rows
            .iter()
            .flat_map(|row| row.iter().zip(&self.scale).map(|(v, s)| v * s))
            .collect()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct NetworkConfig {
    pub hidden: Vec<usize>,
    pub policy_output_gain: f64,
    pub value_output_gain: f64,
    pub scaling: ObservationScaling,
}

impl Default for NetworkConfig {
    fn default() -> Self {
        Self {
            hidden: vec![128, 128],
            policy_output_gain: 0.01,
            value_output_gain: 1.0,
            scaling: ObservationScaling::default(),
        }
    }
}

/// Shared policy (actor) and value (critic) networks.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ActorCritic {
    pub policy: Mlp,
    pub value: Mlp,
    pub num_vehicles: usize,
    pub max_rows: usize,
    pub scaling: ObservationScaling,
}

impl ActorCritic {
    pub fn new(cfg: &NetworkConfig, num_vehicles: usize, max_rows: usize, rng: &mut impl Rng) -> Self {
        let input = max_rows * FEATURES;
        let mut sizes = vec![input];
        sizes.extend(&cfg.hidden);
        let mut policy_sizes = sizes.clone();
        policy_sizes.push(joint_action_count(num_vehicles));
        sizes.push(1);
        Self {
            policy: Mlp::new(&policy_sizes, cfg.policy_output_gain, rng),
            value: Mlp::new(&sizes, cfg.value_output_gain, rng),
            num_vehicles,
            max_rows,
            scaling: cfg.scaling,
        }
    }

    pub fn num_actions(&self) -> usize {
        self.policy.output_size()
    }

    pub fn encode(&self, obs: &ObservationMatrix) -> Result<Vec<f64>> {
        if obs.max_rows() != self.max_rows {
            return Err(Error::invalid(format!(
                "observation has {} rows, network expects {}",
                obs.max_rows(),
                self.max_rows
            )));
        }
        Ok(self.scaling.apply(obs))
    }

    pub fn logits(&self, x: &[f64]) -> Vec<f64> {
        let input = DMatrix::from_column_slice(x.len(), 1, x);
        self.policy.forward(&input).output().as_slice().to_vec()
    }

    pub fn value_of(&self, x: &[f64]) -> f64 {
        let input = DMatrix::from_column_slice(x.len(), 1, x);
        self.value.forward(&input).output()[(0, 0)]
    }

    /// Masked action distribution for an encoded observation.
    pub fn distribution(&self, x: &[f64], mask: &[bool]) -> Result<Vec<f64>> {
        masked_softmax(&self.logits(x), mask)
    }
}
