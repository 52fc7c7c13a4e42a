//! Rollout storage and one-step TD advantages.

use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq)]
pub struct Transition {
    pub observation: Vec<f64>,
    pub mask: Vec<bool>,
    pub action: usize,
    pub log_prob: f64,
    pub reward: f64,
    pub value: f64,
    pub done: bool,
}

#[derive(Debug, Clone, Default)]
pub struct RolloutBuffer {
    pub transitions: Vec<Transition>,
    pub advantages: Vec<f64>,
    pub returns: Vec<f64>,
}

impl RolloutBuffer {
    pub fn with_capacity(n: usize) -> Self {
        Self {
            transitions: Vec::with_capacity(n),
            ..Self::default()
        }
    }

    pub fn len(&self) -> usize {
        self.transitions.len()
    }

    pub fn is_empty(&self) -> bool {
        self.transitions.is_empty()
    }

    pub fn push(&mut self, t: Transition) {
        self.transitions.push(t);
    }

    pub fn clear(&mut self) {
        self.transitions.clear();
        self.advantages.clear();
        self.returns.clear();
    }

    /// Fills `advantages` and `returns`; `bootstrap` is the value of the state
    /// reached after the last stored transition.
    pub fn finish(&mut self, bootstrap: f64, gamma: f64) -> Result<()> {
        let rewards: Vec<f64> = self.transitions.iter().map(|t| t.reward).collect();
        let values: Vec<f64> = self.transitions.iter().map(|t| t.value).collect();
        let dones: Vec<bool> = self.transitions.iter().map(|t| t.done).collect();
        let (adv, ret) = compute_advantages(&rewards, &values, &dones, bootstrap, gamma)?;
        self.advantages = adv;
        self.returns = ret;
        Ok(())
    }
}

/// `A_t = r_t + γ V(s_{t+1}) − V(s_t)`, with the bootstrap dropped on terminal
/// steps. Returns `(advantages, targets)` where `target = A_t + V(s_t)`.
pub fn compute_advantages(rewards: &[f64], values: &[f64], dones: &[bool], bootstrap: f64, gamma: f64) -> Result<(Vec<f64>, Vec<f64>)> {
    let n = rewards.len();
    if values.len() != n || dones.len() != n {
        return Err(Error::invalid("rewards, values and dones differ in length"));
    }
    let mut advantages = Vec::with_capacity(n);
    let mut targets = Vec::with_capacity(n);
    for t in 0..n {
        let next = if dones[t] {
            0.0
        } else if t + 1 < n {
            values[t + 1]
        } else {
            bootstrap
        };
        let target = rewards[t] + gamma * next;
        advantages.push(target - values[t]);
        targets.push(target);
    }
    Ok((advantages, targets))
}
