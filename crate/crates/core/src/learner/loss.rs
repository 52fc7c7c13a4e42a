//! Combined actor-critic objective with analytic gradients.
//!
//! The optimiser minimises `−J^π + β₁ J^V − β₂ H`, i.e. it maximises the
//! policy objective and the entropy bonus while shrinking the squared TD error.

use nalgebra::DMatrix;

use super::policy::{masked_softmax, ActorCritic};
use crate::error::{Error, Result};

/// Minibatch view: column `b` of `observations` is sample `b`.
#[derive(Debug, Clone)]
pub struct Batch {
    pub observations: DMatrix<f64>,
    pub masks: Vec<Vec<bool>>,
    pub actions: Vec<usize>,
    pub advantages: Vec<f64>,
    pub returns: Vec<f64>,
}

impl Batch {
    pub fn len(&self) -> usize {
        self.actions.len()
    }

    pub fn is_empty(&self) -> bool {
        self.actions.is_empty()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct LossTerms {
    /// `mean(log π(a|s) · A)`.
    pub policy: f64,
    /// `mean((V(s) − target)²)`.
    pub value: f64,
    pub entropy: f64,
    pub total: f64,
}

#[derive(Debug, Clone)]
pub struct Gradients {
    pub policy: Vec<f64>,
    pub value: Vec<f64>,
}

fn check(batch: &Batch, ac: &ActorCritic) -> Result<()> {
    let n = batch.len();
    if n == 0 {
        return Err(Error::invalid("empty batch"));
    }
    if batch.observations.ncols() != n || batch.masks.len() != n || batch.advantages.len() != n || batch.returns.len() != n {
        return Err(Error::invalid("batch fields differ in length"));
    }
    if batch.observations.nrows() != ac.policy.input_size() {
        return Err(Error::invalid("observation width does not match the network"));
    }
    Ok(())
}

fn evaluate(ac: &ActorCritic, batch: &Batch, beta1: f64, beta2: f64, want_grad: bool) -> Result<(LossTerms, Option<Gradients>)> {
    check(batch, ac)?;
    let n = batch.len();
    let inv = 1.0 / n as f64;
    let pf = ac.policy.forward(&batch.observations);
    let vf = ac.value.forward(&batch.observations);
    let logits = pf.output();
    let values = vf.output();
    let mut terms = LossTerms::default();
    let mut dlogits = DMatrix::zeros(logits.nrows(), n);
    let mut dvalues = DMatrix::zeros(1, n);
    for b in 0..n {
        let column: Vec<f64> = logits.column(b).iter().copied().collect();
        let probs = masked_softmax(&column, &batch.masks[b])?;
        let a = batch.actions[b];
        if !batch.masks[b][a] {
            return Err(Error::invalid(format!("action {a} is masked out in sample {b}")));
        }
        // Log-probability via log-sum-exp so a vanishing probability stays finite.
        let max = column.iter().zip(&batch.masks[b]).filter(|(_, m)| **m).map(|(z, _)| *z).fold(f64::NEG_INFINITY, f64::max);
        let lse = max + column.iter().zip(&batch.masks[b]).filter(|(_, m)| **m).map(|(z, _)| (z - max).exp()).sum::<f64>().ln();
        let log_prob = column[a] - lse;
        let adv = batch.advantages[b];
        let h: f64 = -probs.iter().filter(|p| **p > 0.0).map(|p| p * p.ln()).sum::<f64>();
        terms.policy += log_prob * adv * inv;
        terms.entropy += h * inv;
        let err = values[(0, b)] - batch.returns[b];
        terms.value += err * err * inv;
        if want_grad {
            for (j, p) in probs.iter().enumerate() {
                if *p > 0.0 {
                    let onehot = if j == a { 1.0 } else { 0.0 };
                    dlogits[(j, b)] = inv * (-adv * (onehot - p) + beta2 * p * (p.ln() + h));
                }
            }
            dvalues[(0, b)] = inv * 2.0 * beta1 * err;
        }
    }
    terms.total = -terms.policy + beta1 * terms.value - beta2 * terms.entropy;
    if !terms.total.is_finite() {
        return Err(Error::NonFinite(format!("loss terms {terms:?}")));
    }
    let grads = want_grad.then(|| Gradients {
        policy: ac.policy.backward(&pf, &dlogits),
        value: ac.value.backward(&vf, &dvalues),
    });
    Ok((terms, grads))
}

pub fn total_loss(ac: &ActorCritic, batch: &Batch, beta1: f64, beta2: f64) -> Result<LossTerms> {
    Ok(evaluate(ac, batch, beta1, beta2, false)?.0)
}

pub fn loss_and_gradients(ac: &ActorCritic, batch: &Batch, beta1: f64, beta2: f64) -> Result<(LossTerms, Gradients)> {
    let (terms, grads) = evaluate(ac, batch, beta1, beta2, true)?;
    let grads = grads.expect("requested");
    if grads.policy.iter().chain(&grads.value).any(|g| !g.is_finite()) {
        return Err(Error::NonFinite("gradient".into()));
    }
    Ok((terms, grads))
}
