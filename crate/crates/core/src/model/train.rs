use serde::{Deserialize, Serialize};

use super::network::{accumulate_gradient, forward};
use super::params::Params;
use crate::datasets::BagDataset;
use crate::error::{Error, Result};
use crate::scalar::Scalar;

/// Full-batch SGD wrapped in Lookahead: every `lookahead_steps` fast steps the
/// slow weights move `lookahead_alpha` of the way toward the fast ones and the
/// fast weights restart from there.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct LookaheadConfig {
    pub learning_rate: f64,
    pub lookahead_steps: usize,
    pub lookahead_alpha: f64,
}

impl Default for LookaheadConfig {
    fn default() -> Self {
        Self { learning_rate: 0.01, lookahead_steps: 5, lookahead_alpha: 0.5 }
    }
}

impl LookaheadConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.learning_rate >= 0.0) || !self.learning_rate.is_finite() {
            return Err(Error::Config(format!(
                "learning rate must be finite and non-negative, got {}",
                self.learning_rate
            )));
        }
        if self.lookahead_steps == 0 {
            return Err(Error::Config("lookahead_steps must be >= 1".into()));
        }
        if !(self.lookahead_alpha > 0.0 && self.lookahead_alpha <= 1.0) {
            return Err(Error::Config(format!("lookahead alpha must lie in (0, 1], got {}", self.lookahead_alpha)));
        }
        Ok(())
    }
}

#[derive(Clone, Debug)]
pub struct LocalOutcome<T> {
    pub params: Params<T>,
    /// Mean loss at the last gradient evaluation.
    pub loss: T,
}

/// Mean loss over `bags` and its gradient (sum of per-bag gradients, then scaled).
pub fn full_batch_gradient<T: Scalar>(params: &Params<T>, ds: &BagDataset, bags: &[usize]) -> Result<(T, Params<T>)> {
    if bags.is_empty() {
        return Err(Error::Config("full-batch gradient over an empty set".into()));
    }
    let mut grad = Params::zeros(params.shape());
    let mut total = T::zero();
    for &i in bags {
        let bag = ds.bag(i);
        let trace = forward(params, bag)?;
        total = total + trace.loss();
        accumulate_gradient(params, bag, &trace, &mut grad)?;
    }
    let inv = T::one() / T::from_count(bags.len());
    grad.scale(inv);
    Ok((total * inv, grad))
}

pub fn mean_loss<T: Scalar>(params: &Params<T>, ds: &BagDataset, bags: &[usize]) -> Result<T> {
    if bags.is_empty() {
        return Err(Error::Config("mean loss over an empty set".into()));
    }
    let mut total = T::zero();
    for &i in bags {
        total = total + forward(params, ds.bag(i))?.loss();
    }
    Ok(total / T::from_count(bags.len()))
}

/// `epochs` full-batch SGD steps under Lookahead; returns the slow weights.
///
/// Fast steps left over after the last full Lookahead cycle are folded into the
/// slow weights with one final interpolation, so `epochs < lookahead_steps`
/// still moves the model.
pub fn train_local<T: Scalar>(
    params: &Params<T>,
    ds: &BagDataset,
    bags: &[usize],
    cfg: &LookaheadConfig,
    epochs: usize,
) -> Result<LocalOutcome<T>> {
    cfg.validate()?;
    if bags.is_empty() {
        return Err(Error::EmptyShard(None));
    }
    let lr = T::lit(cfg.learning_rate);
    let alpha = T::lit(cfg.lookahead_alpha);
    let mut slow = params.clone();
    let mut fast = params.clone();
    let mut pending = 0;
    let mut loss = None;
    for _ in 0..epochs {
        let (l, grad) = full_batch_gradient(&fast, ds, bags)?;
        loss = Some(l);
        fast.add_scaled(&grad, -lr)?;
        fast.ensure_finite("fast weights after SGD step")?;
        pending += 1;
        if pending == cfg.lookahead_steps {
            slow.interpolate_toward(&fast, alpha)?;
            fast.clone_from(&slow);
            pending = 0;
        }
    }
    if pending > 0 {
        slow.interpolate_toward(&fast, alpha)?;
    }
    slow.ensure_finite("slow weights")?;
    let loss = match loss {
        Some(l) => l,
        None => mean_loss(&slow, ds, bags)?,
    };
    Ok(LocalOutcome { params: slow, loss })
}
