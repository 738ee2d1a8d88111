use rand::seq::index;
use serde::{Deserialize, Serialize};

use super::{ClientShard, PartitionPlan};
use crate::error::{Error, Result};
use crate::rng;

/// Fraction `λ ∈ (0, 1]` of each client's shard that is actually used.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct UtilizationConfig {
    pub lambda: f64,
    pub rng_seed: u64,
}

impl UtilizationConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.lambda > 0.0 && self.lambda <= 1.0) {
            return Err(Error::Config(format!("data utilization must lie in (0, 1], got {}", self.lambda)));
        }
        Ok(())
    }
}

/// `⌈λ·len⌉`, with a guard against `0.3 · 10 = 3.0000000000000004`.
pub(crate) fn kept(lambda: f64, len: usize) -> usize {
    let raw = lambda * len as f64;
    ((raw - 1e-9 * raw.max(1.0)).ceil() as usize).min(len)
}

/// Each shard independently keeps a uniform random `⌈λ·|D_p|⌉`-subset.
pub fn apply_utilization(plan: &PartitionPlan, cfg: &UtilizationConfig) -> Result<PartitionPlan> {
    cfg.validate()?;
    let mut out = plan.clone();
    out.utilization = Some(cfg.lambda);
    if cfg.lambda == 1.0 {
        return Ok(out);
    }
    out.shards = plan
        .shards
        .iter()
        .map(|shard| {
            let keep = kept(cfg.lambda, shard.len());
            let mut rng = rng::stream(cfg.rng_seed, &[rng::tag::UTILIZATION, shard.client as u64]);
            let mut picked: Vec<usize> =
                index::sample(&mut rng, shard.len(), keep).into_iter().map(|i| shard.bags[i]).collect();
            picked.sort_unstable();
            ClientShard { client: shard.client, bags: picked }
        })
        .collect();
    Ok(out)
}
