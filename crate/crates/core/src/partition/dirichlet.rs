use rand::seq::SliceRandom;
use rand::Rng;
use rand_distr::{Distribution, Gamma};
use serde::{Deserialize, Serialize};

use super::{repair_empty_shards, ClientShard, PartitionPlan, PartitionScheme};
use crate::datasets::BagDataset;
use crate::error::{Error, Result};
use crate::rng::{self, SimRng};

/// Cluster-skew partitioning with a symmetric Dirichlet(α) per client.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct DirichletConfig {
    pub alpha: f64,
    pub num_clusters: usize,
    pub rng_seed: u64,
}

impl Default for DirichletConfig {
    fn default() -> Self {
        Self { alpha: 0.5, num_clusters: 10, rng_seed: 0 }
    }
}

impl DirichletConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.alpha > 0.0) || !self.alpha.is_finite() {
            return Err(Error::Config(format!("Dirichlet alpha must be > 0, got {}", self.alpha)));
        }
        if self.num_clusters == 0 {
            return Err(Error::Config("need at least one cluster".into()));
        }
        Ok(())
    }
}

/// One draw from the symmetric Dirichlet(α) on `dim` categories.
///
/// Gamma variates are produced in log space: for `α < 1`,
/// `ln G(α) = ln G(α + 1) + ln(U)/α`, which stays finite where `G(α)` itself
/// would underflow. Normalization is a log-sum-exp.
pub fn sample_dirichlet(alpha: f64, dim: usize, rng: &mut SimRng) -> Result<Vec<f64>> {
    if !(alpha > 0.0) || !alpha.is_finite() {
        return Err(Error::Config(format!("Dirichlet alpha must be > 0, got {alpha}")));
    }
    if dim == 1 {
        return Ok(vec![1.0]);
    }
    let boosted = alpha < 1.0;
    let shape = if boosted { alpha + 1.0 } else { alpha };
    let gamma = Gamma::new(shape, 1.0).map_err(|e| Error::Config(e.to_string()))?;
    let logs: Vec<f64> = (0..dim)
        .map(|_| {
            let g: f64 = gamma.sample(rng);
            let mut lg = g.ln();
            if boosted {
                let u = 1.0 - rng.random::<f64>();
                lg += u.ln() / alpha;
            }
            lg
        })
        .collect();
    let max = logs.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let lse = max + logs.iter().map(|l| (l - max).exp()).sum::<f64>().ln();
    Ok(logs.iter().map(|l| (l - lse).exp()).collect())
}

/// Splits `total` items proportionally to `weights`: floors first, then the
/// leftover goes one each to the largest fractional parts (ties → lower index).
/// All-zero weights split evenly.
pub fn largest_remainder(total: usize, weights: &[f64]) -> Vec<usize> {
    if weights.is_empty() {
        return Vec::new();
    }
    let sum: f64 = weights.iter().sum();
    let quotas: Vec<f64> = if sum > 0.0 {
        weights.iter().map(|w| total as f64 * w / sum).collect()
    } else {
        vec![total as f64 / weights.len() as f64; weights.len()]
    };
    let mut counts: Vec<usize> = quotas.iter().map(|q| q.floor() as usize).collect();
    let assigned: usize = counts.iter().sum();
    let mut order: Vec<usize> = (0..weights.len()).collect();
    order.sort_by(|&a, &b| {
        let fa = quotas[a] - quotas[a].floor();
        let fb = quotas[b] - quotas[b].floor();
        fb.total_cmp(&fa).then(a.cmp(&b))
    });
    for &i in order.iter().take(total.saturating_sub(assigned)) {
        counts[i] += 1;
    }
    counts
}

/// `clusters[i]` is the cluster label of bag `i`.
pub fn partition_type2(
    ds: &BagDataset,
    n_clients: usize,
    cfg: &DirichletConfig,
    clusters: &[usize],
) -> Result<PartitionPlan> {
    cfg.validate()?;
    if n_clients == 0 {
        return Err(Error::Config("need at least one client".into()));
    }
    if clusters.len() != ds.len() {
        return Err(Error::LengthMismatch(format!(
            "cluster map covers {} bags, dataset has {}",
            clusters.len(),
            ds.len()
        )));
    }
    if let Some(&bad) = clusters.iter().find(|&&c| c >= cfg.num_clusters) {
        return Err(Error::Config(format!("cluster label {bad} out of range for {} clusters", cfg.num_clusters)));
    }
    let mut rng = rng::stream(cfg.rng_seed, &[rng::tag::PARTITION, 2]);
    let weights: Vec<Vec<f64>> =
        (0..n_clients).map(|_| sample_dirichlet(cfg.alpha, cfg.num_clusters, &mut rng)).collect::<Result<_>>()?;

    let mut members: Vec<Vec<usize>> = vec![Vec::new(); cfg.num_clusters];
    for (i, &c) in clusters.iter().enumerate() {
        members[c].push(i);
    }
    let mut shards: Vec<ClientShard> = (0..n_clients).map(|client| ClientShard { client, bags: Vec::new() }).collect();
    for (c, pool) in members.iter_mut().enumerate() {
        pool.shuffle(&mut rng);
        let column: Vec<f64> = weights.iter().map(|w| w[c]).collect();
        let counts = largest_remainder(pool.len(), &column);
        let mut start = 0;
        for (shard, count) in shards.iter_mut().zip(counts) {
            shard.bags.extend_from_slice(&pool[start..start + count]);
            start += count;
        }
    }
    let repairs = repair_empty_shards(&mut shards);
    for s in &mut shards {
        s.bags.sort_unstable();
    }
    Ok(PartitionPlan {
        scheme: PartitionScheme::Dirichlet { config: cfg.clone() },
        shards,
        proportions: weights,
        unassigned: Vec::new(),
        repairs,
        utilization: None,
    })
}
