use rand::seq::SliceRandom;
use serde::{Deserialize, Serialize};

use super::{ClientShard, PartitionPlan, PartitionScheme};
use crate::datasets::BagDataset;
use crate::error::{Error, Result};
use crate::rng;

/// Label-skew partitioning: client `p ∈ 1..=N` targets a class-1 fraction of
/// `clamp(V·(p + H)^β, 0, 1)`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct PowerLawConfig {
    pub beta: f64,
    /// `V`; `None` means `0.9 / (N + H)^β`, so targets top out at 0.9.
    pub v_scale: Option<f64>,
    pub h_shift: f64,
    /// Fraction of clients that receive a single label only.
    pub holdout_fraction: f64,
    pub rng_seed: u64,
}

impl Default for PowerLawConfig {
    fn default() -> Self {
        Self { beta: 0.5, v_scale: None, h_shift: 1.0, holdout_fraction: 0.1, rng_seed: 0 }
    }
}

impl PowerLawConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.beta >= 0.0) || !self.beta.is_finite() {
            return Err(Error::Config(format!("beta must be >= 0, got {}", self.beta)));
        }
        if !(self.h_shift >= 0.0) || !self.h_shift.is_finite() {
            return Err(Error::Config(format!("H must be >= 0, got {}", self.h_shift)));
        }
        if !(0.0..1.0).contains(&self.holdout_fraction) {
            return Err(Error::Config(format!("holdout fraction must lie in [0, 1), got {}", self.holdout_fraction)));
        }
        if let Some(v) = self.v_scale {
            if !v.is_finite() {
                return Err(Error::Config(format!("V must be finite, got {v}")));
            }
        }
        Ok(())
    }

    pub fn resolved_v(&self, n_clients: usize) -> f64 {
        self.v_scale.unwrap_or_else(|| 0.9 / (n_clients as f64 + self.h_shift).powf(self.beta))
    }
}

/// Clamped targets `n_p` for `p = 1..=N` (index 0 holds client 1).
pub fn power_law_targets(n_clients: usize, cfg: &PowerLawConfig) -> Vec<f64> {
    let v = cfg.resolved_v(n_clients);
    (1..=n_clients).map(|p| (v * (p as f64 + cfg.h_shift).powf(cfg.beta)).clamp(0.0, 1.0)).collect()
}

fn class_one_count(target: f64, shard_size: usize) -> usize {
    (target * shard_size as f64).round() as usize
}

pub fn partition_type1(ds: &BagDataset, n_clients: usize, cfg: &PowerLawConfig) -> Result<PartitionPlan> {
    cfg.validate()?;
    if ds.num_classes() != 2 {
        return Err(Error::UnsupportedScheme(format!(
            "power-law partitioning needs binary labels, dataset has {} classes",
            ds.num_classes()
        )));
    }
    if n_clients == 0 {
        return Err(Error::Config("need at least one client".into()));
    }
    let mut rng = rng::stream(cfg.rng_seed, &[rng::tag::PARTITION, 1]);

    let mut targets = power_law_targets(n_clients, cfg);
    let n_holdout = (cfg.holdout_fraction * n_clients as f64).round() as usize;
    let mut order: Vec<usize> = (0..n_clients).collect();
    order.shuffle(&mut rng);
    let mut holdout: Vec<usize> = order[..n_holdout].to_vec();
    // First half (rounded up) of the drawn holdouts is pure class 0.
    for (k, &p) in holdout.iter().enumerate() {
        targets[p] = if k < n_holdout.div_ceil(2) { 0.0 } else { 1.0 };
    }
    holdout.sort_unstable();

    let mut pools: [Vec<usize>; 2] = [Vec::new(), Vec::new()];
    for (i, bag) in ds.bags().iter().enumerate() {
        pools[bag.label].push(i);
    }
    let (n0, n1) = (pools[0].len(), pools[1].len());
    let demand = |s: usize| -> (usize, usize) {
        targets.iter().fold((0, 0), |(d0, d1), &t| {
            let c1 = class_one_count(t, s);
            (d0 + s - c1, d1 + c1)
        })
    };
    let mut size = ds.len() / n_clients;
    while size > 0 {
        let (d0, d1) = demand(size);
        if d0 <= n0 && d1 <= n1 {
            break;
        }
        size -= 1;
    }
    if size == 0 {
        // Name the first client a sequential single-bag allocation starves.
        let (mut left0, mut left1) = (n0, n1);
        let mut culprit = 0;
        let mut reason = String::from("dataset has fewer bags than clients");
        for (p, &t) in targets.iter().enumerate() {
            let c1 = class_one_count(t, 1);
            let (pool, left) = if c1 == 1 { (1, &mut left1) } else { (0, &mut left0) };
            if *left == 0 {
                culprit = p;
                reason = format!("class-{pool} pool exhausted");
                break;
            }
            *left -= 1;
        }
        return Err(Error::InfeasiblePartition { client: culprit + 1, reason });
    }

    for pool in pools.iter_mut() {
        pool.shuffle(&mut rng);
    }
    let mut next = [0usize; 2];
    let shards = targets
        .iter()
        .enumerate()
        .map(|(p, &t)| {
            let c1 = class_one_count(t, size);
            let mut bags = Vec::with_capacity(size);
            for (class, count) in [(0, size - c1), (1, c1)] {
                bags.extend_from_slice(&pools[class][next[class]..next[class] + count]);
                next[class] += count;
            }
            bags.sort_unstable();
            ClientShard { client: p, bags }
        })
        .collect();
    let mut unassigned: Vec<usize> = pools[0][next[0]..].iter().chain(&pools[1][next[1]..]).copied().collect();
    unassigned.sort_unstable();

    Ok(PartitionPlan {
        scheme: PartitionScheme::PowerLaw {
            config: cfg.clone(),
            v_scale: cfg.resolved_v(n_clients),
            holdout_clients: holdout,
        },
        shards,
        proportions: targets.into_iter().map(|t| vec![t]).collect(),
        unassigned,
        repairs: Vec::new(),
        utilization: None,
    })
}
