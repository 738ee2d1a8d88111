//! Non-IID client partitioning.
//!
//! * Type I ([`partition_type1`]): per-client class-1 fraction follows the
//!   power law `n_p = V·(p + H)^β`, with a few single-label holdout clients.
//! * Type II ([`partition_type2`]): per-client Dirichlet(α) weights over
//!   k-means cluster labels decide how each cluster is split across clients.
//! * [`apply_utilization`] keeps a `λ` fraction of every shard.
//!
//! Shards hold indices into the dataset the plan was built from.

mod dirichlet;
mod kmeans;
mod power_law;
mod utilization;

use serde::{Deserialize, Serialize};

use crate::datasets::BagDataset;
use crate::error::{Error, Result};

pub use dirichlet::{largest_remainder, partition_type2, sample_dirichlet, DirichletConfig};
pub use kmeans::{kmeans_clusters, KMeansConfig, KMeansResult};
pub use power_law::{partition_type1, power_law_targets, PowerLawConfig};
pub use utilization::{apply_utilization, UtilizationConfig};

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct ClientShard {
    pub client: usize,
    /// Dataset indices, ascending.
    pub bags: Vec<usize>,
}

impl ClientShard {
    pub fn len(&self) -> usize {
        self.bags.len()
    }

    pub fn is_empty(&self) -> bool {
        self.bags.is_empty()
    }
}

/// One bag moved to fill an otherwise empty shard.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct ShardRepair {
    pub bag: usize,
    pub from_client: usize,
    pub to_client: usize,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "scheme", rename_all = "snake_case")]
pub enum PartitionScheme {
    PowerLaw {
        config: PowerLawConfig,
        /// `V` after defaulting.
        v_scale: f64,
        holdout_clients: Vec<usize>,
    },
    Dirichlet {
        config: DirichletConfig,
    },
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PartitionPlan {
    pub scheme: PartitionScheme,
    pub shards: Vec<ClientShard>,
    /// Type I: `[n_p]`, the targeted class-1 fraction per client.
    /// Type II: `[n_p^1, …, n_p^C]`, the drawn Dirichlet weights per client.
    pub proportions: Vec<Vec<f64>>,
    /// Bags no client received (Type I only, when the pools do not divide evenly).
    pub unassigned: Vec<usize>,
    pub repairs: Vec<ShardRepair>,
    /// Set once [`apply_utilization`] has run.
    pub utilization: Option<f64>,
}

/// Audit view of a plan keyed by bag id rather than dataset index.
#[derive(Clone, Debug, Serialize)]
pub struct PlanAudit<'a> {
    pub scheme: &'a PartitionScheme,
    pub clients: Vec<Vec<u64>>,
    pub proportions: &'a [Vec<f64>],
    pub unassigned: Vec<u64>,
    pub utilization: Option<f64>,
}

impl PartitionPlan {
    pub fn n_clients(&self) -> usize {
        self.shards.len()
    }

    pub fn shard_sizes(&self) -> Vec<usize> {
        self.shards.iter().map(ClientShard::len).collect()
    }

    pub fn audit<'a>(&'a self, ds: &BagDataset) -> PlanAudit<'a> {
        let ids = |idx: &[usize]| idx.iter().map(|&i| ds.bag(i).bag_id).collect::<Vec<_>>();
        PlanAudit {
            scheme: &self.scheme,
            clients: self.shards.iter().map(|s| ids(&s.bags)).collect(),
            proportions: &self.proportions,
            unassigned: ids(&self.unassigned),
            utilization: self.utilization,
        }
    }

    pub fn audit_json(&self, ds: &BagDataset) -> String {
        serde_json::to_string_pretty(&self.audit(ds)).expect("plan audit serializes")
    }

    /// Checks disjointness and index range.
    pub fn validate(&self, ds: &BagDataset) -> Result<()> {
        let mut seen = vec![false; ds.len()];
        for shard in &self.shards {
            for &b in &shard.bags {
                if b >= ds.len() {
                    return Err(Error::Malformed(format!(
                        "client {} references bag index {b} beyond dataset of {}",
                        shard.client,
                        ds.len()
                    )));
                }
                if std::mem::replace(&mut seen[b], true) {
                    return Err(Error::Malformed(format!("bag index {b} assigned twice")));
                }
            }
        }
        Ok(())
    }
}

/// Moves one bag from the largest shard into every empty shard.
fn repair_empty_shards(shards: &mut [ClientShard]) -> Vec<ShardRepair> {
    let mut repairs = Vec::new();
    while let Some(empty) = shards.iter().position(ClientShard::is_empty) {
        let donor = (0..shards.len())
            .max_by(|&a, &b| shards[a].len().cmp(&shards[b].len()).then(b.cmp(&a)))
            .expect("at least one shard");
        if shards[donor].len() < 2 {
            break;
        }
        let bag = shards[donor].bags.pop().expect("donor non-empty");
        shards[empty].bags.push(bag);
        repairs.push(ShardRepair { bag, from_client: donor, to_client: empty });
    }
    repairs
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn repair_fills_empty_from_largest() {
        let mut shards = vec![
            ClientShard { client: 0, bags: vec![0, 1] },
            ClientShard { client: 1, bags: vec![] },
            ClientShard { client: 2, bags: vec![2, 3, 4] },
        ];
        let repairs = repair_empty_shards(&mut shards);
        assert_eq!(repairs, vec![ShardRepair { bag: 4, from_client: 2, to_client: 1 }]);
        assert!(shards.iter().all(|s| !s.is_empty()));
    }
}
