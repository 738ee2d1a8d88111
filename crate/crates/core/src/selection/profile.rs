use serde::{Deserialize, Serialize};

use crate::datasets::BagDataset;
use crate::error::{Error, Result};
use crate::model::{forward, Params};
use crate::partition::ClientShard;
use crate::scalar::Scalar;

/// What a client shares with the server, once.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ClientProfile<T> {
    pub client_id: usize,
    /// Mean over bags of each bag's instance-mean embedding.
    pub mean_feature: Vec<T>,
    /// Mean per-bag loss.
    pub mean_loss: T,
    pub shard_size: usize,
}

pub fn profile_clients<T: Scalar>(
    params: &Params<T>,
    ds: &BagDataset,
    shards: &[ClientShard],
) -> Result<Vec<ClientProfile<T>>> {
    let m = params.shape().embed_dim;
    shards
        .iter()
        .map(|shard| {
            if shard.is_empty() {
                return Err(Error::EmptyShard(Some(shard.client)));
            }
            let mut feature = vec![T::zero(); m];
            let mut loss = T::zero();
            for &i in &shard.bags {
                let trace = forward(params, ds.bag(i))?;
                loss = loss + trace.loss();
                for (f, e) in feature.iter_mut().zip(trace.mean_embedding()) {
                    *f = *f + e;
                }
            }
            let inv = T::one() / T::from_count(shard.len());
            Ok(ClientProfile {
                client_id: shard.client,
                mean_feature: feature.into_iter().map(|f| f * inv).collect(),
                mean_loss: loss * inv,
                shard_size: shard.len(),
            })
        })
        .collect()
}
