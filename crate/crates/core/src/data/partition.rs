use std::collections::BTreeMap;

use rand::seq::SliceRandom;
use serde::{Deserialize, Serialize};

use super::format::EmbeddingDataset;
use crate::error::{Error, Result};
use crate::seeds::{derive_seed, derived_rng, tag};

/// One client's slice of a dataset, in stream order.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct ClientShard {
    pub client: usize,
    pub domain: u32,
    pub indices: Vec<usize>,
    /// Seed of the permutation that produced the stream order.
    pub seed: u64,
}

/// Splits every domain of `dataset` across `m` clients. Client ids are
/// assigned domain by domain in ascending domain order.
pub fn partition(dataset: &EmbeddingDataset, m: usize, seed: u64) -> Result<Vec<ClientShard>> {
    let domains: Vec<u32> = (0..dataset.len()).map(|i| dataset.domain_of(i)).collect();
    partition_domains(&domains, m, seed)
}

/// [`partition`] over bare per-sample domain tags.
pub fn partition_domains(domains: &[u32], m: usize, seed: u64) -> Result<Vec<ClientShard>> {
    if m == 0 {
        return Err(Error::InvalidParams("clients per domain must be at least 1".into()));
    }
    let mut by_domain: BTreeMap<u32, Vec<usize>> = BTreeMap::new();
    for (i, &d) in domains.iter().enumerate() {
        by_domain.entry(d).or_default().push(i);
    }
    let mut shards = Vec::with_capacity(by_domain.len() * m);
    for (&domain, indices) in &by_domain {
        if indices.len() < m {
            return Err(Error::EmptyDomain {
                domain,
                samples: indices.len(),
                clients: m,
            });
        }
        let mut order = indices.clone();
        order.shuffle(&mut derived_rng(seed, tag::PARTITION, domain as u64));
        let (base, extra) = (order.len() / m, order.len() % m);
        let mut start = 0;
        for j in 0..m {
            let len = base + usize::from(j < extra);
            let client = shards.len();
            let stream_seed = derive_seed(seed, tag::STREAM, client as u64);
            let mut idx = order[start..start + len].to_vec();
            idx.shuffle(&mut crate::seeds::rng(stream_seed));
            start += len;
            shards.push(ClientShard {
                client,
                domain,
                indices: idx,
                seed: stream_seed,
            });
        }
    }
    Ok(shards)
}
