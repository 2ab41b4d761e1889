//! A synthesized federation: one raw dataset per client drawn from a
//! [`TheoryWorld`], indexed by a JSON federation manifest that also keeps the
//! world itself.

use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::format::{load_dataset, save_dataset, EmbeddingDataset};
use super::world::{sample_theory, TheoryWorld};
use crate::error::{Error, Result};
use crate::math::TextClassifier;
use crate::seeds::{derived_rng, tag};

pub const FEDERATION_MAGIC: &str = "latte-federation";
pub const FEDERATION_FILE: &str = "federation.json";

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct FederationClient {
    pub client: usize,
    /// OOD domain index, `None` for in-distribution clients.
    pub ood: Option<usize>,
    pub dataset: String,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct FederationManifest {
    pub magic: String,
    pub version: u32,
    pub seed: u64,
    pub samples_per_client: usize,
    pub world: TheoryWorld,
    pub clients: Vec<FederationClient>,
}

/// Domain of the `i`-th OOD client: the world's OOD pairs are used in turn.
pub fn ood_domain(world: &TheoryWorld, i: usize) -> Result<usize> {
    let n = world.ood_centers().len();
    if n == 0 {
        return Err(Error::InvalidParams("OOD clients requested but the world has no OOD centers".into()));
    }
    Ok(i % n)
}

/// Classifier equivalent to the world's head when its bias is zero: rows
/// `(−w, w)` at scale `t/2`.
pub fn theory_text_classifier(world: &TheoryWorld) -> Result<TextClassifier<f64>> {
    let w = world.w_pre().to_vec();
    let neg = w.iter().map(|v| -v).collect();
    TextClassifier::new(vec![neg, w], vec!["0".into(), "1".into()], 0.5 * world.t_scale())
}

/// Stream of client `client` of a theory federation: `(samples, labels)`,
/// classes drawn uniformly.
pub fn theory_stream(
    world: &TheoryWorld,
    ood: Option<usize>,
    n: usize,
    seed: u64,
    client: usize,
) -> Result<(Vec<Vec<f64>>, Vec<u32>)> {
    use rand::Rng;
    let mut rng = derived_rng(seed, tag::THEORY_STREAM, client as u64);
    let mut xs = Vec::with_capacity(n);
    let mut ys = Vec::with_capacity(n);
    for _ in 0..n {
        let y = usize::from(rng.random::<bool>());
        xs.push(sample_theory(world, y, ood, &mut rng)?);
        ys.push(y as u32);
    }
    Ok((xs, ys))
}

/// Writes `n_id + n_ood` client datasets and the federation manifest into
/// `dir`. Output bytes depend only on the arguments.
pub fn synthesize_federation(
    world: &TheoryWorld,
    n_id: usize,
    n_ood: usize,
    samples: usize,
    seed: u64,
    dir: &Path,
) -> Result<FederationManifest> {
    if n_id + n_ood == 0 || samples == 0 {
        return Err(Error::InvalidParams("need at least one client and one sample".into()));
    }
    fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    let clf = theory_text_classifier(world)?;
    let mut clients = Vec::new();
    for client in 0..n_id + n_ood {
        let ood = if client < n_id {
            None
        } else {
            Some(ood_domain(world, client - n_id)?)
        };
        let (xs, ys) = theory_stream(world, ood, samples, seed, client)?;
        let domains = vec![ood.map_or(0, |o| o as u32 + 1); samples];
        let ds = EmbeddingDataset::new(world.dim(), xs.concat(), ys, Some(domains), clf.clone(), true)?;
        let name = format!("client-{client:03}.json");
        save_dataset(&ds, &dir.join(&name))?;
        clients.push(FederationClient {
            client,
            ood,
            dataset: name,
        });
    }
    let manifest = FederationManifest {
        magic: FEDERATION_MAGIC.into(),
        version: 1,
        seed,
        samples_per_client: samples,
        world: world.clone(),
        clients,
    };
    let path = dir.join(FEDERATION_FILE);
    let json = serde_json::to_string_pretty(&manifest).expect("manifest serializes");
    fs::write(&path, format!("{json}\n")).map_err(|e| Error::io(&path, e))?;
    Ok(manifest)
}

/// Reads a federation manifest (a file, or a directory holding
/// `federation.json`) together with every client dataset.
pub fn load_federation(path: &Path) -> Result<(FederationManifest, Vec<EmbeddingDataset>)> {
    let file = if path.is_dir() {
        path.join(FEDERATION_FILE)
    } else {
        path.to_path_buf()
    };
    let text = fs::read_to_string(&file).map_err(|e| Error::io(&file, e))?;
    let value: serde_json::Value = serde_json::from_str(&text).map_err(|e| Error::BadMagic {
        path: file.clone(),
        detail: format!("not a JSON manifest: {e}"),
    })?;
    if value.get("magic").and_then(|m| m.as_str()) != Some(FEDERATION_MAGIC) {
        return Err(Error::BadMagic {
            path: file.clone(),
            detail: format!("expected {FEDERATION_MAGIC:?}"),
        });
    }
    let manifest: FederationManifest = serde_json::from_value(value).map_err(|e| Error::Manifest {
        path: file.clone(),
        detail: e.to_string(),
    })?;
    let dir = file.parent().unwrap_or(Path::new("."));
    let datasets = manifest
        .clients
        .iter()
        .map(|c| load_dataset(&dir.join(&c.dataset)))
        .collect::<Result<Vec<_>>>()?;
    Ok((manifest, datasets))
}
