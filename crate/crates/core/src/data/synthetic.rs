//! Seeded generator for benchmark-shaped embedding datasets: unit text
//! embeddings per class, a fixed shift per domain, isotropic noise.

use rand::Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use super::format::EmbeddingDataset;
use crate::error::{Error, Result};
use crate::math::{normalize, TextClassifier};
use crate::seeds::{derived_rng, tag};

fn default_scale() -> f64 {
    100.0
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SyntheticSpec {
    pub classes: usize,
    pub dim: usize,
    pub domains: usize,
    pub samples_per_domain: usize,
    /// Weight of the class text embedding in each sample.
    pub signal: f64,
    /// Norm of each domain's shift vector.
    pub domain_shift: f64,
    /// Per-coordinate noise standard deviation.
    pub noise: f64,
    #[serde(default = "default_scale")]
    pub logit_scale: f64,
}

fn gaussian_unit<R: Rng>(d: usize, rng: &mut R) -> Result<Vec<f64>> {
    let g: Vec<f64> = (0..d).map(|_| StandardNormal.sample(rng)).collect();
    normalize(&g)
}

/// Draws the dataset determined by `spec` and `seed`; labels cycle through
/// the classes so every domain is class-balanced.
pub fn synthesize(spec: &SyntheticSpec, seed: u64) -> Result<EmbeddingDataset> {
    if spec.classes < 2 || spec.dim == 0 || spec.domains == 0 || spec.samples_per_domain == 0 {
        return Err(Error::InvalidParams(format!("degenerate synthetic spec {spec:?}")));
    }
    let mut rng = derived_rng(seed, tag::SYNTHETIC, 0);
    let text = (0..spec.classes)
        .map(|_| gaussian_unit(spec.dim, &mut rng))
        .collect::<Result<Vec<_>>>()?;
    let shifts = (0..spec.domains)
        .map(|_| gaussian_unit(spec.dim, &mut rng))
        .collect::<Result<Vec<_>>>()?;
    let n = spec.domains * spec.samples_per_domain;
    let mut embeddings = Vec::with_capacity(n * spec.dim);
    let mut labels = Vec::with_capacity(n);
    let mut domains = Vec::with_capacity(n);
    for (dom, shift) in shifts.iter().enumerate() {
        let mut rng = derived_rng(seed, tag::SYNTHETIC, 1 + dom as u64);
        for i in 0..spec.samples_per_domain {
            let y = i % spec.classes;
            let row: Vec<f64> = (0..spec.dim)
                .map(|j| {
                    let g: f64 = StandardNormal.sample(&mut rng);
                    spec.signal * text[y][j] + spec.domain_shift * shift[j] + spec.noise * g
                })
                .collect();
            embeddings.extend(normalize(&row)?);
            labels.push(y as u32);
            domains.push(dom as u32);
        }
    }
    let names = (0..spec.classes).map(|y| format!("class_{y}")).collect();
    let clf = TextClassifier::new(text, names, spec.logit_scale)?;
    EmbeddingDataset::new(spec.dim, embeddings, labels, Some(domains), clf, false)
}
