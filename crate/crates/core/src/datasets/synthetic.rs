//! Synthetic feature bags shaped like pre-extracted video features.
//!
//! Each bag draws a latent cluster uniformly and a class label uniformly. Its
//! instances are isotropic unit-variance Gaussians around a centroid
//! `μ_cluster + offset(cluster, class)`. Cluster means are far apart (so k-means
//! recovers them). Class offsets mix a direction shared across clusters with a
//! cluster-specific one, so the decision boundary shifts from cluster to
//! cluster while a single linear direction still beats chance.

use rand::Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use super::{Bag, BagDataset, Split};
use crate::error::{Error, Result};
use crate::rng;

/// Standard deviation of the cluster means, per coordinate.
const CLUSTER_SPREAD: f64 = 1.0;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SyntheticSpec {
    pub num_bags: usize,
    pub instances_per_bag: usize,
    pub feature_dim: usize,
    pub num_classes: usize,
    pub num_latent_clusters: usize,
    pub class_separation: f64,
    pub rng_seed: u64,
}

impl Default for SyntheticSpec {
    fn default() -> Self {
        Self {
            num_bags: 4500,
            instances_per_bag: 50,
            feature_dim: 64,
            num_classes: 2,
            num_latent_clusters: 10,
            class_separation: 1.0,
            rng_seed: 0,
        }
    }
}

impl SyntheticSpec {
    pub fn validate(&self) -> Result<()> {
        let counts = [
            ("num_bags", self.num_bags),
            ("instances_per_bag", self.instances_per_bag),
            ("feature_dim", self.feature_dim),
            ("num_classes", self.num_classes),
            ("num_latent_clusters", self.num_latent_clusters),
        ];
        for (name, v) in counts {
            if v == 0 {
                return Err(Error::Config(format!("synthetic spec: {name} must be positive")));
            }
        }
        if !(self.class_separation > 0.0) || !self.class_separation.is_finite() {
            return Err(Error::Config(format!(
                "synthetic spec: class_separation must be > 0, got {}",
                self.class_separation
            )));
        }
        Ok(())
    }
}

pub fn generate_synthetic(spec: &SyntheticSpec) -> Result<BagDataset> {
    generate_synthetic_with_latents(spec).map(|(ds, _)| ds)
}

/// Like [`generate_synthetic`], also returning each bag's latent cluster.
pub fn generate_synthetic_with_latents(spec: &SyntheticSpec) -> Result<(BagDataset, Vec<usize>)> {
    spec.validate()?;
    let mut rng = rng::stream(spec.rng_seed, &[rng::tag::DATASET]);
    let d = spec.feature_dim;
    let normal = move |rng: &mut rng::SimRng| -> f64 { StandardNormal.sample(rng) };

    let cluster_means: Vec<Vec<f64>> =
        (0..spec.num_latent_clusters).map(|_| (0..d).map(|_| CLUSTER_SPREAD * normal(&mut rng)).collect()).collect();
    let unit = |rng: &mut rng::SimRng| -> Vec<f64> {
        let v: Vec<f64> = (0..d).map(|_| normal(rng)).collect();
        let norm = v.iter().map(|x| x * x).sum::<f64>().sqrt().max(1e-12);
        v.into_iter().map(|x| x / norm).collect()
    };
    // Each class offset is half a direction shared by all clusters and half a
    // cluster-specific one. Independent directions are near-orthogonal, so two
    // centroids of the same cluster sit ≈ class_separation apart and the
    // shared half gives a single linear direction that beats chance.
    let shared: Vec<Vec<f64>> = (0..spec.num_classes).map(|_| unit(&mut rng)).collect();
    let half = spec.class_separation / std::f64::consts::SQRT_2;
    let centroids: Vec<Vec<Vec<f64>>> = cluster_means
        .iter()
        .map(|mu| {
            shared
                .iter()
                .map(|g| {
                    let own = unit(&mut rng);
                    let dir: Vec<f64> = g.iter().zip(&own).map(|(a, b)| a + b).collect();
                    let norm = dir.iter().map(|x| x * x).sum::<f64>().sqrt().max(1e-12);
                    mu.iter().zip(&dir).map(|(m, u)| m + half * u / norm).collect()
                })
                .collect()
        })
        .collect();

    let mut bags = Vec::with_capacity(spec.num_bags);
    let mut latents = Vec::with_capacity(spec.num_bags);
    for id in 0..spec.num_bags {
        let cluster = rng.random_range(0..spec.num_latent_clusters);
        let label = rng.random_range(0..spec.num_classes);
        let centre = &centroids[cluster][label];
        let mut features = Vec::with_capacity(spec.instances_per_bag * d);
        for _ in 0..spec.instances_per_bag {
            features.extend(centre.iter().map(|c| (c + normal(&mut rng)) as f32));
        }
        bags.push(Bag::new(id as u64, label, d, features)?);
        latents.push(cluster);
    }
    Ok((BagDataset::new(bags, spec.num_classes, d, Split::Train)?, latents))
}
