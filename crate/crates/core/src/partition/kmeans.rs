//! Lloyd's k-means over every instance vector, seeded with k-means++, then a
//! per-bag majority vote.

use std::collections::HashSet;

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::datasets::BagDataset;
use crate::error::{Error, Result};
use crate::rng;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct KMeansConfig {
    pub k: usize,
    pub max_iterations: usize,
    /// Stop once `|Δinertia| ≤ tolerance · inertia`.
    pub tolerance: f64,
    pub rng_seed: u64,
}

impl KMeansConfig {
    pub fn new(k: usize, rng_seed: u64) -> Self {
        Self { k, max_iterations: 100, tolerance: 1e-6, rng_seed }
    }
}

#[derive(Clone, Debug)]
pub struct KMeansResult {
    pub bag_clusters: Vec<usize>,
    pub centroids: Vec<Vec<f64>>,
    pub inertia: f64,
    pub iterations: usize,
}

#[inline]
fn dist2(x: &[f32], c: &[f64]) -> f64 {
    x.iter()
        .zip(c)
        .map(|(&a, &b)| {
            let d = f64::from(a) - b;
            d * d
        })
        .sum()
}

fn nearest(x: &[f32], centroids: &[Vec<f64>]) -> (usize, f64) {
    let mut best = (0, f64::INFINITY);
    for (j, c) in centroids.iter().enumerate() {
        let d = dist2(x, c);
        if d < best.1 {
            best = (j, d);
        }
    }
    best
}

pub fn kmeans_clusters(ds: &BagDataset, k: usize, rng_seed: u64) -> Result<KMeansResult> {
    kmeans_with(ds, &KMeansConfig::new(k, rng_seed))
}

pub fn kmeans_with(ds: &BagDataset, cfg: &KMeansConfig) -> Result<KMeansResult> {
    if cfg.k < 2 {
        return Err(Error::Config(format!("k-means needs k >= 2, got {}", cfg.k)));
    }
    if ds.is_empty() {
        return Err(Error::Config("k-means on an empty dataset".into()));
    }
    let points: Vec<&[f32]> = ds.bags().iter().flat_map(|b| b.instances()).collect();

    let mut distinct = HashSet::new();
    for p in &points {
        distinct.insert(p.iter().map(|x| x.to_bits()).collect::<Vec<u32>>());
        if distinct.len() >= cfg.k {
            break;
        }
    }
    if distinct.len() < cfg.k {
        return Err(Error::DegenerateClustering { requested: cfg.k, distinct: distinct.len() });
    }

    let mut rng = rng::stream(cfg.rng_seed, &[rng::tag::KMEANS]);
    let widen = |p: &[f32]| p.iter().map(|&x| f64::from(x)).collect::<Vec<f64>>();

    // k-means++ seeding.
    let mut centroids = vec![widen(points[rng.random_range(0..points.len())])];
    let mut d2: Vec<f64> = points.iter().map(|p| dist2(p, &centroids[0])).collect();
    while centroids.len() < cfg.k {
        let total: f64 = d2.iter().sum();
        let pick = if total > 0.0 {
            let mut target = rng.random::<f64>() * total;
            let mut chosen = d2.len() - 1;
            for (i, &w) in d2.iter().enumerate() {
                if target < w {
                    chosen = i;
                    break;
                }
                target -= w;
            }
            chosen
        } else {
            rng.random_range(0..points.len())
        };
        let c = widen(points[pick]);
        for (d, p) in d2.iter_mut().zip(&points) {
            *d = d.min(dist2(p, &c));
        }
        centroids.push(c);
    }

    let dim = ds.feature_dim();
    let mut assign = vec![0usize; points.len()];
    let mut prev = f64::INFINITY;
    let mut inertia;
    let mut iterations = 0;
    loop {
        inertia = 0.0;
        for (a, p) in assign.iter_mut().zip(&points) {
            let (j, d) = nearest(p, &centroids);
            *a = j;
            inertia += d;
        }
        if (prev - inertia).abs() <= cfg.tolerance * inertia || iterations >= cfg.max_iterations {
            break;
        }
        prev = inertia;
        let mut sums = vec![vec![0.0f64; dim]; cfg.k];
        let mut counts = vec![0usize; cfg.k];
        for (&a, p) in assign.iter().zip(&points) {
            counts[a] += 1;
            for (s, &x) in sums[a].iter_mut().zip(p.iter()) {
                *s += f64::from(x);
            }
        }
        for ((c, s), &n) in centroids.iter_mut().zip(sums).zip(&counts) {
            // An emptied cluster keeps its previous centroid.
            if n > 0 {
                *c = s.into_iter().map(|v| v / n as f64).collect();
            }
        }
        iterations += 1;
    }

    let mut bag_clusters = Vec::with_capacity(ds.len());
    let mut offset = 0;
    for bag in ds.bags() {
        let mut votes = vec![0usize; cfg.k];
        for &a in &assign[offset..offset + bag.len()] {
            votes[a] += 1;
        }
        offset += bag.len();
        let top = *votes.iter().max().expect("k >= 2");
        bag_clusters.push(votes.iter().position(|&v| v == top).expect("max exists"));
    }
    Ok(KMeansResult { bag_clusters, centroids, inertia, iterations })
}
