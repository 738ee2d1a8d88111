//! Bag-structured datasets.
//!
//! A [`Bag`] is one labelled sample made of `n ≥ 1` instance vectors of equal
//! dimension. Every loader produces a [`BagDataset`], so the partitioners,
//! the model and the federation loop never care where the bags came from.

mod fbag;
mod mnist;
mod synthetic;

use rand::seq::SliceRandom;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::rng;

pub use fbag::{decode_bags, encode_bags, load_bags, save_bags, FBAG_MAGIC, FBAG_VERSION};
pub use mnist::{load_mnist, parse_idx_images, parse_idx_labels, MnistData, IMAGES_MAGIC, LABELS_MAGIC};
pub use synthetic::{generate_synthetic, generate_synthetic_with_latents, SyntheticSpec};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Split {
    Train,
    Test,
}

/// One MIL sample. Instances are stored row-major (`n × dim`) as `f32`; all
/// arithmetic widens them to the model's scalar type.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Bag {
    pub bag_id: u64,
    pub label: usize,
    dim: usize,
    features: Vec<f32>,
}

impl Bag {
    pub fn new(bag_id: u64, label: usize, dim: usize, features: Vec<f32>) -> Result<Self> {
        if dim == 0 {
            return Err(Error::Config("instance dimension must be positive".into()));
        }
        if features.is_empty() || !features.len().is_multiple_of(dim) {
            return Err(Error::ShapeMismatch(format!(
                "bag {bag_id}: {} feature values is not a positive multiple of dimension {dim}",
                features.len()
            )));
        }
        Ok(Self { bag_id, label, dim, features })
    }

    pub fn from_instances(bag_id: u64, label: usize, instances: &[Vec<f32>]) -> Result<Self> {
        let dim = instances.first().map_or(0, Vec::len);
        if instances.iter().any(|x| x.len() != dim) {
            return Err(Error::ShapeMismatch(format!("bag {bag_id}: ragged instances")));
        }
        Self::new(bag_id, label, dim, instances.concat())
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn len(&self) -> usize {
        self.features.len() / self.dim
    }

    /// Bags are never empty; present for API symmetry with `len`.
    pub fn is_empty(&self) -> bool {
        self.features.is_empty()
    }

    pub fn instance(&self, i: usize) -> &[f32] {
        &self.features[i * self.dim..(i + 1) * self.dim]
    }

    pub fn instances(&self) -> impl Iterator<Item = &[f32]> {
        self.features.chunks_exact(self.dim)
    }

    pub fn features(&self) -> &[f32] {
        &self.features
    }

    /// Same bag with instances reordered by `order`.
    pub fn permuted(&self, order: &[usize]) -> Self {
        let mut features = Vec::with_capacity(self.features.len());
        for &i in order {
            features.extend_from_slice(self.instance(i));
        }
        Self { features, ..self.clone() }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct BagDataset {
    bags: Vec<Bag>,
    num_classes: usize,
    feature_dim: usize,
    split: Split,
}

impl BagDataset {
    /// Validates dimension, label range and id uniqueness.
    pub fn new(bags: Vec<Bag>, num_classes: usize, feature_dim: usize, split: Split) -> Result<Self> {
        if num_classes == 0 || feature_dim == 0 {
            return Err(Error::Config("num_classes and feature_dim must be positive".into()));
        }
        let mut ids = std::collections::HashSet::with_capacity(bags.len());
        for bag in &bags {
            if bag.dim() != feature_dim {
                return Err(Error::DimensionMismatch { expected: feature_dim, actual: bag.dim() });
            }
            if bag.label >= num_classes {
                return Err(Error::Malformed(format!(
                    "bag {} has label {} but the dataset has {num_classes} classes",
                    bag.bag_id, bag.label
                )));
            }
            if !ids.insert(bag.bag_id) {
                return Err(Error::Malformed(format!("duplicate bag id {}", bag.bag_id)));
            }
        }
        Ok(Self { bags, num_classes, feature_dim, split })
    }

    pub fn bags(&self) -> &[Bag] {
        &self.bags
    }

    pub fn bag(&self, i: usize) -> &Bag {
        &self.bags[i]
    }

    pub fn len(&self) -> usize {
        self.bags.len()
    }

    pub fn is_empty(&self) -> bool {
        self.bags.is_empty()
    }

    pub fn num_classes(&self) -> usize {
        self.num_classes
    }

    pub fn feature_dim(&self) -> usize {
        self.feature_dim
    }

    pub fn split(&self) -> Split {
        self.split
    }

    pub fn labels(&self) -> Vec<usize> {
        self.bags.iter().map(|b| b.label).collect()
    }

    pub fn class_counts(&self) -> Vec<usize> {
        let mut counts = vec![0; self.num_classes];
        for b in &self.bags {
            counts[b.label] += 1;
        }
        counts
    }

    /// First `n` bags (all of them if `n ≥ len`).
    pub fn truncated(&self, n: usize) -> Self {
        Self { bags: self.bags.iter().take(n).cloned().collect(), ..self.clone() }
    }

    /// Seeded shuffle, then the first `round(test_fraction · len)` bags become
    /// the test split. Bag ids are preserved.
    pub fn split_holdout(self, test_fraction: f64, seed: u64) -> Result<(Self, Self)> {
        if !(0.0..1.0).contains(&test_fraction) {
            return Err(Error::Config(format!("test fraction {test_fraction} must lie in [0, 1)")));
        }
        let n_test = (test_fraction * self.bags.len() as f64).round() as usize;
        let mut order: Vec<usize> = (0..self.bags.len()).collect();
        order.shuffle(&mut rng::stream(seed, &[rng::tag::SPLIT]));
        let mut slots: Vec<Option<Bag>> = self.bags.into_iter().map(Some).collect();
        let mut take = |idx: &[usize]| -> Vec<Bag> {
            let mut picked: Vec<usize> = idx.to_vec();
            picked.sort_unstable();
            picked.iter().map(|&i| slots[i].take().expect("unique index")).collect()
        };
        let test = take(&order[..n_test]);
        let train = take(&order[n_test..]);
        Ok((
            Self { bags: train, num_classes: self.num_classes, feature_dim: self.feature_dim, split: Split::Train },
            Self { bags: test, num_classes: self.num_classes, feature_dim: self.feature_dim, split: Split::Test },
        ))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn toy() -> BagDataset {
        let bags = (0..10).map(|i| Bag::new(i, (i % 2) as usize, 2, vec![i as f32; 4]).unwrap()).collect();
        BagDataset::new(bags, 2, 2, Split::Train).unwrap()
    }

    #[test]
    fn bag_rejects_ragged_features() {
        assert!(Bag::new(0, 0, 3, vec![0.0; 4]).is_err());
        assert!(Bag::new(0, 0, 3, vec![]).is_err());
        assert!(Bag::from_instances(0, 0, &[vec![1.0, 2.0], vec![1.0]]).is_err());
    }

    #[test]
    fn dataset_validates_labels_dims_and_ids() {
        let b = |id, label, dim| Bag::new(id, label, dim, vec![0.0; dim]).unwrap();
        assert!(BagDataset::new(vec![b(0, 2, 2)], 2, 2, Split::Train).is_err());
        assert!(BagDataset::new(vec![b(0, 0, 3)], 2, 2, Split::Train).is_err());
        assert!(BagDataset::new(vec![b(0, 0, 2), b(0, 1, 2)], 2, 2, Split::Train).is_err());
        assert!(BagDataset::new(vec![b(0, 0, 2), b(1, 1, 2)], 2, 2, Split::Train).is_ok());
    }

    #[test]
    fn holdout_split_is_disjoint_and_complete() {
        let (train, test) = toy().split_holdout(0.3, 5).unwrap();
        assert_eq!(test.len(), 3);
        assert_eq!(train.len(), 7);
        let mut ids: Vec<u64> = train.bags().iter().chain(test.bags()).map(|b| b.bag_id).collect();
        ids.sort_unstable();
        assert_eq!(ids, (0..10).collect::<Vec<_>>());
        assert_eq!(test.split(), Split::Test);
    }

    #[test]
    fn permuted_bag_keeps_instances() {
        let bag = Bag::from_instances(1, 0, &[vec![1.0, 2.0], vec![3.0, 4.0]]).unwrap();
        let p = bag.permuted(&[1, 0]);
        assert_eq!(p.instance(0), &[3.0, 4.0]);
        assert_eq!(p.instance(1), &[1.0, 2.0]);
    }
}
