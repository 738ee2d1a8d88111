use std::path::{Path, PathBuf};

use anyhow::{bail, ensure, Context};
use fedmil::{FederationConfig, SelectionMethod, SyntheticSpec};
use serde::{Deserialize, Serialize};

/// Where the bags come from.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase", deny_unknown_fields)]
pub enum DatasetSpec {
    /// Generated once from `spec.rng_seed`; every run shares it.
    Synthetic {
        #[serde(default)]
        spec: SyntheticSpec,
        #[serde(default = "default_test_fraction")]
        test_fraction: f64,
    },
    /// Directory with the four IDX files, optionally truncated.
    Mnist {
        path: PathBuf,
        #[serde(default)]
        train_limit: Option<usize>,
        #[serde(default)]
        test_limit: Option<usize>,
    },
    /// FBAG files; without `test`, `test_fraction` of `train` is held out.
    Fbag {
        train: PathBuf,
        #[serde(default)]
        test: Option<PathBuf>,
        #[serde(default = "default_test_fraction")]
        test_fraction: f64,
        #[serde(default)]
        split_seed: u64,
    },
}

fn default_test_fraction() -> f64 {
    0.2
}

impl Default for DatasetSpec {
    fn default() -> Self {
        DatasetSpec::Synthetic { spec: SyntheticSpec::default(), test_fraction: default_test_fraction() }
    }
}

/// Non-IID scheme. The strength sweep supplies β (Type I) or α (Type II).
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "scheme", rename_all = "lowercase", deny_unknown_fields)]
pub enum PartitionSpec {
    Type1 {
        #[serde(default = "one")]
        h_shift: f64,
        #[serde(default = "default_holdout")]
        holdout_fraction: f64,
        #[serde(default)]
        v_scale: Option<f64>,
    },
    Type2 {
        #[serde(default = "default_clusters")]
        num_clusters: usize,
    },
}

fn one() -> f64 {
    1.0
}

fn default_holdout() -> f64 {
    0.1
}

fn default_clusters() -> usize {
    10
}

impl Default for PartitionSpec {
    fn default() -> Self {
        PartitionSpec::Type2 { num_clusters: 10 }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ExperimentConfig {
    pub name: String,
    pub dataset: DatasetSpec,
    pub partition: PartitionSpec,
    pub strengths: Vec<f64>,
    pub utilizations: Vec<f64>,
    /// `seed` is overwritten per run; `model.input_dim` and
    /// `model.num_classes` are taken from the dataset.
    pub federation: FederationConfig,
    pub methods: Vec<SelectionMethod>,
    pub n_runs: usize,
    /// Run `i` uses seed `base_seed + i`.
    pub base_seed: u64,
    pub out_dir: PathBuf,
    /// Write the final global weights of every run.
    pub save_checkpoints: bool,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        Self {
            name: "experiment".into(),
            dataset: DatasetSpec::default(),
            partition: PartitionSpec::default(),
            strengths: vec![0.5],
            utilizations: vec![1.0],
            federation: FederationConfig::default(),
            methods: SelectionMethod::ALL.to_vec(),
            n_runs: 1,
            base_seed: 0,
            out_dir: PathBuf::from("results"),
            save_checkpoints: false,
        }
    }
}

impl ExperimentConfig {
    pub fn from_json(text: &str) -> anyhow::Result<Self> {
        serde_json::from_str(text).context("parsing experiment config")
    }

    pub fn load(path: impl AsRef<Path>) -> anyhow::Result<Self> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
        Self::from_json(&text).with_context(|| format!("in {}", path.display()))
    }

    /// Checks every field that does not depend on the data.
    pub fn validate(&self) -> anyhow::Result<()> {
        ensure!(self.n_runs >= 1, "n_runs must be >= 1");
        ensure!(!self.methods.is_empty(), "methods must not be empty");
        let mut seen = self.methods.clone();
        seen.sort_by_key(|m| m.as_str());
        seen.dedup();
        ensure!(seen.len() == self.methods.len(), "methods must be distinct");
        ensure!(!self.strengths.is_empty(), "strengths must not be empty");
        for &s in &self.strengths {
            ensure!(s > 0.0 && s.is_finite(), "strength must be > 0, got {s}");
        }
        ensure!(!self.utilizations.is_empty(), "utilizations must not be empty");
        for &u in &self.utilizations {
            ensure!(u > 0.0 && u <= 1.0, "utilization must lie in (0, 1], got {u}");
        }
        match &self.dataset {
            DatasetSpec::Synthetic { spec, test_fraction } => {
                spec.validate()?;
                ensure!(*test_fraction > 0.0 && *test_fraction < 1.0, "test_fraction must lie in (0, 1)");
            }
            DatasetSpec::Fbag { test: None, test_fraction, .. } => {
                ensure!(*test_fraction > 0.0 && *test_fraction < 1.0, "test_fraction must lie in (0, 1)");
            }
            _ => {}
        }
        match &self.partition {
            PartitionSpec::Type1 { holdout_fraction, .. } => {
                ensure!((0.0..1.0).contains(holdout_fraction), "holdout_fraction must lie in [0, 1)");
            }
            PartitionSpec::Type2 { num_clusters } => {
                if *num_clusters < 2 {
                    bail!("num_clusters must be >= 2 for k-means");
                }
            }
        }
        let mut fed = self.federation.clone();
        // Data-dependent fields are filled in later; check the rest now.
        fed.model.input_dim = fed.model.input_dim.max(1);
        fed.validate()?;
        Ok(())
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("config serializes")
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn empty_document_takes_defaults() {
        let cfg = ExperimentConfig::from_json("{}").unwrap();
        assert_eq!(cfg, ExperimentConfig::default());
        cfg.validate().unwrap();
    }

    #[test]
    fn round_trip() {
        let cfg = ExperimentConfig {
            partition: PartitionSpec::Type1 { h_shift: 1.0, holdout_fraction: 0.1, v_scale: Some(0.2) },
            dataset: DatasetSpec::Mnist { path: "data".into(), train_limit: Some(10), test_limit: None },
            ..ExperimentConfig::default()
        };
        assert_eq!(ExperimentConfig::from_json(&cfg.to_json()).unwrap(), cfg);
    }

    #[test]
    fn rejects_bad_fields() {
        assert!(ExperimentConfig::from_json(r#"{"n_rusn": 3}"#).is_err());
        let bad = |json: &str| ExperimentConfig::from_json(json).unwrap().validate().is_err();
        assert!(bad(r#"{"strengths": [0.0]}"#));
        assert!(bad(r#"{"utilizations": [1.5]}"#));
        assert!(bad(r#"{"methods": []}"#));
        assert!(bad(r#"{"methods": ["dpp", "dpp"]}"#));
        assert!(bad(r#"{"n_runs": 0}"#));
        assert!(bad(r#"{"federation": {"cohort_size": 200}}"#));
        assert!(bad(r#"{"partition": {"scheme": "type2", "num_clusters": 1}}"#));
    }
}
