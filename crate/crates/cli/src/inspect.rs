use anyhow::Context;
use fedmil::model::Params;
use fedmil::rng::{derive_seed, tag};
use fedmil::selection::{profile_clients, quality_diversity_kernel, ClientProfile, KernelDump};
use serde::Serialize;

use crate::config::ExperimentConfig;
use crate::experiment::{build_plan, cluster_labels, load_data, resolve};

#[derive(Debug, Serialize)]
pub struct KernelReport {
    pub strength: f64,
    pub utilization: f64,
    pub seed: u64,
    pub profiles: Vec<ClientProfile<f64>>,
    pub kernel: KernelDump,
}

/// Profiles the clients of run 0 in the first sweep cell and returns the
/// similarity, quality and kernel spectrum the DPPQ sampler would use.
pub fn inspect_kernel(cfg: &ExperimentConfig) -> anyhow::Result<KernelReport> {
    cfg.validate()?;
    let data = load_data(&cfg.dataset)?;
    let cfg = resolve(cfg, &data);
    let clusters = cluster_labels(&cfg, &data.train)?;
    let strength = *cfg.strengths.first().context("no strengths")?;
    let utilization = *cfg.utilizations.first().context("no utilizations")?;
    let seed = cfg.base_seed;
    let plan = build_plan(&cfg, &data.train, clusters.as_deref(), strength, utilization, seed)?;
    let mut model = cfg.federation.model.clone();
    model.init_seed = derive_seed(seed, &[tag::MODEL_INIT]);
    let params = Params::<f64>::init(&model)?;
    let profiles = profile_clients(&params, &data.train, &plan.shards[..cfg.federation.n_clients])?;
    let kernel = quality_diversity_kernel(&profiles, cfg.federation.epsilon)?;
    Ok(KernelReport { strength, utilization, seed, profiles, kernel: kernel.dump() })
}
