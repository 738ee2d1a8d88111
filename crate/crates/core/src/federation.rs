//! The federated training loop.
//!
//! Every client profiles itself against the initial global model, the server
//! draws a cohort once, and each round the cohort trains locally from the
//! current global weights. The server then averages the returned weights
//! weighted by shard size, renormalized over the cohort.

use std::time::Instant;

use log::{debug, error, info};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::datasets::BagDataset;
use crate::error::{Error, Result};
use crate::metrics::{evaluate, EvalResult};
use crate::model::{train_local, LookaheadConfig, ModelConfig, Params};
use crate::partition::PartitionPlan;
use crate::rng::{self, tag};
use crate::scalar::Scalar;
use crate::selection::{
    diversity_kernel, profile_clients, quality_diversity_kernel, sample_kdpp, sample_random, ClientProfile, Kernel,
    SelectionMethod, Subset,
};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct FederationConfig {
    pub n_clients: usize,
    pub cohort_size: usize,
    pub rounds: usize,
    pub local_epochs: usize,
    pub method: SelectionMethod,
    /// Redraw the cohort from the same kernel every round instead of once.
    pub reselect_per_round: bool,
    pub optimizer: LookaheadConfig,
    pub model: ModelConfig,
    /// Evaluate every this many rounds; the final round is always evaluated.
    pub eval_every: usize,
    /// Quality floor.
    pub epsilon: f64,
    pub seed: u64,
    /// Train the cohort on the rayon pool.
    pub parallel: bool,
}

impl Default for FederationConfig {
    fn default() -> Self {
        Self {
            n_clients: 100,
            cohort_size: 10,
            rounds: 50,
            local_epochs: 1,
            method: SelectionMethod::Dppq,
            reselect_per_round: false,
            optimizer: LookaheadConfig::default(),
            model: ModelConfig::default(),
            eval_every: 1,
            epsilon: 0.01,
            seed: 0,
            parallel: false,
        }
    }
}

impl FederationConfig {
    pub fn validate(&self) -> Result<()> {
        if self.n_clients == 0 {
            return Err(Error::Config("n_clients must be >= 1".into()));
        }
        if self.cohort_size == 0 || self.cohort_size > self.n_clients {
            return Err(Error::Config(format!(
                "cohort_size must lie in 1..={}, got {}",
                self.n_clients, self.cohort_size
            )));
        }
        if self.rounds == 0 {
            return Err(Error::Config("rounds must be >= 1".into()));
        }
        if self.local_epochs == 0 {
            return Err(Error::Config("local_epochs must be >= 1".into()));
        }
        if self.eval_every == 0 {
            return Err(Error::Config("eval_every must be >= 1".into()));
        }
        if !(0.0..=1.0).contains(&self.epsilon) {
            return Err(Error::Config(format!("epsilon must lie in [0, 1], got {}", self.epsilon)));
        }
        self.optimizer.validate()?;
        self.model.shape().validate()
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RoundRecord {
    pub round: usize,
    pub selected: Vec<usize>,
    /// Shard-size-weighted mean of the cohort's local losses.
    pub global_loss: f64,
    pub eval: Option<EvalResult>,
    #[serde(skip)]
    pub wall_time: f64,
}

#[derive(Clone, Debug)]
pub struct FederationOutcome<T> {
    pub rounds: Vec<RoundRecord>,
    pub params: Params<T>,
    /// The first cohort drawn.
    pub selection: Subset,
    /// Empty for random selection, which never profiles.
    pub profiles: Vec<ClientProfile<T>>,
    pub kernel: Option<Kernel<T>>,
}

/// Weighted mean of client weights with weights `n_p / Σ n_p`.
pub fn aggregate<T: Scalar>(updates: &[(Params<T>, usize)]) -> Result<Params<T>> {
    let first = updates.first().ok_or_else(|| Error::Config("nothing to aggregate".into()))?;
    let shape = first.0.shape();
    if let Some((p, _)) = updates.iter().find(|(p, _)| p.shape() != shape) {
        return Err(Error::ShapeMismatch(format!("{:?} vs {:?}", p.shape(), shape)));
    }
    let total: usize = updates.iter().map(|(_, n)| n).sum();
    if total == 0 {
        return Err(Error::ZeroTotal);
    }
    let total = T::from_count(total);
    let mut out = Params::zeros(shape);
    for (p, n) in updates {
        out.add_scaled(p, T::from_count(*n) / total)?;
    }
    Ok(out)
}

/// `Σ (n_p / Σ n) L_p` over the cohort.
pub fn global_loss<T: Scalar>(losses: &[(T, usize)]) -> Result<T> {
    let total: usize = losses.iter().map(|(_, n)| n).sum();
    if total == 0 {
        return Err(Error::ZeroTotal);
    }
    let total = T::from_count(total);
    Ok(losses.iter().map(|&(l, n)| l * (T::from_count(n) / total)).sum())
}

/// Runs federation from `Params::init(&cfg.model)`.
pub fn run_federation<T: Scalar>(
    train: &BagDataset,
    test: Option<&BagDataset>,
    plan: &PartitionPlan,
    cfg: &FederationConfig,
) -> Result<FederationOutcome<T>> {
    cfg.validate()?;
    let init = Params::init(&cfg.model)?;
    run_federation_from(init, train, test, plan, cfg)
}

pub fn run_federation_from<T: Scalar>(
    init: Params<T>,
    train: &BagDataset,
    test: Option<&BagDataset>,
    plan: &PartitionPlan,
    cfg: &FederationConfig,
) -> Result<FederationOutcome<T>> {
    cfg.validate()?;
    if plan.n_clients() < cfg.n_clients {
        return Err(Error::Config(format!(
            "plan has {} clients, federation needs {}",
            plan.n_clients(),
            cfg.n_clients
        )));
    }
    let shards = &plan.shards[..cfg.n_clients];
    if let Some(s) = shards.iter().find(|s| s.is_empty()) {
        return Err(Error::EmptyShard(Some(s.client)));
    }
    if init.shape().input_dim != train.feature_dim() {
        return Err(Error::DimensionMismatch { expected: train.feature_dim(), actual: init.shape().input_dim });
    }

    // With P = N every method must return the whole population; skipping the
    // kernel also keeps N = 1 valid, where similarity is undefined.
    let everyone = cfg.cohort_size == cfg.n_clients;
    let (profiles, kernel) = match cfg.method {
        SelectionMethod::Random => (Vec::new(), None),
        _ if everyone => (profile_clients(&init, train, shards)?, None),
        m => {
            let profiles = profile_clients(&init, train, shards)?;
            let kernel = if m == SelectionMethod::Dpp {
                diversity_kernel(&profiles)?
            } else {
                quality_diversity_kernel(&profiles, T::lit(cfg.epsilon))?
            };
            (profiles, Some(kernel))
        }
    };
    let draw = |round: u64| -> Result<Subset> {
        let mut r = rng::stream(cfg.seed, &[tag::SELECTION, round]);
        match &kernel {
            _ if everyone => Ok(Subset { indices: (0..cfg.n_clients).collect(), method: cfg.method }),
            None => sample_random(cfg.n_clients, cfg.cohort_size, &mut r),
            Some(k) => Ok(Subset { indices: sample_kdpp(&k.eig, cfg.cohort_size, &mut r)?, method: cfg.method }),
        }
    };
    let selection = draw(0)?;
    info!("{} selected clients {:?}", cfg.method, selection.indices);

    let mut global = init;
    let mut rounds = Vec::with_capacity(cfg.rounds);
    let mut cohort = selection.clone();
    for t in 1..=cfg.rounds {
        let start = Instant::now();
        if cfg.reselect_per_round && t > 1 {
            cohort = draw(t as u64)?;
        }
        let work = |&c: &usize| {
            let shard = &shards[c];
            train_local(&global, train, &shard.bags, &cfg.optimizer, cfg.local_epochs)
                .map(|o| (o, shard.len()))
                .map_err(|e| match e {
                    Error::EmptyShard(None) => Error::EmptyShard(Some(shard.client)),
                    e => e,
                })
        };
        // Results stay in client order either way, so summation order is fixed.
        let outcomes: Vec<_> = if cfg.parallel {
            cohort.indices.par_iter().map(work).collect::<Result<_>>()?
        } else {
            cohort.indices.iter().map(work).collect::<Result<_>>()?
        };
        let loss = global_loss(&outcomes.iter().map(|(o, n)| (o.loss, *n)).collect::<Vec<_>>())?;
        let updates: Vec<(Params<T>, usize)> = outcomes.into_iter().map(|(o, n)| (o.params, n)).collect();
        let next = aggregate(&updates)?;
        if let Some((seg, i)) = next.first_non_finite() {
            error!("non-finite aggregated weight at round {t}, {} [{i}]", seg.name());
            for (c, (p, n)) in cohort.indices.iter().zip(&updates) {
                error!("  client {c}: n = {n}, |w| = {}, non-finite at {:?}", p.norm(), p.first_non_finite());
            }
            return Err(Error::NonFinite(format!("aggregated weights at round {t}, segment {} index {i}", seg.name())));
        }
        global = next;
        let eval = match test {
            Some(ds) if t % cfg.eval_every == 0 || t == cfg.rounds => Some(evaluate(&global, ds)?),
            _ => None,
        };
        let record = RoundRecord {
            round: t,
            selected: cohort.indices.clone(),
            global_loss: loss.as_f64(),
            eval,
            wall_time: start.elapsed().as_secs_f64(),
        };
        debug!("round {t}: loss {:.5}, acc {:?}", record.global_loss, record.eval.as_ref().map(|e| e.accuracy));
        rounds.push(record);
    }
    Ok(FederationOutcome { rounds, params: global, selection, profiles, kernel })
}
