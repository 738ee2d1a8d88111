use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};

use anyhow::{bail, Context};
use fedmil::datasets::{generate_synthetic, load_bags, load_mnist};
use fedmil::federation::run_federation;
use fedmil::metrics::{summarize, EvalResult, F1Kind, MetricSummary, RunStats};
use fedmil::model::save_params;
use fedmil::partition::{apply_utilization, kmeans_clusters, partition_type1, partition_type2};
use fedmil::rng::{derive_seed, tag};
use fedmil::{
    BagDataset, DirichletConfig, FederationOutcome, PartitionPlan, PowerLawConfig, RoundRecord, SelectionMethod,
    UtilizationConfig,
};
use log::info;
use serde::{Deserialize, Serialize};

use crate::config::{DatasetSpec, ExperimentConfig, PartitionSpec};

pub const INCOMPLETE_MARKER: &str = "INCOMPLETE";
pub const CONFIG_FILE: &str = "config.json";
pub const SUMMARY_JSON: &str = "summary.json";
pub const SUMMARY_CSV: &str = "summary.csv";
pub const RUNS_DIR: &str = "runs";
pub const ROUND_HEADER: &str = "round,method,loss,acc,f1,auc";

/// Train and test bags.
#[derive(Clone, Debug)]
pub struct Data {
    pub train: BagDataset,
    pub test: BagDataset,
}

pub fn load_data(spec: &DatasetSpec) -> anyhow::Result<Data> {
    let (train, test) = match spec {
        DatasetSpec::Synthetic { spec, test_fraction } => {
            generate_synthetic(spec)?.split_holdout(*test_fraction, derive_seed(spec.rng_seed, &[tag::SPLIT]))?
        }
        DatasetSpec::Mnist { path, train_limit, test_limit } => {
            let data = load_mnist(path)?;
            let cut = |ds: BagDataset, n: &Option<usize>| match n {
                Some(n) => ds.truncated(*n),
                None => ds,
            };
            (cut(data.train, train_limit), cut(data.test, test_limit))
        }
        DatasetSpec::Fbag { train, test, test_fraction, split_seed } => {
            let all = load_bags(train)?;
            match test {
                Some(t) => (all, load_bags(t)?),
                None => all.split_holdout(*test_fraction, *split_seed)?,
            }
        }
    };
    if train.feature_dim() != test.feature_dim() || train.num_classes() != test.num_classes() {
        bail!(
            "train ({}-dim, {} classes) and test ({}-dim, {} classes) disagree",
            train.feature_dim(),
            train.num_classes(),
            test.feature_dim(),
            test.num_classes()
        );
    }
    Ok(Data { train, test })
}

/// Copies the data-dependent model dimensions into the config.
pub fn resolve(cfg: &ExperimentConfig, data: &Data) -> ExperimentConfig {
    let mut out = cfg.clone();
    out.federation.model.input_dim = data.train.feature_dim();
    out.federation.model.num_classes = data.train.num_classes();
    out
}

/// Cluster labels for Type II, computed once per experiment.
pub fn cluster_labels(cfg: &ExperimentConfig, train: &BagDataset) -> anyhow::Result<Option<Vec<usize>>> {
    match cfg.partition {
        PartitionSpec::Type2 { num_clusters } => {
            let km = kmeans_clusters(train, num_clusters, derive_seed(cfg.base_seed, &[tag::KMEANS]))?;
            Ok(Some(km.bag_clusters))
        }
        PartitionSpec::Type1 { .. } => Ok(None),
    }
}

pub fn build_plan(
    cfg: &ExperimentConfig,
    train: &BagDataset,
    clusters: Option<&[usize]>,
    strength: f64,
    utilization: f64,
    run_seed: u64,
) -> anyhow::Result<PartitionPlan> {
    let n = cfg.federation.n_clients;
    let partition_seed = derive_seed(run_seed, &[tag::PARTITION]);
    let plan = match &cfg.partition {
        PartitionSpec::Type1 { h_shift, holdout_fraction, v_scale } => partition_type1(
            train,
            n,
            &PowerLawConfig {
                beta: strength,
                v_scale: *v_scale,
                h_shift: *h_shift,
                holdout_fraction: *holdout_fraction,
                rng_seed: partition_seed,
            },
        )?,
        PartitionSpec::Type2 { num_clusters } => {
            let clusters = clusters.context("Type II partitioning needs cluster labels")?;
            partition_type2(
                train,
                n,
                &DirichletConfig { alpha: strength, num_clusters: *num_clusters, rng_seed: partition_seed },
                clusters,
            )?
        }
    };
    Ok(apply_utilization(
        &plan,
        &UtilizationConfig { lambda: utilization, rng_seed: derive_seed(run_seed, &[tag::UTILIZATION]) },
    )?)
}

/// Directory name of one (strength, utilization) cell.
pub fn cell_name(strength: f64, utilization: f64) -> String {
    format!("s{strength}_u{utilization}")
}

pub fn run_stem(method: SelectionMethod, run: usize) -> String {
    format!("{method}_run{run}")
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct RunReport {
    pub name: String,
    pub method: SelectionMethod,
    pub strength: f64,
    pub utilization: f64,
    pub run: usize,
    pub seed: u64,
    pub selected: Vec<usize>,
    pub shard_sizes: Vec<usize>,
    pub rounds: Vec<RoundRecord>,
    pub final_eval: EvalResult,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct CellSummary {
    pub strength: f64,
    pub utilization: f64,
    pub method: SelectionMethod,
    pub metrics: MetricSummary,
    /// Final accuracy of every run, in run order.
    pub accuracies: Vec<f64>,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct Summary {
    pub config: ExperimentConfig,
    pub f1_kind: F1Kind,
    pub notes: Vec<String>,
    pub cells: Vec<CellSummary>,
}

impl Summary {
    pub fn cell(&self, strength: f64, utilization: f64, method: SelectionMethod) -> Option<&CellSummary> {
        self.cells.iter().find(|c| c.strength == strength && c.utilization == utilization && c.method == method)
    }
}

pub fn round_csv(method: SelectionMethod, rounds: &[RoundRecord]) -> String {
    let mut out = String::from(ROUND_HEADER);
    out.push('\n');
    let opt = |v: Option<f64>| v.map(|x| x.to_string()).unwrap_or_default();
    for r in rounds {
        let e = r.eval.as_ref();
        writeln!(
            out,
            "{},{},{},{},{},{}",
            r.round,
            method,
            r.global_loss,
            opt(e.map(|e| e.accuracy)),
            opt(e.map(|e| e.f1)),
            opt(e.and_then(|e| e.auc))
        )
        .unwrap();
    }
    out
}

fn write(path: &Path, contents: impl AsRef<[u8]>) -> anyhow::Result<()> {
    if let Some(dir) = path.parent() {
        fs::create_dir_all(dir).with_context(|| format!("creating {}", dir.display()))?;
    }
    fs::write(path, contents).with_context(|| format!("writing {}", path.display()))
}

/// Runs the whole sweep and writes every output under `cfg.out_dir`.
///
/// On failure the directory keeps whatever finished and gains an
/// `INCOMPLETE` file holding the error.
pub fn run_experiment(cfg: &ExperimentConfig) -> anyhow::Result<Summary> {
    let out = cfg.out_dir.clone();
    fs::create_dir_all(&out).with_context(|| format!("creating {}", out.display()))?;
    for stale in [INCOMPLETE_MARKER, SUMMARY_JSON, SUMMARY_CSV] {
        let p = out.join(stale);
        if p.exists() {
            fs::remove_file(&p).with_context(|| format!("removing {}", p.display()))?;
        }
    }
    let result = sweep(cfg, &out);
    if let Err(e) = &result {
        let _ = fs::write(out.join(INCOMPLETE_MARKER), format!("{e:#}\n"));
    }
    result
}

fn sweep(cfg: &ExperimentConfig, out: &Path) -> anyhow::Result<Summary> {
    cfg.validate()?;
    let data = load_data(&cfg.dataset)?;
    let cfg = resolve(cfg, &data);
    cfg.federation.validate()?;
    write(&out.join(CONFIG_FILE), cfg.to_json())?;
    let clusters = cluster_labels(&cfg, &data.train)?;

    let mut cells = Vec::new();
    for &strength in &cfg.strengths {
        for &utilization in &cfg.utilizations {
            let dir = out.join(RUNS_DIR).join(cell_name(strength, utilization));
            let mut finals: Vec<Vec<EvalResult>> = vec![Vec::new(); cfg.methods.len()];
            for run in 0..cfg.n_runs {
                let seed = cfg.base_seed + run as u64;
                let plan = build_plan(&cfg, &data.train, clusters.as_deref(), strength, utilization, seed)?;
                for (m, &method) in cfg.methods.iter().enumerate() {
                    let report = run_one(&cfg, &data, &plan, method, strength, utilization, run, seed, &dir)?;
                    info!("{} s={strength} u={utilization} run {run}: acc {:.4}", method, report.final_eval.accuracy);
                    finals[m].push(report.final_eval);
                }
            }
            for (m, &method) in cfg.methods.iter().enumerate() {
                cells.push(CellSummary {
                    strength,
                    utilization,
                    method,
                    metrics: summarize(&finals[m]).context("no runs to summarize")?,
                    accuracies: finals[m].iter().map(|e| e.accuracy).collect(),
                });
            }
        }
    }

    let f1_kind = if data.train.num_classes() == 2 { F1Kind::Binary } else { F1Kind::Macro };
    let mut notes = vec![format!("metrics are from the final round on {} test bags", data.test.len())];
    if f1_kind == F1Kind::Macro {
        notes.push("f1 is the unweighted macro average over classes".into());
    }
    let summary = Summary { config: cfg, f1_kind, notes, cells };
    write(&out.join(SUMMARY_JSON), serde_json::to_string_pretty(&summary)? + "\n")?;
    write(&out.join(SUMMARY_CSV), summary_table(&summary))?;
    Ok(summary)
}

#[allow(clippy::too_many_arguments)]
fn run_one(
    cfg: &ExperimentConfig,
    data: &Data,
    plan: &PartitionPlan,
    method: SelectionMethod,
    strength: f64,
    utilization: f64,
    run: usize,
    seed: u64,
    dir: &Path,
) -> anyhow::Result<RunReport> {
    let mut fed = cfg.federation.clone();
    fed.method = method;
    fed.seed = seed;
    // Every method in a run starts from the same weights.
    fed.model.init_seed = derive_seed(seed, &[tag::MODEL_INIT]);
    let outcome: FederationOutcome<f64> = run_federation(&data.train, Some(&data.test), plan, &fed)
        .with_context(|| format!("{method} run {run} (strength {strength}, utilization {utilization})"))?;
    let final_eval = outcome.rounds.last().and_then(|r| r.eval.clone()).context("final round was not evaluated")?;
    let stem = run_stem(method, run);
    write(&dir.join(format!("{stem}.csv")), round_csv(method, &outcome.rounds))?;
    if cfg.save_checkpoints {
        save_params(&outcome.params, dir.join(format!("{stem}.fmck")))?;
    }
    let report = RunReport {
        name: cfg.name.clone(),
        method,
        strength,
        utilization,
        run,
        seed,
        selected: outcome.selection.indices.clone(),
        shard_sizes: plan.shard_sizes()[..fed.n_clients].to_vec(),
        rounds: outcome.rounds,
        final_eval,
    };
    write(&dir.join(format!("{stem}.json")), serde_json::to_string_pretty(&report)? + "\n")?;
    Ok(report)
}

fn cell_text(s: &RunStats) -> String {
    if s.std_defined {
        format!("{:.4}±{:.4}", s.mean, s.std)
    } else {
        format!("{:.4}", s.mean)
    }
}

/// One block per metric and method: rows are utilizations, columns strengths.
pub fn summary_table(summary: &Summary) -> String {
    let cfg = &summary.config;
    let mut out = String::from("metric,method,utilization");
    for s in &cfg.strengths {
        write!(out, ",strength={s}").unwrap();
    }
    out.push('\n');
    type Pick = fn(&MetricSummary) -> Option<RunStats>;
    let metrics: [(&str, Pick); 3] = [("auc", |m| m.auc), ("f1", |m| Some(m.f1)), ("acc", |m| Some(m.accuracy))];
    for (name, pick) in metrics {
        for &method in &cfg.methods {
            for &u in &cfg.utilizations {
                write!(out, "{name},{method},{u}").unwrap();
                for &s in &cfg.strengths {
                    let cell = summary.cell(s, u, method).and_then(|c| pick(&c.metrics));
                    write!(out, ",{}", cell.map(|c| cell_text(&c)).unwrap_or_default()).unwrap();
                }
                out.push('\n');
            }
        }
    }
    out
}

/// Paths of every per-round CSV the config should produce.
pub fn expected_runs(cfg: &ExperimentConfig, out: &Path) -> Vec<(f64, f64, SelectionMethod, usize, PathBuf)> {
    let mut v = Vec::new();
    for &s in &cfg.strengths {
        for &u in &cfg.utilizations {
            for &m in &cfg.methods {
                for run in 0..cfg.n_runs {
                    let p = out.join(RUNS_DIR).join(cell_name(s, u)).join(format!("{}.csv", run_stem(m, run)));
                    v.push((s, u, m, run, p));
                }
            }
        }
    }
    v
}
