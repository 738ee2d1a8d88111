use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};

use anyhow::{bail, Context};
use fedmil::metrics::aggregate_runs;
use fedmil::SelectionMethod;

use crate::config::ExperimentConfig;
use crate::experiment::{cell_name, expected_runs, CONFIG_FILE, ROUND_HEADER, RUNS_DIR};

pub const PLOTS_DIR: &str = "plots";
pub const UTILIZATION_CSV: &str = "utilization.csv";

/// One parsed row of a per-round CSV.
#[derive(Clone, Debug, PartialEq)]
pub struct RoundRow {
    pub round: usize,
    pub method: SelectionMethod,
    pub loss: f64,
    pub acc: Option<f64>,
    pub f1: Option<f64>,
    pub auc: Option<f64>,
}

pub fn parse_round_csv(text: &str) -> anyhow::Result<Vec<RoundRow>> {
    let mut lines = text.lines();
    match lines.next() {
        Some(h) if h == ROUND_HEADER => {}
        other => bail!("unexpected header {other:?}"),
    }
    let opt = |s: &str| -> anyhow::Result<Option<f64>> {
        if s.is_empty() {
            Ok(None)
        } else {
            Ok(Some(s.parse()?))
        }
    };
    lines
        .filter(|l| !l.is_empty())
        .map(|line| {
            let f: Vec<&str> = line.split(',').collect();
            if f.len() != 6 {
                bail!("expected 6 fields in {line:?}");
            }
            Ok(RoundRow {
                round: f[0].parse()?,
                method: f[1].parse()?,
                loss: f[2].parse()?,
                acc: opt(f[3])?,
                f1: opt(f[4])?,
                auc: opt(f[5])?,
            })
        })
        .collect()
}

#[derive(Default)]
struct Sums {
    loss: Vec<f64>,
    acc: Vec<f64>,
    f1: Vec<f64>,
    auc: Vec<f64>,
}

fn mean(v: &[f64]) -> String {
    if v.is_empty() {
        String::new()
    } else {
        (v.iter().sum::<f64>() / v.len() as f64).to_string()
    }
}

/// Writes convergence curves (round vs mean metric per method, one file per
/// strength/utilization cell) and a utilization-vs-accuracy table under
/// `<results>/plots`. Returns the files written.
pub fn emit_plot_data(results: impl AsRef<Path>) -> anyhow::Result<Vec<PathBuf>> {
    let results = results.as_ref();
    let config_path = results.join(CONFIG_FILE);
    if !config_path.exists() {
        let found = count_csv(&results.join(RUNS_DIR));
        bail!("no experiment config in {}; found {found} run file(s), nothing to plot", results.display());
    }
    let cfg = ExperimentConfig::load(&config_path)?;
    let expected = expected_runs(&cfg, results);
    let missing: Vec<String> = expected
        .iter()
        .filter(|e| !e.4.exists())
        .map(|(s, u, m, r, _)| format!("{} {m} run {r}", cell_name(*s, *u)))
        .collect();
    if !missing.is_empty() {
        bail!("{} of {} runs are missing: {}", missing.len(), expected.len(), missing.join(", "));
    }

    let plots = results.join(PLOTS_DIR);
    fs::create_dir_all(&plots).with_context(|| format!("creating {}", plots.display()))?;
    let mut written = Vec::new();
    let mut util = String::from("strength,utilization,method,acc_mean,acc_std,runs\n");
    for &s in &cfg.strengths {
        for &u in &cfg.utilizations {
            let mut curves: BTreeMap<(usize, usize), Sums> = BTreeMap::new();
            let mut finals: Vec<Vec<f64>> = vec![Vec::new(); cfg.methods.len()];
            for (mi, &m) in cfg.methods.iter().enumerate() {
                for (_, _, _, _, path) in expected.iter().filter(|e| e.0 == s && e.1 == u && e.2 == m) {
                    let text = fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
                    let rows = parse_round_csv(&text).with_context(|| format!("in {}", path.display()))?;
                    for r in &rows {
                        let e = curves.entry((mi, r.round)).or_default();
                        e.loss.push(r.loss);
                        e.acc.extend(r.acc);
                        e.f1.extend(r.f1);
                        e.auc.extend(r.auc);
                    }
                    if let Some(acc) = rows.last().and_then(|r| r.acc) {
                        finals[mi].push(acc);
                    }
                }
            }
            let mut csv = String::from(ROUND_HEADER);
            csv.push('\n');
            for ((mi, round), sums) in &curves {
                writeln!(
                    csv,
                    "{round},{},{},{},{},{}",
                    cfg.methods[*mi],
                    mean(&sums.loss),
                    mean(&sums.acc),
                    mean(&sums.f1),
                    mean(&sums.auc)
                )
                .unwrap();
            }
            let path = plots.join(format!("convergence_{}.csv", cell_name(s, u)));
            fs::write(&path, csv).with_context(|| format!("writing {}", path.display()))?;
            written.push(path);
            for (mi, &m) in cfg.methods.iter().enumerate() {
                if let Some(st) = aggregate_runs(&finals[mi]) {
                    writeln!(util, "{s},{u},{m},{},{},{}", st.mean, st.std, st.n).unwrap();
                }
            }
        }
    }
    let path = plots.join(UTILIZATION_CSV);
    fs::write(&path, util).with_context(|| format!("writing {}", path.display()))?;
    written.push(path);
    Ok(written)
}

fn count_csv(dir: &Path) -> usize {
    let Ok(entries) = fs::read_dir(dir) else {
        return 0;
    };
    entries
        .flatten()
        .map(|e| {
            let p = e.path();
            if p.is_dir() {
                count_csv(&p)
            } else {
                usize::from(p.extension().is_some_and(|x| x == "csv"))
            }
        })
        .sum()
}
