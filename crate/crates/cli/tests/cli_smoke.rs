use std::collections::BTreeMap;
use std::fs;
use std::path::{Path, PathBuf};
use std::process::Command;

use fedmil::SelectionMethod;
use fedmil_cli::experiment::{INCOMPLETE_MARKER, SUMMARY_CSV, SUMMARY_JSON};
use fedmil_cli::{emit_plot_data, inspect_kernel, run_experiment, DatasetSpec, ExperimentConfig};

fn repo_root() -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("../..")
}

fn smoke(out: &Path) -> ExperimentConfig {
    let mut cfg = ExperimentConfig::load(repo_root().join("configs/smoke.json")).unwrap();
    cfg.out_dir = out.to_path_buf();
    cfg
}

fn snapshot(dir: &Path) -> BTreeMap<PathBuf, Vec<u8>> {
    let mut out = BTreeMap::new();
    let mut stack = vec![dir.to_path_buf()];
    while let Some(d) = stack.pop() {
        for e in fs::read_dir(&d).unwrap().flatten() {
            let p = e.path();
            if p.is_dir() {
                stack.push(p);
            } else {
                out.insert(p.strip_prefix(dir).unwrap().to_path_buf(), fs::read(&p).unwrap());
            }
        }
    }
    out
}

#[test]
fn smoke_run_writes_two_rows_per_method() {
    let tmp = tempfile::tempdir().unwrap();
    let summary = run_experiment(&smoke(tmp.path())).unwrap();
    assert_eq!(summary.cells.len(), 3);
    for m in SelectionMethod::ALL {
        let csv = fs::read_to_string(tmp.path().join(format!("runs/s0.5_u1/{m}_run0.csv"))).unwrap();
        let lines: Vec<&str> = csv.lines().collect();
        assert_eq!(lines[0], "round,method,loss,acc,f1,auc");
        assert_eq!(lines.len(), 3, "{csv}");
        assert!(lines[1].starts_with(&format!("1,{m},")));
        assert!(tmp.path().join(format!("runs/s0.5_u1/{m}_run0.json")).exists());
        assert!(tmp.path().join(format!("runs/s0.5_u1/{m}_run0.fmck")).exists());
    }
    let table = fs::read_to_string(tmp.path().join(SUMMARY_CSV)).unwrap();
    assert!(table.starts_with("metric,method,utilization,strength=0.5\n"));
    assert_eq!(table.lines().count(), 1 + 3 * 3);
    // The summary embeds the resolved config, data-derived fields included.
    let json: serde_json::Value =
        serde_json::from_str(&fs::read_to_string(tmp.path().join(SUMMARY_JSON)).unwrap()).unwrap();
    assert_eq!(json["config"]["federation"]["model"]["input_dim"], 8);
    assert_eq!(json["config"]["federation"]["n_clients"], 10);
    assert!(!tmp.path().join(INCOMPLETE_MARKER).exists());
}

#[test]
fn rerun_is_byte_identical() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = smoke(tmp.path());
    run_experiment(&cfg).unwrap();
    let first = snapshot(tmp.path());
    run_experiment(&cfg).unwrap();
    assert_eq!(first, snapshot(tmp.path()));
}

#[test]
fn embedded_config_reproduces_summary() {
    let a = tempfile::tempdir().unwrap();
    let b = tempfile::tempdir().unwrap();
    let summary = run_experiment(&smoke(a.path())).unwrap();
    let mut again = summary.config.clone();
    again.out_dir = b.path().to_path_buf();
    let second = run_experiment(&again).unwrap();
    assert_eq!(serde_json::to_string(&summary.cells).unwrap(), serde_json::to_string(&second.cells).unwrap());
}

#[test]
fn failure_leaves_incomplete_marker() {
    let tmp = tempfile::tempdir().unwrap();
    let mut cfg = smoke(tmp.path());
    cfg.dataset = DatasetSpec::Mnist { path: tmp.path().join("nowhere"), train_limit: None, test_limit: None };
    let err = run_experiment(&cfg).unwrap_err();
    assert!(format!("{err:#}").contains("nowhere"));
    let marker = fs::read_to_string(tmp.path().join(INCOMPLETE_MARKER)).unwrap();
    assert!(!marker.is_empty());
    assert!(!tmp.path().join(SUMMARY_JSON).exists());
}

#[test]
fn curves_match_independent_recomputation() {
    let tmp = tempfile::tempdir().unwrap();
    let mut cfg = smoke(tmp.path());
    cfg.federation.rounds = 50;
    cfg.n_runs = 2;
    cfg.save_checkpoints = false;
    run_experiment(&cfg).unwrap();
    emit_plot_data(tmp.path()).unwrap();
    let curve = fs::read_to_string(tmp.path().join("plots/convergence_s0.5_u1.csv")).unwrap();
    let rows: Vec<&str> = curve.lines().skip(1).collect();
    assert_eq!(rows.len(), 150);
    for row in rows {
        let f: Vec<&str> = row.split(',').collect();
        let (round, method): (usize, &str) = (f[0].parse().unwrap(), f[1]);
        let mut accs = Vec::new();
        for run in 0..2 {
            let raw = fs::read_to_string(tmp.path().join(format!("runs/s0.5_u1/{method}_run{run}.csv"))).unwrap();
            let line = raw.lines().nth(round).unwrap();
            accs.push(line.split(',').nth(3).unwrap().parse::<f64>().unwrap());
        }
        let want = (accs[0] + accs[1]) / 2.0;
        let got: f64 = f[3].parse().unwrap();
        assert!((got - want).abs() < 1e-12, "{row}");
    }
    let util = fs::read_to_string(tmp.path().join("plots/utilization.csv")).unwrap();
    assert_eq!(util.lines().count(), 4);
}

#[test]
fn plot_errors_name_missing_runs() {
    let empty = tempfile::tempdir().unwrap();
    let err = format!("{:#}", emit_plot_data(empty.path()).unwrap_err());
    assert!(err.contains("0 run"), "{err}");

    let tmp = tempfile::tempdir().unwrap();
    run_experiment(&smoke(tmp.path())).unwrap();
    fs::remove_file(tmp.path().join("runs/s0.5_u1/dpp_run0.csv")).unwrap();
    let err = format!("{:#}", emit_plot_data(tmp.path()).unwrap_err());
    assert!(err.contains("dpp run 0"), "{err}");
}

#[test]
fn kernel_report_is_well_formed() {
    let tmp = tempfile::tempdir().unwrap();
    let report = inspect_kernel(&smoke(tmp.path())).unwrap();
    let k = &report.kernel;
    assert_eq!(report.profiles.len(), 10);
    assert_eq!(k.eigenvalues.len(), 10);
    assert!(k.quality.iter().all(|&q| (0.01..=1.0).contains(&q)));
    assert!((0..10).all(|i| k.similarity[i][i] == 1.0));
}

#[test]
fn binary_runs_plots_and_inspects() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg_path = tmp.path().join("cfg.json");
    fs::write(&cfg_path, smoke(&tmp.path().join("ignored")).to_json()).unwrap();
    let out = tmp.path().join("out");
    let bin = env!("CARGO_BIN_EXE_fedmil");
    let status = Command::new(bin)
        .args(["run", "--config"])
        .arg(&cfg_path)
        .args(["--method", "random,dppq", "--seed", "3", "--out"])
        .arg(&out)
        .env("RUST_LOG", "warn")
        .status()
        .unwrap();
    assert!(status.success());
    assert!(out.join("runs/s0.5_u1/dppq_run0.csv").exists());
    assert!(!out.join("runs/s0.5_u1/dpp_run0.csv").exists());
    let cfg = ExperimentConfig::load(out.join("config.json")).unwrap();
    assert_eq!(cfg.base_seed, 3);

    let plot = Command::new(bin).args(["plot", "--results"]).arg(&out).output().unwrap();
    assert!(plot.status.success());
    let inspect = Command::new(bin).args(["inspect-kernel", "--config"]).arg(&cfg_path).output().unwrap();
    assert!(inspect.status.success());
    let v: serde_json::Value = serde_json::from_slice(&inspect.stdout).unwrap();
    assert_eq!(v["kernel"]["eigenvalues"].as_array().unwrap().len(), 10);

    let bad = Command::new(bin).args(["run", "--config"]).arg(tmp.path().join("missing.json")).output().unwrap();
    assert!(!bad.status.success());
}
