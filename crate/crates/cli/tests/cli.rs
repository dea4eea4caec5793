use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use hnp::featurize::{Matrix, PatientMatrix};
use hnp::io::{write_cohort, write_dataset_csv};
use hnp::simlab::{generate_setting, SimulationSetting};
use serde_json::Value;

fn hnp(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_hnp"))
        .args(args)
        .env_remove("HNP_LOG")
        .output()
        .unwrap()
}

fn ok(args: &[&str]) -> Output {
    let out = hnp(args);
    assert!(
        out.status.success(),
        "{args:?}: {}",
        String::from_utf8_lossy(&out.stderr)
    );
    out
}

fn error_code(out: &Output) -> String {
    let v: Value = serde_json::from_slice(&out.stderr).expect("stderr is one JSON object");
    v["error"]["code"].as_str().unwrap().to_string()
}

fn read_json(path: &Path) -> Value {
    serde_json::from_str(&std::fs::read_to_string(path).unwrap()).unwrap()
}

fn s(p: &Path) -> &str {
    p.to_str().unwrap()
}

fn t1_csv(dir: &Path, n: usize) -> PathBuf {
    let mut setting = SimulationSetting::t1_1();
    setting.train_sizes = vec![n; 3];
    let (data, _) = generate_setting(&setting, 11).unwrap();
    let path = dir.join("train.csv");
    write_dataset_csv(&data, &path).unwrap();
    path
}

#[test]
fn fit_then_predict_labels_every_row() {
    let dir = tempfile::tempdir().unwrap();
    let data = t1_csv(dir.path(), 200);
    let model = dir.path().join("model.json");
    let labels = dir.path().join("labels.txt");
    ok(&[
        "fit",
        "--data",
        s(&data),
        "--alpha",
        "0.1",
        "--delta",
        "0.1",
        "--out",
        s(&model),
    ]);
    let report = read_json(&model);
    assert_eq!(report["schema"], "hnp-report/1");
    assert_eq!(report["kind"], "fit");
    assert_eq!(report["seed"], 0);
    assert_eq!(report["model"]["method"], "hnp");

    ok(&[
        "predict",
        "--model",
        s(&model),
        "--data",
        s(&data),
        "--out",
        s(&labels),
    ]);
    let text = std::fs::read_to_string(&labels).unwrap();
    let got: Vec<usize> = text.lines().map(|l| l.parse().unwrap()).collect();
    assert_eq!(got.len(), 600);
    assert!(got.iter().all(|l| (1..=3).contains(l)));

    // Without --out the labels go to stdout.
    let out = ok(&["predict", "--model", s(&model), "--data", s(&data)]);
    assert_eq!(String::from_utf8(out.stdout).unwrap(), text);
}

#[test]
fn evaluate_reports_consistent_rates() {
    let dir = tempfile::tempdir().unwrap();
    let data = t1_csv(dir.path(), 200);
    let model = dir.path().join("model.json");
    ok(&[
        "fit",
        "--data",
        s(&data),
        "--seed",
        "3",
        "--split",
        "roc",
        "--out",
        s(&model),
    ]);
    assert_eq!(read_json(&model)["model"]["method"], "roc");
    let out = ok(&["evaluate", "--model", s(&model), "--data", s(&data)]);
    let v: Value = serde_json::from_slice(&out.stdout).unwrap();
    assert_eq!(v["kind"], "evaluate");
    let counts: Vec<Vec<f64>> = serde_json::from_value(v["errors"]["counts"].clone()).unwrap();
    let under1 = (counts[0][1] + counts[0][2]) / counts[0].iter().sum::<f64>();
    assert_eq!(v["errors"]["error1"].as_f64().unwrap(), under1);
}

#[test]
fn simulate_rejects_zero_reps() {
    let out = hnp(&[
        "simulate",
        "--setting",
        "T1.1",
        "--reps",
        "0",
        "--seed",
        "1",
    ]);
    assert_eq!(out.status.code(), Some(1));
    assert_eq!(error_code(&out), "invalid_argument");
    assert!(out.stdout.is_empty());
}

#[test]
fn simulate_and_sweep_need_a_seed() {
    for task in ["simulate", "sweep"] {
        let out = hnp(&[task, "--setting", "T1.1", "--reps", "2"]);
        assert!(!out.status.success());
        assert_eq!(error_code(&out), "invalid_argument");
    }
}

#[test]
fn usage_errors_exit_with_two() {
    let out = hnp(&["classify"]);
    assert_eq!(out.status.code(), Some(2));
    assert_eq!(error_code(&out), "usage");
    let out = hnp(&["--seed", "1"]);
    assert_eq!(out.status.code(), Some(2));
    assert!(hnp(&["--help"]).status.success());
}

#[test]
fn missing_files_are_io_errors() {
    let out = hnp(&["fit", "--data", "/nonexistent/train.csv"]);
    assert_eq!(error_code(&out), "io_error");
}

#[test]
fn infeasible_split_is_named() {
    let dir = tempfile::tempdir().unwrap();
    let data = t1_csv(dir.path(), 60);
    let out = hnp(&["fit", "--data", s(&data)]);
    assert_eq!(error_code(&out), "infeasible_split");
}

#[test]
fn simulation_reports_ignore_thread_count() {
    let dir = tempfile::tempdir().unwrap();
    let run = |threads: &str, name: &str| {
        let path = dir.path().join(name);
        ok(&[
            "simulate",
            "--setting",
            "T1.1",
            "--reps",
            "6",
            "--seed",
            "42",
            "--threads",
            threads,
            "--method",
            "hnp,roc,argmax",
            "--out",
            s(&path),
        ]);
        std::fs::read(path).unwrap()
    };
    let a = run("1", "a.json");
    assert_eq!(a, run("4", "b.json"));
    let v: Value = serde_json::from_slice(&a).unwrap();
    assert_eq!(v["kind"], "simulate");
    assert_eq!(v["seed"], 42);
    assert_eq!(v["records"].as_array().unwrap().len(), 6);
}

#[test]
fn sweep_reports_ranks() {
    let out = ok(&[
        "sweep",
        "--setting",
        "T1.1",
        "--reps",
        "2",
        "--seed",
        "1",
        "--ranks",
        "3",
        "--method",
        "hnp",
    ]);
    let v: Value = serde_json::from_slice(&out.stdout).unwrap();
    assert_eq!(v["kind"], "sweep");
    assert!(!v["sweep"]["ranks"].as_array().unwrap().is_empty());
}

#[test]
fn config_file_values_yield_to_flags() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("run.toml");
    std::fs::write(
        &cfg,
        "task = \"simulate\"\nsetting = \"T1.1\"\nreps = 2\nseed = 5\nmethod = \"hnp\"\n\
         alpha = [0.1, 0.1]\ndelta = 0.1\ntrain_sizes = [200, 200, 200]\ntest_sizes = [300, 300, 300]\n",
    )
    .unwrap();
    let from_file = ok(&["--config", s(&cfg)]).stdout;
    let same = ok(&["simulate", "--config", s(&cfg), "--seed", "5"]).stdout;
    let other = ok(&["--config", s(&cfg), "--seed", "6"]).stdout;
    assert_eq!(from_file, same);
    assert_ne!(from_file, other);
    let v: Value = serde_json::from_slice(&from_file).unwrap();
    assert_eq!(v["config"]["setting"]["train_sizes"][0], 200);
    assert_eq!(v["config"]["spec"]["alphas"][1].as_f64(), Some(0.1));
}

#[test]
fn predict_checks_dimension() {
    let dir = tempfile::tempdir().unwrap();
    let data = t1_csv(dir.path(), 200);
    let model = dir.path().join("model.json");
    ok(&["fit", "--data", s(&data), "--out", s(&model)]);
    let wide = dir.path().join("wide.csv");
    std::fs::write(&wide, "x1,x2,x3\n0,0,0\n").unwrap();
    let out = hnp(&["predict", "--model", s(&model), "--data", s(&wide)]);
    assert_eq!(error_code(&out), "dimension_mismatch");
}

fn cohort(dir: &Path) -> PathBuf {
    let genes: Vec<String> = (0..6).map(|g| format!("G{g}")).collect();
    let cells: Vec<String> = ["T", "B", "NK"].map(String::from).to_vec();
    let patients: Vec<PatientMatrix> = (0..9)
        .map(|j| {
            let values = (0..18)
                .map(|i| ((i * 7 + j * 5) % 11) as f64 * if i % 3 == 2 { 0.0 } else { 1.0 })
                .collect();
            PatientMatrix::new(
                format!("p{j}"),
                genes.clone(),
                cells.clone(),
                Matrix::new(6, 3, values).unwrap(),
            )
            .unwrap()
        })
        .collect();
    let labels: Vec<usize> = (0..9).map(|j| j % 3 + 1).collect();
    write_cohort(&patients, &labels, dir.join("cohort")).unwrap()
}

#[test]
fn featurize_writes_a_dataset_and_reusable_transform() {
    let dir = tempfile::tempdir().unwrap();
    let manifest = cohort(dir.path());
    let features = dir.path().join("features.csv");
    let transform = dir.path().join("transform.json");
    ok(&[
        "featurize",
        "--manifest",
        s(&manifest),
        "--method",
        "M2",
        "--out",
        s(&features),
        "--save-transform",
        s(&transform),
    ]);
    let text = std::fs::read_to_string(&features).unwrap();
    let mut lines = text.lines();
    // The all-zero NK column is dropped, leaving two cell types.
    assert_eq!(lines.next(), Some("y,x1,x2"));
    assert_eq!(lines.count(), 9);
    assert_eq!(read_json(&transform)["kind"], "featurization");

    let again = ok(&[
        "featurize",
        "--manifest",
        s(&manifest),
        "--transform",
        s(&transform),
    ]);
    assert_eq!(String::from_utf8(again.stdout).unwrap(), text);

    for m in ["M1", "M3", "M4"] {
        let out = ok(&[
            "featurize",
            "--manifest",
            s(&manifest),
            "--method",
            m,
            "--n-features",
            "4",
        ]);
        let text = String::from_utf8(out.stdout).unwrap();
        assert_eq!(text.lines().count(), 10, "{m}");
    }
}
