use hnp::featurize::{Matrix, PatientMatrix};
use hnp::io::{
    emit_report, load_cohort, load_dataset_csv, report_to_string, write_cohort, write_dataset_csv,
    REPORT_SCHEMA,
};
use hnp::simlab::{
    nearest_rank_quantile, run_monte_carlo, Method, MonteCarloConfig, MonteCarloSummary,
    SimulationSetting,
};
use hnp::umbrella::{ControlSpec, FitOptions, SplitPlan};
use hnp::{fit_hnp, BaseLearner, HnpClassifier, LabeledDataset};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn random_dataset(seed: u64) -> LabeledDataset {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let n = 40;
    let rows = (0..n)
        .map(|_| (0..3).map(|_| rng.gen_range(-1e3..1e3) / 7.0).collect())
        .collect();
    let labels = (0..n).map(|i| i % 3 + 1).collect();
    LabeledDataset::new(rows, labels, 3).unwrap()
}

#[test]
fn dataset_csv_round_trip() {
    let dir = tempfile::tempdir().unwrap();
    let data = random_dataset(1);
    let a = dir.path().join("a.csv");
    let b = dir.path().join("b.csv");
    write_dataset_csv(&data, &a).unwrap();
    let back = load_dataset_csv(&a).unwrap();
    assert_eq!(back, data);
    write_dataset_csv(&back, &b).unwrap();
    assert_eq!(std::fs::read(&a).unwrap(), std::fs::read(&b).unwrap());
}

#[test]
fn missing_file_is_an_io_error() {
    let err = load_dataset_csv("/nonexistent/data.csv").unwrap_err();
    assert_eq!(err.code(), "io_error");
}

#[test]
fn cohort_round_trip() {
    let dir = tempfile::tempdir().unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(2);
    let genes: Vec<String> = (0..5).map(|i| format!("GENE{i}")).collect();
    let cells: Vec<String> = ["T cell", "B cell", "NK"].map(String::from).to_vec();
    let patients: Vec<PatientMatrix> = (0..4)
        .map(|j| {
            let values = (0..15)
                .map(|_| if rng.gen_bool(0.3) { 0.0 } else { rng.gen() })
                .collect();
            PatientMatrix::new(
                format!("pt{j}"),
                genes.clone(),
                cells.clone(),
                Matrix::new(5, 3, values).unwrap(),
            )
            .unwrap()
        })
        .collect();
    let labels = vec![1, 2, 3, 1];
    let manifest = write_cohort(&patients, &labels, dir.path().join("cohort")).unwrap();
    let cohort = load_cohort(&manifest).unwrap();
    assert_eq!(cohort.patients, patients);
    assert_eq!(
        cohort.labels,
        labels.iter().map(|&l| Some(l)).collect::<Vec<_>>()
    );
}

fn small_run() -> MonteCarloSummary {
    let mut setting = SimulationSetting::t1_1();
    setting.train_sizes = vec![200, 200, 200];
    setting.test_sizes = vec![500, 500, 500];
    let spec = ControlSpec::uniform(3, 0.1, 0.1).unwrap();
    let mut config = MonteCarloConfig::new(setting, spec, 12, 77);
    config.methods = vec![Method::Hnp, Method::Roc, Method::Argmax];
    config.sweep_ranks = Some(3);
    run_monte_carlo(&config).unwrap()
}

#[test]
fn simulation_report_round_trip() {
    let summary = small_run();
    let text = report_to_string("simulate", &summary).unwrap();
    assert_eq!(text, report_to_string("simulate", &small_run()).unwrap());

    let mut value: serde_json::Value = serde_json::from_str(&text).unwrap();
    let obj = value.as_object_mut().unwrap();
    assert_eq!(obj.remove("schema").unwrap(), REPORT_SCHEMA);
    assert_eq!(obj.remove("kind").unwrap(), "simulate");
    let back: MonteCarloSummary = serde_json::from_value(value).unwrap();
    assert_eq!(back, summary);
}

#[test]
fn reported_quantiles_are_recomputable() {
    let summary = small_run();
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("report.json");
    emit_report("simulate", &summary, &path).unwrap();
    let mut value: serde_json::Value =
        serde_json::from_str(&std::fs::read_to_string(&path).unwrap()).unwrap();
    value.as_object_mut().unwrap().remove("schema");
    value.as_object_mut().unwrap().remove("kind");
    let back: MonteCarloSummary = serde_json::from_value(value).unwrap();
    for m in &back.methods {
        for metric in &m.metrics {
            let values = back.values(m.method, &metric.name);
            assert_eq!(values.len(), back.completed);
            let mean = values.iter().sum::<f64>() / values.len() as f64;
            assert!((mean - metric.mean).abs() < 1e-15);
            if let Some(level) = metric.quantile_level {
                assert_eq!(nearest_rank_quantile(&values, level), metric.quantile);
            }
        }
    }
}

#[test]
fn classifier_json_round_trip() {
    let mut setting = SimulationSetting::t1_1();
    setting.train_sizes = vec![300, 300, 300];
    let (data, _) = hnp::simlab::generate_setting(&setting, 4).unwrap();
    let spec = ControlSpec::uniform(3, 0.05, 0.05).unwrap();
    let (clf, _) = fit_hnp(
        &data,
        &SplitPlan::standard(3),
        &spec,
        &BaseLearner::default(),
        4,
        &FitOptions::default(),
    )
    .unwrap();
    let text = report_to_string("fit", &clf).unwrap();
    let mut value: serde_json::Value = serde_json::from_str(&text).unwrap();
    value.as_object_mut().unwrap().remove("schema");
    value.as_object_mut().unwrap().remove("kind");
    let back: HnpClassifier = serde_json::from_value(value).unwrap();
    assert_eq!(back, clf);
}
