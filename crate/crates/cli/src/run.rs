//! Task execution. Each task reads what it needs from a resolved
//! [`RunConfig`] and writes one report or data file.

use std::io::Write;
use std::path::{Path, PathBuf};

use hnp::baselines::{fit_roc, roc_split_plan, RocClassifier};
use hnp::featurize::{
    drop_sparse_cell_types, featurize_m1, featurize_m2, featurize_m3, featurize_m4,
    FeatureVectorSet, FeaturizeMethod, FittedFeaturization, DEFAULT_MAX_ZERO_FRACTION,
};
use hnp::io::{load_cohort, load_dataset_csv, load_features_csv, report_to_string, write_labels};
use hnp::scoring::{CovarianceKind, LogisticConfig};
use hnp::simlab::{
    estimate_errors, run_monte_carlo, threshold_sweep, Method, MonteCarloConfig, SimulationSetting,
};
use hnp::umbrella::{DataSplit, GridPolicy, RoleFractions};
use hnp::{
    fit_hnp, BaseLearner, Classifier, ControlSpec, FitOptions, HnpClassifier, HnpError,
    LabeledDataset, Result, SplitPlan,
};
use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};

use crate::config::{RunConfig, Task};

const DEFAULT_ALPHA: f64 = 0.05;
const DEFAULT_DELTA: f64 = 0.05;
const DEFAULT_N_FEATURES: usize = 100;
const DEFAULT_RANKS: usize = 50;

/// A classifier as stored in a fit report.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "method", rename_all = "kebab-case")]
pub enum FittedModel {
    Hnp(HnpClassifier),
    Roc(RocClassifier),
}

impl FittedModel {
    fn classifier(&self) -> &dyn DynClassifier {
        match self {
            FittedModel::Hnp(c) => c,
            FittedModel::Roc(c) => c,
        }
    }
}

/// Object-safe view of [`Classifier`].
trait DynClassifier {
    fn classes(&self) -> usize;
    fn width(&self) -> usize;
    fn label(&self, x: &[f64]) -> Result<usize>;
}

impl<C: Classifier> DynClassifier for C {
    fn classes(&self) -> usize {
        self.num_classes()
    }
    fn width(&self) -> usize {
        self.dim()
    }
    fn label(&self, x: &[f64]) -> Result<usize> {
        self.classify(x)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FitReport {
    pub seed: u64,
    pub data: PathBuf,
    pub class_sizes: Vec<usize>,
    /// Rows per role and class: `[score, threshold, evaluate]`.
    pub role_counts: Vec<[usize; 3]>,
    pub model: FittedModel,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
struct EvaluateReport<'a> {
    data: &'a Path,
    model: &'a Path,
    errors: hnp::simlab::ErrorReport,
}

pub fn execute(task: Task, config: &RunConfig) -> Result<()> {
    if let Some(n) = config.threads {
        if n == 0 {
            return Err(invalid("threads must be at least 1"));
        }
        // A second call in the same process keeps the first pool.
        let _ = rayon::ThreadPoolBuilder::new()
            .num_threads(n)
            .build_global();
    }
    match task {
        Task::Simulate => simulate(config, false),
        Task::Sweep => simulate(config, true),
        Task::Fit => fit(config),
        Task::Predict => predict(config),
        Task::Evaluate => evaluate(config),
        Task::Featurize => featurize(config),
    }
}

fn invalid(msg: impl Into<String>) -> HnpError {
    HnpError::InvalidArgument(msg.into())
}

fn require<'a, T>(value: &'a Option<T>, flag: &str, task: &str) -> Result<&'a T> {
    value
        .as_ref()
        .ok_or_else(|| invalid(format!("{task} requires --{flag}")))
}

fn write_output(out: Option<&Path>, text: &str) -> Result<()> {
    match out {
        Some(path) => std::fs::write(path, text).map_err(|e| HnpError::Io {
            path: path.to_path_buf(),
            source: e,
        }),
        None => {
            let mut stdout = std::io::stdout().lock();
            stdout
                .write_all(text.as_bytes())
                .and_then(|_| stdout.flush())
                .map_err(|e| HnpError::Io {
                    path: "<stdout>".into(),
                    source: e,
                })
        }
    }
}

fn emit<T: Serialize>(config: &RunConfig, kind: &str, body: &T) -> Result<()> {
    write_output(config.out.as_deref(), &report_to_string(kind, body)?)
}

/// Reads a report written by this tool and checks its kind.
fn read_report<T: DeserializeOwned>(path: &Path, kind: &str) -> Result<T> {
    let text = std::fs::read_to_string(path).map_err(|e| HnpError::Io {
        path: path.to_path_buf(),
        source: e,
    })?;
    let parse = |line: u64, message: String| HnpError::Parse {
        path: path.display().to_string(),
        line,
        message,
    };
    let mut value: serde_json::Value =
        serde_json::from_str(&text).map_err(|e| parse(e.line() as u64, e.to_string()))?;
    let obj = value
        .as_object_mut()
        .ok_or_else(|| parse(1, "report is not a JSON object".into()))?;
    if obj
        .remove("schema")
        .and_then(|s| s.as_str().map(String::from))
        != Some(hnp::io::REPORT_SCHEMA.into())
    {
        return Err(parse(1, "unsupported or missing report schema".into()));
    }
    match obj.remove("kind") {
        Some(serde_json::Value::String(k)) if k == kind => {}
        other => {
            return Err(parse(
                1,
                format!("expected a {kind:?} report, found kind {other:?}"),
            ))
        }
    }
    serde_json::from_value(value).map_err(|e| parse(0, e.to_string()))
}

/// One value per controlled class; a single value is repeated.
fn per_class(list: Option<&crate::config::NumList>, default: f64, k: usize) -> Result<Vec<f64>> {
    let values = match list {
        Some(l) => l.values()?,
        None => vec![default],
    };
    match values.len() {
        1 => Ok(vec![values[0]; k - 1]),
        n if n == k - 1 => Ok(values),
        n => Err(invalid(format!(
            "{k} classes need {} alpha/delta values, got {n}",
            k - 1
        ))),
    }
}

fn control_spec(config: &RunConfig, k: usize) -> Result<ControlSpec> {
    ControlSpec::new(
        per_class(config.alpha.as_ref(), DEFAULT_ALPHA, k)?,
        per_class(config.delta.as_ref(), DEFAULT_DELTA, k)?,
    )
}

enum SplitChoice {
    Plan(SplitPlan),
    Roc,
}

fn split_choice(config: &RunConfig, k: usize) -> Result<SplitChoice> {
    let text = config.split.as_deref().unwrap_or("standard").trim();
    match text {
        "standard" => Ok(SplitChoice::Plan(SplitPlan::standard(k))),
        "roc" => Ok(SplitChoice::Roc),
        _ => {
            let classes = text
                .split(',')
                .map(|part| {
                    let f = part
                        .split('/')
                        .map(|v| v.trim().parse::<f64>())
                        .collect::<std::result::Result<Vec<_>, _>>()
                        .map_err(|_| invalid(format!("bad split fractions {part:?}")))?;
                    match f[..] {
                        [s, t, e] => Ok(RoleFractions::new(s, t, e)),
                        _ => Err(invalid(format!(
                            "split {part:?} needs score/threshold/evaluate fractions"
                        ))),
                    }
                })
                .collect::<Result<Vec<_>>>()?;
            if classes.len() != k {
                return Err(invalid(format!(
                    "split lists {} classes, data has {k}",
                    classes.len()
                )));
            }
            SplitPlan::hierarchical(classes).map(SplitChoice::Plan)
        }
    }
}

fn grid(config: &RunConfig) -> Result<GridPolicy> {
    match config.grid.as_deref().unwrap_or("scores") {
        "scores" => Ok(GridPolicy::Scores),
        "none" => Ok(GridPolicy::None),
        other => Err(invalid(format!(
            "unknown grid {other:?}; expected scores or none"
        ))),
    }
}

fn base_learner(config: &RunConfig, setting: Option<&SimulationSetting>) -> Result<BaseLearner> {
    let name = config.base.as_deref().unwrap_or("logistic");
    let tuned =
        config.learning_rate.is_some() || config.max_iters.is_some() || config.l2_penalty.is_some();
    if tuned && name != "logistic" {
        return Err(invalid(
            "learning-rate, max-iters and l2-penalty apply to the logistic base only",
        ));
    }
    match name {
        "logistic" => {
            let mut cfg = LogisticConfig::default();
            if let Some(v) = config.learning_rate {
                cfg.learning_rate = v;
            }
            if let Some(v) = config.max_iters {
                cfg.max_iters = v;
            }
            if let Some(v) = config.l2_penalty {
                cfg.l2_penalty = v;
            }
            if !(cfg.learning_rate > 0.0) || !(cfg.l2_penalty >= 0.0) || cfg.max_iters == 0 {
                return Err(invalid(
                    "learning-rate and max-iters must be positive, l2-penalty nonnegative",
                ));
            }
            Ok(BaseLearner::Logistic(cfg))
        }
        "gaussian" => Ok(BaseLearner::Gaussian {
            covariance: CovarianceKind::default(),
        }),
        "oracle" => match setting {
            Some(s) => Ok(BaseLearner::Oracle(s.oracle_params())),
            None => Err(invalid(
                "the oracle base needs the generating setting (--setting)",
            )),
        },
        other => Err(invalid(format!(
            "unknown base {other:?}; expected logistic, gaussian or oracle"
        ))),
    }
}

fn setting(config: &RunConfig) -> Result<Option<SimulationSetting>> {
    let mut s = match &config.setting {
        Some(name) => SimulationSetting::preset(name)?,
        None if config.means.is_some() => SimulationSetting::custom(
            config.means.clone().unwrap_or_default(),
            require(&config.train_sizes, "train-sizes", "a custom setting")?.clone(),
            require(&config.test_sizes, "test-sizes", "a custom setting")?.clone(),
        )?,
        None => return Ok(None),
    };
    if config.setting.is_some() {
        if let Some(m) = &config.means {
            s.means = m.clone();
        }
        if let Some(n) = &config.train_sizes {
            s.train_sizes = n.clone();
        }
        if let Some(n) = &config.test_sizes {
            s.test_sizes = n.clone();
        }
        s.validate()?;
    }
    Ok(Some(s))
}

fn methods(config: &RunConfig) -> Result<Vec<Method>> {
    let Some(list) = &config.method else {
        return Ok(vec![Method::Hnp, Method::Roc]);
    };
    let mut out = Vec::new();
    for name in list.split(',').map(str::trim) {
        let m = match name {
            "hnp" => Method::Hnp,
            "hnp-unconditional" => Method::HnpUnconditional,
            "roc" => Method::Roc,
            "argmax" => Method::Argmax,
            _ => {
                return Err(invalid(format!(
                    "unknown method {name:?}; expected hnp, hnp-unconditional, roc or argmax"
                )))
            }
        };
        if !out.contains(&m) {
            out.push(m);
        }
    }
    Ok(out)
}

fn simulate(config: &RunConfig, sweep: bool) -> Result<()> {
    let task = if sweep { "sweep" } else { "simulate" };
    let seed = *config
        .seed
        .as_ref()
        .ok_or_else(|| invalid(format!("{task} requires --seed")))?;
    let setting = setting(config)?.ok_or_else(|| invalid(format!("{task} requires --setting")))?;
    let k = setting.num_classes();
    let reps = config.reps.unwrap_or(1000);
    let mut mc = MonteCarloConfig::new(setting.clone(), control_spec(config, k)?, reps, seed);
    mc.base = base_learner(config, Some(&setting))?;
    mc.plan = match split_choice(config, k)? {
        SplitChoice::Plan(p) => p,
        SplitChoice::Roc => {
            return Err(invalid(
                "the roc split is a fit option; simulations always run the ROC method on it",
            ))
        }
    };
    mc.methods = methods(config)?;
    mc.grid = grid(config)?;
    mc.roc_plan = Some(roc_split_plan(k));
    log::info!(
        "{task}: {reps} reps, seed {seed}, {} threads",
        rayon::current_num_threads()
    );
    let summary = if sweep {
        threshold_sweep(&mc, config.ranks.unwrap_or(DEFAULT_RANKS))?
    } else {
        mc.validate()?;
        run_monte_carlo(&mc)?
    };
    if summary.excluded > 0 {
        log::warn!(
            "{} of {} reps excluded as infeasible",
            summary.excluded,
            summary.reps
        );
    }
    emit(config, task, &summary)
}

fn role_counts(split: &DataSplit) -> Vec<[usize; 3]> {
    split
        .parts
        .iter()
        .map(|p| [p.score.len(), p.threshold.len(), p.evaluate.len()])
        .collect()
}

fn fit(config: &RunConfig) -> Result<()> {
    let path = require(&config.data, "data", "fit")?;
    let data = load_dataset_csv(path)?;
    let k = data.num_classes();
    let spec = control_spec(config, k)?;
    let base = base_learner(config, setting(config)?.as_ref())?;
    let seed = config.seed.unwrap_or(0);
    let (model, split) = match split_choice(config, k)? {
        SplitChoice::Plan(plan) => {
            let opts = FitOptions::with_grid(grid(config)?);
            let (clf, split) = fit_hnp(&data, &plan, &spec, &base, seed, &opts)?;
            if let Some(w) = &clf.diagnostics.model_warning {
                log::warn!("{w}");
            }
            (FittedModel::Hnp(clf), split)
        }
        SplitChoice::Roc => {
            let plan = roc_split_plan(k);
            let (clf, split) = fit_roc(&data, &plan, spec.alphas(), &base, seed)?;
            (FittedModel::Roc(clf), split)
        }
    };
    log::info!("fit on {} rows, seed {seed}", data.len());
    let report = FitReport {
        seed,
        data: path.clone(),
        class_sizes: split.class_sizes.clone(),
        role_counts: role_counts(&split),
        model,
    };
    emit(config, "fit", &report)
}

fn load_model(config: &RunConfig, task: &str) -> Result<FitReport> {
    read_report(require(&config.model, "model", task)?, "fit")
}

fn predict(config: &RunConfig) -> Result<()> {
    let report = load_model(config, "predict")?;
    let rows = load_features_csv(require(&config.data, "data", "predict")?)?;
    let clf = report.model.classifier();
    if let Some(r) = rows.iter().find(|r| r.len() != clf.width()) {
        return Err(HnpError::DimensionMismatch {
            expected: clf.width(),
            got: r.len(),
        });
    }
    let labels = rows
        .iter()
        .map(|x| clf.label(x))
        .collect::<Result<Vec<_>>>()?;
    match &config.out {
        Some(path) => write_labels(&labels, path),
        None => {
            let text: String = labels.iter().map(|l| format!("{l}\n")).collect();
            write_output(None, &text)
        }
    }
}

fn evaluate(config: &RunConfig) -> Result<()> {
    let model_path = require(&config.model, "model", "evaluate")?;
    let report: FitReport = read_report(model_path, "fit")?;
    let data_path = require(&config.data, "data", "evaluate")?;
    let data = load_dataset_csv(data_path)?;
    // Labels are read against the model's class count, not the file's maximum.
    let data = LabeledDataset::new(
        data.rows().map(<[f64]>::to_vec).collect(),
        data.labels().to_vec(),
        report.model.classifier().classes().max(data.num_classes()),
    )?;
    let errors = match &report.model {
        FittedModel::Hnp(c) => estimate_errors(c, &data)?,
        FittedModel::Roc(c) => estimate_errors(c, &data)?,
    };
    emit(
        config,
        "evaluate",
        &EvaluateReport {
            data: data_path,
            model: model_path,
            errors,
        },
    )
}

fn featurize(config: &RunConfig) -> Result<()> {
    let manifest = require(&config.manifest, "manifest", "featurize")?;
    let cohort = load_cohort(manifest)?;
    let set = match &config.transform {
        Some(path) => {
            if config.method.is_some() {
                return Err(invalid("--method and --transform are exclusive"));
            }
            read_report::<FittedFeaturization>(path, "featurization")?.apply(&cohort.patients)?
        }
        None => {
            let method: FeaturizeMethod = config.method.as_deref().unwrap_or("M4").parse()?;
            fit_featurization(method, config, &cohort.patients)?
        }
    };
    for w in &set.warnings {
        log::warn!("{w}");
    }
    if let Some(path) = &config.save_transform {
        write_output(
            Some(path),
            &report_to_string("featurization", &set.featurization)?,
        )?;
    }
    write_output(config.out.as_deref(), &features_csv(&set, &cohort.labels)?)
}

fn fit_featurization(
    method: FeaturizeMethod,
    config: &RunConfig,
    patients: &[hnp::featurize::PatientMatrix],
) -> Result<FeatureVectorSet> {
    let kept = || {
        let max_zero = config
            .max_zero_fraction
            .unwrap_or(DEFAULT_MAX_ZERO_FRACTION);
        let kept = drop_sparse_cell_types(patients, max_zero)?;
        log::info!(
            "keeping {} of {} cell types",
            kept.len(),
            patients[0].num_cell_types()
        );
        Ok::<_, HnpError>(kept)
    };
    match method {
        FeaturizeMethod::M1 => {
            featurize_m1(patients, config.n_features.unwrap_or(DEFAULT_N_FEATURES))
        }
        FeaturizeMethod::M2 => featurize_m2(patients, &kept()?),
        FeaturizeMethod::M3 => featurize_m3(patients, &kept()?),
        FeaturizeMethod::M4 => featurize_m4(patients),
    }
}

/// `y,x1,...,xd` when every patient is labeled, `x1,...,xd` otherwise, so the
/// file feeds straight into fit, evaluate or predict.
fn features_csv(set: &FeatureVectorSet, labels: &[Option<usize>]) -> Result<String> {
    let labeled = labels.iter().all(Option::is_some);
    let mut out = String::new();
    let mut header: Vec<String> = Vec::new();
    if labeled {
        header.push("y".into());
    }
    header.extend((1..=set.dim()).map(|j| format!("x{j}")));
    out.push_str(&header.join(","));
    out.push('\n');
    for (v, l) in set.vectors.iter().zip(labels) {
        let mut cells: Vec<String> = Vec::with_capacity(v.len() + 1);
        if labeled {
            cells.push(l.expect("checked above").to_string());
        }
        for x in v {
            if !x.is_finite() {
                return Err(HnpError::Numerical("non-finite feature value".into()));
            }
            cells.push(x.to_string());
        }
        out.push_str(&cells.join(","));
        out.push('\n');
    }
    Ok(out)
}
