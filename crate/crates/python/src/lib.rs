//! Python module `hnp_py`: fitting, prediction, simulation and featurization.
//!
//! Library errors raise `hnp_py.HnpError` (a `ValueError`) with arguments
//! `(message, code)`.

use hnp::featurize::{
    drop_sparse_cell_types, featurize_m1, featurize_m2, featurize_m3, featurize_m4, Matrix,
    PatientMatrix, DEFAULT_MAX_ZERO_FRACTION,
};
use hnp::io::report_to_string;
use hnp::simlab::{estimate_errors, run_monte_carlo, Method, MonteCarloConfig, SimulationSetting};
use hnp::umbrella::{GridPolicy, RoleFractions};
use hnp::{
    BaseLearner, Classifier as _, ControlSpec, FitOptions, HnpClassifier, LabeledDataset, SplitPlan,
};
use pyo3::create_exception;
use pyo3::exceptions::PyValueError;
use pyo3::prelude::*;

create_exception!(hnp_py, HnpError, PyValueError);

fn to_py(e: hnp::HnpError) -> PyErr {
    HnpError::new_err((e.to_string(), e.code()))
}

fn invalid(msg: impl Into<String>) -> PyErr {
    to_py(hnp::HnpError::InvalidArgument(msg.into()))
}

/// One level for every controlled class, or one per class.
#[derive(FromPyObject)]
enum Levels {
    One(f64),
    Many(Vec<f64>),
}

impl Levels {
    fn expand(&self, k: usize) -> PyResult<Vec<f64>> {
        match self {
            Levels::One(v) => Ok(vec![*v; k.saturating_sub(1)]),
            Levels::Many(v) if v.len() + 1 == k => Ok(v.clone()),
            Levels::Many(v) => Err(invalid(format!(
                "{k} classes need {} levels, got {}",
                k - 1,
                v.len()
            ))),
        }
    }
}

fn spec(alpha: &Levels, delta: &Levels, k: usize) -> PyResult<ControlSpec> {
    ControlSpec::new(alpha.expand(k)?, delta.expand(k)?).map_err(to_py)
}

fn base_learner(name: &str, setting: Option<&SimulationSetting>) -> PyResult<BaseLearner> {
    match name {
        "logistic" => Ok(BaseLearner::default()),
        "gaussian" => Ok(BaseLearner::Gaussian {
            covariance: Default::default(),
        }),
        "oracle" => setting
            .map(|s| BaseLearner::Oracle(s.oracle_params()))
            .ok_or_else(|| invalid("the oracle base is only available in simulations")),
        other => Err(invalid(format!(
            "unknown base {other:?}; expected logistic, gaussian or oracle"
        ))),
    }
}

fn grid(name: &str) -> PyResult<GridPolicy> {
    match name {
        "scores" => Ok(GridPolicy::Scores),
        "none" => Ok(GridPolicy::None),
        other => Err(invalid(format!(
            "unknown grid {other:?}; expected scores or none"
        ))),
    }
}

fn dataset(
    x: Vec<Vec<f64>>,
    y: Vec<usize>,
    num_classes: Option<usize>,
) -> PyResult<LabeledDataset> {
    let k = num_classes.unwrap_or_else(|| y.iter().copied().max().unwrap_or(0));
    LabeledDataset::new(x, y, k).map_err(to_py)
}

fn json_to_py<'py>(py: Python<'py>, text: &str) -> PyResult<Bound<'py, PyAny>> {
    py.import("json")?.call_method1("loads", (text,))
}

#[pyfunction]
fn binomial_tail(k: usize, n: usize, alpha: f64) -> PyResult<f64> {
    hnp::binomial_tail(k, n, alpha).map_err(to_py)
}

/// Largest order-statistic rank whose violation probability is at most `delta`.
#[pyfunction]
fn delta_search(n: usize, alpha: f64, delta: f64) -> PyResult<usize> {
    hnp::delta_search(n, alpha, delta).map_err(to_py)
}

#[pyfunction]
fn min_sample_size(alpha: f64, delta: f64) -> PyResult<usize> {
    hnp::min_sample_size(alpha, delta).map_err(to_py)
}

/// `(T_1, ..., T_{I-1})` of a posterior vector.
#[pyfunction]
fn hnp_scores(probs: Vec<f64>) -> PyResult<Vec<f64>> {
    if probs.len() < 2 {
        return Err(invalid("need at least two class probabilities"));
    }
    Ok(hnp::hnp_scores(&probs).0)
}

/// A fitted H-NP classifier.
#[pyclass(module = "hnp_py", frozen)]
struct Classifier {
    inner: HnpClassifier,
}

#[pymethods]
impl Classifier {
    /// Fits on rows `x` with labels `y` in `1..=I` (1 = most severe).
    ///
    /// `split` is a list of per-class `(score, threshold, evaluate)` fractions;
    /// the default uses 50/50, 45/50/5 and 95/5.
    #[staticmethod]
    #[pyo3(signature = (x, y, alpha, delta, split=None, base="logistic", seed=0, grid="scores"))]
    #[allow(clippy::too_many_arguments)]
    fn fit(
        py: Python<'_>,
        x: Vec<Vec<f64>>,
        y: Vec<usize>,
        alpha: Levels,
        delta: Levels,
        split: Option<Vec<(f64, f64, f64)>>,
        base: &str,
        seed: u64,
        grid: &str,
    ) -> PyResult<Self> {
        let data = dataset(x, y, None)?;
        let k = data.num_classes();
        let spec = spec(&alpha, &delta, k)?;
        let plan = match split {
            None => SplitPlan::standard(k),
            Some(f) => SplitPlan::hierarchical(
                f.into_iter()
                    .map(|(s, t, e)| RoleFractions::new(s, t, e))
                    .collect(),
            )
            .map_err(to_py)?,
        };
        let base = base_learner(base, None)?;
        let opts = FitOptions::with_grid(self::grid(grid)?);
        let (inner, _) = py
            .detach(|| hnp::fit_hnp(&data, &plan, &spec, &base, seed, &opts))
            .map_err(to_py)?;
        Ok(Self { inner })
    }

    fn predict(&self, x: Vec<Vec<f64>>) -> PyResult<Vec<usize>> {
        x.iter()
            .map(|r| self.inner.classify(r))
            .collect::<hnp::Result<_>>()
            .map_err(to_py)
    }

    fn scores(&self, x: Vec<Vec<f64>>) -> PyResult<Vec<Vec<f64>>> {
        x.iter()
            .map(|r| self.inner.scores(r))
            .collect::<hnp::Result<_>>()
            .map_err(to_py)
    }

    fn posterior(&self, x: Vec<Vec<f64>>) -> PyResult<Vec<Vec<f64>>> {
        x.iter()
            .map(|r| self.inner.model.posterior(r))
            .collect::<hnp::Result<_>>()
            .map_err(to_py)
    }

    /// Error rates on labeled data: `error<i>` for under-classification,
    /// `error<i><j>` per confusion cell, `overall`, `remaining` and `counts`.
    fn evaluate<'py>(
        &self,
        py: Python<'py>,
        x: Vec<Vec<f64>>,
        y: Vec<usize>,
    ) -> PyResult<Bound<'py, PyAny>> {
        let data = dataset(x, y, Some(self.inner.num_classes()))?;
        let report = estimate_errors(&self.inner, &data).map_err(to_py)?;
        let text = serde_json::to_string(&report).map_err(|e| invalid(e.to_string()))?;
        json_to_py(py, &text)
    }

    #[getter]
    fn thresholds(&self) -> Vec<f64> {
        self.inner.thresholds().to_vec()
    }

    #[getter]
    fn num_classes(&self) -> usize {
        self.inner.num_classes()
    }

    #[getter]
    fn diagnostics<'py>(&self, py: Python<'py>) -> PyResult<Bound<'py, PyAny>> {
        let text =
            serde_json::to_string(&self.inner.diagnostics).map_err(|e| invalid(e.to_string()))?;
        json_to_py(py, &text)
    }

    /// Versioned JSON report of the classifier; `from_json` reads it back.
    fn to_json(&self) -> PyResult<String> {
        report_to_string("classifier", &self.inner).map_err(to_py)
    }

    #[staticmethod]
    fn from_json(text: &str) -> PyResult<Self> {
        let mut value: serde_json::Value =
            serde_json::from_str(text).map_err(|e| invalid(e.to_string()))?;
        if let Some(obj) = value.as_object_mut() {
            obj.remove("schema");
            obj.remove("kind");
        }
        let inner = serde_json::from_value(value).map_err(|e| invalid(e.to_string()))?;
        Ok(Self { inner })
    }

    fn __repr__(&self) -> String {
        format!(
            "Classifier(num_classes={}, thresholds={:?})",
            self.inner.num_classes(),
            self.inner.thresholds()
        )
    }
}

fn method(name: &str) -> PyResult<Method> {
    match name {
        "hnp" => Ok(Method::Hnp),
        "hnp-unconditional" => Ok(Method::HnpUnconditional),
        "roc" => Ok(Method::Roc),
        "argmax" => Ok(Method::Argmax),
        other => Err(invalid(format!("unknown method {other:?}"))),
    }
}

/// Monte Carlo study on a preset setting (`T1.1`, `T2.1`, `T3.1`); returns
/// the report as a dict.
#[pyfunction]
#[pyo3(signature = (setting, alpha, delta, reps, seed, methods=None, base="logistic", sweep_ranks=None, train_sizes=None, test_sizes=None))]
#[allow(clippy::too_many_arguments)]
fn simulate<'py>(
    py: Python<'py>,
    setting: &str,
    alpha: Levels,
    delta: Levels,
    reps: usize,
    seed: u64,
    methods: Option<Vec<String>>,
    base: &str,
    sweep_ranks: Option<usize>,
    train_sizes: Option<Vec<usize>>,
    test_sizes: Option<Vec<usize>>,
) -> PyResult<Bound<'py, PyAny>> {
    let mut setting = SimulationSetting::preset(setting).map_err(to_py)?;
    if let Some(n) = train_sizes {
        setting.train_sizes = n;
    }
    if let Some(n) = test_sizes {
        setting.test_sizes = n;
    }
    let k = setting.num_classes();
    let mut config = MonteCarloConfig::new(setting.clone(), spec(&alpha, &delta, k)?, reps, seed);
    config.base = base_learner(base, Some(&setting))?;
    if let Some(names) = methods {
        config.methods = names.iter().map(|m| method(m)).collect::<PyResult<_>>()?;
    }
    config.sweep_ranks = sweep_ranks;
    let text = py
        .detach(|| run_monte_carlo(&config).and_then(|s| report_to_string("simulate", &s)))
        .map_err(to_py)?;
    json_to_py(py, &text)
}

/// Feature vectors of a cohort of gene-by-cell-type matrices, one list of
/// rows per patient. Returns `(vectors, warnings)`.
#[pyfunction]
#[pyo3(signature = (matrices, method="M4", n_features=100, max_zero_fraction=DEFAULT_MAX_ZERO_FRACTION))]
fn featurize(
    matrices: Vec<Vec<Vec<f64>>>,
    method: &str,
    n_features: usize,
    max_zero_fraction: f64,
) -> PyResult<(Vec<Vec<f64>>, Vec<String>)> {
    let cohort = matrices
        .iter()
        .enumerate()
        .map(|(j, rows)| {
            Ok(PatientMatrix::unnamed(
                format!("p{j}"),
                Matrix::from_rows(rows)?,
            ))
        })
        .collect::<hnp::Result<Vec<_>>>()
        .map_err(to_py)?;
    let kept = || drop_sparse_cell_types(&cohort, max_zero_fraction);
    let set = match method.to_ascii_uppercase().as_str() {
        "M1" => featurize_m1(&cohort, n_features),
        "M2" => kept().and_then(|k| featurize_m2(&cohort, &k)),
        "M3" => kept().and_then(|k| featurize_m3(&cohort, &k)),
        "M4" => featurize_m4(&cohort),
        other => return Err(invalid(format!("unknown featurization {other:?}"))),
    }
    .map_err(to_py)?;
    Ok((set.vectors, set.warnings))
}

#[pymodule]
fn hnp_py(m: &Bound<'_, PyModule>) -> PyResult<()> {
    m.add("HnpError", m.py().get_type::<HnpError>())?;
    m.add_class::<Classifier>()?;
    m.add_function(wrap_pyfunction!(binomial_tail, m)?)?;
    m.add_function(wrap_pyfunction!(delta_search, m)?)?;
    m.add_function(wrap_pyfunction!(min_sample_size, m)?)?;
    m.add_function(wrap_pyfunction!(hnp_scores, m)?)?;
    m.add_function(wrap_pyfunction!(simulate, m)?)?;
    m.add_function(wrap_pyfunction!(featurize, m)?)?;
    Ok(())
}
