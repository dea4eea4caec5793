use serde::{Deserialize, Serialize};

use super::{ControlSpec, UpperBound};
use crate::error::{HnpError, Result};
use crate::scoring::{write_hnp_scores, ScoreModel};

/// The sequential rule: the first `i` with `T_i >= t_i`, else the last class.
/// Labels are 1-based.
pub fn decide(scores: &[f64], thresholds: &[f64]) -> usize {
    scores
        .iter()
        .zip(thresholds)
        .position(|(s, t)| s >= t)
        .map_or(thresholds.len() + 1, |i| i + 1)
}

/// Anything that maps a feature vector to a label in `1..=num_classes`.
pub trait Classifier {
    fn num_classes(&self) -> usize;

    fn dim(&self) -> usize;

    fn classify(&self, x: &[f64]) -> Result<usize>;

    fn classify_all<'a>(&self, rows: impl IntoIterator<Item = &'a [f64]>) -> Result<Vec<usize>>
    where
        Self: Sized,
    {
        rows.into_iter().map(|x| self.classify(x)).collect()
    }
}

/// Record of how a fit arrived at its thresholds.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FitDiagnostics {
    /// `t̄_i` at the selected thresholds, one per controlled class.
    pub upper_bounds: Vec<UpperBound>,
    /// Empirical remaining risk on the evaluation subsets at the optimum.
    pub remaining_risk: f64,
    /// Number of threshold vectors scored during the grid search.
    pub candidates: usize,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub model_warning: Option<String>,
}

/// A score model plus thresholds `t_1, ..., t_{I-1}`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HnpClassifier {
    pub model: ScoreModel,
    #[serde(with = "crate::serde_ext::extended_f64_vec")]
    pub thresholds: Vec<f64>,
    pub spec: ControlSpec,
    pub diagnostics: FitDiagnostics,
}

impl HnpClassifier {
    pub fn new(
        model: ScoreModel,
        thresholds: Vec<f64>,
        spec: ControlSpec,
        diagnostics: FitDiagnostics,
    ) -> Result<Self> {
        let k = model.num_classes();
        if thresholds.len() + 1 != k || spec.num_classes() != k {
            return Err(HnpError::invalid(format!(
                "{} thresholds and a {}-class spec do not match a {k}-class model",
                thresholds.len(),
                spec.num_classes()
            )));
        }
        if thresholds.iter().any(|t| t.is_nan()) {
            return Err(HnpError::invalid("thresholds must not be NaN"));
        }
        Ok(Self {
            model,
            thresholds,
            spec,
            diagnostics,
        })
    }

    pub fn thresholds(&self) -> &[f64] {
        &self.thresholds
    }

    pub fn scores(&self, x: &[f64]) -> Result<Vec<f64>> {
        self.model.scores(x).map(|s| s.0)
    }
}

impl Classifier for HnpClassifier {
    fn num_classes(&self) -> usize {
        self.model.num_classes()
    }

    fn dim(&self) -> usize {
        self.model.dim()
    }

    fn classify(&self, x: &[f64]) -> Result<usize> {
        let p = self.model.posterior(x)?;
        let mut s = vec![0.0; p.len() - 1];
        write_hnp_scores(&p, &mut s);
        Ok(decide(&s, &self.thresholds))
    }
}
