//! Threshold selection with high-probability control of under-classification.
//!
//! Classes are ordered by priority, class 1 first. The classifier assigns
//! label `i` to the first `i` whose score `T_i` reaches `t_i`, and the last
//! class otherwise. Each `t_i` is an order statistic of held-out class-`i`
//! scores, chosen so that `P(R_i > alpha_i) <= delta_i` where `R_i` is the
//! population rate at which class `i` is sent to a less severe class.

mod bound;
mod classifier;
mod fit;
mod split;

use serde::{Deserialize, Serialize};

pub use bound::{default_slack, upper_bound, BoundBranch, BoundKind, ScoreSample, UpperBound};
pub use classifier::{decide, Classifier, FitDiagnostics, HnpClassifier};
pub use fit::{
    complete_with_bounds, empirical_remaining_risk, first_threshold_grid, fit_general,
    fit_three_class, FitOptions, GridPolicy, ScoredSplit,
};
pub use split::{
    split_dataset, split_for_control, ClassParts, DataSplit, RoleFractions, SplitPlan,
};

use crate::dataset::LabeledDataset;
use crate::error::{HnpError, Result};
use crate::scoring::BaseLearner;
use crate::tail::check_open_unit;

/// Control levels `alpha_i` and tolerances `delta_i` for classes `1..I-1`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "RawSpec")]
pub struct ControlSpec {
    alphas: Vec<f64>,
    deltas: Vec<f64>,
}

#[derive(Deserialize)]
struct RawSpec {
    alphas: Vec<f64>,
    deltas: Vec<f64>,
}

impl TryFrom<RawSpec> for ControlSpec {
    type Error = HnpError;

    fn try_from(raw: RawSpec) -> Result<Self> {
        ControlSpec::new(raw.alphas, raw.deltas)
    }
}

impl ControlSpec {
    pub fn new(alphas: Vec<f64>, deltas: Vec<f64>) -> Result<Self> {
        if alphas.is_empty() || alphas.len() != deltas.len() {
            return Err(HnpError::invalid(format!(
                "need matching nonempty alphas and deltas, got {} and {}",
                alphas.len(),
                deltas.len()
            )));
        }
        for (a, d) in alphas.iter().zip(&deltas) {
            check_open_unit("alpha", *a)?;
            check_open_unit("delta", *d)?;
        }
        Ok(Self { alphas, deltas })
    }

    /// Same `(alpha, delta)` for each of the `num_classes - 1` controlled classes.
    pub fn uniform(num_classes: usize, alpha: f64, delta: f64) -> Result<Self> {
        let m = num_classes.saturating_sub(1);
        Self::new(vec![alpha; m], vec![delta; m])
    }

    pub fn num_classes(&self) -> usize {
        self.alphas.len() + 1
    }

    pub fn alphas(&self) -> &[f64] {
        &self.alphas
    }

    pub fn deltas(&self) -> &[f64] {
        &self.deltas
    }
}

/// Split, fit the base model on the scoring part, and run the umbrella search.
///
/// Uses [`fit_three_class`] for three classes and [`fit_general`] otherwise.
pub fn fit_hnp(
    data: &LabeledDataset,
    plan: &SplitPlan,
    spec: &ControlSpec,
    base: &BaseLearner,
    seed: u64,
    opts: &FitOptions,
) -> Result<(HnpClassifier, DataSplit)> {
    data.require_all_classes()?;
    let split = split_for_control(data, plan, spec, seed)?;
    let model = base.fit(&data.subset(&split.score_indices()))?;
    let scored = ScoredSplit::new(&model, data, &split)?;
    let classifier = if data.num_classes() == 3 {
        fit_three_class(&scored, model, spec, opts)?
    } else {
        fit_general(&scored, model, spec, opts)?
    };
    Ok((classifier, split))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn control_spec_validation() {
        assert!(ControlSpec::new(vec![0.05, 0.05], vec![0.05]).is_err());
        assert!(ControlSpec::new(vec![0.0], vec![0.05]).is_err());
        assert!(ControlSpec::new(vec![0.05], vec![1.0]).is_err());
        let s = ControlSpec::uniform(3, 0.05, 0.1).unwrap();
        assert_eq!(s.num_classes(), 3);
        assert_eq!(s.deltas(), &[0.1, 0.1]);
        let bad: std::result::Result<ControlSpec, _> =
            serde_json::from_str(r#"{"alphas":[1.5],"deltas":[0.1]}"#);
        assert!(bad.is_err());
    }
}
