//! Comparison classifiers: the plain argmax rule and per-class empirical
//! quantile thresholds (the ROC-curve approach).

use serde::{Deserialize, Serialize};

use crate::dataset::LabeledDataset;
use crate::error::{HnpError, Result};
use crate::scoring::{write_hnp_scores, BaseLearner, ScoreModel, ScoreTable};
use crate::umbrella::{decide, split_dataset, Classifier, DataSplit, SplitPlan};

/// Index (1-based) of the largest posterior entry; ties go to the smallest label.
pub fn classical_argmax(probs: &[f64]) -> usize {
    let mut best = 0;
    for (i, p) in probs.iter().enumerate().skip(1) {
        if *p > probs[best] {
            best = i;
        }
    }
    best + 1
}

/// Plug-in Bayes rule over a score model.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ArgmaxClassifier {
    pub model: ScoreModel,
}

impl Classifier for ArgmaxClassifier {
    fn num_classes(&self) -> usize {
        self.model.num_classes()
    }

    fn dim(&self) -> usize {
        self.model.dim()
    }

    fn classify(&self, x: &[f64]) -> Result<usize> {
        Ok(classical_argmax(&self.model.posterior(x)?))
    }
}

/// `sup{t : #{s < t} / n <= alpha}` over a score sample.
///
/// With ascending scores `s_(1..n)` and `c = max{c : c / n <= alpha}` this is
/// `s_(c+1)`, or `+inf` when `c = n`.
pub fn empirical_quantile_threshold(scores: &[f64], alpha: f64) -> Result<f64> {
    if scores.is_empty() {
        return Err(HnpError::invalid("threshold score set is empty"));
    }
    if scores.iter().any(|s| s.is_nan()) {
        return Err(HnpError::invalid("threshold scores must not be NaN"));
    }
    if !(0.0..=1.0).contains(&alpha) {
        return Err(HnpError::invalid(format!(
            "alpha must lie in [0, 1], got {alpha}"
        )));
    }
    let n = scores.len();
    let mut c = ((alpha * n as f64).floor() as usize).min(n);
    while c < n && (c + 1) as f64 <= alpha * n as f64 {
        c += 1;
    }
    while c > 0 && c as f64 > alpha * n as f64 {
        c -= 1;
    }
    if c == n {
        return Ok(f64::INFINITY);
    }
    let mut sorted = scores.to_vec();
    sorted.sort_by(f64::total_cmp);
    Ok(sorted[c])
}

/// Score model with per-class empirical-quantile thresholds.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RocClassifier {
    pub model: ScoreModel,
    #[serde(with = "crate::serde_ext::extended_f64_vec")]
    pub thresholds: Vec<f64>,
}

impl RocClassifier {
    pub fn thresholds(&self) -> &[f64] {
        &self.thresholds
    }
}

impl Classifier for RocClassifier {
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

/// `threshold_scores[i]` holds `T_{i+1}` on the class-`(i+1)` threshold set.
pub fn fit_roc_classifier(
    threshold_scores: &[Vec<f64>],
    model: ScoreModel,
    alphas: &[f64],
) -> Result<RocClassifier> {
    let k = model.num_classes();
    if threshold_scores.len() + 1 != k || alphas.len() + 1 != k {
        return Err(HnpError::invalid(format!(
            "a {k}-class model needs {} threshold sets and alphas, got {} and {}",
            k - 1,
            threshold_scores.len(),
            alphas.len()
        )));
    }
    let thresholds = threshold_scores
        .iter()
        .zip(alphas)
        .map(|(s, &a)| empirical_quantile_threshold(s, a))
        .collect::<Result<Vec<_>>>()?;
    Ok(RocClassifier { model, thresholds })
}

/// Split plan of the ROC approach: half scoring, half thresholds, every class.
pub fn roc_split_plan(num_classes: usize) -> SplitPlan {
    SplitPlan::two_way(num_classes, 0.5).expect("0.5 is a valid fraction")
}

/// Split, fit the base model on the scoring half, and set thresholds from the
/// other half.
pub fn fit_roc(
    data: &LabeledDataset,
    plan: &SplitPlan,
    alphas: &[f64],
    base: &BaseLearner,
    seed: u64,
) -> Result<(RocClassifier, DataSplit)> {
    data.require_all_classes()?;
    let split = split_dataset(data, plan, seed)?;
    let model = base.fit(&data.subset(&split.score_indices()))?;
    let k = model.num_classes();
    let sets = (0..k - 1)
        .map(|i| {
            ScoreTable::compute(&model, data, &split.parts[i].threshold)
                .column(i)
                .collect()
        })
        .collect::<Vec<Vec<f64>>>();
    if let Some(i) = sets.iter().position(Vec::is_empty) {
        return Err(HnpError::InfeasibleSplit {
            class: i + 1,
            available: 0,
            required: 1,
        });
    }
    Ok((fit_roc_classifier(&sets, model, alphas)?, split))
}
