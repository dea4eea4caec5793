use serde::ser::SerializeMap;
use serde::{Deserialize, Serialize, Serializer};

use crate::baselines::classical_argmax;
use crate::dataset::LabeledDataset;
use crate::error::{HnpError, Result};
use crate::scoring::{write_hnp_scores, ScoreModel};
use crate::umbrella::{decide, Classifier};

/// Test-set confusion counts and the error rates derived from them.
///
/// Serialized with named rates first. For three classes these are `error1`
/// (`R_1*`), `error23` (`R_2*`), `error21`, `error31`, `error32` (`P_i(Ŷ=j)`),
/// `overall` and `remaining`; otherwise `under{i}` and `error{i}{j}`.
#[derive(Debug, Clone, PartialEq, Eq, Deserialize)]
#[serde(try_from = "RawReport")]
pub struct ErrorReport {
    counts: Vec<Vec<usize>>,
}

#[derive(Deserialize)]
struct RawReport {
    counts: Vec<Vec<usize>>,
}

impl TryFrom<RawReport> for ErrorReport {
    type Error = HnpError;

    fn try_from(raw: RawReport) -> Result<Self> {
        ErrorReport::from_counts(raw.counts)
    }
}

impl ErrorReport {
    /// `counts[i][j]` = number of class-`(i+1)` points labelled `j+1`.
    pub fn from_counts(counts: Vec<Vec<usize>>) -> Result<Self> {
        let k = counts.len();
        if k < 2 || counts.iter().any(|r| r.len() != k) {
            return Err(HnpError::invalid(
                "confusion counts must be a square matrix, I >= 2",
            ));
        }
        if let Some(i) = counts.iter().position(|r| r.iter().sum::<usize>() == 0) {
            return Err(HnpError::invalid(format!(
                "test data has no observations of class {}",
                i + 1
            )));
        }
        Ok(Self { counts })
    }

    pub fn from_predictions(
        truth: &[usize],
        predicted: &[usize],
        num_classes: usize,
    ) -> Result<Self> {
        if truth.len() != predicted.len() {
            return Err(HnpError::DimensionMismatch {
                expected: truth.len(),
                got: predicted.len(),
            });
        }
        let mut counts = vec![vec![0usize; num_classes]; num_classes];
        for (&y, &p) in truth.iter().zip(predicted) {
            if y == 0 || y > num_classes || p == 0 || p > num_classes {
                return Err(HnpError::invalid(format!(
                    "labels must lie in 1..={num_classes}, got {y} and {p}"
                )));
            }
            counts[y - 1][p - 1] += 1;
        }
        Self::from_counts(counts)
    }

    pub fn num_classes(&self) -> usize {
        self.counts.len()
    }

    pub fn counts(&self) -> &[Vec<usize>] {
        &self.counts
    }

    pub fn class_size(&self, i: usize) -> usize {
        self.counts[i - 1].iter().sum()
    }

    /// `P_i(Ŷ = j)`, 1-based.
    pub fn rate(&self, i: usize, j: usize) -> f64 {
        self.counts[i - 1][j - 1] as f64 / self.class_size(i) as f64
    }

    /// `R_i* = P_i(Ŷ > i)`.
    pub fn under(&self, i: usize) -> f64 {
        let wrong: usize = self.counts[i - 1][i..].iter().sum();
        wrong as f64 / self.class_size(i) as f64
    }

    /// `P_i(Ŷ != i)`.
    pub fn class_error(&self, i: usize) -> f64 {
        1.0 - self.counts[i - 1][i - 1] as f64 / self.class_size(i) as f64
    }

    fn priors(&self) -> Vec<f64> {
        let total: usize = self.counts.iter().flatten().sum();
        (1..=self.num_classes())
            .map(|i| self.class_size(i) as f64 / total as f64)
            .collect()
    }

    /// `sum_i pi_i P_i(Ŷ != i)` with test-set class proportions as priors.
    pub fn overall(&self) -> f64 {
        self.priors()
            .iter()
            .enumerate()
            .map(|(i, p)| p * self.class_error(i + 1))
            .sum()
    }

    /// `R^c = sum_{i >= 2} pi_i P_i(Ŷ < i)`: every error except under-classification.
    pub fn remaining(&self) -> f64 {
        let priors = self.priors();
        (2..=self.num_classes())
            .map(|i| {
                let wrong: usize = self.counts[i - 1][..i - 1].iter().sum();
                priors[i - 1] * wrong as f64 / self.class_size(i) as f64
            })
            .sum()
    }

    /// Named rates in report order.
    pub fn metrics(&self) -> Vec<(String, f64)> {
        let k = self.num_classes();
        let mut out = Vec::new();
        if k == 3 {
            out.push(("error1".to_string(), self.under(1)));
            out.push(("error23".to_string(), self.under(2)));
            out.push(("error21".to_string(), self.rate(2, 1)));
            out.push(("error31".to_string(), self.rate(3, 1)));
            out.push(("error32".to_string(), self.rate(3, 2)));
        } else {
            for i in 1..k {
                out.push((format!("under{i}"), self.under(i)));
            }
            for i in 2..=k {
                for j in 1..i {
                    out.push((format!("error{i}{j}"), self.rate(i, j)));
                }
            }
        }
        out.push(("overall".to_string(), self.overall()));
        out.push(("remaining".to_string(), self.remaining()));
        out
    }

    /// Name of `R_i*` in [`ErrorReport::metrics`].
    pub fn under_name(num_classes: usize, i: usize) -> String {
        match (num_classes, i) {
            (3, 1) => "error1".to_string(),
            (3, 2) => "error23".to_string(),
            _ => format!("under{i}"),
        }
    }

    pub fn metric(&self, name: &str) -> Option<f64> {
        self.metrics()
            .into_iter()
            .find(|(n, _)| n == name)
            .map(|(_, v)| v)
    }
}

impl Serialize for ErrorReport {
    fn serialize<S: Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        let metrics = self.metrics();
        let mut map = s.serialize_map(Some(metrics.len() + 1))?;
        for (name, v) in &metrics {
            map.serialize_entry(name, v)?;
        }
        map.serialize_entry("counts", &self.counts)?;
        map.end()
    }
}

/// Posteriors and hierarchical scores of a test set under one model, so many
/// threshold vectors can be evaluated without recomputing the model.
#[derive(Debug, Clone)]
pub struct TestPosteriors {
    num_classes: usize,
    labels: Vec<usize>,
    probs: Vec<f64>,
    scores: Vec<f64>,
}

impl TestPosteriors {
    pub fn new(model: &ScoreModel, test: &LabeledDataset) -> Result<Self> {
        let k = model.num_classes();
        if test.num_classes() != k {
            return Err(HnpError::invalid(format!(
                "test data has {} classes, model has {k}",
                test.num_classes()
            )));
        }
        if test.dim() != model.dim() {
            return Err(HnpError::DimensionMismatch {
                expected: model.dim(),
                got: test.dim(),
            });
        }
        test.require_all_classes()?;
        let mut probs = vec![0.0; test.len() * k];
        let mut scores = vec![0.0; test.len() * (k - 1)];
        for ((x, p), s) in test
            .rows()
            .zip(probs.chunks_exact_mut(k))
            .zip(scores.chunks_exact_mut(k - 1))
        {
            model.posterior_into(x, p);
            write_hnp_scores(p, s);
        }
        Ok(Self {
            num_classes: k,
            labels: test.labels().to_vec(),
            probs,
            scores,
        })
    }

    pub fn with_thresholds(&self, thresholds: &[f64]) -> Result<ErrorReport> {
        let k = self.num_classes;
        if thresholds.len() + 1 != k {
            return Err(HnpError::invalid(format!(
                "{} thresholds for {k} classes",
                thresholds.len()
            )));
        }
        let predicted: Vec<usize> = self
            .scores
            .chunks_exact(k - 1)
            .map(|s| decide(s, thresholds))
            .collect();
        ErrorReport::from_predictions(&self.labels, &predicted, k)
    }

    pub fn argmax(&self) -> Result<ErrorReport> {
        let predicted: Vec<usize> = self
            .probs
            .chunks_exact(self.num_classes)
            .map(classical_argmax)
            .collect();
        ErrorReport::from_predictions(&self.labels, &predicted, self.num_classes)
    }
}

/// Confusion-based error rates of any classifier on a labeled test set.
pub fn estimate_errors<C: Classifier>(
    classifier: &C,
    test: &LabeledDataset,
) -> Result<ErrorReport> {
    if test.num_classes() != classifier.num_classes() {
        return Err(HnpError::invalid(format!(
            "test data has {} classes, classifier has {}",
            test.num_classes(),
            classifier.num_classes()
        )));
    }
    test.require_all_classes()?;
    let predicted = test
        .rows()
        .map(|x| classifier.classify(x))
        .collect::<Result<Vec<_>>>()?;
    ErrorReport::from_predictions(test.labels(), &predicted, test.num_classes())
}
