//! Base classifiers that supply posterior estimates, and the hierarchical
//! scores built from them.
//!
//! For a posterior vector `p` over classes `1..=I`, the score for step `i` is
//! `T_1 = p_1` and `T_i = p_i / (p_{i+1} + ... + p_I)` for `1 < i < I`. Each
//! `T_i` ranks "class `i`" against "some less severe class".

mod gaussian;
mod logistic;

use serde::{Deserialize, Serialize};

pub use gaussian::{CovarianceKind, GaussianModel, GaussianParams, COVARIANCE_RIDGE};
pub use logistic::{LogisticConfig, LogisticModel};

use crate::dataset::LabeledDataset;
use crate::error::{HnpError, Result};

/// Lower clamp on the tail posterior mass in `T_i`, `i > 1`.
pub const SCORE_DENOMINATOR_FLOOR: f64 = 1e-12;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum ModelKind {
    MultinomialLogistic,
    GaussianDiscriminant,
    OracleGaussian,
}

/// A fitted (or supplied) probabilistic classifier.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case")]
pub enum ScoreModel {
    MultinomialLogistic(LogisticModel),
    GaussianDiscriminant(GaussianModel),
    /// True generating parameters, not fitted; gives exact Bayes posteriors.
    OracleGaussian(GaussianModel),
}

pub fn fit_multinomial_lr(data: &LabeledDataset, config: &LogisticConfig) -> Result<ScoreModel> {
    LogisticModel::fit(data, config).map(ScoreModel::MultinomialLogistic)
}

pub fn fit_gaussian_discriminant(data: &LabeledDataset) -> Result<ScoreModel> {
    GaussianModel::fit(data, CovarianceKind::Shared).map(ScoreModel::GaussianDiscriminant)
}

impl ScoreModel {
    pub fn oracle_gaussian(params: GaussianParams) -> Result<Self> {
        GaussianModel::new(params).map(ScoreModel::OracleGaussian)
    }

    pub fn kind(&self) -> ModelKind {
        match self {
            ScoreModel::MultinomialLogistic(_) => ModelKind::MultinomialLogistic,
            ScoreModel::GaussianDiscriminant(_) => ModelKind::GaussianDiscriminant,
            ScoreModel::OracleGaussian(_) => ModelKind::OracleGaussian,
        }
    }

    pub fn num_classes(&self) -> usize {
        match self {
            ScoreModel::MultinomialLogistic(m) => m.num_classes,
            ScoreModel::GaussianDiscriminant(m) | ScoreModel::OracleGaussian(m) => m.num_classes(),
        }
    }

    pub fn dim(&self) -> usize {
        match self {
            ScoreModel::MultinomialLogistic(m) => m.dim,
            ScoreModel::GaussianDiscriminant(m) | ScoreModel::OracleGaussian(m) => m.dim(),
        }
    }

    /// Fit-time caveat worth surfacing in diagnostics, if any.
    pub fn warning(&self) -> Option<&'static str> {
        match self {
            ScoreModel::MultinomialLogistic(m) if !m.converged => {
                Some("gradient descent reached max_iters before the tolerance")
            }
            ScoreModel::GaussianDiscriminant(m) if m.params().regularized => {
                Some("covariance was ridge-regularized")
            }
            _ => None,
        }
    }

    /// Posterior estimate `P(Y = i | x)` for `i = 1..=I`.
    pub fn posterior(&self, x: &[f64]) -> Result<Vec<f64>> {
        if x.len() != self.dim() {
            return Err(HnpError::DimensionMismatch {
                expected: self.dim(),
                got: x.len(),
            });
        }
        let mut out = vec![0.0; self.num_classes()];
        self.posterior_into(x, &mut out);
        Ok(out)
    }

    /// Unchecked variant of [`posterior`](Self::posterior); `out.len()` must be `I`.
    pub fn posterior_into(&self, x: &[f64], out: &mut [f64]) {
        match self {
            ScoreModel::MultinomialLogistic(m) => m.softmax_into(x, out),
            ScoreModel::GaussianDiscriminant(m) | ScoreModel::OracleGaussian(m) => {
                m.posterior_into(x, out)
            }
        }
    }

    pub fn scores(&self, x: &[f64]) -> Result<HnpScores> {
        self.posterior(x).map(|p| hnp_scores(&p))
    }
}

/// How the score model is obtained from the scoring subset.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "base", rename_all = "kebab-case")]
pub enum BaseLearner {
    Logistic(LogisticConfig),
    Gaussian {
        #[serde(default)]
        covariance: CovarianceKind,
    },
    /// Ignores the data and returns the supplied generating model.
    Oracle(GaussianParams),
}

impl Default for BaseLearner {
    fn default() -> Self {
        BaseLearner::Logistic(LogisticConfig::default())
    }
}

impl BaseLearner {
    pub fn fit(&self, data: &LabeledDataset) -> Result<ScoreModel> {
        match self {
            BaseLearner::Logistic(config) => fit_multinomial_lr(data, config),
            BaseLearner::Gaussian { covariance } => {
                GaussianModel::fit(data, *covariance).map(ScoreModel::GaussianDiscriminant)
            }
            BaseLearner::Oracle(params) => {
                let model = ScoreModel::oracle_gaussian(params.clone())?;
                if model.num_classes() != data.num_classes() || model.dim() != data.dim() {
                    return Err(HnpError::invalid(
                        "oracle parameters do not match the data's classes or dimension",
                    ));
                }
                Ok(model)
            }
        }
    }
}

/// `(T_1(x), ..., T_{I-1}(x))`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(transparent)]
pub struct HnpScores(pub Vec<f64>);

impl HnpScores {
    pub fn values(&self) -> &[f64] {
        &self.0
    }
}

/// Hierarchical scores of a posterior vector. Tail masses below
/// [`SCORE_DENOMINATOR_FLOOR`] are clamped, so the scores stay finite.
pub fn hnp_scores(probs: &[f64]) -> HnpScores {
    let mut out = vec![0.0; probs.len().saturating_sub(1)];
    write_hnp_scores(probs, &mut out);
    HnpScores(out)
}

pub(crate) fn write_hnp_scores(probs: &[f64], out: &mut [f64]) {
    let k = probs.len();
    if k < 2 {
        return;
    }
    let mut tail = 0.0;
    for i in (1..k - 1).rev() {
        tail += probs[i + 1];
        out[i] = probs[i] / tail.max(SCORE_DENOMINATOR_FLOOR);
    }
    out[0] = probs[0];
}

/// Scores of many observations, one row of `I - 1` values per observation.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct ScoreTable {
    width: usize,
    values: Vec<f64>,
}

impl ScoreTable {
    pub fn compute(model: &ScoreModel, data: &LabeledDataset, indices: &[usize]) -> Self {
        let k = model.num_classes();
        let mut probs = vec![0.0; k];
        let mut values = vec![0.0; indices.len() * (k - 1)];
        for (row, &i) in values.chunks_exact_mut(k - 1).zip(indices) {
            model.posterior_into(data.row(i), &mut probs);
            write_hnp_scores(&probs, row);
        }
        Self {
            width: k - 1,
            values,
        }
    }

    pub fn compute_all(model: &ScoreModel, data: &LabeledDataset) -> Self {
        let all: Vec<usize> = (0..data.len()).collect();
        Self::compute(model, data, &all)
    }

    pub fn from_rows(width: usize, rows: &[Vec<f64>]) -> Result<Self> {
        if rows.iter().any(|r| r.len() != width) {
            return Err(HnpError::invalid(format!(
                "score rows must have width {width}"
            )));
        }
        Ok(Self {
            width,
            values: rows.concat(),
        })
    }

    pub fn len(&self) -> usize {
        self.values.len().checked_div(self.width).unwrap_or(0)
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn row(&self, r: usize) -> &[f64] {
        &self.values[r * self.width..(r + 1) * self.width]
    }

    pub fn rows(&self) -> impl Iterator<Item = &[f64]> + '_ {
        self.values.chunks_exact(self.width.max(1))
    }

    pub fn column(&self, i: usize) -> impl Iterator<Item = f64> + '_ {
        self.rows().map(move |r| r[i])
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn close(a: &[f64], b: &[f64], tol: f64) -> bool {
        a.len() == b.len() && a.iter().zip(b).all(|(x, y)| (x - y).abs() <= tol)
    }

    #[test]
    fn hnp_score_examples() {
        assert!(close(
            hnp_scores(&[0.6, 0.3, 0.1]).values(),
            &[0.6, 3.0],
            1e-12
        ));
        let clamped = hnp_scores(&[0.2, 0.8, 0.0]);
        assert_eq!(clamped.values()[0], 0.2);
        assert!((clamped.values()[1] - 0.8 / 1e-12).abs() < 1.0);
        assert!(close(
            hnp_scores(&[0.1, 0.2, 0.3, 0.4]).values(),
            &[0.1, 0.2 / 0.7, 0.3 / 0.4],
            1e-12
        ));
        assert_eq!(hnp_scores(&[0.3, 0.7]).values(), &[0.3]);
    }

    #[test]
    fn zero_weight_logistic_is_uniform() {
        let m = ScoreModel::MultinomialLogistic(LogisticModel::zeros(4, 3));
        let p = m.posterior(&[1.0, -2.0, 5.0]).unwrap();
        assert!(close(&p, &[0.25; 4], 1e-15));
    }

    #[test]
    fn posterior_checks_dimension() {
        let m = ScoreModel::MultinomialLogistic(LogisticModel::zeros(3, 2));
        assert!(matches!(
            m.posterior(&[1.0]),
            Err(HnpError::DimensionMismatch {
                expected: 2,
                got: 1
            })
        ));
    }

    #[test]
    fn logistic_separates_one_dimensional_classes() {
        let xs: Vec<Vec<f64>> = (1..=20)
            .flat_map(|i| [vec![-(i as f64) / 10.0], vec![i as f64 / 10.0]])
            .collect();
        let ys: Vec<usize> = (0..40).map(|i| if i % 2 == 0 { 1 } else { 2 }).collect();
        let data = LabeledDataset::new(xs, ys, 2).unwrap();
        let model = fit_multinomial_lr(&data, &LogisticConfig::default()).unwrap();
        let correct = data
            .rows()
            .zip(data.labels())
            .filter(|(x, &y)| {
                let p = model.posterior(x).unwrap();
                (if p[0] >= p[1] { 1 } else { 2 }) == y
            })
            .count();
        assert_eq!(correct, data.len());
    }

    #[test]
    fn logistic_on_identical_classes_is_near_even() {
        let xs: Vec<Vec<f64>> = (0..40).map(|i| vec![(i / 2) as f64 / 10.0 - 1.0]).collect();
        let ys: Vec<usize> = (0..40).map(|i| 1 + i % 2).collect();
        let data = LabeledDataset::new(xs, ys, 2).unwrap();
        let model = fit_multinomial_lr(&data, &LogisticConfig::default()).unwrap();
        for x in [-3.0, -1.0, 0.0, 0.5, 2.0] {
            let p = model.posterior(&[x]).unwrap();
            assert!((p[0] - 0.5).abs() < 0.05, "x = {x}: {p:?}");
        }
    }

    #[test]
    fn logistic_requires_every_class() {
        let data = LabeledDataset::new(vec![vec![0.0], vec![1.0]], vec![1, 1], 2).unwrap();
        assert!(fit_multinomial_lr(&data, &LogisticConfig::default()).is_err());
    }

    #[test]
    fn symmetric_gaussian_midpoint_is_even() {
        let params = GaussianParams {
            means: vec![vec![1.5, 0.0], vec![-1.5, 0.0]],
            covariances: vec![vec![vec![1.0, 0.0], vec![0.0, 1.0]]],
            priors: vec![0.5, 0.5],
            regularized: false,
        };
        let m = ScoreModel::oracle_gaussian(params).unwrap();
        assert!(close(
            &m.posterior(&[0.0, 0.0]).unwrap(),
            &[0.5, 0.5],
            1e-15
        ));
    }

    #[test]
    fn gaussian_fit_rejects_tiny_classes() {
        let data = LabeledDataset::new(
            vec![
                vec![0.0, 0.0],
                vec![1.0, 0.0],
                vec![0.0, 1.0],
                vec![3.0, 3.0],
            ],
            vec![1, 1, 1, 2],
            2,
        )
        .unwrap();
        assert!(fit_gaussian_discriminant(&data).is_err());
    }

    #[test]
    fn gaussian_fit_ridges_degenerate_covariance() {
        // Second coordinate is constant, so the pooled covariance is singular.
        let xs: Vec<Vec<f64>> = (0..12).map(|i| vec![i as f64, 1.0]).collect();
        let ys: Vec<usize> = (0..12).map(|i| if i < 6 { 1 } else { 2 }).collect();
        let data = LabeledDataset::new(xs, ys, 2).unwrap();
        let m = fit_gaussian_discriminant(&data).unwrap();
        assert!(m.warning().is_some());
        let p = m.posterior(&[0.0, 1.0]).unwrap();
        assert!(p[0] > 0.5);
    }

    #[test]
    fn model_round_trips_through_json() {
        let params = GaussianParams {
            means: vec![vec![0.0], vec![2.0], vec![4.0]],
            covariances: vec![vec![vec![1.0]]],
            priors: vec![0.2, 0.3, 0.5],
            regularized: false,
        };
        let m = ScoreModel::oracle_gaussian(params).unwrap();
        let json = serde_json::to_string(&m).unwrap();
        let back: ScoreModel = serde_json::from_str(&json).unwrap();
        assert_eq!(back, m);
    }
}
