//! Hierarchical Neyman-Pearson classification.
//!
//! Classes `1..=I` are ordered by decreasing severity. The umbrella fit takes
//! posterior estimates from any scoring-type base classifier and chooses
//! thresholds so that, with probability at least `1 - delta_i`, the rate at
//! which class `i` is sent to a less severe class stays below `alpha_i`,
//! while minimizing the remaining weighted misclassification.

#![allow(clippy::neg_cmp_op_on_partial_ord)] // `!(x > 0.0)` also rejects NaN

pub mod baselines;
pub mod dataset;
pub mod error;
pub mod featurize;
pub mod io;
pub mod scoring;
pub(crate) mod serde_ext;
pub mod simlab;
pub mod tail;
pub mod umbrella;

pub use dataset::LabeledDataset;
pub use error::{HnpError, Result};
pub use scoring::{hnp_scores, BaseLearner, HnpScores, ScoreModel};
pub use tail::{binomial_tail, delta_search, min_sample_size};
pub use umbrella::{fit_hnp, Classifier, ControlSpec, FitOptions, HnpClassifier, SplitPlan};
