use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::ControlSpec;
use crate::dataset::LabeledDataset;
use crate::error::{HnpError, Result};
use crate::tail::min_sample_size;

/// Guards `floor(fraction * size)` against representation error such as
/// `0.29 * 100 = 28.999999999999996`.
const COUNT_EPS: f64 = 1e-9;

/// Share of one class assigned to each role.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RoleFractions {
    pub score: f64,
    pub threshold: f64,
    #[serde(default)]
    pub evaluate: f64,
}

impl RoleFractions {
    pub const fn new(score: f64, threshold: f64, evaluate: f64) -> Self {
        Self {
            score,
            threshold,
            evaluate,
        }
    }

    /// `(score, threshold, evaluate)` counts; the floor remainder goes to score.
    pub fn counts(&self, size: usize) -> (usize, usize, usize) {
        let floor = |f: f64| ((f * size as f64) + COUNT_EPS).floor() as usize;
        let threshold = floor(self.threshold).min(size);
        let evaluate = floor(self.evaluate).min(size - threshold);
        (size - threshold - evaluate, threshold, evaluate)
    }
}

/// Per-class role fractions.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(transparent)]
pub struct SplitPlan {
    classes: Vec<RoleFractions>,
}

impl SplitPlan {
    /// Fractions must be nonnegative and sum to one per class.
    pub fn new(classes: Vec<RoleFractions>) -> Result<Self> {
        if classes.len() < 2 {
            return Err(HnpError::invalid("a split plan needs at least two classes"));
        }
        for (c, f) in classes.iter().enumerate() {
            let parts = [f.score, f.threshold, f.evaluate];
            if parts.iter().any(|&p| !(p >= 0.0) || p > 1.0) {
                return Err(HnpError::invalid(format!(
                    "class {}: fractions must lie in [0, 1]",
                    c + 1
                )));
            }
            let total: f64 = parts.iter().sum();
            if (total - 1.0).abs() > 1e-9 {
                return Err(HnpError::invalid(format!(
                    "class {}: fractions sum to {total}, expected 1",
                    c + 1
                )));
            }
        }
        Ok(Self { classes })
    }

    /// A plan usable by the umbrella fit: class 1 has no evaluation role, the
    /// last class has no threshold role, and every other role the fit reads
    /// is nonempty in proportion.
    pub fn hierarchical(classes: Vec<RoleFractions>) -> Result<Self> {
        let plan = Self::new(classes)?;
        let k = plan.classes.len();
        if plan.classes[0].evaluate != 0.0 {
            return Err(HnpError::invalid(
                "class 1 must not have an evaluation role",
            ));
        }
        if plan.classes[k - 1].threshold != 0.0 {
            return Err(HnpError::invalid(format!(
                "class {k} must not have a threshold role"
            )));
        }
        for (c, f) in plan.classes.iter().enumerate() {
            if c + 1 < k && f.threshold <= 0.0 {
                return Err(HnpError::invalid(format!(
                    "class {} needs a threshold role",
                    c + 1
                )));
            }
            if c > 0 && f.evaluate <= 0.0 {
                return Err(HnpError::invalid(format!(
                    "class {} needs an evaluation role",
                    c + 1
                )));
            }
        }
        Ok(plan)
    }

    /// Score/threshold 50/50 for class 1, 45/50/5 for middle classes, and
    /// score/evaluate 95/5 for the last class.
    pub fn standard(num_classes: usize) -> Self {
        let classes = (1..=num_classes)
            .map(|c| {
                if c == 1 {
                    RoleFractions::new(0.5, 0.5, 0.0)
                } else if c == num_classes {
                    RoleFractions::new(0.95, 0.0, 0.05)
                } else {
                    RoleFractions::new(0.45, 0.5, 0.05)
                }
            })
            .collect();
        Self { classes }
    }

    /// Score/threshold split with the same fractions for every class.
    pub fn two_way(num_classes: usize, threshold: f64) -> Result<Self> {
        Self::new(vec![
            RoleFractions::new(1.0 - threshold, threshold, 0.0);
            num_classes
        ])
    }

    pub fn num_classes(&self) -> usize {
        self.classes.len()
    }

    pub fn classes(&self) -> &[RoleFractions] {
        &self.classes
    }
}

/// Row indices of one class, by role.
#[derive(Debug, Clone, PartialEq, Eq, Default, Serialize, Deserialize)]
pub struct ClassParts {
    pub score: Vec<usize>,
    pub threshold: Vec<usize>,
    pub evaluate: Vec<usize>,
}

/// A disjoint per-class partition of a dataset into roles.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct DataSplit {
    pub class_sizes: Vec<usize>,
    pub parts: Vec<ClassParts>,
}

impl DataSplit {
    /// Union of all score-role indices, ascending.
    pub fn score_indices(&self) -> Vec<usize> {
        let mut all: Vec<usize> = self.parts.iter().flat_map(|p| p.score.clone()).collect();
        all.sort_unstable();
        all
    }

    /// `|S_i| / |S|` over the full sample.
    pub fn class_proportions(&self) -> Vec<f64> {
        let total: usize = self.class_sizes.iter().sum();
        self.class_sizes
            .iter()
            .map(|&n| n as f64 / total as f64)
            .collect()
    }

    /// Checks every threshold set `i < I` against the minimum sample size.
    pub fn ensure_feasible(&self, spec: &ControlSpec) -> Result<()> {
        if spec.num_classes() != self.parts.len() {
            return Err(HnpError::invalid(format!(
                "control spec covers {} classes, split has {}",
                spec.num_classes(),
                self.parts.len()
            )));
        }
        for (i, (&alpha, &delta)) in spec.alphas().iter().zip(spec.deltas()).enumerate() {
            let required = min_sample_size(alpha, delta)?;
            let available = self.parts[i].threshold.len();
            if available < required {
                return Err(HnpError::InfeasibleSplit {
                    class: i + 1,
                    available,
                    required,
                });
            }
        }
        Ok(())
    }
}

/// Randomly partitions each class into roles.
///
/// Indices of each class are shuffled with a ChaCha8 generator seeded by
/// `seed`; the first `threshold` count go to the threshold role, the next
/// `evaluate` count to the evaluation role, and the rest to scoring. Each
/// role's indices are returned ascending.
pub fn split_dataset(data: &LabeledDataset, plan: &SplitPlan, seed: u64) -> Result<DataSplit> {
    if plan.num_classes() != data.num_classes() {
        return Err(HnpError::invalid(format!(
            "split plan covers {} classes, dataset has {}",
            plan.num_classes(),
            data.num_classes()
        )));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut parts = Vec::with_capacity(plan.num_classes());
    let mut class_sizes = Vec::with_capacity(plan.num_classes());
    for (mut idx, fractions) in data.class_indices().into_iter().zip(plan.classes()) {
        let (_, n_t, n_e) = fractions.counts(idx.len());
        class_sizes.push(idx.len());
        idx.shuffle(&mut rng);
        let mut threshold = idx[..n_t].to_vec();
        let mut evaluate = idx[n_t..n_t + n_e].to_vec();
        let mut score = idx[n_t + n_e..].to_vec();
        threshold.sort_unstable();
        evaluate.sort_unstable();
        score.sort_unstable();
        parts.push(ClassParts {
            score,
            threshold,
            evaluate,
        });
    }
    Ok(DataSplit { class_sizes, parts })
}

/// [`split_dataset`] followed by [`DataSplit::ensure_feasible`].
pub fn split_for_control(
    data: &LabeledDataset,
    plan: &SplitPlan,
    spec: &ControlSpec,
    seed: u64,
) -> Result<DataSplit> {
    let split = split_dataset(data, plan, seed)?;
    split.ensure_feasible(spec)?;
    Ok(split)
}
