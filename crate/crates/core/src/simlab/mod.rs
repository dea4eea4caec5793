//! Gaussian simulation settings, test-set error estimation, and Monte Carlo
//! aggregation.

mod monte_carlo;
mod report;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

pub use monte_carlo::{
    nearest_rank_quantile, run_monte_carlo, threshold_sweep, Method, MethodResult, MethodSummary,
    MetricSummary, MonteCarloConfig, MonteCarloSummary, RankSummary, RepOutcome, RepRecord,
    SweepPoint, SweepSummary,
};
pub use report::{estimate_errors, ErrorReport, TestPosteriors};

use crate::dataset::LabeledDataset;
use crate::error::{HnpError, Result};
use crate::scoring::GaussianParams;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum SettingId {
    #[serde(rename = "T1.1")]
    T11,
    #[serde(rename = "T2.1")]
    T21,
    #[serde(rename = "T3.1")]
    T31,
    #[serde(rename = "custom")]
    Custom,
}

/// Class-conditional `N(mu_i, I)` mixture with fixed per-class sample sizes.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SimulationSetting {
    pub id: SettingId,
    pub means: Vec<Vec<f64>>,
    pub train_sizes: Vec<usize>,
    pub test_sizes: Vec<usize>,
}

const T1_MEANS: [[f64; 2]; 3] = [[0.0, -1.0], [-1.0, 1.0], [1.0, 0.0]];

fn nested(means: &[[f64; 2]]) -> Vec<Vec<f64>> {
    means.iter().map(|m| m.to_vec()).collect()
}

impl SimulationSetting {
    pub fn t1_1() -> Self {
        Self {
            id: SettingId::T11,
            means: nested(&T1_MEANS),
            train_sizes: vec![500; 3],
            test_sizes: vec![20_000; 3],
        }
    }

    /// T1.1 with class 1 moved to `(0, -3)`.
    pub fn t2_1() -> Self {
        let mut means = T1_MEANS;
        means[0] = [0.0, -3.0];
        Self {
            id: SettingId::T21,
            means: nested(&means),
            ..Self::t1_1()
        }
    }

    /// Imbalanced classes, with class 3 far from the other two.
    pub fn t3_1() -> Self {
        Self {
            id: SettingId::T31,
            means: nested(&[[0.0, 0.0], [-0.5, 0.5], [2.0, 2.0]]),
            train_sizes: vec![1000, 200, 800],
            test_sizes: vec![30_000, 6000, 24_000],
        }
    }

    pub fn custom(
        means: Vec<Vec<f64>>,
        train_sizes: Vec<usize>,
        test_sizes: Vec<usize>,
    ) -> Result<Self> {
        let s = Self {
            id: SettingId::Custom,
            means,
            train_sizes,
            test_sizes,
        };
        s.validate()?;
        Ok(s)
    }

    /// `"T1.1"`, `"T2.1"` or `"T3.1"`.
    pub fn preset(name: &str) -> Result<Self> {
        match name.to_ascii_uppercase().as_str() {
            "T1.1" => Ok(Self::t1_1()),
            "T2.1" => Ok(Self::t2_1()),
            "T3.1" => Ok(Self::t3_1()),
            _ => Err(HnpError::invalid(format!(
                "unknown setting {name:?}; expected T1.1, T2.1 or T3.1"
            ))),
        }
    }

    pub fn validate(&self) -> Result<()> {
        let k = self.means.len();
        if k < 2 {
            return Err(HnpError::invalid("a setting needs at least two classes"));
        }
        let d = self.means[0].len();
        if d == 0 || self.means.iter().any(|m| m.len() != d) {
            return Err(HnpError::invalid(
                "class means must share a nonzero dimension",
            ));
        }
        if self.means.iter().flatten().any(|v| !v.is_finite()) {
            return Err(HnpError::invalid("class means must be finite"));
        }
        for (name, sizes) in [("train", &self.train_sizes), ("test", &self.test_sizes)] {
            if sizes.len() != k {
                return Err(HnpError::invalid(format!(
                    "{name} sizes list {} classes, means list {k}",
                    sizes.len()
                )));
            }
            if sizes.contains(&0) {
                return Err(HnpError::invalid(format!("{name} sizes must be positive")));
            }
        }
        Ok(())
    }

    pub fn num_classes(&self) -> usize {
        self.means.len()
    }

    pub fn dim(&self) -> usize {
        self.means.first().map_or(0, Vec::len)
    }

    /// The generating model, with priors proportional to the training sizes.
    pub fn oracle_params(&self) -> GaussianParams {
        let d = self.dim();
        let identity = (0..d)
            .map(|i| (0..d).map(|j| if i == j { 1.0 } else { 0.0 }).collect())
            .collect();
        let total: usize = self.train_sizes.iter().sum();
        GaussianParams {
            means: self.means.clone(),
            covariances: vec![identity],
            priors: self
                .train_sizes
                .iter()
                .map(|&n| n as f64 / total as f64)
                .collect(),
            regularized: false,
        }
    }

    /// `sizes[i]` draws from class `i + 1`, grouped by class.
    pub fn sample(&self, sizes: &[usize], rng: &mut ChaCha8Rng) -> Result<LabeledDataset> {
        let d = self.dim();
        let total: usize = sizes.iter().sum();
        let mut values = Vec::with_capacity(total * d);
        let mut labels = Vec::with_capacity(total);
        for (c, (&n, mean)) in sizes.iter().zip(&self.means).enumerate() {
            for _ in 0..n {
                for m in mean {
                    let z: f64 = StandardNormal.sample(rng);
                    values.push(m + z);
                }
                labels.push(c + 1);
            }
        }
        LabeledDataset::from_flat(d, values, labels, self.num_classes())
    }
}

/// Independent random streams within one repetition.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub(crate) enum Stream {
    Train = 0,
    Test = 1,
    Split = 2,
    RocSplit = 3,
}

const STREAMS_PER_REP: u64 = 4;

/// ChaCha8 keyed by the master seed, on stream `rep * 4 + purpose`; every
/// `(rep, purpose)` pair owns a disjoint keystream.
pub(crate) fn substream(master: u64, rep: u64, purpose: Stream) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(master);
    rng.set_stream(rep * STREAMS_PER_REP + purpose as u64);
    rng
}

/// Training and test samples of a setting, reproducible from `seed`.
pub fn generate_setting(
    setting: &SimulationSetting,
    seed: u64,
) -> Result<(LabeledDataset, LabeledDataset)> {
    generate_rep(setting, seed, 0)
}

pub(crate) fn generate_rep(
    setting: &SimulationSetting,
    seed: u64,
    rep: u64,
) -> Result<(LabeledDataset, LabeledDataset)> {
    setting.validate()?;
    let train = setting.sample(
        &setting.train_sizes,
        &mut substream(seed, rep, Stream::Train),
    )?;
    let test = setting.sample(&setting.test_sizes, &mut substream(seed, rep, Stream::Test))?;
    Ok((train, test))
}
