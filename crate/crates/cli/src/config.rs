//! Run configuration: command-line flags layered over an optional TOML file
//! that uses the same key names (with `_` in place of `-`).

use std::path::{Path, PathBuf};

use clap::{Args, ValueEnum};
use hnp::{HnpError, Result};
use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Task {
    /// Monte Carlo study on a simulated setting.
    Simulate,
    /// Fit an H-NP classifier on a labeled CSV.
    Fit,
    /// Label the rows of a CSV with a fitted classifier.
    Predict,
    /// Error rates of a fitted classifier on a labeled CSV.
    Evaluate,
    /// Monte Carlo run over the top grid ranks of t_1.
    Sweep,
    /// Turn a cohort of gene-by-cell-type matrices into feature vectors.
    Featurize,
}

/// A comma-separated list on the command line; a string, number or array in
/// the config file.
#[derive(Debug, Clone, PartialEq, Deserialize)]
#[serde(untagged)]
pub enum NumList {
    One(f64),
    Many(Vec<f64>),
    Text(String),
}

impl NumList {
    pub fn values(&self) -> Result<Vec<f64>> {
        match self {
            NumList::One(v) => Ok(vec![*v]),
            NumList::Many(v) => Ok(v.clone()),
            NumList::Text(s) => parse_list(s),
        }
    }
}

fn parse_list(s: &str) -> Result<Vec<f64>> {
    s.split(',')
        .map(|p| {
            p.trim()
                .parse::<f64>()
                .map_err(|_| HnpError::InvalidArgument(format!("not a number: {p:?}")))
        })
        .collect()
}

fn num_list(s: &str) -> std::result::Result<NumList, String> {
    parse_list(s).map(NumList::Many).map_err(|e| e.to_string())
}

/// Every setting a task may read. Unset fields fall back to the config file
/// and then to task defaults.
#[derive(Debug, Clone, Default, PartialEq, Args, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    /// TOML file with any of these keys; flags take precedence.
    #[arg(long)]
    #[serde(skip)]
    pub config: Option<PathBuf>,
    /// Simulation preset: T1.1, T2.1 or T3.1.
    #[arg(long)]
    pub setting: Option<String>,
    /// Dataset CSV with header `y,x1,...,xd` (`y` optional for predict).
    #[arg(long)]
    pub data: Option<PathBuf>,
    /// Cohort manifest CSV with header `patient_id,label,path`.
    #[arg(long)]
    pub manifest: Option<PathBuf>,
    /// Fit report written by `fit`.
    #[arg(long)]
    pub model: Option<PathBuf>,
    /// Featurization report written by `featurize`, to apply to a new cohort.
    #[arg(long)]
    pub transform: Option<PathBuf>,
    /// Control levels alpha_1..alpha_{I-1}; one value is used for every class.
    #[arg(long, value_parser = num_list)]
    pub alpha: Option<NumList>,
    /// Violation tolerances delta_1..delta_{I-1}; one value is used for every class.
    #[arg(long, value_parser = num_list)]
    pub delta: Option<NumList>,
    /// `standard`, `roc`, or per-class `score/threshold/evaluate` fractions
    /// separated by commas, e.g. `0.5/0.5/0,0.45/0.5/0.05,0.95/0/0.05`.
    #[arg(long)]
    pub split: Option<String>,
    /// Base classifier: logistic, gaussian or oracle.
    #[arg(long)]
    pub base: Option<String>,
    #[arg(long)]
    pub learning_rate: Option<f64>,
    #[arg(long)]
    pub max_iters: Option<usize>,
    #[arg(long)]
    pub l2_penalty: Option<f64>,
    /// Monte Carlo repetitions.
    #[arg(long)]
    pub reps: Option<usize>,
    /// Master seed; required for simulate and sweep.
    #[arg(long)]
    pub seed: Option<u64>,
    /// Worker threads (results do not depend on this).
    #[arg(long)]
    pub threads: Option<usize>,
    /// Output path; stdout when absent.
    #[arg(long)]
    pub out: Option<PathBuf>,
    /// Threshold grid: scores or none.
    #[arg(long)]
    pub grid: Option<String>,
    /// Featurization M1..M4 (featurize), or a comma list of hnp,
    /// hnp-unconditional, roc, argmax (simulate, sweep).
    #[arg(long)]
    pub method: Option<String>,
    /// Entries kept by M1.
    #[arg(long)]
    pub n_features: Option<usize>,
    /// Cell types with a larger share of zeros are dropped before M2 and M3.
    #[arg(long)]
    pub max_zero_fraction: Option<f64>,
    /// Grid ranks of t_1 visited by sweep.
    #[arg(long)]
    pub ranks: Option<usize>,
    /// Where featurize writes its fitted transform.
    #[arg(long)]
    pub save_transform: Option<PathBuf>,
    /// Custom class means (config file only); overrides the preset's.
    #[arg(skip)]
    pub means: Option<Vec<Vec<f64>>>,
    #[arg(skip)]
    pub train_sizes: Option<Vec<usize>>,
    #[arg(skip)]
    pub test_sizes: Option<Vec<usize>>,
    /// Task named in the config file when not given on the command line.
    #[arg(skip)]
    pub task: Option<Task>,
}

macro_rules! overlay {
    ($dst:ident, $src:ident, $($field:ident),*) => {
        $( if $dst.$field.is_none() { $dst.$field = $src.$field; } )*
    };
}

impl RunConfig {
    /// Fills unset fields from the `--config` file, if one was given.
    pub fn resolve(mut self) -> Result<Self> {
        let Some(path) = self.config.clone() else {
            return Ok(self);
        };
        let file = load_file(&path)?;
        overlay!(
            self,
            file,
            setting,
            data,
            manifest,
            model,
            transform,
            alpha,
            delta,
            split,
            base,
            learning_rate,
            max_iters,
            l2_penalty,
            reps,
            seed,
            threads,
            out,
            grid,
            method,
            n_features,
            max_zero_fraction,
            ranks,
            save_transform,
            means,
            train_sizes,
            test_sizes,
            task
        );
        Ok(self)
    }
}

fn load_file(path: &Path) -> Result<RunConfig> {
    let text = std::fs::read_to_string(path).map_err(|e| HnpError::Io {
        path: path.to_path_buf(),
        source: e,
    })?;
    toml::from_str(&text).map_err(|e| HnpError::Parse {
        path: path.display().to_string(),
        line: e
            .span()
            .map_or(0, |s| text[..s.start].lines().count().max(1) as u64),
        message: e.message().to_string(),
    })
}
