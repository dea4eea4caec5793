use rand::RngCore;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::report::{ErrorReport, TestPosteriors};
use super::{generate_rep, substream, SimulationSetting, Stream};
use crate::baselines::{fit_roc, roc_split_plan};
use crate::error::{HnpError, Result};
use crate::scoring::BaseLearner;
use crate::umbrella::{
    complete_with_bounds, first_threshold_grid, fit_general, fit_three_class, split_for_control,
    BoundKind, ControlSpec, FitOptions, GridPolicy, ScoredSplit, SplitPlan,
};

/// A classifier construction compared in a Monte Carlo run.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Method {
    /// Umbrella fit with the conditional bound.
    Hnp,
    /// Umbrella fit with unadjusted order-statistic bounds for every class.
    HnpUnconditional,
    /// Per-class empirical quantiles on a 50/50 split with a refitted model.
    Roc,
    /// Argmax of the H-NP score model.
    Argmax,
}

fn default_methods() -> Vec<Method> {
    vec![Method::Hnp]
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MonteCarloConfig {
    pub setting: SimulationSetting,
    #[serde(default)]
    pub base: BaseLearner,
    pub spec: ControlSpec,
    pub plan: SplitPlan,
    pub reps: usize,
    pub seed: u64,
    #[serde(default = "default_methods")]
    pub methods: Vec<Method>,
    #[serde(default)]
    pub grid: GridPolicy,
    /// Also record errors with `t_1` fixed at each of the top `K` grid ranks.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub sweep_ranks: Option<usize>,
    /// Split of the ROC approach; 50/50 per class when absent.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub roc_plan: Option<SplitPlan>,
}

impl MonteCarloConfig {
    /// Logistic base, the standard split plan and H-NP only.
    pub fn new(setting: SimulationSetting, spec: ControlSpec, reps: usize, seed: u64) -> Self {
        let plan = SplitPlan::standard(setting.num_classes());
        Self {
            setting,
            base: BaseLearner::default(),
            spec,
            plan,
            reps,
            seed,
            methods: default_methods(),
            grid: GridPolicy::Scores,
            sweep_ranks: None,
            roc_plan: None,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.reps == 0 {
            return Err(HnpError::invalid("reps must be at least 1"));
        }
        self.setting.validate()?;
        let k = self.setting.num_classes();
        if self.spec.num_classes() != k || self.plan.num_classes() != k {
            return Err(HnpError::invalid(format!(
                "setting has {k} classes; spec covers {} and split plan {}",
                self.spec.num_classes(),
                self.plan.num_classes()
            )));
        }
        if let Some(p) = &self.roc_plan {
            if p.num_classes() != k {
                return Err(HnpError::invalid(
                    "ROC split plan has the wrong class count",
                ));
            }
        }
        if self.sweep_ranks == Some(0) {
            return Err(HnpError::invalid("sweep needs at least one rank"));
        }
        if self.methods.is_empty() && self.sweep_ranks.is_none() {
            return Err(HnpError::invalid("no methods requested"));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MethodResult {
    pub method: Method,
    #[serde(with = "crate::serde_ext::extended_f64_vec")]
    pub thresholds: Vec<f64>,
    pub report: ErrorReport,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepPoint {
    pub rank: usize,
    #[serde(with = "crate::serde_ext::extended_f64_vec")]
    pub thresholds: Vec<f64>,
    pub report: ErrorReport,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "status", rename_all = "kebab-case")]
pub enum RepOutcome {
    Completed {
        results: Vec<MethodResult>,
        #[serde(default, skip_serializing_if = "Vec::is_empty")]
        sweep: Vec<SweepPoint>,
    },
    Excluded {
        code: String,
        message: String,
    },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RepRecord {
    pub rep: usize,
    #[serde(flatten)]
    pub outcome: RepOutcome,
}

/// Mean over reps, plus the nearest-rank `1 - delta_i` quantile and the
/// share of reps above `alpha_i` for controlled errors.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricSummary {
    pub name: String,
    pub mean: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub quantile_level: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub quantile: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub alpha: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub violation_rate: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MethodSummary {
    pub method: Method,
    pub metrics: Vec<MetricSummary>,
}

impl MethodSummary {
    pub fn metric(&self, name: &str) -> Option<&MetricSummary> {
        self.metrics.iter().find(|m| m.name == name)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RankSummary {
    pub rank: usize,
    /// Completed reps whose grid reaches this rank.
    pub available: usize,
    pub metrics: Vec<MetricSummary>,
}

impl RankSummary {
    pub fn metric(&self, name: &str) -> Option<&MetricSummary> {
        self.metrics.iter().find(|m| m.name == name)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepSummary {
    pub ranks: Vec<RankSummary>,
    pub notes: Vec<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MonteCarloSummary {
    pub config: MonteCarloConfig,
    pub reps: usize,
    pub seed: u64,
    pub completed: usize,
    pub excluded: usize,
    pub methods: Vec<MethodSummary>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub sweep: Option<SweepSummary>,
    pub records: Vec<RepRecord>,
}

impl MonteCarloSummary {
    pub fn method(&self, method: Method) -> Option<&MethodSummary> {
        self.methods.iter().find(|m| m.method == method)
    }

    /// Per-rep values of one metric for one method, completed reps only.
    pub fn values(&self, method: Method, name: &str) -> Vec<f64> {
        self.records
            .iter()
            .filter_map(|r| match &r.outcome {
                RepOutcome::Completed { results, .. } => results
                    .iter()
                    .find(|m| m.method == method)
                    .and_then(|m| m.report.metric(name)),
                RepOutcome::Excluded { .. } => None,
            })
            .collect()
    }
}

/// `ceil(q * M)`-th smallest value (1-based), `M = values.len()`.
pub fn nearest_rank_quantile(values: &[f64], q: f64) -> Option<f64> {
    if values.is_empty() || !(0.0..=1.0).contains(&q) {
        return None;
    }
    let m = values.len();
    let rank = ((q * m as f64) * (1.0 - 1e-12)).ceil().clamp(1.0, m as f64) as usize;
    let mut sorted = values.to_vec();
    sorted.sort_by(f64::total_cmp);
    Some(sorted[rank - 1])
}

fn summarize(reports: &[&ErrorReport], spec: &ControlSpec) -> Vec<MetricSummary> {
    let Some(first) = reports.first() else {
        return Vec::new();
    };
    let k = first.num_classes();
    let controlled: Vec<String> = (1..k).map(|i| ErrorReport::under_name(k, i)).collect();
    let per_rep: Vec<Vec<(String, f64)>> = reports.iter().map(|r| r.metrics()).collect();
    first
        .metrics()
        .iter()
        .enumerate()
        .map(|(m, (name, _))| {
            let values: Vec<f64> = per_rep.iter().map(|r| r[m].1).collect();
            let mean = values.iter().sum::<f64>() / values.len() as f64;
            let mut out = MetricSummary {
                name: name.clone(),
                mean,
                quantile_level: None,
                quantile: None,
                alpha: None,
                violation_rate: None,
            };
            if let Some(i) = controlled.iter().position(|c| c == name) {
                let level = 1.0 - spec.deltas()[i];
                let alpha = spec.alphas()[i];
                out.quantile_level = Some(level);
                out.quantile = nearest_rank_quantile(&values, level);
                out.alpha = Some(alpha);
                out.violation_rate = Some(
                    values.iter().filter(|&&v| v > alpha).count() as f64 / values.len() as f64,
                );
            }
            out
        })
        .collect()
}

fn fit_options(config: &MonteCarloConfig, bound: BoundKind) -> FitOptions {
    FitOptions {
        grid: config.grid.clone(),
        bound,
        ..FitOptions::default()
    }
}

fn run_rep(config: &MonteCarloConfig, rep: usize) -> Result<RepOutcome> {
    let r = rep as u64;
    let (train, test) = generate_rep(&config.setting, config.seed, r)?;
    let needs_split =
        config.sweep_ranks.is_some() || config.methods.iter().any(|m| *m != Method::Roc);
    let mut staged = None;
    if needs_split {
        let split_seed = substream(config.seed, r, Stream::Split).next_u64();
        let split = split_for_control(&train, &config.plan, &config.spec, split_seed)?;
        let model = config.base.fit(&train.subset(&split.score_indices()))?;
        let scored = ScoredSplit::new(&model, &train, &split)?;
        let post = TestPosteriors::new(&model, &test)?;
        staged = Some((model, scored, post));
    }
    let mut results = Vec::with_capacity(config.methods.len());
    for &method in &config.methods {
        let (thresholds, report) = match method {
            Method::Hnp | Method::HnpUnconditional => {
                let (model, scored, post) = staged.as_ref().expect("split prepared");
                let bound = if method == Method::Hnp {
                    BoundKind::Conditional
                } else {
                    BoundKind::Unconditional
                };
                let opts = fit_options(config, bound);
                let clf = if scored.num_classes() == 3 {
                    fit_three_class(scored, model.clone(), &config.spec, &opts)?
                } else {
                    fit_general(scored, model.clone(), &config.spec, &opts)?
                };
                let report = post.with_thresholds(&clf.thresholds)?;
                (clf.thresholds, report)
            }
            Method::Argmax => {
                let (_, _, post) = staged.as_ref().expect("split prepared");
                (Vec::new(), post.argmax()?)
            }
            Method::Roc => {
                let plan = config
                    .roc_plan
                    .clone()
                    .unwrap_or_else(|| roc_split_plan(config.setting.num_classes()));
                let seed = substream(config.seed, r, Stream::RocSplit).next_u64();
                let (clf, _) = fit_roc(&train, &plan, config.spec.alphas(), &config.base, seed)?;
                let report =
                    TestPosteriors::new(&clf.model, &test)?.with_thresholds(&clf.thresholds)?;
                (clf.thresholds, report)
            }
        };
        results.push(MethodResult {
            method,
            thresholds,
            report,
        });
    }
    let mut sweep = Vec::new();
    if let Some(ranks) = config.sweep_ranks {
        let (_, scored, post) = staged.as_ref().expect("split prepared");
        let opts = fit_options(config, BoundKind::Conditional);
        let grid = first_threshold_grid(scored, &config.spec, &opts)?;
        for (k, &t1) in grid.iter().enumerate().take(ranks) {
            let (thresholds, _) = complete_with_bounds(scored, &config.spec, &opts, &[t1])?;
            let report = post.with_thresholds(&thresholds)?;
            sweep.push(SweepPoint {
                rank: k + 1,
                thresholds,
                report,
            });
        }
    }
    Ok(RepOutcome::Completed { results, sweep })
}

fn sweep_summary(records: &[RepRecord], ranks: usize, spec: &ControlSpec) -> SweepSummary {
    let completed: Vec<&Vec<SweepPoint>> = records
        .iter()
        .filter_map(|r| match &r.outcome {
            RepOutcome::Completed { sweep, .. } => Some(sweep),
            RepOutcome::Excluded { .. } => None,
        })
        .collect();
    let mut out = SweepSummary {
        ranks: Vec::new(),
        notes: Vec::new(),
    };
    for k in 1..=ranks {
        let reports: Vec<&ErrorReport> = completed
            .iter()
            .filter_map(|s| s.get(k - 1).map(|p| &p.report))
            .collect();
        if reports.is_empty() {
            out.notes.push(format!(
                "ranks {k}..={ranks} omitted: beyond the feasible grid in every rep"
            ));
            break;
        }
        if reports.len() < completed.len() {
            out.notes.push(format!(
                "rank {k}: available in {} of {} completed reps",
                reports.len(),
                completed.len()
            ));
        }
        out.ranks.push(RankSummary {
            rank: k,
            available: reports.len(),
            metrics: summarize(&reports, spec),
        });
    }
    out
}

/// Runs `config.reps` independent repetitions and aggregates them.
///
/// Rep `r` draws its data and splits from its own ChaCha8 streams keyed by
/// the master seed, so the result does not depend on thread scheduling. Reps
/// that fail (an infeasible split, say) are recorded and excluded.
pub fn run_monte_carlo(config: &MonteCarloConfig) -> Result<MonteCarloSummary> {
    config.validate()?;
    let records: Vec<RepRecord> = (0..config.reps)
        .into_par_iter()
        .map(|rep| {
            let outcome = run_rep(config, rep).unwrap_or_else(|e| RepOutcome::Excluded {
                code: e.code().to_string(),
                message: e.to_string(),
            });
            RepRecord { rep, outcome }
        })
        .collect();
    let excluded = records
        .iter()
        .filter(|r| matches!(r.outcome, RepOutcome::Excluded { .. }))
        .count();
    if excluded > 0 {
        log::warn!("{excluded} of {} reps excluded", config.reps);
    }
    let methods = config
        .methods
        .iter()
        .enumerate()
        .map(|(m, &method)| {
            let reports: Vec<&ErrorReport> = records
                .iter()
                .filter_map(|r| match &r.outcome {
                    RepOutcome::Completed { results, .. } => Some(&results[m].report),
                    RepOutcome::Excluded { .. } => None,
                })
                .collect();
            MethodSummary {
                method,
                metrics: summarize(&reports, &config.spec),
            }
        })
        .collect();
    let sweep = config
        .sweep_ranks
        .map(|k| sweep_summary(&records, k, &config.spec));
    Ok(MonteCarloSummary {
        config: config.clone(),
        reps: config.reps,
        seed: config.seed,
        completed: config.reps - excluded,
        excluded,
        methods,
        sweep,
        records,
    })
}

/// Monte Carlo run that fixes `t_1` at each of the top `ranks` grid points
/// below `t̄_1` and sets the remaining thresholds to their bounds.
pub fn threshold_sweep(config: &MonteCarloConfig, ranks: usize) -> Result<MonteCarloSummary> {
    if ranks == 0 {
        return Err(HnpError::invalid("sweep needs at least one rank"));
    }
    let mut config = config.clone();
    config.sweep_ranks = Some(ranks);
    run_monte_carlo(&config)
}
