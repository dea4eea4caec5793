use serde::{Deserialize, Serialize};

use super::bound::{default_slack, upper_bound, BoundKind, ScoreSample, UpperBound};
use super::classifier::{decide, FitDiagnostics, HnpClassifier};
use super::split::DataSplit;
use super::ControlSpec;
use crate::dataset::LabeledDataset;
use crate::error::{HnpError, Result};
use crate::scoring::{ScoreModel, ScoreTable};

/// Scores of the threshold and evaluation subsets under a fitted model.
#[derive(Debug, Clone, PartialEq)]
pub struct ScoredSplit {
    /// Threshold-set scores for classes `1..I-1`; entry `i` is class `i + 1`.
    pub threshold: Vec<ScoreTable>,
    /// Evaluation-set scores for classes `1..=I`; entry 0 (class 1) is unused.
    pub evaluation: Vec<ScoreTable>,
    /// Full-sample class proportions `|S_i| / |S|`.
    pub proportions: Vec<f64>,
}

impl ScoredSplit {
    pub fn new(model: &ScoreModel, data: &LabeledDataset, split: &DataSplit) -> Result<Self> {
        let k = model.num_classes();
        if split.parts.len() != k || data.num_classes() != k {
            return Err(HnpError::invalid(format!(
                "model has {k} classes, split has {}",
                split.parts.len()
            )));
        }
        if data.dim() != model.dim() {
            return Err(HnpError::DimensionMismatch {
                expected: model.dim(),
                got: data.dim(),
            });
        }
        let threshold = split.parts[..k - 1]
            .iter()
            .map(|p| ScoreTable::compute(model, data, &p.threshold))
            .collect();
        let evaluation = split
            .parts
            .iter()
            .enumerate()
            .map(|(c, p)| {
                if c == 0 {
                    ScoreTable::default()
                } else {
                    ScoreTable::compute(model, data, &p.evaluate)
                }
            })
            .collect();
        Ok(Self {
            threshold,
            evaluation,
            proportions: split.class_proportions(),
        })
    }

    pub fn num_classes(&self) -> usize {
        self.proportions.len()
    }

    fn check(&self, spec: &ControlSpec) -> Result<()> {
        let k = self.num_classes();
        if spec.num_classes() != k || self.threshold.len() + 1 != k || self.evaluation.len() != k {
            return Err(HnpError::invalid(format!(
                "scored split and control spec disagree on the class count ({k} vs {})",
                spec.num_classes()
            )));
        }
        Ok(())
    }
}

/// Where the grid search draws candidate thresholds from.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize, Default)]
#[serde(rename_all = "kebab-case")]
pub enum GridPolicy {
    /// `A_i` = the class-`i` threshold-set scores `T_i`.
    #[default]
    Scores,
    /// No search: every threshold is set to its upper bound.
    None,
    /// Explicit candidate sets `A_1, ..., A_{I-2}`.
    Custom(Vec<Vec<f64>>),
}

#[derive(Debug, Clone)]
pub struct FitOptions {
    pub grid: GridPolicy,
    /// Concentration slack `c(n)` of the adjusted bound.
    pub slack: fn(usize) -> f64,
    pub bound: BoundKind,
}

impl Default for FitOptions {
    fn default() -> Self {
        Self {
            grid: GridPolicy::Scores,
            slack: default_slack,
            bound: BoundKind::Conditional,
        }
    }
}

impl FitOptions {
    pub fn with_grid(grid: GridPolicy) -> Self {
        Self {
            grid,
            ..Self::default()
        }
    }

    /// `A_level ∩ (-inf, bound]`, distinct, descending; `[bound]` when empty.
    fn candidates(&self, scored: &ScoredSplit, level: usize, bound: f64) -> Vec<f64> {
        let mut out: Vec<f64> = match &self.grid {
            GridPolicy::Scores => scored.threshold[level].column(level).collect(),
            GridPolicy::None => Vec::new(),
            GridPolicy::Custom(sets) => sets.get(level).cloned().unwrap_or_default(),
        };
        out.retain(|t| *t <= bound);
        out.sort_by(|a, b| b.total_cmp(a));
        out.dedup();
        if out.is_empty() {
            out.push(bound);
        }
        out
    }
}

/// `sum_{i >= 2} pi_i * (share of S_ie labelled below i)`.
pub fn empirical_remaining_risk(thresholds: &[f64], scored: &ScoredSplit) -> Result<f64> {
    let k = scored.num_classes();
    if thresholds.len() + 1 != k {
        return Err(HnpError::invalid(format!(
            "{} thresholds for {k} classes",
            thresholds.len()
        )));
    }
    if let Some(c) = (1..k).find(|&c| scored.evaluation[c].is_empty()) {
        return Err(HnpError::invalid(format!(
            "evaluation subset of class {} is empty",
            c + 1
        )));
    }
    Ok(remaining_risk(thresholds, scored))
}

fn remaining_risk(thresholds: &[f64], scored: &ScoredSplit) -> f64 {
    let mut total = 0.0;
    for c in 1..scored.num_classes() {
        let table = &scored.evaluation[c];
        let wrong = table
            .rows()
            .filter(|s| decide(s, thresholds) < c + 1)
            .count();
        total += scored.proportions[c] * (wrong as f64 / table.len() as f64);
    }
    total
}

fn bound_at(
    scored: &ScoredSplit,
    spec: &ControlSpec,
    opts: &FitOptions,
    level: usize,
    previous: &[f64],
) -> Result<UpperBound> {
    let mut sample = ScoreSample::from_table(&scored.threshold[level], level, previous);
    if opts.bound == BoundKind::Unconditional {
        sample = sample.unconditioned();
    }
    upper_bound(
        &sample,
        spec.alphas()[level],
        spec.deltas()[level],
        opts.slack,
    )
}

/// Extends fixed leading thresholds with the upper bounds of the remaining
/// classes, each computed given everything before it. Returns the full
/// threshold vector and the bounds of the levels it filled in.
pub fn complete_with_bounds(
    scored: &ScoredSplit,
    spec: &ControlSpec,
    opts: &FitOptions,
    leading: &[f64],
) -> Result<(Vec<f64>, Vec<UpperBound>)> {
    scored.check(spec)?;
    let k = scored.num_classes();
    let mut thresholds = leading.to_vec();
    let mut bounds = Vec::new();
    while thresholds.len() < k - 1 {
        let ub = bound_at(scored, spec, opts, thresholds.len(), &thresholds)?;
        thresholds.push(ub.value);
        bounds.push(ub);
    }
    Ok((thresholds, bounds))
}

/// Candidate values of `t_1`: grid points at or below `t̄_1`, distinct and
/// descending, so rank 1 is the largest.
pub fn first_threshold_grid(
    scored: &ScoredSplit,
    spec: &ControlSpec,
    opts: &FitOptions,
) -> Result<Vec<f64>> {
    scored.check(spec)?;
    let first = bound_at(scored, spec, opts, 0, &[])?;
    Ok(opts.candidates(scored, 0, first.value))
}

fn ensure_evaluable(scored: &ScoredSplit) -> Result<()> {
    if let Some(c) = (1..scored.num_classes()).find(|&c| scored.evaluation[c].is_empty()) {
        return Err(HnpError::invalid(format!(
            "evaluation subset of class {} is empty",
            c + 1
        )));
    }
    Ok(())
}

fn finish(
    model: ScoreModel,
    spec: &ControlSpec,
    thresholds: Vec<f64>,
    upper_bounds: Vec<UpperBound>,
    remaining_risk: f64,
    candidates: usize,
) -> Result<HnpClassifier> {
    let model_warning = model.warning().map(str::to_string);
    HnpClassifier::new(
        model,
        thresholds,
        spec.clone(),
        FitDiagnostics {
            upper_bounds,
            remaining_risk,
            candidates,
            model_warning,
        },
    )
}

/// Three-class umbrella fit.
///
/// Scans `t_1` over the grid below `t̄_1` in descending order, sets `t_2` to
/// its bound given `t_1`, and keeps the first strict minimum of the empirical
/// remaining risk (so ties go to the largest `t_1`).
pub fn fit_three_class(
    scored: &ScoredSplit,
    model: ScoreModel,
    spec: &ControlSpec,
    opts: &FitOptions,
) -> Result<HnpClassifier> {
    if scored.num_classes() != 3 {
        return Err(HnpError::invalid(
            "fit_three_class needs exactly three classes",
        ));
    }
    scored.check(spec)?;
    ensure_evaluable(scored)?;
    let first = bound_at(scored, spec, opts, 0, &[])?;
    let mut best: Option<(f64, [f64; 2], UpperBound)> = None;
    let mut evaluated = 0;
    for t1 in opts.candidates(scored, 0, first.value) {
        let second = bound_at(scored, spec, opts, 1, &[t1])?;
        let thresholds = [t1, second.value];
        let risk = remaining_risk(&thresholds, scored);
        evaluated += 1;
        if best.as_ref().is_none_or(|(r, _, _)| risk < *r) {
            best = Some((risk, thresholds, second));
        }
    }
    let (risk, thresholds, second) = best.expect("candidate list is never empty");
    finish(
        model,
        spec,
        thresholds.to_vec(),
        vec![first, second],
        risk,
        evaluated,
    )
}

struct Search<'a> {
    scored: &'a ScoredSplit,
    spec: &'a ControlSpec,
    opts: &'a FitOptions,
    prefix: Vec<f64>,
    bounds: Vec<UpperBound>,
    best: Option<(f64, Vec<f64>, Vec<UpperBound>)>,
    evaluated: usize,
}

impl Search<'_> {
    fn visit(&mut self) -> Result<()> {
        let level = self.prefix.len();
        let last = self.scored.num_classes() - 2;
        let ub = bound_at(self.scored, self.spec, self.opts, level, &self.prefix)?;
        self.bounds.push(ub);
        if level == last {
            self.prefix.push(ub.value);
            let risk = remaining_risk(&self.prefix, self.scored);
            self.evaluated += 1;
            if self.best.as_ref().is_none_or(|(r, _, _)| risk < *r) {
                self.best = Some((risk, self.prefix.clone(), self.bounds.clone()));
            }
            self.prefix.pop();
        } else {
            for t in self.opts.candidates(self.scored, level, ub.value) {
                self.prefix.push(t);
                self.visit()?;
                self.prefix.pop();
            }
        }
        self.bounds.pop();
        Ok(())
    }
}

/// Umbrella fit for any number of classes.
///
/// Nested descending grid search over `t_1, ..., t_{I-2}`, each restricted
/// to values at or below its bound given the earlier thresholds; `t_{I-1}` is
/// set to its bound at every leaf. Keeps the first strict minimum of the
/// empirical remaining risk.
pub fn fit_general(
    scored: &ScoredSplit,
    model: ScoreModel,
    spec: &ControlSpec,
    opts: &FitOptions,
) -> Result<HnpClassifier> {
    scored.check(spec)?;
    ensure_evaluable(scored)?;
    let mut search = Search {
        scored,
        spec,
        opts,
        prefix: Vec::new(),
        bounds: Vec::new(),
        best: None,
        evaluated: 0,
    };
    search.visit()?;
    let evaluated = search.evaluated;
    let (risk, thresholds, bounds) = search.best.expect("search visits at least one leaf");
    finish(model, spec, thresholds, bounds, risk, evaluated)
}
