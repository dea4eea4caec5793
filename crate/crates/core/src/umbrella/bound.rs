use std::cmp::Ordering;

use serde::{Deserialize, Serialize};

use crate::error::{HnpError, Result};
use crate::scoring::ScoreTable;
use crate::tail::{delta_search, min_sample_size};

/// Default concentration slack `c(n) = 2 / sqrt(n)`.
pub fn default_slack(n: usize) -> f64 {
    2.0 / (n as f64).sqrt()
}

/// Held-out class-`i` scores `T_i` for threshold selection.
#[derive(Debug, Clone, PartialEq)]
pub struct ScoreSample {
    full: Vec<f64>,
    /// Scores of observations below every earlier threshold; `None` for the
    /// first class, which has no earlier thresholds.
    conditional: Option<Vec<f64>>,
}

fn sort_scores(v: &mut [f64]) {
    v.sort_by(f64::total_cmp);
}

fn is_sub_multiset(sub: &[f64], sup: &[f64]) -> bool {
    let mut it = sup.iter();
    'outer: for s in sub {
        for t in it.by_ref() {
            match t.total_cmp(s) {
                Ordering::Equal => continue 'outer,
                Ordering::Less => continue,
                Ordering::Greater => return false,
            }
        }
        return false;
    }
    true
}

impl ScoreSample {
    /// Sorts both sequences ascending; `conditional` must be a sub-multiset of `full`.
    pub fn new(mut full: Vec<f64>, conditional: Option<Vec<f64>>) -> Result<Self> {
        if full.iter().any(|v| v.is_nan()) {
            return Err(HnpError::invalid("scores must not be NaN"));
        }
        sort_scores(&mut full);
        let conditional = match conditional {
            Some(mut c) => {
                sort_scores(&mut c);
                if !is_sub_multiset(&c, &full) {
                    return Err(HnpError::invalid(
                        "conditional scores must be a subset of the full score set",
                    ));
                }
                Some(c)
            }
            None => None,
        };
        Ok(Self { full, conditional })
    }

    /// Scores `T_{level+1}` of a threshold set given earlier thresholds
    /// `previous = (t_1, ..., t_level)`. With no earlier thresholds the
    /// sample has no conditional part.
    pub fn from_table(table: &ScoreTable, level: usize, previous: &[f64]) -> Self {
        let mut full: Vec<f64> = table.column(level).collect();
        let conditional = if level == 0 {
            None
        } else {
            let mut c: Vec<f64> = table
                .rows()
                .filter(|r| r[..level].iter().zip(previous).all(|(s, t)| s < t))
                .map(|r| r[level])
                .collect();
            sort_scores(&mut c);
            Some(c)
        };
        sort_scores(&mut full);
        Self { full, conditional }
    }

    /// Drops the conditional part, so only the unadjusted bound applies.
    pub fn unconditioned(mut self) -> Self {
        self.conditional = None;
        self
    }

    pub fn full(&self) -> &[f64] {
        &self.full
    }

    pub fn conditional(&self) -> Option<&[f64]> {
        self.conditional.as_deref()
    }

    pub fn n(&self) -> usize {
        self.full.len()
    }

    pub fn n_conditional(&self) -> usize {
        self.conditional.as_ref().map_or(self.full.len(), Vec::len)
    }
}

/// Which bound the fit uses for classes after the first.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum BoundKind {
    /// Tightened bound on the conditional scores when admissible.
    #[default]
    Conditional,
    /// Always the order statistic `t_(k)` of the full scores.
    Unconditional,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum BoundBranch {
    /// Order statistic of the conditional scores at the adjusted level.
    Adjusted,
    /// Order statistic `t_(k)` of the full scores.
    Fallback,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct UpperBound {
    /// The bound `t̄_i`.
    pub value: f64,
    pub branch: BoundBranch,
    /// The unadjusted bound `t_(k)` on the full scores, always computed.
    pub unadjusted: f64,
    /// 1-based rank of `value` within the sequence it was taken from.
    pub rank: usize,
    pub n: usize,
    pub n_conditional: usize,
}

/// Largest admissible threshold for one class.
///
/// The unadjusted bound is `t_(k)` with `k = delta_search(n, alpha, delta)`.
/// With a conditional part, set `p = n'/n + c(n)`, `alpha' = alpha / p` and
/// `delta' = delta - exp(-2 n c(n)^2)`. When `alpha' < 1`, `delta' > 0` and
/// `n'` reaches the minimum sample size for `(alpha', delta')`, the bound is
/// `t'_(k')` with `k' = delta_search(n', alpha', delta')`; otherwise the
/// unadjusted bound applies.
pub fn upper_bound(
    sample: &ScoreSample,
    alpha: f64,
    delta: f64,
    slack: impl Fn(usize) -> f64,
) -> Result<UpperBound> {
    let n = sample.n();
    let k = delta_search(n, alpha, delta)?;
    let unadjusted = sample.full[k - 1];
    let fallback = UpperBound {
        value: unadjusted,
        branch: BoundBranch::Fallback,
        unadjusted,
        rank: k,
        n,
        n_conditional: sample.n_conditional(),
    };
    let Some(cond) = sample.conditional.as_deref() else {
        return Ok(fallback);
    };
    let n_cond = cond.len();
    let c = slack(n);
    let p = n_cond as f64 / n as f64 + c;
    let alpha_adj = alpha / p;
    let delta_adj = delta - (-2.0 * n as f64 * c * c).exp();
    if n_cond == 0 || !(alpha_adj < 1.0) || !(delta_adj > 0.0) {
        return Ok(fallback);
    }
    if n_cond < min_sample_size(alpha_adj, delta_adj)? {
        return Ok(fallback);
    }
    let k_adj = delta_search(n_cond, alpha_adj, delta_adj)?;
    Ok(UpperBound {
        value: cond[k_adj - 1],
        branch: BoundBranch::Adjusted,
        unadjusted,
        rank: k_adj,
        n,
        n_conditional: n_cond,
    })
}
