//! Binomial tail bound and order-statistic rank search.
//!
//! For a threshold-selection set of `n` held-out scores, the probability that
//! the `k`-th order statistic leaves more than `alpha` of the population below
//! it is bounded by
//!
//! ```text
//! v(k, n, alpha) = sum_{j=0}^{k-1} C(n, j) alpha^j (1 - alpha)^(n - j)
//! ```
//!
//! Every threshold in the crate is an order statistic whose rank comes from
//! [`delta_search`], the largest `k` with `v(k, n, alpha) <= delta`.

use crate::error::{HnpError, Result};

/// Relative slack on `v(k) <= delta` comparisons, so that exact-equality
/// boundaries such as `alpha = delta = 0.5, n = 1` stay feasible.
pub const BOUNDARY_RTOL: f64 = 1e-12;

/// Below this log-magnitude the leading binomial term underflows `f64`.
const LOG_UNDERFLOW: f64 = -700.0;

/// Validated `(n, alpha, delta)` triple of a threshold-selection problem.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TailParams {
    pub n: usize,
    pub alpha: f64,
    pub delta: f64,
}

impl TailParams {
    pub fn new(n: usize, alpha: f64, delta: f64) -> Result<Self> {
        if n == 0 {
            return Err(HnpError::invalid("sample size n must be at least 1"));
        }
        check_open_unit("alpha", alpha)?;
        check_open_unit("delta", delta)?;
        Ok(Self { n, alpha, delta })
    }

    /// `k = max{k in [n] : v(k, n, alpha) <= delta}`.
    pub fn rank(&self) -> Result<usize> {
        search_rank(self.n, self.alpha, self.delta)
    }
}

pub(crate) fn check_open_unit(name: &str, value: f64) -> Result<()> {
    if value > 0.0 && value < 1.0 {
        Ok(())
    } else {
        Err(HnpError::invalid(format!(
            "{name} must lie in (0, 1), got {value}"
        )))
    }
}

/// `(1 - alpha)^n`, the first binomial term. Shared by [`delta_search`] and
/// [`min_sample_size`] so both agree on feasibility.
fn leading_term(n: usize, alpha: f64) -> f64 {
    (n as f64 * (-alpha).ln_1p()).exp()
}

fn within(value: f64, delta: f64) -> bool {
    value <= delta * (1.0 + BOUNDARY_RTOL)
}

/// Binomial(n, alpha) probabilities for j = 0, 1, ..., n via the ratio
/// recurrence, carried in log space while the terms underflow.
struct BinomialTerms {
    n: usize,
    j: usize,
    log_odds: f64,
    odds: f64,
    term: f64,
    log_term: f64,
    log_mode: bool,
}

impl BinomialTerms {
    fn new(n: usize, alpha: f64) -> Self {
        let log_term = n as f64 * (-alpha).ln_1p();
        let log_mode = log_term < LOG_UNDERFLOW;
        Self {
            n,
            j: 0,
            log_odds: alpha.ln() - (-alpha).ln_1p(),
            odds: alpha / (1.0 - alpha),
            term: if log_mode {
                0.0
            } else {
                leading_term(n, alpha)
            },
            log_term,
            log_mode,
        }
    }
}

impl Iterator for BinomialTerms {
    type Item = f64;

    fn next(&mut self) -> Option<f64> {
        if self.j > self.n {
            return None;
        }
        let out = if self.log_mode {
            self.log_term.exp()
        } else {
            self.term
        };
        let ratio = (self.n - self.j) as f64 / (self.j + 1) as f64;
        if self.log_mode {
            self.log_term += ratio.ln() + self.log_odds;
            if self.log_term >= LOG_UNDERFLOW {
                self.log_mode = false;
                self.term = self.log_term.exp();
            }
        } else {
            self.term *= ratio * self.odds;
        }
        self.j += 1;
        Some(out)
    }
}

/// Kahan-compensated running sum.
#[derive(Default)]
struct Compensated {
    sum: f64,
    carry: f64,
}

impl Compensated {
    fn add(&mut self, x: f64) {
        let y = x - self.carry;
        let t = self.sum + y;
        self.carry = (t - self.sum) - y;
        self.sum = t;
    }

    fn peek(&self, x: f64) -> f64 {
        self.sum + (x - self.carry)
    }
}

/// Correction factor for the terms. When the first term underflows, the
/// recurrence restarts from a log-space value whose rounding error (about
/// `n * eps * |ln(1 - alpha)|`) is shared by every later term, so the terms
/// are rescaled to sum to one. Otherwise no correction is applied.
fn normalizer(n: usize, alpha: f64) -> f64 {
    if n as f64 * (-alpha).ln_1p() >= LOG_UNDERFLOW {
        return 1.0;
    }
    let mut total = Compensated::default();
    for term in BinomialTerms::new(n, alpha) {
        total.add(term);
    }
    1.0 / total.sum
}

/// `v(k, n, alpha)`: probability that a Binomial(n, alpha) variable is below `k`.
///
/// Defined for `0 <= k <= n + 1`; `v(0) = 0` and `v(n + 1) = 1`.
pub fn binomial_tail(k: usize, n: usize, alpha: f64) -> Result<f64> {
    if n == 0 {
        return Err(HnpError::invalid("sample size n must be at least 1"));
    }
    check_open_unit("alpha", alpha)?;
    if k > n + 1 {
        return Err(HnpError::invalid(format!(
            "rank k = {k} outside [0, {}]",
            n + 1
        )));
    }
    let scale = normalizer(n, alpha);
    let mut acc = Compensated::default();
    for term in BinomialTerms::new(n, alpha).take(k) {
        acc.add(term * scale);
    }
    Ok(acc.sum.min(1.0))
}

/// Largest rank `k` in `1..=n` with `v(k, n, alpha) <= delta`.
///
/// Fails with [`HnpError::NoFeasibleRank`] when even `v(1) = (1 - alpha)^n`
/// exceeds `delta`.
pub fn delta_search(n: usize, alpha: f64, delta: f64) -> Result<usize> {
    TailParams::new(n, alpha, delta)?.rank()
}

fn search_rank(n: usize, alpha: f64, delta: f64) -> Result<usize> {
    let scale = normalizer(n, alpha);
    let mut acc = Compensated::default();
    for (j, term) in BinomialTerms::new(n, alpha).take(n).enumerate() {
        let term = term * scale;
        // acc currently holds v(j); adding term j gives v(j + 1).
        if !within(acc.peek(term), delta) {
            return if j == 0 {
                Err(HnpError::NoFeasibleRank { n, alpha, delta })
            } else {
                Ok(j)
            };
        }
        acc.add(term);
    }
    Ok(n)
}

/// Smallest `n` with `(1 - alpha)^n <= delta`, i.e. the smallest
/// threshold-selection set for which [`delta_search`] succeeds.
pub fn min_sample_size(alpha: f64, delta: f64) -> Result<usize> {
    check_open_unit("alpha", alpha)?;
    check_open_unit("delta", delta)?;
    let estimate = (delta.ln() / (-alpha).ln_1p()).ceil();
    let mut n = if estimate.is_finite() && estimate >= 1.0 {
        estimate as usize
    } else {
        1
    };
    while n > 1 && within(leading_term(n - 1, alpha), delta) {
        n -= 1;
    }
    while !within(leading_term(n, alpha), delta) {
        n += 1;
    }
    Ok(n)
}
