use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use crate::dataset::LabeledDataset;
use crate::error::{HnpError, Result};

/// Diagonal ridge added when a fitted covariance is not positive definite.
pub const COVARIANCE_RIDGE: f64 = 1e-6;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "kebab-case")]
pub enum CovarianceKind {
    /// One pooled covariance for all classes (linear discriminant).
    #[default]
    Shared,
    /// A covariance per class (quadratic discriminant).
    PerClass,
}

/// Raw parameters of a Gaussian class-conditional model.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GaussianParams {
    pub means: Vec<Vec<f64>>,
    /// One `d x d` matrix (row-major nested) when shared, else one per class.
    pub covariances: Vec<Vec<Vec<f64>>>,
    pub priors: Vec<f64>,
    #[serde(default)]
    pub regularized: bool,
}

/// Bayes-rule posterior under Gaussian class conditionals, with cached
/// precision matrices.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(into = "GaussianParams", try_from = "GaussianParams")]
pub struct GaussianModel {
    params: GaussianParams,
    dim: usize,
    /// Flattened `d x d` precision per covariance entry.
    precisions: Vec<Vec<f64>>,
    /// `ln prior_c - ln|Sigma_c| / 2` per class.
    offsets: Vec<f64>,
}

impl From<GaussianModel> for GaussianParams {
    fn from(m: GaussianModel) -> Self {
        m.params
    }
}

impl TryFrom<GaussianParams> for GaussianModel {
    type Error = HnpError;

    fn try_from(params: GaussianParams) -> Result<Self> {
        GaussianModel::new(params)
    }
}

fn to_matrix(rows: &[Vec<f64>], d: usize) -> Result<DMatrix<f64>> {
    if rows.len() != d || rows.iter().any(|r| r.len() != d) {
        return Err(HnpError::invalid(format!("covariance must be {d} x {d}")));
    }
    Ok(DMatrix::from_fn(d, d, |i, j| rows[i][j]))
}

impl GaussianModel {
    pub fn new(params: GaussianParams) -> Result<Self> {
        let k = params.means.len();
        if k < 2 {
            return Err(HnpError::invalid("at least two class means are required"));
        }
        let d = params.means[0].len();
        if d == 0 || params.means.iter().any(|m| m.len() != d) {
            return Err(HnpError::invalid(
                "class means must share a nonzero dimension",
            ));
        }
        if params.priors.len() != k || params.priors.iter().any(|&p| !(p > 0.0)) {
            return Err(HnpError::invalid("priors must be positive, one per class"));
        }
        if params.covariances.len() != 1 && params.covariances.len() != k {
            return Err(HnpError::invalid(
                "expected one shared covariance or one per class",
            ));
        }
        let prior_total: f64 = params.priors.iter().sum();
        let mut precisions = Vec::with_capacity(params.covariances.len());
        let mut half_log_dets = Vec::with_capacity(params.covariances.len());
        for cov in &params.covariances {
            let m = to_matrix(cov, d)?;
            let chol = m
                .cholesky()
                .ok_or_else(|| HnpError::Numerical("covariance is not positive definite".into()))?;
            let half_log_det: f64 = chol.l().diagonal().iter().map(|v| v.ln()).sum();
            let inv = chol.inverse();
            precisions.push((0..d * d).map(|idx| inv[(idx / d, idx % d)]).collect());
            half_log_dets.push(half_log_det);
        }
        let offsets = (0..k)
            .map(|c| {
                let h = half_log_dets[if half_log_dets.len() == 1 { 0 } else { c }];
                (params.priors[c] / prior_total).ln() - h
            })
            .collect();
        Ok(Self {
            params,
            dim: d,
            precisions,
            offsets,
        })
    }

    /// Class means, covariance(s), and empirical priors from labeled data.
    ///
    /// Each class needs more than `d` observations. A covariance that is not
    /// positive definite gets [`COVARIANCE_RIDGE`] added to its diagonal.
    pub fn fit(data: &LabeledDataset, kind: CovarianceKind) -> Result<Self> {
        let k = data.num_classes();
        let d = data.dim();
        let counts = data.class_counts();
        if let Some(c) = counts.iter().position(|&n| n <= d) {
            return Err(HnpError::invalid(format!(
                "class {} has {} observations; more than {d} needed to fit a covariance",
                c + 1,
                counts[c]
            )));
        }
        let mut means = vec![vec![0.0; d]; k];
        for (x, &y) in data.rows().zip(data.labels()) {
            for (m, v) in means[y - 1].iter_mut().zip(x) {
                *m += v;
            }
        }
        for (m, &n) in means.iter_mut().zip(&counts) {
            m.iter_mut().for_each(|v| *v /= n as f64);
        }
        let slots = match kind {
            CovarianceKind::Shared => 1,
            CovarianceKind::PerClass => k,
        };
        let mut scatter = vec![vec![vec![0.0; d]; d]; slots];
        for (x, &y) in data.rows().zip(data.labels()) {
            let s = &mut scatter[if slots == 1 { 0 } else { y - 1 }];
            let mu = &means[y - 1];
            for i in 0..d {
                for j in 0..d {
                    s[i][j] += (x[i] - mu[i]) * (x[j] - mu[j]);
                }
            }
        }
        for (slot, s) in scatter.iter_mut().enumerate() {
            let dof = match kind {
                CovarianceKind::Shared => data.len() - k,
                CovarianceKind::PerClass => counts[slot] - 1,
            } as f64;
            s.iter_mut().flatten().for_each(|v| *v /= dof);
        }
        let priors = counts
            .iter()
            .map(|&n| n as f64 / data.len() as f64)
            .collect();
        let params = GaussianParams {
            means,
            covariances: scatter,
            priors,
            regularized: false,
        };
        match Self::new(params.clone()) {
            Ok(m) => Ok(m),
            Err(HnpError::Numerical(_)) => {
                log::warn!("singular covariance; adding {COVARIANCE_RIDGE} to the diagonal");
                let mut params = params;
                for cov in params.covariances.iter_mut() {
                    for (i, row) in cov.iter_mut().enumerate() {
                        row[i] += COVARIANCE_RIDGE;
                    }
                }
                params.regularized = true;
                Self::new(params)
            }
            Err(e) => Err(e),
        }
    }

    pub fn params(&self) -> &GaussianParams {
        &self.params
    }

    pub fn num_classes(&self) -> usize {
        self.params.means.len()
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub(crate) fn posterior_into(&self, x: &[f64], out: &mut [f64]) {
        let d = self.dim;
        let mut diff = [0.0f64; 16];
        let mut heap;
        let diff: &mut [f64] = if d <= 16 {
            &mut diff[..d]
        } else {
            heap = vec![0.0; d];
            &mut heap
        };
        let mut max = f64::NEG_INFINITY;
        for (c, o) in out.iter_mut().enumerate() {
            for ((dv, xv), mv) in diff.iter_mut().zip(x).zip(&self.params.means[c]) {
                *dv = xv - mv;
            }
            let p = &self.precisions[if self.precisions.len() == 1 { 0 } else { c }];
            let mut q = 0.0;
            for i in 0..d {
                let row = &p[i * d..(i + 1) * d];
                q += diff[i] * row.iter().zip(diff.iter()).map(|(a, b)| a * b).sum::<f64>();
            }
            *o = self.offsets[c] - 0.5 * q;
            max = max.max(*o);
        }
        let mut total = 0.0;
        for o in out.iter_mut() {
            *o = (*o - max).exp();
            total += *o;
        }
        for o in out.iter_mut() {
            *o /= total;
        }
    }
}
