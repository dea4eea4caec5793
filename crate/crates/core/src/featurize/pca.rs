use crate::error::{HnpError, Result};

use super::Matrix;

pub const PC_TOLERANCE: f64 = 1e-10;
pub const PC_MAX_ITERS: usize = 10_000;

/// Leading principal direction of a data matrix (rows are observations).
#[derive(Debug, Clone, PartialEq)]
pub struct PrincipalComponent {
    /// Unit-norm loadings, one per column; largest-magnitude entry positive.
    pub loadings: Vec<f64>,
    /// Variance along the loadings (sample covariance, divisor `n - 1`).
    pub variance: f64,
    pub iterations: usize,
    pub converged: bool,
}

/// Column-centered data with the implicit covariance product `X^T X w`.
struct Centered<'a> {
    m: &'a Matrix,
    means: Vec<f64>,
    scale: f64,
}

impl<'a> Centered<'a> {
    fn new(m: &'a Matrix) -> Self {
        let mut means = vec![0.0; m.cols()];
        for r in 0..m.rows() {
            for (mu, v) in means.iter_mut().zip(m.row(r)) {
                *mu += v;
            }
        }
        means.iter_mut().for_each(|mu| *mu /= m.rows() as f64);
        let scale = 1.0 / (m.rows().max(2) - 1) as f64;
        Self { m, means, scale }
    }

    fn cov_times(&self, w: &[f64], out: &mut [f64]) {
        out.iter_mut().for_each(|o| *o = 0.0);
        for r in 0..self.m.rows() {
            let row = self.m.row(r);
            let proj: f64 = row
                .iter()
                .zip(&self.means)
                .zip(w)
                .map(|((x, mu), wi)| (x - mu) * wi)
                .sum();
            for ((o, x), mu) in out.iter_mut().zip(row).zip(&self.means) {
                *o += proj * (x - mu);
            }
        }
        out.iter_mut().for_each(|o| *o *= self.scale);
    }

    fn variances(&self) -> Vec<f64> {
        let mut v = vec![0.0; self.m.cols()];
        for r in 0..self.m.rows() {
            for ((acc, x), mu) in v.iter_mut().zip(self.m.row(r)).zip(&self.means) {
                *acc += (x - mu) * (x - mu);
            }
        }
        v.iter_mut().for_each(|a| *a *= self.scale);
        v
    }
}

fn norm(v: &[f64]) -> f64 {
    v.iter().map(|x| x * x).sum::<f64>().sqrt()
}

fn fix_sign(v: &mut [f64]) {
    let mut best = 0;
    for (i, x) in v.iter().enumerate() {
        if x.abs() > v[best].abs() {
            best = i;
        }
    }
    if v[best] < 0.0 {
        v.iter_mut().for_each(|x| *x = -*x);
    }
}

/// First principal component of the column-centered covariance by power
/// iteration.
///
/// Starts from `C e_j` with `j` the column of largest variance and stops
/// once `|C w - lambda w| <= 1e-10 * lambda`. After 10,000 iterations the
/// last iterate is returned with `converged = false` and a logged warning.
/// A matrix whose covariance is zero is an error.
pub fn first_pc(m: &Matrix) -> Result<PrincipalComponent> {
    if m.rows() == 0 || m.cols() == 0 {
        return Err(HnpError::invalid("first_pc needs a nonempty matrix"));
    }
    if m.values().iter().any(|v| !v.is_finite()) {
        return Err(HnpError::invalid("first_pc needs finite entries"));
    }
    let c = Centered::new(m);
    let variances = c.variances();
    let start = variances.iter().enumerate().fold(
        0,
        |best, (i, v)| if *v > variances[best] { i } else { best },
    );
    if !(variances[start] > 0.0) {
        return Err(HnpError::invalid(
            "first_pc: the column-centered matrix is zero (no variance)",
        ));
    }
    let p = m.cols();
    let mut e = vec![0.0; p];
    e[start] = 1.0;
    let mut w = vec![0.0; p];
    c.cov_times(&e, &mut w);
    let n0 = norm(&w);
    w.iter_mut().for_each(|x| *x /= n0);

    let mut cw = vec![0.0; p];
    let mut lambda = 0.0;
    for iter in 1..=PC_MAX_ITERS {
        c.cov_times(&w, &mut cw);
        lambda = w.iter().zip(&cw).map(|(a, b)| a * b).sum::<f64>();
        let residual = cw
            .iter()
            .zip(&w)
            .map(|(a, b)| (a - lambda * b).powi(2))
            .sum::<f64>()
            .sqrt();
        if residual <= PC_TOLERANCE * lambda.abs() {
            fix_sign(&mut w);
            return Ok(PrincipalComponent {
                loadings: w,
                variance: lambda,
                iterations: iter,
                converged: true,
            });
        }
        let n = norm(&cw);
        if !(n > 0.0) {
            return Err(HnpError::Numerical(
                "power iteration collapsed to zero".into(),
            ));
        }
        for (wi, ci) in w.iter_mut().zip(&cw) {
            *wi = ci / n;
        }
    }
    log::warn!("first_pc: no convergence after {PC_MAX_ITERS} iterations; returning last iterate");
    fix_sign(&mut w);
    Ok(PrincipalComponent {
        loadings: w,
        variance: lambda,
        iterations: PC_MAX_ITERS,
        converged: false,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn axis_aligned() {
        // Column variances 4 and 1, uncorrelated.
        let m = Matrix::from_rows(&[
            vec![2.0, 1.0],
            vec![-2.0, 1.0],
            vec![2.0, -1.0],
            vec![-2.0, -1.0],
        ])
        .unwrap();
        let pc = first_pc(&m).unwrap();
        assert_eq!(pc.loadings, vec![1.0, 0.0]);
        assert!((pc.variance - 16.0 / 3.0).abs() < 1e-12);
    }

    #[test]
    fn rank_one_direction() {
        let a = [1.0, -2.0, 0.5];
        let b = [3.0, -1.0, 2.0, 0.0, 1.0];
        let rows: Vec<Vec<f64>> = b
            .iter()
            .map(|s| a.iter().map(|x| s * x).collect())
            .collect();
        let pc = first_pc(&Matrix::from_rows(&rows).unwrap()).unwrap();
        let na = norm(&a);
        // Largest |a| entry is -2, so the sign rule flips a.
        for (l, x) in pc.loadings.iter().zip(&a) {
            assert!((l + x / na).abs() < 1e-12);
        }
    }

    #[test]
    fn zero_and_constant_matrices_are_errors() {
        assert!(first_pc(&Matrix::zeros(3, 2)).is_err());
        let c = Matrix::from_rows(&[vec![1.0, 2.0], vec![1.0, 2.0]]).unwrap();
        assert!(first_pc(&c).is_err());
    }
}
