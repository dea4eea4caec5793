use serde::{Deserialize, Serialize};

use crate::dataset::LabeledDataset;
use crate::error::{HnpError, Result};

/// Full-batch gradient descent settings for [`LogisticModel::fit`].
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct LogisticConfig {
    pub learning_rate: f64,
    pub max_iters: usize,
    pub l2_penalty: f64,
    /// Stop once the Euclidean norm of the full gradient falls below this.
    pub tolerance: f64,
}

impl Default for LogisticConfig {
    fn default() -> Self {
        Self {
            learning_rate: 0.1,
            max_iters: 5000,
            l2_penalty: 1e-4,
            tolerance: 1e-8,
        }
    }
}

/// Relative size below which a change in the objective is rounding noise.
const LOSS_NOISE: f64 = 1e-12;

/// Softmax-linear model `P(Y = c | x) ∝ exp(b_c + w_c · x)`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LogisticModel {
    pub num_classes: usize,
    pub dim: usize,
    /// Row-major `num_classes x dim`.
    pub weights: Vec<f64>,
    pub bias: Vec<f64>,
    pub iterations: usize,
    /// False when `max_iters` ran out before the gradient tolerance was met.
    pub converged: bool,
}

impl LogisticModel {
    pub fn zeros(num_classes: usize, dim: usize) -> Self {
        Self {
            num_classes,
            dim,
            weights: vec![0.0; num_classes * dim],
            bias: vec![0.0; num_classes],
            iterations: 0,
            converged: false,
        }
    }

    /// Minimizes mean cross-entropy plus `l2_penalty / 2 * |W|^2` (bias not
    /// penalized) from a zero start. Deterministic for given data and config.
    ///
    /// Full-batch gradient descent with an adaptive step: `learning_rate` is
    /// the first step, halved until the objective decreases enough (Armijo)
    /// and grown by half after each accepted step.
    pub fn fit(data: &LabeledDataset, config: &LogisticConfig) -> Result<Self> {
        data.require_all_classes()?;
        if data.dim() == 0 {
            return Err(HnpError::invalid("feature dimension must be at least 1"));
        }
        if !(config.learning_rate > 0.0) || !(config.l2_penalty >= 0.0) {
            return Err(HnpError::invalid(
                "learning_rate must be positive and l2_penalty nonnegative",
            ));
        }
        let k = data.num_classes();
        let d = data.dim();
        let mut model = Self::zeros(k, d);
        let mut grad = Gradient::new(k, d);
        let mut trial_grad = Gradient::new(k, d);
        let mut trial = model.clone();
        let mut loss = model.objective(data, config.l2_penalty, &mut grad);
        let mut step = config.learning_rate;

        for iter in 0..config.max_iters {
            model.iterations = iter;
            let norm_sq = grad.norm_sq();
            if norm_sq.sqrt() < config.tolerance {
                model.converged = true;
                return Ok(model);
            }
            loop {
                for ((t, w), g) in trial.weights.iter_mut().zip(&model.weights).zip(&grad.w) {
                    *t = w - step * g;
                }
                for ((t, b), g) in trial.bias.iter_mut().zip(&model.bias).zip(&grad.b) {
                    *t = b - step * g;
                }
                let trial_loss = trial.objective(data, config.l2_penalty, &mut trial_grad);
                let decrease = 0.5 * step * norm_sq;
                // Below the rounding noise of the loss, require a smaller gradient instead.
                let accept = if decrease > LOSS_NOISE * loss.abs().max(1.0) {
                    trial_loss <= loss - decrease
                } else {
                    trial_grad.norm_sq() <= norm_sq
                };
                if accept {
                    loss = trial_loss;
                    break;
                }
                step *= 0.5;
                if step < f64::EPSILON * config.learning_rate {
                    log::warn!("logistic regression step size collapsed at iteration {iter}");
                    return Ok(model);
                }
            }
            std::mem::swap(&mut model.weights, &mut trial.weights);
            std::mem::swap(&mut model.bias, &mut trial.bias);
            std::mem::swap(&mut grad, &mut trial_grad);
            step *= 1.5;
        }
        model.iterations = config.max_iters;
        log::warn!(
            "logistic regression stopped after {} iterations without reaching tolerance {}",
            config.max_iters,
            config.tolerance
        );
        Ok(model)
    }

    /// Penalized mean cross-entropy; writes its gradient into `grad`.
    fn objective(&self, data: &LabeledDataset, l2: f64, grad: &mut Gradient) -> f64 {
        let k = self.num_classes;
        let d = self.dim;
        let n = data.len() as f64;
        grad.w.iter_mut().for_each(|g| *g = 0.0);
        grad.b.iter_mut().for_each(|g| *g = 0.0);
        let mut probs = vec![0.0; k];
        let mut loss = 0.0;
        for (x, &y) in data.rows().zip(data.labels()) {
            loss -= self.log_softmax_into(x, &mut probs, y - 1);
            for (c, &p) in probs.iter().enumerate() {
                let g = p - if y == c + 1 { 1.0 } else { 0.0 };
                grad.b[c] += g;
                let row = &mut grad.w[c * d..(c + 1) * d];
                for (gw, xv) in row.iter_mut().zip(x) {
                    *gw += g * xv;
                }
            }
        }
        let mut penalty = 0.0;
        for (g, w) in grad.w.iter_mut().zip(&self.weights) {
            *g = *g / n + l2 * w;
            penalty += w * w;
        }
        for g in grad.b.iter_mut() {
            *g /= n;
        }
        loss / n + 0.5 * l2 * penalty
    }

    /// Softmax into `out`; returns `ln out[target]`.
    fn log_softmax_into(&self, x: &[f64], out: &mut [f64], target: usize) -> f64 {
        let d = self.dim;
        let mut max = f64::NEG_INFINITY;
        for (c, o) in out.iter_mut().enumerate() {
            let w = &self.weights[c * d..(c + 1) * d];
            *o = self.bias[c] + w.iter().zip(x).map(|(a, b)| a * b).sum::<f64>();
            max = max.max(*o);
        }
        let z_target = out[target];
        let mut total = 0.0;
        for o in out.iter_mut() {
            *o = (*o - max).exp();
            total += *o;
        }
        for o in out.iter_mut() {
            *o /= total;
        }
        z_target - max - total.ln()
    }

    pub(crate) fn softmax_into(&self, x: &[f64], out: &mut [f64]) {
        let d = self.dim;
        let mut max = f64::NEG_INFINITY;
        for (c, o) in out.iter_mut().enumerate() {
            let w = &self.weights[c * d..(c + 1) * d];
            let z = self.bias[c] + w.iter().zip(x).map(|(a, b)| a * b).sum::<f64>();
            *o = z;
            max = max.max(z);
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

struct Gradient {
    w: Vec<f64>,
    b: Vec<f64>,
}

impl Gradient {
    fn new(k: usize, d: usize) -> Self {
        Self {
            w: vec![0.0; k * d],
            b: vec![0.0; k],
        }
    }

    fn norm_sq(&self) -> f64 {
        self.w.iter().chain(&self.b).map(|g| g * g).sum()
    }
}
