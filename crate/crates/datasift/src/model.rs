//! L2-regularized logistic regression fit by damped Newton iteration.
//!
//! The objective is the per-point-averaged logistic loss plus `(λ/2)‖θ‖²`,
//! so its Hessian is `(1/n) Σ σ(1−σ) x̃x̃ᵀ + λI` with smallest eigenvalue at
//! least λ — every Newton step solves a well-conditioned SPD system.

use ndarray::{Array1, Array2};
use serde::{Deserialize, Serialize};

use crate::dataset::{Dataset, Example};
use crate::error::{Error, Result};
use crate::linalg::CholeskyFactor;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainConfig {
    /// L2 strength on all coordinates, intercept included.
    #[serde(default = "default_lambda")]
    pub lambda: f64,
    /// Stop when the gradient norm falls below this.
    #[serde(default = "default_tol")]
    pub tol: f64,
    #[serde(default = "default_max_iters")]
    pub max_newton_iters: usize,
    #[serde(default = "default_true")]
    pub fit_intercept: bool,
    /// When false, the sensitive coordinate is dropped from the design
    /// matrix (the dataset must know which coordinate that is).
    #[serde(default = "default_true")]
    pub include_sensitive: bool,
}

fn default_lambda() -> f64 {
    1e-3
}
fn default_tol() -> f64 {
    1e-8
}
fn default_max_iters() -> usize {
    100
}
fn default_true() -> bool {
    true
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            lambda: default_lambda(),
            tol: default_tol(),
            max_newton_iters: default_max_iters(),
            fit_intercept: true,
            include_sensitive: true,
        }
    }
}

/// How raw feature vectors map to model inputs: optionally skip the
/// sensitive coordinate, optionally append a constant 1 for the intercept.
#[derive(Debug, Clone, PartialEq)]
pub struct Design {
    pub p: usize,
    pub intercept: bool,
    pub skip: Option<usize>,
}

impl Design {
    pub fn for_dataset(data: &Dataset, cfg: &TrainConfig) -> Design {
        let skip = if cfg.include_sensitive { None } else { data.sensitive_index() };
        Design { p: data.p(), intercept: cfg.fit_intercept, skip }
    }

    /// Model input dimension.
    pub fn dim(&self) -> usize {
        self.p - usize::from(self.skip.is_some()) + usize::from(self.intercept)
    }

    /// Encode one raw feature vector.
    pub fn row(&self, features: &[f64]) -> Result<Array1<f64>> {
        if features.len() != self.p {
            return Err(Error::Dimension { expected: self.p, got: features.len() });
        }
        let mut out = Vec::with_capacity(self.dim());
        for (j, &v) in features.iter().enumerate() {
            if self.skip != Some(j) {
                out.push(v);
            }
        }
        if self.intercept {
            out.push(1.0);
        }
        Ok(Array1::from_vec(out))
    }

    /// Stack all examples into an n×dim design matrix.
    pub fn matrix(&self, data: &Dataset) -> Result<Array2<f64>> {
        let n = data.len();
        let d = self.dim();
        let mut m = Array2::<f64>::zeros((n, d));
        for (i, ex) in data.examples().iter().enumerate() {
            let row = self.row(&ex.features)?;
            m.row_mut(i).assign(&row);
        }
        Ok(m)
    }
}

#[derive(Debug, Clone)]
pub struct TrainedModel {
    pub theta: Array1<f64>,
    pub design: Design,
    pub config: TrainConfig,
    pub converged: bool,
    pub grad_norm: f64,
    pub newton_iters: usize,
}

/// Numerically stable logistic function.
pub fn sigmoid(z: f64) -> f64 {
    if z >= 0.0 {
        1.0 / (1.0 + (-z).exp())
    } else {
        let e = z.exp();
        e / (1.0 + e)
    }
}

/// log(1 + e^z) without overflow.
fn softplus(z: f64) -> f64 {
    z.max(0.0) + (-z.abs()).exp().ln_1p()
}

/// Regularized objective value, gradient, and Hessian at `theta`.
pub fn loss_grad_hessian(
    data: &Dataset,
    theta: &Array1<f64>,
    cfg: &TrainConfig,
) -> Result<(f64, Array1<f64>, Array2<f64>)> {
    let design = Design::for_dataset(data, cfg);
    loss_grad_hessian_with(data, theta, cfg.lambda, &design)
}

pub(crate) fn loss_grad_hessian_with(
    data: &Dataset,
    theta: &Array1<f64>,
    lambda: f64,
    design: &Design,
) -> Result<(f64, Array1<f64>, Array2<f64>)> {
    let d = design.dim();
    if theta.len() != d {
        return Err(Error::Dimension { expected: d, got: theta.len() });
    }
    let n = data.len() as f64;
    let mut loss = 0.0;
    let mut grad = Array1::<f64>::zeros(d);
    let mut hess = Array2::<f64>::zeros((d, d));
    for ex in data.examples() {
        let x = design.row(&ex.features)?;
        let z = theta.dot(&x);
        let y = ex.label as f64;
        loss += softplus(z) - y * z;
        let s = sigmoid(z);
        let g = s - y;
        let w = s * (1.0 - s);
        for i in 0..d {
            grad[i] += g * x[i];
            for j in 0..=i {
                hess[[i, j]] += w * x[i] * x[j];
            }
        }
    }
    loss /= n;
    loss += 0.5 * lambda * theta.dot(theta);
    for i in 0..d {
        grad[i] = grad[i] / n + lambda * theta[i];
        for j in 0..=i {
            let v = hess[[i, j]] / n + if i == j { lambda } else { 0.0 };
            hess[[i, j]] = v;
            hess[[j, i]] = v;
        }
    }
    if !loss.is_finite() || grad.iter().any(|v| !v.is_finite()) {
        return Err(Error::Numeric("non-finite loss or gradient".into()));
    }
    Ok((loss, grad, hess))
}

/// Unregularized gradient of a single example's loss at `theta`:
/// `(σ(θᵀx̃) − y) x̃`. This is the per-point term the influence machinery
/// needs; the L2 penalty belongs to the objective, not to any data point.
pub(crate) fn example_grad(ex: &Example, theta: &Array1<f64>, design: &Design) -> Result<Array1<f64>> {
    let x = design.row(&ex.features)?;
    let g = sigmoid(theta.dot(&x)) - ex.label as f64;
    Ok(x * g)
}

fn loss_only(data: &Dataset, theta: &Array1<f64>, lambda: f64, design: &Design) -> Result<f64> {
    let mut loss = 0.0;
    for ex in data.examples() {
        let x = design.row(&ex.features)?;
        let z = theta.dot(&x);
        loss += softplus(z) - ex.label as f64 * z;
    }
    Ok(loss / data.len() as f64 + 0.5 * lambda * theta.dot(theta))
}

/// Fit from a zero start. Newton steps are backtracked until they decrease
/// the objective, which keeps the iteration globally convergent on this
/// strongly convex problem.
pub fn train(data: &Dataset, cfg: &TrainConfig) -> Result<TrainedModel> {
    if data.is_empty() {
        return Err(Error::Data("cannot train on an empty dataset".into()));
    }
    let n_pos = data.examples().iter().filter(|e| e.label == 1).count();
    if n_pos == 0 || n_pos == data.len() {
        return Err(Error::Data("training labels are all identical".into()));
    }
    if !(cfg.lambda > 0.0) {
        return Err(Error::Config("lambda must be positive".into()));
    }
    let design = Design::for_dataset(data, cfg);
    let d = design.dim();
    let mut theta = Array1::<f64>::zeros(d);
    let mut converged = false;
    let mut grad_norm = f64::INFINITY;
    let mut iters = 0;

    for _ in 0..cfg.max_newton_iters {
        let (loss, grad, hess) = loss_grad_hessian_with(data, &theta, cfg.lambda, &design)?;
        grad_norm = grad.dot(&grad).sqrt();
        if grad_norm <= cfg.tol {
            converged = true;
            break;
        }
        iters += 1;
        let factor = CholeskyFactor::factor(&hess)
            .map_err(|e| Error::Optimization(format!("Hessian solve failed: {e}")))?;
        let step = factor.solve(&grad)?;
        let descent = grad.dot(&step);
        let mut t = 1.0;
        loop {
            let candidate = &theta - &(step.clone() * t);
            let new_loss = loss_only(data, &candidate, cfg.lambda, &design)?;
            if new_loss <= loss - 1e-4 * t * descent || t < 1e-10 {
                theta = candidate;
                break;
            }
            t *= 0.5;
        }
    }
    if !converged {
        // One final check: the last step may have landed inside tolerance.
        let (_, grad, _) = loss_grad_hessian_with(data, &theta, cfg.lambda, &design)?;
        grad_norm = grad.dot(&grad).sqrt();
        converged = grad_norm <= cfg.tol;
    }
    Ok(TrainedModel { theta, design, config: cfg.clone(), converged, grad_norm, newton_iters: iters })
}

impl TrainedModel {
    /// P(Y = 1 | x) under the model.
    pub fn predict_proba(&self, features: &[f64]) -> Result<f64> {
        let x = self.design.row(features)?;
        Ok(sigmoid(self.theta.dot(&x)))
    }

    /// Hard prediction with ties (probability exactly 0.5) going to 1.
    pub fn predict_label(&self, features: &[f64]) -> Result<u8> {
        Ok(if self.predict_proba(features)? >= 0.5 { 1 } else { 0 })
    }
}

/// Fraction of examples whose hard prediction matches the label.
pub fn accuracy(model: &TrainedModel, data: &Dataset) -> Result<f64> {
    if data.is_empty() {
        return Err(Error::Data("cannot score an empty dataset".into()));
    }
    let mut hits = 0usize;
    for ex in data.examples() {
        if model.predict_label(&ex.features)? == ex.label {
            hits += 1;
        }
    }
    Ok(hits as f64 / data.len() as f64)
}
