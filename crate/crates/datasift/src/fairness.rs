//! Demographic-parity measurement.
//!
//! The reported metric is the hard-prediction rate gap
//! `P(Ŷ=1 | S=0) − P(Ŷ=1 | S=1)`: negative values mean the model grants the
//! positive outcome less often to the protected group. A sigmoid-smoothed
//! variant with an analytic gradient backs the influence computation, where
//! a differentiable surrogate is required.

use ndarray::Array1;
use serde::Serialize;

use crate::dataset::Dataset;
use crate::error::{Error, Result};
use crate::model::{sigmoid, Design, TrainedModel};

/// Parity and the per-group positive-prediction rates behind it.
#[derive(Debug, Clone, Copy, Serialize)]
pub struct FairnessReport {
    /// rate_protected − rate_privileged
    pub parity: f64,
    pub rate_protected: f64,
    pub rate_privileged: f64,
    pub accuracy: f64,
    pub n_protected: usize,
    pub n_privileged: usize,
}

/// Hard-prediction demographic parity of `model` on `data`.
pub fn demographic_parity(model: &TrainedModel, data: &Dataset) -> Result<FairnessReport> {
    let mut pos = [0usize; 2];
    let mut n = [0usize; 2];
    let mut hits = 0usize;
    for ex in data.examples() {
        let yhat = model.predict_label(&ex.features)?;
        let s = ex.sensitive as usize;
        n[s] += 1;
        pos[s] += yhat as usize;
        if yhat == ex.label {
            hits += 1;
        }
    }
    if n[0] == 0 || n[1] == 0 {
        return Err(Error::Stats("parity undefined: a sensitive group is absent".into()));
    }
    let rate_protected = pos[0] as f64 / n[0] as f64;
    let rate_privileged = pos[1] as f64 / n[1] as f64;
    Ok(FairnessReport {
        parity: rate_protected - rate_privileged,
        rate_protected,
        rate_privileged,
        accuracy: hits as f64 / data.len() as f64,
        n_protected: n[0],
        n_privileged: n[1],
    })
}

/// Smoothed parity `mean_{S=0} σ(θᵀx̃) − mean_{S=1} σ(θᵀx̃)` and its gradient
/// in θ. Used wherever parity must be differentiated; the hard metric above
/// is what gets reported.
pub fn soft_parity_and_grad(
    theta: &Array1<f64>,
    data: &Dataset,
    design: &Design,
) -> Result<(f64, Array1<f64>)> {
    let d = design.dim();
    if theta.len() != d {
        return Err(Error::Dimension { expected: d, got: theta.len() });
    }
    let mut sum = [0.0f64; 2];
    let mut grad = [Array1::<f64>::zeros(d), Array1::<f64>::zeros(d)];
    let mut n = [0usize; 2];
    for ex in data.examples() {
        let x = design.row(&ex.features)?;
        let s = sigmoid(theta.dot(&x));
        let g = ex.sensitive as usize;
        sum[g] += s;
        n[g] += 1;
        let w = s * (1.0 - s);
        grad[g].scaled_add(w, &x);
    }
    if n[0] == 0 || n[1] == 0 {
        return Err(Error::Stats("soft parity undefined: a sensitive group is absent".into()));
    }
    let value = sum[0] / n[0] as f64 - sum[1] / n[1] as f64;
    let grad = &grad[0] / n[0] as f64 - &grad[1] / n[1] as f64;
    Ok((value, grad))
}

/// Binary entropy in bits: `−(p log₂ p + (1−p) log₂(1−p))`, with the
/// limits at p ∈ {0, 1} taken as 0.
pub fn entropy(p: f64) -> f64 {
    assert!((0.0..=1.0).contains(&p), "entropy argument {p} outside [0, 1]");
    if p == 0.0 || p == 1.0 {
        return 0.0;
    }
    -(p * p.log2() + (1.0 - p) * (1.0 - p).log2())
}
