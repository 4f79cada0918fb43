//! Running and terminal loss, evaluated on the solver grid.
//!
//! The running term is the trapezoid rule over the forward nodes
//! `0, dt, …, n_step·dt`, so it integrates up to `n_step·dt` rather than `T`;
//! the terminal term is evaluated at the last node. The reported value is
//! therefore an approximation of the `[0, T]` loss.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::interpolation::CubicSpline;
use crate::types::{StateVec, Trajectory};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum NormType {
    L1,
    L2,
    #[serde(alias = "linf")]
    LInf,
    /// Unsquared weighted Euclidean norm `sqrt(Σ wᵢ eᵢ²)`.
    Euclidean,
}

/// Pointwise (optionally weighted) norm of `x − x̃`. `L2` is the squared
/// weighted Euclidean norm.
#[derive(Debug, Clone, PartialEq)]
pub struct NormKind {
    pub kind: NormType,
    weights: Option<Vec<f64>>,
}

impl NormKind {
    pub fn new(kind: NormType) -> Self {
        Self { kind, weights: None }
    }

    pub fn weighted(kind: NormType, weights: Vec<f64>) -> Result<Self> {
        if weights.iter().any(|w| !(w.is_finite() && *w > 0.0)) {
            return Err(Error::InvalidValue(format!("norm weights must be positive: {weights:?}")));
        }
        Ok(Self { kind, weights: Some(weights) })
    }

    pub fn weights(&self) -> Option<&[f64]> {
        self.weights.as_deref()
    }

    fn weight(&self, i: usize) -> f64 {
        self.weights.as_ref().map_or(1.0, |w| w[i])
    }

    fn check(&self, x: &[f64], x_ref: &[f64]) -> Result<()> {
        if x.len() != x_ref.len() {
            return Err(Error::DimensionMismatch { expected: x.len(), got: x_ref.len() });
        }
        if let Some(w) = &self.weights {
            if w.len() != x.len() {
                return Err(Error::DimensionMismatch { expected: x.len(), got: w.len() });
            }
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct LossConfig {
    pub running: NormKind,
    /// `None` means `G ≡ 0`.
    pub terminal: Option<NormKind>,
}

impl Default for LossConfig {
    fn default() -> Self {
        Self { running: NormKind::new(NormType::L2), terminal: None }
    }
}

pub fn pointwise_loss(x: &[f64], x_ref: &[f64], norm: &NormKind) -> Result<f64> {
    norm.check(x, x_ref)?;
    let diffs = x.iter().zip(x_ref).enumerate().map(|(i, (a, b))| (norm.weight(i), a - b));
    Ok(match norm.kind {
        NormType::L2 => diffs.map(|(w, e)| w * e * e).sum(),
        NormType::L1 => diffs.map(|(w, e)| w * e.abs()).sum(),
        NormType::LInf => diffs.map(|(w, e)| w * e.abs()).fold(0.0, f64::max),
        NormType::Euclidean => diffs.map(|(w, e)| w * e * e).sum::<f64>().sqrt(),
    })
}

/// Gradient (subgradient for L1/L∞/Euclidean) of [`pointwise_loss`] with
/// respect to `x`. `sign(0) = 0`, the Euclidean gradient at `x = x̃` is zero,
/// and L∞ ties go to the lowest index.
pub fn pointwise_loss_grad(x: &[f64], x_ref: &[f64], norm: &NormKind) -> Result<Vec<f64>> {
    norm.check(x, x_ref)?;
    let sign = |e: f64| {
        if e > 0.0 {
            1.0
        } else if e < 0.0 {
            -1.0
        } else {
            0.0
        }
    };
    let mut grad = vec![0.0; x.len()];
    match norm.kind {
        NormType::L2 => {
            for (i, g) in grad.iter_mut().enumerate() {
                *g = 2.0 * norm.weight(i) * (x[i] - x_ref[i]);
            }
        }
        NormType::L1 => {
            for (i, g) in grad.iter_mut().enumerate() {
                *g = norm.weight(i) * sign(x[i] - x_ref[i]);
            }
        }
        NormType::LInf => {
            let mut best: Option<(usize, f64)> = None;
            for i in 0..x.len() {
                let v = norm.weight(i) * (x[i] - x_ref[i]).abs();
                if best.is_none_or(|(_, b)| v > b) {
                    best = Some((i, v));
                }
            }
            if let Some((j, _)) = best {
                grad[j] = norm.weight(j) * sign(x[j] - x_ref[j]);
            }
        }
        NormType::Euclidean => {
            let r = pointwise_loss(x, x_ref, norm)?;
            if r > 0.0 {
                for (i, g) in grad.iter_mut().enumerate() {
                    *g = norm.weight(i) * (x[i] - x_ref[i]) / r;
                }
            }
        }
    }
    Ok(grad)
}

/// Trapezoid rule of the running loss over the grid nodes plus the terminal
/// loss at the last node.
pub fn total_loss(pred: &Trajectory, target: &CubicSpline, cfg: &LossConfig) -> Result<f64> {
    let n = pred.len();
    if n == 0 {
        return Err(Error::DegenerateInput("empty predicted trajectory".into()));
    }
    let mut x_ref = vec![0.0; target.dim()];
    let mut running = 0.0;
    for (k, state) in pred.states().iter().enumerate() {
        target.eval_into(pred.time(k), &mut x_ref);
        let w = if k == 0 || k == n - 1 { 0.5 } else { 1.0 };
        running += w * pointwise_loss(state, &x_ref, &cfg.running)?;
    }
    running *= pred.dt();
    if n == 1 {
        running = 0.0;
    }
    let terminal = match &cfg.terminal {
        Some(norm) => {
            target.eval_into(pred.time(n - 1), &mut x_ref);
            pointwise_loss(&pred.states()[n - 1], &x_ref, norm)?
        }
        None => 0.0,
    };
    Ok(running + terminal)
}

/// `∇G(x(T_end))`, the zero vector when there is no terminal loss.
pub fn terminal_grad(x_end: &StateVec, x_ref: &[f64], cfg: &LossConfig) -> Result<Vec<f64>> {
    match &cfg.terminal {
        Some(norm) => pointwise_loss_grad(x_end, x_ref, norm),
        None => Ok(vec![0.0; x_end.len()]),
    }
}
