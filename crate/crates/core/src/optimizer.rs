//! Adam over the flat trainable vector `θ ∥ τ ∥ φ`, cosine-annealed step size.

use crate::types::Delay;
use std::f64::consts::PI;

pub const DEFAULT_TAU_FLOOR: f64 = 1e-3;

#[derive(Debug, Clone, PartialEq)]
pub struct AdamState {
    pub m: Vec<f64>,
    pub v: Vec<f64>,
    pub step_count: u64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
}

impl AdamState {
    pub fn new(len: usize) -> Self {
        Self::with_betas(len, 0.9, 0.999)
    }

    pub fn with_betas(len: usize, beta1: f64, beta2: f64) -> Self {
        Self { m: vec![0.0; len], v: vec![0.0; len], step_count: 0, beta1, beta2, eps: 1e-8 }
    }
}

/// One bias-corrected Adam update. Updates `state` in place and returns the
/// new parameters.
///
/// # Panics
/// If `params`, `grads` and the state moments differ in length.
pub fn adam_step(state: &mut AdamState, params: &[f64], grads: &[f64], lr: f64) -> Vec<f64> {
    assert_eq!(params.len(), grads.len(), "params/grads length");
    assert_eq!(params.len(), state.m.len(), "params/state length");
    state.step_count += 1;
    let (b1, b2) = (state.beta1, state.beta2);
    let bc1 = 1.0 - b1.powi(state.step_count as i32);
    let bc2 = 1.0 - b2.powi(state.step_count as i32);
    params
        .iter()
        .zip(grads)
        .zip(state.m.iter_mut().zip(state.v.iter_mut()))
        .map(|((p, g), (m, v))| {
            *m = b1 * *m + (1.0 - b1) * g;
            *v = b2 * *v + (1.0 - b2) * g * g;
            let m_hat = *m / bc1;
            let v_hat = *v / bc2;
            p - lr * m_hat / (v_hat.sqrt() + state.eps)
        })
        .collect()
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LrSchedule {
    pub lr0: f64,
    pub n_epochs: usize,
    pub floor_fraction: f64,
}

impl LrSchedule {
    pub fn cosine(lr0: f64, n_epochs: usize) -> Self {
        Self { lr0, n_epochs, floor_fraction: 0.1 }
    }
}

/// Cosine annealing from `lr0` at epoch 0 to `floor_fraction·lr0` at
/// `n_epochs`.
pub fn lr_at(schedule: &LrSchedule, epoch: usize) -> f64 {
    let lr_min = schedule.floor_fraction * schedule.lr0;
    let e = epoch.min(schedule.n_epochs);
    if schedule.n_epochs == 0 || e == 0 {
        return schedule.lr0;
    }
    if e == schedule.n_epochs {
        return lr_min;
    }
    let frac = e as f64 / schedule.n_epochs as f64;
    (lr_min + 0.5 * (schedule.lr0 - lr_min) * (1.0 + (PI * frac).cos())).clamp(lr_min, schedule.lr0)
}

/// `max(τ_new, τ_floor)`; non-finite input lands on the floor.
///
/// # Panics
/// If `tau_floor` is not a positive finite number.
pub fn clamp_tau(tau_new: f64, tau_floor: f64) -> Delay {
    let v = if tau_new.is_nan() { tau_floor } else { tau_new.max(tau_floor) };
    Delay::new(v).expect("tau floor must be positive and finite")
}
