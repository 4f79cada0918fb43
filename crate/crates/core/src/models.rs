//! Benchmark dynamics and history-function families with closed-form
//! Jacobians.
//!
//! | name          | d | θ                  | F                                          |
//! |---------------|---|--------------------|--------------------------------------------|
//! | `exponential` | 1 | (θ₀, θ₁)           | θ₀x + θ₁y                                  |
//! | `logistic`    | 1 | (θ₀, θ₁)           | θ₀x(1 − θ₁y)                               |
//! | `enso`        | 1 | (θ₀, θ₁, θ₂)       | θ₀x − θ₁x³ − θ₂y                           |
//! | `cheyne`      | 1 | (p, V₀, α)         | p − V₀·x·yᵐ/(α + yᵐ), m fixed              |
//! | `hiv`         | 3 | none               | infected cells / infectious / non-infectious virus |

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::types::{DynamicsModel, InitialConditionModel, Matrix};

pub const MODEL_NAMES: [&str; 5] = ["exponential", "logistic", "enso", "cheyne", "hiv"];
pub const IC_NAMES: [&str; 3] = ["constant", "affine", "periodic"];

#[derive(Debug, Clone, Copy, Default)]
pub struct ExponentialDecay;

impl DynamicsModel for ExponentialDecay {
    fn name(&self) -> &str {
        "exponential"
    }
    fn dim(&self) -> usize {
        1
    }
    fn n_params(&self) -> usize {
        2
    }
    fn eval(&self, x: &[f64], y: &[f64], _tau: f64, _t: f64, th: &[f64]) -> Result<Vec<f64>> {
        Ok(vec![th[0] * x[0] + th[1] * y[0]])
    }
    fn jac_x(&self, _x: &[f64], _y: &[f64], _tau: f64, _t: f64, th: &[f64]) -> Result<Matrix> {
        Ok(Matrix::from_rows(1, 1, vec![th[0]]))
    }
    fn jac_y(&self, _x: &[f64], _y: &[f64], _tau: f64, _t: f64, th: &[f64]) -> Result<Matrix> {
        Ok(Matrix::from_rows(1, 1, vec![th[1]]))
    }
    fn jac_tau(&self, _x: &[f64], _y: &[f64], _tau: f64, _t: f64, _th: &[f64]) -> Result<Vec<f64>> {
        Ok(vec![0.0])
    }
    fn jac_theta(&self, x: &[f64], y: &[f64], _tau: f64, _t: f64, _th: &[f64]) -> Result<Matrix> {
        Ok(Matrix::from_rows(1, 2, vec![x[0], y[0]]))
    }
}

#[derive(Debug, Clone, Copy, Default)]
pub struct LogisticDelay;

impl DynamicsModel for LogisticDelay {
    fn name(&self) -> &str {
        "logistic"
    }
    fn dim(&self) -> usize {
        1
    }
    fn n_params(&self) -> usize {
        2
    }
    fn eval(&self, x: &[f64], y: &[f64], _tau: f64, _t: f64, th: &[f64]) -> Result<Vec<f64>> {
        Ok(vec![th[0] * x[0] * (1.0 - th[1] * y[0])])
    }
    fn jac_x(&self, _x: &[f64], y: &[f64], _tau: f64, _t: f64, th: &[f64]) -> Result<Matrix> {
        Ok(Matrix::from_rows(1, 1, vec![th[0] * (1.0 - th[1] * y[0])]))
    }
    fn jac_y(&self, x: &[f64], _y: &[f64], _tau: f64, _t: f64, th: &[f64]) -> Result<Matrix> {
        Ok(Matrix::from_rows(1, 1, vec![-th[0] * th[1] * x[0]]))
    }
    fn jac_tau(&self, _x: &[f64], _y: &[f64], _tau: f64, _t: f64, _th: &[f64]) -> Result<Vec<f64>> {
        Ok(vec![0.0])
    }
    fn jac_theta(&self, x: &[f64], y: &[f64], _tau: f64, _t: f64, th: &[f64]) -> Result<Matrix> {
        Ok(Matrix::from_rows(1, 2, vec![x[0] * (1.0 - th[1] * y[0]), -th[0] * x[0] * y[0]]))
    }
}

/// Delayed-oscillator model of sea-surface temperature anomaly.
#[derive(Debug, Clone, Copy, Default)]
pub struct Enso;

impl DynamicsModel for Enso {
    fn name(&self) -> &str {
        "enso"
    }
    fn dim(&self) -> usize {
        1
    }
    fn n_params(&self) -> usize {
        3
    }
    fn eval(&self, x: &[f64], y: &[f64], _tau: f64, _t: f64, th: &[f64]) -> Result<Vec<f64>> {
        let x = x[0];
        Ok(vec![th[0] * x - th[1] * x * x * x - th[2] * y[0]])
    }
    fn jac_x(&self, x: &[f64], _y: &[f64], _tau: f64, _t: f64, th: &[f64]) -> Result<Matrix> {
        Ok(Matrix::from_rows(1, 1, vec![th[0] - 3.0 * th[1] * x[0] * x[0]]))
    }
    fn jac_y(&self, _x: &[f64], _y: &[f64], _tau: f64, _t: f64, th: &[f64]) -> Result<Matrix> {
        Ok(Matrix::from_rows(1, 1, vec![-th[2]]))
    }
    fn jac_tau(&self, _x: &[f64], _y: &[f64], _tau: f64, _t: f64, _th: &[f64]) -> Result<Vec<f64>> {
        Ok(vec![0.0])
    }
    fn jac_theta(&self, x: &[f64], y: &[f64], _tau: f64, _t: f64, _th: &[f64]) -> Result<Matrix> {
        let x = x[0];
        Ok(Matrix::from_rows(1, 3, vec![x, -x * x * x, -y[0]]))
    }
}

/// Blood CO₂ model of Cheyne–Stokes respiration. The Hill exponent `m` is a
/// fixed constant; θ = (p, V₀, α).
#[derive(Debug, Clone, Copy)]
pub struct CheyneStokes {
    pub m: i32,
}

impl Default for CheyneStokes {
    fn default() -> Self {
        Self { m: 8 }
    }
}

impl CheyneStokes {
    /// Returns (yᵐ, α + yᵐ) after checking the denominator.
    fn hill(&self, y: f64, alpha: f64) -> Result<(f64, f64)> {
        let ym = y.powi(self.m);
        let denom = alpha + ym;
        if denom == 0.0 || !denom.is_finite() {
            return Err(Error::SingularDynamics(format!("α + yᵐ = {denom} (y = {y}, α = {alpha})")));
        }
        Ok((ym, denom))
    }
}

impl DynamicsModel for CheyneStokes {
    fn name(&self) -> &str {
        "cheyne"
    }
    fn dim(&self) -> usize {
        1
    }
    fn n_params(&self) -> usize {
        3
    }
    fn eval(&self, x: &[f64], y: &[f64], _tau: f64, _t: f64, th: &[f64]) -> Result<Vec<f64>> {
        let (ym, denom) = self.hill(y[0], th[2])?;
        Ok(vec![th[0] - th[1] * x[0] * ym / denom])
    }
    fn jac_x(&self, _x: &[f64], y: &[f64], _tau: f64, _t: f64, th: &[f64]) -> Result<Matrix> {
        let (ym, denom) = self.hill(y[0], th[2])?;
        Ok(Matrix::from_rows(1, 1, vec![-th[1] * ym / denom]))
    }
    fn jac_y(&self, x: &[f64], y: &[f64], _tau: f64, _t: f64, th: &[f64]) -> Result<Matrix> {
        let (_, denom) = self.hill(y[0], th[2])?;
        let m = self.m as f64;
        let dym = m * y[0].powi(self.m - 1);
        Ok(Matrix::from_rows(1, 1, vec![-th[1] * x[0] * th[2] * dym / (denom * denom)]))
    }
    fn jac_tau(&self, _x: &[f64], _y: &[f64], _tau: f64, _t: f64, _th: &[f64]) -> Result<Vec<f64>> {
        Ok(vec![0.0])
    }
    fn jac_theta(&self, x: &[f64], y: &[f64], _tau: f64, _t: f64, th: &[f64]) -> Result<Matrix> {
        let (ym, denom) = self.hill(y[0], th[2])?;
        let frac = ym / denom;
        Ok(Matrix::from_rows(1, 3, vec![1.0, -x[0] * frac, th[1] * x[0] * ym / (denom * denom)]))
    }
}

/// Coefficients of the HIV model. These are fixed constants, not trainables.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct HivConstants {
    pub k: f64,
    pub m: f64,
    pub delta: f64,
    pub c: f64,
    pub t0: f64,
    pub n_p: f64,
    pub n: f64,
}

impl Default for HivConstants {
    fn default() -> Self {
        Self { k: 0.00343, m: 3.8, delta: 0.05, c: 2.0, t0: 1000.0, n_p: 0.43, n: 48.0 }
    }
}

/// State is (T*, V_I, V_NI): infected T-cells, infectious and non-infectious
/// virions. Only the T* equation sees the delayed state, through V_I(t − τ),
/// and it carries an explicit `exp(−mτ)` factor.
#[derive(Debug, Clone, Copy, Default)]
pub struct Hiv {
    pub constants: HivConstants,
}

impl Hiv {
    pub const T_STAR: usize = 0;
    pub const V_I: usize = 1;
    pub const V_NI: usize = 2;

    fn infection_rate(&self, tau: f64) -> f64 {
        let c = &self.constants;
        c.k * c.t0 * (-c.m * tau).exp()
    }
}

impl DynamicsModel for Hiv {
    fn name(&self) -> &str {
        "hiv"
    }
    fn dim(&self) -> usize {
        3
    }
    fn n_params(&self) -> usize {
        0
    }
    fn eval(&self, x: &[f64], y: &[f64], tau: f64, _t: f64, _th: &[f64]) -> Result<Vec<f64>> {
        let c = &self.constants;
        let burst = c.n * c.delta * x[Self::T_STAR];
        Ok(vec![
            self.infection_rate(tau) * y[Self::V_I] - c.delta * x[Self::T_STAR],
            (1.0 - c.n_p) * burst - c.c * x[Self::V_I],
            c.n_p * burst - c.c * x[Self::V_NI],
        ])
    }
    fn jac_x(&self, _x: &[f64], _y: &[f64], _tau: f64, _t: f64, _th: &[f64]) -> Result<Matrix> {
        let c = &self.constants;
        let nd = c.n * c.delta;
        Ok(Matrix::from_rows(
            3,
            3,
            vec![
                -c.delta,
                0.0,
                0.0, //
                (1.0 - c.n_p) * nd,
                -c.c,
                0.0, //
                c.n_p * nd,
                0.0,
                -c.c,
            ],
        ))
    }
    fn jac_y(&self, _x: &[f64], _y: &[f64], tau: f64, _t: f64, _th: &[f64]) -> Result<Matrix> {
        let mut m = Matrix::zeros(3, 3);
        m.set(Self::T_STAR, Self::V_I, self.infection_rate(tau));
        Ok(m)
    }
    fn jac_tau(&self, _x: &[f64], y: &[f64], tau: f64, _t: f64, _th: &[f64]) -> Result<Vec<f64>> {
        let m = self.constants.m;
        Ok(vec![-m * self.infection_rate(tau) * y[Self::V_I], 0.0, 0.0])
    }
    fn jac_theta(&self, _x: &[f64], _y: &[f64], _tau: f64, _t: f64, _th: &[f64]) -> Result<Matrix> {
        Ok(Matrix::zeros(3, 0))
    }
}

/// `X₀(t) = b`, φ = b.
#[derive(Debug, Clone, Copy)]
pub struct ConstantIc {
    pub dim: usize,
}

impl InitialConditionModel for ConstantIc {
    fn name(&self) -> &str {
        "constant"
    }
    fn dim(&self) -> usize {
        self.dim
    }
    fn n_params(&self) -> usize {
        self.dim
    }
    fn eval(&self, _t: f64, phi: &[f64]) -> Vec<f64> {
        phi.to_vec()
    }
    fn jac_phi(&self, _t: f64, _phi: &[f64]) -> Matrix {
        let mut m = Matrix::zeros(self.dim, self.dim);
        for i in 0..self.dim {
            m.set(i, i, 1.0);
        }
        m
    }
    fn time_derivative(&self, _t: f64, _phi: &[f64]) -> Vec<f64> {
        vec![0.0; self.dim]
    }
}

/// `X₀(t) = a·t + b`, φ = concat(a, b).
#[derive(Debug, Clone, Copy)]
pub struct AffineIc {
    pub dim: usize,
}

impl InitialConditionModel for AffineIc {
    fn name(&self) -> &str {
        "affine"
    }
    fn dim(&self) -> usize {
        self.dim
    }
    fn n_params(&self) -> usize {
        2 * self.dim
    }
    fn eval(&self, t: f64, phi: &[f64]) -> Vec<f64> {
        let (a, b) = phi.split_at(self.dim);
        a.iter().zip(b).map(|(a, b)| a * t + b).collect()
    }
    fn jac_phi(&self, t: f64, _phi: &[f64]) -> Matrix {
        let d = self.dim;
        let mut m = Matrix::zeros(d, 2 * d);
        for i in 0..d {
            m.set(i, i, t);
            m.set(i, d + i, 1.0);
        }
        m
    }
    fn time_derivative(&self, _t: f64, phi: &[f64]) -> Vec<f64> {
        phi[..self.dim].to_vec()
    }
}

/// `X₀(t) = A ⊙ sin(ω t) + b`, φ = concat(A, ω, b).
#[derive(Debug, Clone, Copy)]
pub struct PeriodicIc {
    pub dim: usize,
}

impl InitialConditionModel for PeriodicIc {
    fn name(&self) -> &str {
        "periodic"
    }
    fn dim(&self) -> usize {
        self.dim
    }
    fn n_params(&self) -> usize {
        3 * self.dim
    }
    fn eval(&self, t: f64, phi: &[f64]) -> Vec<f64> {
        let d = self.dim;
        (0..d).map(|i| phi[i] * (phi[d + i] * t).sin() + phi[2 * d + i]).collect()
    }
    fn jac_phi(&self, t: f64, phi: &[f64]) -> Matrix {
        let d = self.dim;
        let mut m = Matrix::zeros(d, 3 * d);
        for i in 0..d {
            let (amp, freq) = (phi[i], phi[d + i]);
            m.set(i, i, (freq * t).sin());
            m.set(i, d + i, amp * t * (freq * t).cos());
            m.set(i, 2 * d + i, 1.0);
        }
        m
    }
    fn time_derivative(&self, t: f64, phi: &[f64]) -> Vec<f64> {
        let d = self.dim;
        (0..d).map(|i| phi[i] * phi[d + i] * (phi[d + i] * t).cos()).collect()
    }
}

/// Look up a dynamics model by its catalog name, using default constants.
pub fn dynamics_by_name(name: &str) -> Result<Box<dyn DynamicsModel>> {
    Ok(match name {
        "exponential" => Box::new(ExponentialDecay),
        "logistic" => Box::new(LogisticDelay),
        "enso" => Box::new(Enso),
        "cheyne" => Box::new(CheyneStokes::default()),
        "hiv" => Box::new(Hiv::default()),
        other => return Err(Error::InvalidValue(format!("unknown model '{other}' (expected one of {MODEL_NAMES:?})"))),
    })
}

/// Look up a history family by name for state dimension `dim`.
pub fn initial_condition_by_name(name: &str, dim: usize) -> Result<Box<dyn InitialConditionModel>> {
    Ok(match name {
        "constant" => Box::new(ConstantIc { dim }),
        "affine" => Box::new(AffineIc { dim }),
        "periodic" => Box::new(PeriodicIc { dim }),
        other => {
            return Err(Error::InvalidValue(format!(
                "unknown initial condition '{other}' (expected one of {IC_NAMES:?})"
            )))
        }
    })
}
