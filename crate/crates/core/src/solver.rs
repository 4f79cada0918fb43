//! Fixed-step Heun (explicit trapezoidal RK2) solver for the delay IVP
//!
//! ```text
//! ẋ(t) = F(x(t), x(t − τ), τ, t, θ)   t ∈ (0, T]
//! x(t) = X₀(t, φ)                      t ∈ [−τ, 0]
//! ```
//!
//! The step is tied to the delay, `dt = τ / n_tau`, so `x(t − τ)` at a node
//! is either the history function or the state exactly `n_tau` nodes back.

use crate::error::{Error, Result};
use crate::types::{all_finite, Delay, DynamicsModel, InitialConditionModel, StateVec, Trajectory};

/// Relative slack when deciding whether `T` is already a multiple of `dt`.
const STEP_COUNT_SLACK: f64 = 1e-9;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SolveGrid {
    pub n_tau: usize,
    pub dt: f64,
    pub n_step: usize,
    pub t_final: f64,
}

impl SolveGrid {
    pub fn new(tau: Delay, n_tau: usize, t_final: f64) -> Result<Self> {
        if n_tau == 0 {
            return Err(Error::InvalidValue("n_tau must be at least 1".into()));
        }
        if !(t_final.is_finite() && t_final > 0.0) {
            return Err(Error::InvalidValue(format!("final time must be positive, got {t_final}")));
        }
        let dt = tau.value() / n_tau as f64;
        Ok(Self { n_tau, dt, n_step: step_count(t_final, dt), t_final })
    }

    /// Last node of the solve, `n_step·dt ≥ T`.
    pub fn t_end(&self) -> f64 {
        self.n_step as f64 * self.dt
    }

    pub fn tau(&self) -> f64 {
        self.n_tau as f64 * self.dt
    }

    pub fn time(&self, k: usize) -> f64 {
        k as f64 * self.dt
    }
}

/// `min{n : n·dt ≥ T}`, treating `T/dt` within 1e−9 of an integer as exact.
pub fn step_count(t_final: f64, dt: f64) -> usize {
    let ratio = t_final / dt;
    let nearest = ratio.round();
    let n = if (ratio - nearest).abs() <= STEP_COUNT_SLACK * nearest.max(1.0) { nearest } else { ratio.ceil() };
    (n as usize).max(1)
}

/// `x(t_k − τ)`: the history function before `t = 0`, the stored state
/// `n_tau` nodes back otherwise.
pub fn delayed_state(
    traj_so_far: &[StateVec],
    history: &dyn InitialConditionModel,
    phi: &[f64],
    k: usize,
    grid: &SolveGrid,
) -> Result<StateVec> {
    if k > grid.n_step {
        return Err(Error::IndexOutOfRange { index: k, len: grid.n_step + 1 });
    }
    if k < grid.n_tau {
        let t = (k as f64 - grid.n_tau as f64) * grid.dt;
        StateVec::new(history.eval(t, phi))
    } else {
        let idx = k - grid.n_tau;
        traj_so_far.get(idx).cloned().ok_or(Error::IndexOutOfRange { index: idx, len: traj_so_far.len() })
    }
}

fn check_dims(f: &dyn DynamicsModel, history: &dyn InitialConditionModel, theta: &[f64], phi: &[f64]) -> Result<()> {
    if f.dim() != history.dim() {
        return Err(Error::DimensionMismatch { expected: f.dim(), got: history.dim() });
    }
    if theta.len() != f.n_params() {
        return Err(Error::DimensionMismatch { expected: f.n_params(), got: theta.len() });
    }
    if phi.len() != history.n_params() {
        return Err(Error::DimensionMismatch { expected: history.n_params(), got: phi.len() });
    }
    Ok(())
}

/// Solves the delay IVP on `[0, n_step·dt]` with `dt = τ/n_tau`.
///
/// Returns a trajectory of `n_step + 1` states with `x(0) = X₀(0, φ)`.
/// Fails with `NonFiniteState` as soon as any component blows up.
pub fn solve_forward(
    f: &dyn DynamicsModel,
    history: &dyn InitialConditionModel,
    theta: &[f64],
    tau: Delay,
    phi: &[f64],
    t_final: f64,
    n_tau: usize,
) -> Result<Trajectory> {
    check_dims(f, history, theta, phi)?;
    let grid = SolveGrid::new(tau, n_tau, t_final)?;
    let tau = tau.value();
    let dt = grid.dt;

    let x0 = history.eval(0.0, phi);
    if !all_finite(&x0) {
        return Err(Error::NonFiniteState { step: 0, t: 0.0 });
    }
    let mut states = Vec::with_capacity(grid.n_step + 1);
    states.push(StateVec::new(x0)?);

    let mut predictor = vec![0.0; f.dim()];
    for k in 0..grid.n_step {
        let (t, t_next) = (grid.time(k), grid.time(k + 1));
        let xk = states[k].as_slice();
        let y_now = delayed_state(&states, history, phi, k, &grid)?;
        let y_next = delayed_state(&states, history, phi, k + 1, &grid)?;

        let k1 = f.eval(xk, &y_now, tau, t, theta)?;
        for ((p, x), s) in predictor.iter_mut().zip(xk).zip(&k1) {
            *p = x + dt * s;
        }
        let k2 = f.eval(&predictor, &y_next, tau, t_next, theta)?;
        let next: Vec<f64> = xk.iter().zip(k1.iter().zip(&k2)).map(|(x, (a, b))| x + 0.5 * dt * (a + b)).collect();
        if !all_finite(&next) {
            return Err(Error::NonFiniteState { step: k + 1, t: t_next });
        }
        states.push(StateVec::new(next)?);
    }

    Trajectory::new(0.0, dt, states)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::models::{AffineIc, ConstantIc, ExponentialDecay};
    use crate::types::Matrix;

    struct Zero;
    impl DynamicsModel for Zero {
        fn name(&self) -> &str {
            "zero"
        }
        fn dim(&self) -> usize {
            1
        }
        fn n_params(&self) -> usize {
            0
        }
        fn eval(&self, _: &[f64], _: &[f64], _: f64, _: f64, _: &[f64]) -> Result<Vec<f64>> {
            Ok(vec![0.0])
        }
        fn jac_x(&self, _: &[f64], _: &[f64], _: f64, _: f64, _: &[f64]) -> Result<Matrix> {
            Ok(Matrix::zeros(1, 1))
        }
        fn jac_y(&self, _: &[f64], _: &[f64], _: f64, _: f64, _: &[f64]) -> Result<Matrix> {
            Ok(Matrix::zeros(1, 1))
        }
        fn jac_tau(&self, _: &[f64], _: &[f64], _: f64, _: f64, _: &[f64]) -> Result<Vec<f64>> {
            Ok(vec![0.0])
        }
        fn jac_theta(&self, _: &[f64], _: &[f64], _: f64, _: f64, _: &[f64]) -> Result<Matrix> {
            Ok(Matrix::zeros(1, 0))
        }
    }

    #[test]
    fn grid_contracts() {
        let g = SolveGrid::new(Delay::new(1.0).unwrap(), 10, 10.0).unwrap();
        assert_eq!(g.dt, 0.1);
        assert_eq!(g.n_step, 100);
        let g = SolveGrid::new(Delay::new(2.0).unwrap(), 10, 10.0).unwrap();
        assert_eq!(g.n_step, 50);
        let g = SolveGrid::new(Delay::new(0.3).unwrap(), 2, 1.0).unwrap();
        // dt = 0.15: 6 steps reach 0.9, 7 reach 1.05
        assert_eq!(g.n_step, 7);
        assert!((g.n_step as f64 - 1.0) * g.dt < 1.0 && g.t_end() >= 1.0);
        assert!(SolveGrid::new(Delay::new(1.0).unwrap(), 0, 1.0).is_err());
    }

    #[test]
    fn delayed_lookups() {
        let grid = SolveGrid::new(Delay::new(1.0).unwrap(), 10, 10.0).unwrap();
        let ic = AffineIc { dim: 1 };
        let phi = [1.5, 4.0];
        let states: Vec<StateVec> = (0..30).map(|k| StateVec::new(vec![k as f64]).unwrap()).collect();
        assert_eq!(delayed_state(&states, &ic, &phi, 0, &grid).unwrap()[0], -1.5 + 4.0);
        assert_eq!(delayed_state(&states, &ic, &phi, 10, &grid).unwrap()[0], 0.0);
        assert_eq!(delayed_state(&states, &ic, &phi, 25, &grid).unwrap()[0], 15.0);
        assert!(matches!(delayed_state(&states[..5], &ic, &phi, 25, &grid), Err(Error::IndexOutOfRange { .. })));
    }

    #[test]
    fn zero_dynamics_keep_constant() {
        let tau = Delay::new(0.7).unwrap();
        let traj = solve_forward(&Zero, &ConstantIc { dim: 1 }, &[], tau, &[3.25], 5.0, 7).unwrap();
        assert!(traj.states().iter().all(|s| s[0] == 3.25));
    }

    #[test]
    fn exponential_decay_grid_shape() {
        let tau = Delay::new(1.0).unwrap();
        let traj =
            solve_forward(&ExponentialDecay, &AffineIc { dim: 1 }, &[-2.0, -2.0], tau, &[1.5, 4.0], 10.0, 10).unwrap();
        assert_eq!(traj.dt(), 0.1);
        assert_eq!(traj.len(), 101);
        assert_eq!(traj.state(0).unwrap()[0], 4.0);
    }

    #[test]
    fn blow_up_is_reported() {
        let tau = Delay::new(1.0).unwrap();
        let err = solve_forward(&ExponentialDecay, &ConstantIc { dim: 1 }, &[1000.0, 1000.0], tau, &[1.0], 10.0, 10)
            .unwrap_err();
        assert!(matches!(err, Error::NonFiniteState { .. }));
    }

    #[test]
    fn dimension_mismatch_is_rejected() {
        let tau = Delay::new(1.0).unwrap();
        let err =
            solve_forward(&ExponentialDecay, &AffineIc { dim: 1 }, &[-2.0], tau, &[1.5, 4.0], 10.0, 10).unwrap_err();
        assert!(matches!(err, Error::DimensionMismatch { .. }));
    }
}
