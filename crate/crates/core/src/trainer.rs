//! The training loop: interpolate the data once, then per epoch solve
//! forward, evaluate the grid loss, run the backward pass and take an Adam
//! step on `θ ∥ τ ∥ φ`.

use crate::adjoint::{backward_pass, GradientBundle};
use crate::error::{Error, Result};
use crate::interpolation::CubicSpline;
use crate::loss::{total_loss, LossConfig};
use crate::models::{dynamics_by_name, initial_condition_by_name};
use crate::optimizer::{adam_step, clamp_tau, lr_at, AdamState, LrSchedule, DEFAULT_TAU_FLOOR};
use crate::solver::{solve_forward, SolveGrid};
use crate::types::{Delay, DynamicsModel, InitialConditionModel, StateVec, Trajectory};

/// Natural spline through the nodes of a trajectory.
pub fn trajectory_spline(traj: &Trajectory) -> Result<CubicSpline> {
    CubicSpline::fit_natural(&traj.times(), traj.states())
}

/// Everything that stays fixed while the trainable parameters move.
#[derive(Clone, Copy)]
pub struct Problem<'a> {
    pub f: &'a dyn DynamicsModel,
    pub history: &'a dyn InitialConditionModel,
    pub target: &'a CubicSpline,
    pub loss: &'a LossConfig,
    pub t_final: f64,
    pub n_tau: usize,
}

impl Problem<'_> {
    /// Length of the flat vector `θ ∥ τ ∥ φ`.
    pub fn n_flat(&self) -> usize {
        self.f.n_params() + 1 + self.history.n_params()
    }

    pub fn split<'p>(&self, flat: &'p [f64]) -> Result<(&'p [f64], f64, &'p [f64])> {
        if flat.len() != self.n_flat() {
            return Err(Error::DimensionMismatch { expected: self.n_flat(), got: flat.len() });
        }
        let p = self.f.n_params();
        Ok((&flat[..p], flat[p], &flat[p + 1..]))
    }

    pub fn forward(&self, theta: &[f64], tau: Delay, phi: &[f64]) -> Result<(f64, Trajectory)> {
        let traj = solve_forward(self.f, self.history, theta, tau, phi, self.t_final, self.n_tau)?;
        let loss = total_loss(&traj, self.target, self.loss)?;
        Ok((loss, traj))
    }

    /// Grid loss as a function of the flat parameter vector.
    pub fn loss_flat(&self, flat: &[f64]) -> Result<f64> {
        let (theta, tau, phi) = self.split(flat)?;
        Ok(self.forward(theta, Delay::new(tau)?, phi)?.0)
    }

    pub fn loss_and_gradient(
        &self,
        theta: &[f64],
        tau: Delay,
        phi: &[f64],
    ) -> Result<(f64, GradientBundle, Trajectory)> {
        let (loss, traj) = self.forward(theta, tau, phi)?;
        let grads = self.gradient_from(theta, tau, phi, &traj)?;
        Ok((loss, grads, traj))
    }

    fn gradient_from(&self, theta: &[f64], tau: Delay, phi: &[f64], traj: &Trajectory) -> Result<GradientBundle> {
        let grid = SolveGrid::new(tau, self.n_tau, self.t_final)?;
        let pred = trajectory_spline(traj)?;
        let (_, grads) = backward_pass(self.f, self.history, theta, tau, phi, &pred, self.target, self.loss, &grid)?;
        Ok(grads)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct FitConfig {
    pub model: String,
    pub ic: String,
    pub theta: Vec<f64>,
    pub tau: f64,
    pub phi: Vec<f64>,
    /// Overwrite the constant offset `b` (the trailing `d` entries of φ in
    /// every history family) with the first data point.
    pub offset_from_data: bool,
    pub t_final: f64,
    pub n_tau: usize,
    pub n_epochs: usize,
    pub lr0: f64,
    pub l_min: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub tau_floor: f64,
    pub loss: LossConfig,
}

impl FitConfig {
    /// Defaults for everything except the model and its starting point.
    pub fn new(model: &str, ic: &str, theta: Vec<f64>, tau: f64, phi: Vec<f64>, t_final: f64) -> Self {
        Self {
            model: model.into(),
            ic: ic.into(),
            theta,
            tau,
            phi,
            offset_from_data: false,
            t_final,
            n_tau: 10,
            n_epochs: 500,
            lr0: 0.03,
            l_min: 0.01,
            beta1: 0.9,
            beta2: 0.999,
            tau_floor: DEFAULT_TAU_FLOOR,
            loss: LossConfig::default(),
        }
    }

    fn validate(&self) -> Result<()> {
        if self.n_tau == 0 {
            return Err(Error::InvalidValue("n_tau must be at least 1".into()));
        }
        if !(self.l_min > 0.0) {
            return Err(Error::InvalidValue(format!("l_min must be positive, got {}", self.l_min)));
        }
        if !(self.lr0 > 0.0 && self.lr0.is_finite()) {
            return Err(Error::InvalidValue(format!("learning rate must be positive, got {}", self.lr0)));
        }
        if !(self.tau_floor > 0.0 && self.tau_floor.is_finite()) {
            return Err(Error::InvalidValue(format!("tau floor must be positive, got {}", self.tau_floor)));
        }
        if !(self.t_final > 0.0 && self.t_final.is_finite()) {
            return Err(Error::InvalidValue(format!("final time must be positive, got {}", self.t_final)));
        }
        Delay::new(self.tau)?;
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum StopReason {
    EpochsExhausted,
    LossBelowMin,
    BlowUp,
}

impl StopReason {
    pub fn as_str(self) -> &'static str {
        match self {
            StopReason::EpochsExhausted => "epochs_exhausted",
            StopReason::LossBelowMin => "loss_below_min",
            StopReason::BlowUp => "blow_up",
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct FitResult {
    pub theta: Vec<f64>,
    pub tau: f64,
    pub phi: Vec<f64>,
    /// Loss at the start of each executed epoch.
    pub loss_history: Vec<f64>,
    /// Flat gradient `θ ∥ τ ∥ φ` of each epoch that took a step.
    pub grad_history: Vec<Vec<f64>>,
    pub stop_reason: StopReason,
    /// Loss and prediction at the returned parameters. `None` only when the
    /// initial parameters already blow up.
    pub final_loss: Option<f64>,
    pub trajectory: Option<Trajectory>,
}

fn validate_data(times: &[f64], values: &[StateVec]) -> Result<()> {
    if times.len() < 2 {
        return Err(Error::DegenerateInput(format!("need at least 2 data points, got {}", times.len())));
    }
    if times.len() != values.len() {
        return Err(Error::DimensionMismatch { expected: times.len(), got: values.len() });
    }
    if times[0] != 0.0 {
        return Err(Error::DegenerateInput(format!("data must start at t = 0, got {}", times[0])));
    }
    Ok(())
}

fn is_blow_up(e: &Error) -> bool {
    matches!(e, Error::NonFiniteState { .. } | Error::SingularDynamics(_))
}

/// Fits the catalog model named in `cfg`.
pub fn fit(cfg: &FitConfig, times: &[f64], values: &[StateVec]) -> Result<FitResult> {
    let f = dynamics_by_name(&cfg.model)?;
    let history = initial_condition_by_name(&cfg.ic, f.dim())?;
    fit_with_models(f.as_ref(), history.as_ref(), cfg, times, values)
}

/// As [`fit`], with the model objects supplied by the caller (`cfg.model`
/// and `cfg.ic` are ignored).
pub fn fit_with_models(
    f: &dyn DynamicsModel,
    history: &dyn InitialConditionModel,
    cfg: &FitConfig,
    times: &[f64],
    values: &[StateVec],
) -> Result<FitResult> {
    cfg.validate()?;
    validate_data(times, values)?;
    let target = CubicSpline::fit_natural(times, values)?;
    let problem = Problem { f, history, target: &target, loss: &cfg.loss, t_final: cfg.t_final, n_tau: cfg.n_tau };

    let mut phi = cfg.phi.clone();
    if phi.len() != history.n_params() {
        return Err(Error::DimensionMismatch { expected: history.n_params(), got: phi.len() });
    }
    if cfg.theta.len() != f.n_params() {
        return Err(Error::DimensionMismatch { expected: f.n_params(), got: cfg.theta.len() });
    }
    if cfg.offset_from_data {
        let d = history.dim();
        let q = phi.len();
        phi[q - d..].copy_from_slice(&values[0]);
    }

    let p = f.n_params();
    let mut params: Vec<f64> = cfg.theta.iter().copied().chain([cfg.tau]).chain(phi).collect();
    let mut adam = AdamState::with_betas(params.len(), cfg.beta1, cfg.beta2);
    let schedule = LrSchedule::cosine(cfg.lr0, cfg.n_epochs);
    let mut loss_history = Vec::new();
    let mut grad_history = Vec::new();
    let mut last_good: Option<(Vec<f64>, f64, Trajectory)> = None;
    let mut stop_reason = StopReason::EpochsExhausted;

    let unpack = |flat: &[f64]| (flat[..p].to_vec(), Delay::new(flat[p]), flat[p + 1..].to_vec());

    for epoch in 0..cfg.n_epochs {
        let (theta, tau, phi) = unpack(&params);
        let tau = tau?;
        let (loss, traj) = match problem.forward(&theta, tau, &phi) {
            Ok(v) => v,
            Err(e) if is_blow_up(&e) => {
                stop_reason = StopReason::BlowUp;
                break;
            }
            Err(e) => return Err(e),
        };
        loss_history.push(loss);
        if !loss.is_finite() {
            stop_reason = StopReason::BlowUp;
            break;
        }
        if loss < cfg.l_min {
            last_good = Some((params.clone(), loss, traj));
            stop_reason = StopReason::LossBelowMin;
            break;
        }
        let grads = match problem.gradient_from(&theta, tau, &phi, &traj) {
            Ok(g) => g.flatten(),
            Err(e) if is_blow_up(&e) => {
                last_good = Some((params.clone(), loss, traj));
                stop_reason = StopReason::BlowUp;
                break;
            }
            Err(e) => return Err(e),
        };
        last_good = Some((params.clone(), loss, traj));
        let mut next = adam_step(&mut adam, &params, &grads, lr_at(&schedule, epoch));
        next[p] = clamp_tau(next[p], cfg.tau_floor).value();
        grad_history.push(grads);
        params = next;
    }

    // report the state at the returned parameters
    if stop_reason == StopReason::EpochsExhausted {
        let (theta, tau, phi) = unpack(&params);
        match problem.forward(&theta, tau?, &phi) {
            Ok((loss, traj)) if loss.is_finite() => last_good = Some((params.clone(), loss, traj)),
            Ok(_) => stop_reason = StopReason::BlowUp,
            Err(e) if is_blow_up(&e) => stop_reason = StopReason::BlowUp,
            Err(e) => return Err(e),
        }
    }

    let (final_params, final_loss, trajectory) = match last_good {
        Some((prm, loss, traj)) => (prm, Some(loss), Some(traj)),
        None => (params, None, None),
    };
    Ok(FitResult {
        theta: final_params[..p].to_vec(),
        tau: final_params[p],
        phi: final_params[p + 1..].to_vec(),
        loss_history,
        grad_history,
        stop_reason,
        final_loss,
        trajectory,
    })
}
