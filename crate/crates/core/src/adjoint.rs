//! Backward adjoint solve and the loss gradients with respect to θ, τ and φ.
//!
//! The adjoint satisfies, backward from `T_end = n_step·dt`,
//!
//! ```text
//! λ̇(t) = ∇ℓ(x(t)) − [∂ₓF(t)]ᵀ λ(t) − 𝟙{t < T_end − τ} [∂_yF(t + τ)]ᵀ λ(t + τ)
//! λ(T_end) = −∇G(x(T_end))
//! ```
//!
//! where `∂_yF(t + τ)` is evaluated at `(x(t + τ), x(t), τ, t + τ, θ)`. The
//! backward grid has the same spacing as the forward one, so `λ(t + τ)` is the
//! value computed `n_tau` steps earlier and every lookup lands on a node.
//!
//! Gradients:
//!
//! ```text
//! ∇_θ L = −∫₀^T [∂_θF(t)]ᵀ λ(t) dt
//! ∂L/∂τ = ∫_{−τ}^{T−τ} ⟨[∂_yF(t + τ)]ᵀ λ(t + τ), ẋ(t)⟩ dt − ∫₀^T ⟨∂_τF(t), λ(t)⟩ dt
//! ∇_φ L = −[∂_φX₀(0)]ᵀ λ(0) − ∫₀^τ [∂_φX₀(t − τ)]ᵀ [∂_yF(t)]ᵀ λ(t) dt
//! ```
//!
//! with `ẋ = ∂ₜX₀` on the history window `[−τ, 0]`. That part of the first
//! τ-integral vanishes for a constant history; for any other history it is
//! the sensitivity of the delayed lookup `X₀(t − τ)` to τ and is needed for
//! the gradient to match the discretised loss.

use crate::error::{Error, Result};
use crate::interpolation::CubicSpline;
use crate::loss::{pointwise_loss, pointwise_loss_grad, terminal_grad, LossConfig};
use crate::solver::SolveGrid;
use crate::types::{all_finite, dot, Delay, DynamicsModel, InitialConditionModel, ParamVec, StateVec};

/// Adjoint values at `T_end − k·dt`, `k = 0..=n_step`, stored in backward
/// order (index 0 is `T_end`).
#[derive(Debug, Clone)]
pub struct AdjointTrajectory {
    dt: f64,
    n_step: usize,
    lambdas: Vec<StateVec>,
}

impl AdjointTrajectory {
    pub fn t_end(&self) -> f64 {
        self.n_step as f64 * self.dt
    }

    pub fn dt(&self) -> f64 {
        self.dt
    }

    pub fn n_step(&self) -> usize {
        self.n_step
    }

    /// Time of backward node `k`.
    pub fn time(&self, k: usize) -> f64 {
        self.t_end() - k as f64 * self.dt
    }

    /// Backward-ordered values.
    pub fn lambdas(&self) -> &[StateVec] {
        &self.lambdas
    }

    /// λ at the forward node `j`, i.e. at time `j·dt`.
    pub fn at_forward(&self, j: usize) -> &[f64] {
        &self.lambdas[self.n_step - j]
    }

    /// λ(0), linearly interpolated between the two backward nodes that
    /// bracket `t = 0`.
    pub fn at_zero(&self) -> Vec<f64> {
        let n = self.n_step;
        if n == 0 {
            return self.lambdas[0].to_vec();
        }
        let (upper, lower) = (&self.lambdas[n - 1], &self.lambdas[n]);
        let s = self.time(n - 1);
        let alpha = (self.dt - s) / self.dt;
        upper.iter().zip(lower.iter()).map(|(u, l)| alpha * u + (1.0 - alpha) * l).collect()
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct GradientBundle {
    pub grad_theta: ParamVec,
    pub grad_tau: f64,
    pub grad_phi: ParamVec,
}

impl GradientBundle {
    /// `θ ∥ τ ∥ φ`
    pub fn flatten(&self) -> Vec<f64> {
        let mut out = Vec::with_capacity(self.grad_theta.len() + 1 + self.grad_phi.len());
        out.extend_from_slice(&self.grad_theta);
        out.push(self.grad_tau);
        out.extend_from_slice(&self.grad_phi);
        out
    }
}

/// Trapezoid weights for `∫₀^upper`, given integrand samples at
/// `upper − k·dt`, `k = 0..n_nodes`, the last node being `≤ 0`. The
/// subinterval touching `t = 0` has width `upper − (N − 1)·dt` and its left
/// value is the linear interpolation of the two nodes bracketing zero.
pub fn modified_trapezoid_weights(n_nodes: usize, upper: f64, dt: f64) -> Vec<f64> {
    let mut w = vec![0.0; n_nodes];
    if n_nodes < 2 || upper <= 0.0 {
        return w;
    }
    let n = n_nodes - 1;
    for k in 0..n - 1 {
        w[k] += 0.5 * dt;
        w[k + 1] += 0.5 * dt;
    }
    let s = upper - (n - 1) as f64 * dt;
    let alpha = (dt - s) / dt;
    w[n - 1] += 0.5 * s * (1.0 + alpha);
    w[n] += 0.5 * s * (1.0 - alpha);
    w
}

/// Quadrature of `∫₀^upper` from samples at `upper − k·dt` (see
/// [`modified_trapezoid_weights`]).
pub fn quad_modified_trapezoid(values: &[f64], upper: f64, dt: f64) -> f64 {
    let w = modified_trapezoid_weights(values.len(), upper, dt);
    dot(&w, values)
}

/// Predicted current and delayed states at every forward node of the grid.
struct NodeStates {
    x: Vec<Vec<f64>>,
    y: Vec<Vec<f64>>,
}

impl NodeStates {
    fn new(history: &dyn InitialConditionModel, phi: &[f64], pred: &CubicSpline, grid: &SolveGrid) -> Self {
        let n = grid.n_step;
        let tau = grid.tau();
        let x: Vec<Vec<f64>> = (0..=n).map(|j| pred.eval(grid.time(j)).into_inner()).collect();
        let y = (0..=n)
            .map(|j| {
                if j < grid.n_tau {
                    history.eval(grid.time(j) - tau, phi)
                } else {
                    pred.eval(grid.time(j - grid.n_tau)).into_inner()
                }
            })
            .collect();
        Self { x, y }
    }
}

/// Integrates the adjoint equation backward from `T_end` to `0` with Heun
/// steps of size `dt`.
#[allow(clippy::too_many_arguments)]
pub fn solve_adjoint(
    f: &dyn DynamicsModel,
    history: &dyn InitialConditionModel,
    theta: &[f64],
    tau: Delay,
    phi: &[f64],
    pred: &CubicSpline,
    target: &CubicSpline,
    cfg: &LossConfig,
    grid: &SolveGrid,
) -> Result<AdjointTrajectory> {
    let nodes = NodeStates::new(history, phi, pred, grid);
    solve_adjoint_on_nodes(f, theta, tau, &nodes, target, cfg, grid)
}

fn solve_adjoint_on_nodes(
    f: &dyn DynamicsModel,
    theta: &[f64],
    tau: Delay,
    nodes: &NodeStates,
    target: &CubicSpline,
    cfg: &LossConfig,
    grid: &SolveGrid,
) -> Result<AdjointTrajectory> {
    let n = grid.n_step;
    let n_tau = grid.n_tau;
    let dt = grid.dt;
    let tau = tau.value();
    let d = f.dim();

    // forward-indexed; filled from j = n downwards
    let mut lam: Vec<Vec<f64>> = vec![Vec::new(); n + 1];
    let mut x_ref = vec![0.0; d];

    target.eval_into(grid.time(n), &mut x_ref);
    let x_end = StateVec::new(nodes.x[n].clone())?;
    lam[n] = terminal_grad(&x_end, &x_ref, cfg)?.into_iter().map(|g| -g).collect();

    let mut rhs = |j: usize, lam_j: &[f64], lam: &[Vec<f64>]| -> Result<Vec<f64>> {
        let t = grid.time(j);
        target.eval_into(t, &mut x_ref);
        let mut out = pointwise_loss_grad(&nodes.x[j], &x_ref, &cfg.running)?;
        let jx = f.jac_x(&nodes.x[j], &nodes.y[j], tau, t, theta)?;
        for (o, v) in out.iter_mut().zip(jx.tr_mul_vec(lam_j)) {
            *o -= v;
        }
        if j + n_tau < n {
            let ja = j + n_tau;
            let jy = f.jac_y(&nodes.x[ja], &nodes.x[j], tau, grid.time(ja), theta)?;
            for (o, v) in out.iter_mut().zip(jy.tr_mul_vec(&lam[ja])) {
                *o -= v;
            }
        }
        Ok(out)
    };

    for j in (1..=n).rev() {
        let k1 = rhs(j, &lam[j], &lam)?;
        let predictor: Vec<f64> = lam[j].iter().zip(&k1).map(|(l, s)| l - dt * s).collect();
        let k2 = rhs(j - 1, &predictor, &lam)?;
        let next: Vec<f64> = lam[j].iter().zip(k1.iter().zip(&k2)).map(|(l, (a, b))| l - 0.5 * dt * (a + b)).collect();
        if !all_finite(&next) {
            return Err(Error::NonFiniteState { step: n - j + 1, t: grid.time(j - 1) });
        }
        lam[j - 1] = next;
    }

    let lambdas = lam.into_iter().rev().map(StateVec::new).collect::<Result<Vec<_>>>()?;
    Ok(AdjointTrajectory { dt, n_step: n, lambdas })
}

fn check_lambda(lambda: &AdjointTrajectory, grid: &SolveGrid) -> Result<()> {
    if lambda.n_step != grid.n_step {
        return Err(Error::DimensionMismatch { expected: grid.n_step + 1, got: lambda.n_step + 1 });
    }
    Ok(())
}

/// Accumulates `Σ_j w_j·v_j` over forward nodes `j = lo..=hi` where the
/// weights come from [`modified_trapezoid_weights`] on `[0, hi·dt]`.
fn integrate_nodes<F>(hi: usize, dt: f64, len: usize, mut integrand: F) -> Result<Vec<f64>>
where
    F: FnMut(usize) -> Result<Vec<f64>>,
{
    let weights = modified_trapezoid_weights(hi + 1, hi as f64 * dt, dt);
    let mut acc = vec![0.0; len];
    // backward node k is forward node hi − k
    for (k, w) in weights.iter().enumerate() {
        let v = integrand(hi - k)?;
        for (a, v) in acc.iter_mut().zip(v) {
            *a += w * v;
        }
    }
    Ok(acc)
}

#[allow(clippy::too_many_arguments)]
fn grad_theta_on_nodes(
    f: &dyn DynamicsModel,
    theta: &[f64],
    tau: f64,
    nodes: &NodeStates,
    lambda: &AdjointTrajectory,
    grid: &SolveGrid,
) -> Result<ParamVec> {
    let integral = integrate_nodes(grid.n_step, grid.dt, f.n_params(), |j| {
        let t = grid.time(j);
        let jth = f.jac_theta(&nodes.x[j], &nodes.y[j], tau, t, theta)?;
        Ok(jth.tr_mul_vec(lambda.at_forward(j)))
    })?;
    ParamVec::new(integral.into_iter().map(|v| -v).collect())
}

#[allow(clippy::too_many_arguments)]
fn grad_tau_on_nodes(
    f: &dyn DynamicsModel,
    history: &dyn InitialConditionModel,
    theta: &[f64],
    phi: &[f64],
    nodes: &NodeStates,
    lambda: &AdjointTrajectory,
    grid: &SolveGrid,
) -> Result<f64> {
    let (n, n_tau) = (grid.n_step, grid.n_tau);
    let tau = grid.tau();

    // ∫₀^{T−τ} ⟨[∂_yF(t+τ)]ᵀλ(t+τ), ẋ(t)⟩ with ẋ = F on the solved trajectory
    let solution_part = if n >= n_tau {
        integrate_nodes(n - n_tau, grid.dt, 1, |j| {
            let ja = j + n_tau;
            let jy = f.jac_y(&nodes.x[ja], &nodes.x[j], tau, grid.time(ja), theta)?;
            let xdot = f.eval(&nodes.x[j], &nodes.y[j], tau, grid.time(j), theta)?;
            Ok(vec![dot(&jy.tr_mul_vec(lambda.at_forward(ja)), &xdot)])
        })?[0]
    } else {
        0.0
    };

    // the same integrand over the history window, substituted s = t + τ ∈ [0, τ]
    let history_part = integrate_nodes(n_tau.min(n), grid.dt, 1, |j| {
        let s = grid.time(j);
        let jy = f.jac_y(&nodes.x[j], &nodes.y[j], tau, s, theta)?;
        let xdot = history.time_derivative(s - tau, phi);
        Ok(vec![dot(&jy.tr_mul_vec(lambda.at_forward(j)), &xdot)])
    })?[0];

    let explicit = integrate_nodes(n, grid.dt, 1, |j| {
        let jt = f.jac_tau(&nodes.x[j], &nodes.y[j], tau, grid.time(j), theta)?;
        Ok(vec![dot(&jt, lambda.at_forward(j))])
    })?[0];

    Ok(solution_part + history_part - explicit)
}

/// Derivative of the grid loss with respect to τ that comes only from its
/// last node moving, `T_end = n_step·τ/n_tau`, at fixed `n_step`:
/// `(T_end/τ)·[ℓ(T_end) + d/dt G(x(t) − x̃(t))|T_end]`.
///
/// The trainer leaves it out: summed over a training run it only pushes τ
/// towards shorter grids and carries no information about the data.
/// Finite differences of the grid loss do see it, so the gradient checker
/// adds it before comparing.
#[allow(clippy::too_many_arguments)]
pub fn endpoint_derivative(
    f: &dyn DynamicsModel,
    history: &dyn InitialConditionModel,
    theta: &[f64],
    phi: &[f64],
    pred: &CubicSpline,
    target: &CubicSpline,
    cfg: &LossConfig,
    grid: &SolveGrid,
) -> Result<f64> {
    let n = grid.n_step;
    let t_end = grid.t_end();
    let tau = grid.tau();
    let x = pred.eval(t_end);
    let x_ref = target.eval(t_end);
    let mut rate = pointwise_loss(&x, &x_ref, &cfg.running)?;
    if cfg.terminal.is_some() {
        let y = if n < grid.n_tau {
            history.eval(t_end - tau, phi)
        } else {
            pred.eval(grid.time(n - grid.n_tau)).into_inner()
        };
        let xdot = f.eval(&x, &y, tau, t_end, theta)?;
        let ref_dot = target.derivative(t_end);
        let g = terminal_grad(&x, &x_ref, cfg)?;
        rate += g.iter().zip(xdot.iter().zip(&ref_dot)).map(|(g, (a, b))| g * (a - b)).sum::<f64>();
    }
    Ok(t_end / tau * rate)
}

fn grad_phi_on_nodes(
    f: &dyn DynamicsModel,
    history: &dyn InitialConditionModel,
    theta: &[f64],
    phi: &[f64],
    nodes: &NodeStates,
    lambda: &AdjointTrajectory,
    grid: &SolveGrid,
) -> Result<ParamVec> {
    let (n, n_tau) = (grid.n_step, grid.n_tau);
    let tau = grid.tau();
    let q = history.n_params();

    let boundary = history.jac_phi(0.0, phi).tr_mul_vec(&lambda.at_zero());
    let integral = integrate_nodes(n_tau.min(n), grid.dt, q, |j| {
        let t = grid.time(j);
        let past = history.eval(t - tau, phi);
        let jy = f.jac_y(&nodes.x[j], &past, tau, t, theta)?;
        let inner = jy.tr_mul_vec(lambda.at_forward(j));
        Ok(history.jac_phi(t - tau, phi).tr_mul_vec(&inner))
    })?;
    ParamVec::new(boundary.iter().zip(&integral).map(|(b, i)| -b - i).collect())
}

#[allow(clippy::too_many_arguments)]
pub fn grad_theta(
    f: &dyn DynamicsModel,
    history: &dyn InitialConditionModel,
    theta: &[f64],
    tau: Delay,
    phi: &[f64],
    pred: &CubicSpline,
    lambda: &AdjointTrajectory,
    grid: &SolveGrid,
) -> Result<ParamVec> {
    check_lambda(lambda, grid)?;
    let nodes = NodeStates::new(history, phi, pred, grid);
    grad_theta_on_nodes(f, theta, tau.value(), &nodes, lambda, grid)
}

#[allow(clippy::too_many_arguments)]
pub fn grad_tau(
    f: &dyn DynamicsModel,
    history: &dyn InitialConditionModel,
    theta: &[f64],
    phi: &[f64],
    pred: &CubicSpline,
    lambda: &AdjointTrajectory,
    grid: &SolveGrid,
) -> Result<f64> {
    check_lambda(lambda, grid)?;
    let nodes = NodeStates::new(history, phi, pred, grid);
    grad_tau_on_nodes(f, history, theta, phi, &nodes, lambda, grid)
}

pub fn grad_phi(
    f: &dyn DynamicsModel,
    history: &dyn InitialConditionModel,
    theta: &[f64],
    phi: &[f64],
    pred: &CubicSpline,
    lambda: &AdjointTrajectory,
    grid: &SolveGrid,
) -> Result<ParamVec> {
    check_lambda(lambda, grid)?;
    let nodes = NodeStates::new(history, phi, pred, grid);
    grad_phi_on_nodes(f, history, theta, phi, &nodes, lambda, grid)
}

/// One full backward pass: adjoint solve followed by all three gradients,
/// sharing the node evaluations of the predicted trajectory.
#[allow(clippy::too_many_arguments)]
pub fn backward_pass(
    f: &dyn DynamicsModel,
    history: &dyn InitialConditionModel,
    theta: &[f64],
    tau: Delay,
    phi: &[f64],
    pred: &CubicSpline,
    target: &CubicSpline,
    cfg: &LossConfig,
    grid: &SolveGrid,
) -> Result<(AdjointTrajectory, GradientBundle)> {
    let nodes = NodeStates::new(history, phi, pred, grid);
    let lambda = solve_adjoint_on_nodes(f, theta, tau, &nodes, target, cfg, grid)?;
    let grad_theta = grad_theta_on_nodes(f, theta, tau.value(), &nodes, &lambda, grid)?;
    let grad_tau = grad_tau_on_nodes(f, history, theta, phi, &nodes, &lambda, grid)?;
    let grad_phi = grad_phi_on_nodes(f, history, theta, phi, &nodes, &lambda, grid)?;
    if !grad_tau.is_finite() {
        return Err(Error::NonFiniteState { step: grid.n_step, t: 0.0 });
    }
    Ok((lambda, GradientBundle { grad_theta, grad_tau, grad_phi }))
}
