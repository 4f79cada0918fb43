//! Central finite differences of the grid loss, used to check the adjoint
//! gradients.

use std::fmt;

use crate::adjoint::{endpoint_derivative, GradientBundle};
use crate::error::Result;
use crate::solver::{step_count, SolveGrid};
use crate::trainer::{trajectory_spline, Problem};
use crate::types::{Delay, DynamicsModel, Matrix};

pub const DEFAULT_H_REL: f64 = 1e-4;
pub const ABS_FLOOR: f64 = 1e-4;
// below h0/1024 the step-count slack starts to hide genuine transitions
const MAX_HALVINGS: u32 = 10;

/// Central differences with `hᵢ = h_rel·max(1, |pᵢ|)`.
pub fn fd_gradient<F>(mut loss: F, params: &[f64], h_rel: f64) -> Result<Vec<f64>>
where
    F: FnMut(&[f64]) -> Result<f64>,
{
    let mut p = params.to_vec();
    let mut out = Vec::with_capacity(params.len());
    for i in 0..params.len() {
        let h = h_rel * params[i].abs().max(1.0);
        p[i] = params[i] + h;
        let up = loss(&p)?;
        p[i] = params[i] - h;
        let down = loss(&p)?;
        p[i] = params[i];
        out.push((up - down) / (2.0 * h));
    }
    Ok(out)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum StepKind {
    Central,
    Forward,
    Backward,
}

/// The difference used for τ.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TauStep {
    pub h: f64,
    pub kind: StepKind,
}

/// Largest `h ≤ h0` (by halving) such that the step count of the solve does
/// not change between `τ − h`, `τ` and `τ + h`. When `τ` sits exactly on a
/// step-count transition no central step exists and a one-sided step on the
/// side that keeps the count is returned.
pub fn tau_step(tau: f64, h0: f64, n_tau: usize, t_final: f64) -> TauStep {
    let n_of = |t: f64| step_count(t_final, t / n_tau as f64);
    let n0 = n_of(tau);
    let up_ok = |h: f64| n_of(tau + h) == n0;
    let down_ok = |h: f64| tau - h > 0.0 && n_of(tau - h) == n0;
    let mut h = h0;
    for _ in 0..=MAX_HALVINGS {
        if up_ok(h) && down_ok(h) {
            return TauStep { h, kind: StepKind::Central };
        }
        h *= 0.5;
    }
    let mut h = h0;
    for _ in 0..=MAX_HALVINGS {
        if up_ok(h) {
            return TauStep { h, kind: StepKind::Forward };
        }
        if down_ok(h) {
            return TauStep { h, kind: StepKind::Backward };
        }
        h *= 0.5;
    }
    TauStep { h, kind: StepKind::Forward }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ComponentCheck {
    pub label: String,
    pub adjoint: f64,
    pub fd: f64,
    pub rel_err: f64,
    pub tol: f64,
    pub pass: bool,
}

#[derive(Debug, Clone, PartialEq)]
pub struct GradcheckReport {
    pub components: Vec<ComponentCheck>,
    pub tau_step: Option<TauStep>,
}

impl GradcheckReport {
    pub fn pass(&self) -> bool {
        self.components.iter().all(|c| c.pass)
    }

    pub fn max_rel_err(&self) -> f64 {
        self.components.iter().map(|c| c.rel_err).fold(0.0, f64::max)
    }

    pub fn failures(&self) -> impl Iterator<Item = &ComponentCheck> {
        self.components.iter().filter(|c| !c.pass)
    }
}

impl fmt::Display for GradcheckReport {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        writeln!(f, "{:<10} {:>16} {:>16} {:>10} {:>8}  status", "param", "adjoint", "fd", "rel_err", "tol")?;
        for c in &self.components {
            writeln!(
                f,
                "{:<10} {:>16.8e} {:>16.8e} {:>10.2e} {:>8.0e}  {}",
                c.label,
                c.adjoint,
                c.fd,
                c.rel_err,
                c.tol,
                if c.pass { "ok" } else { "FAIL" }
            )?;
        }
        if let Some(step) = self.tau_step {
            if step.kind != StepKind::Central {
                writeln!(f, "note: tau used a {:?} difference with h = {:.3e}", step.kind, step.h)?;
            }
        }
        write!(f, "max rel err {:.3e}: {}", self.max_rel_err(), if self.pass() { "PASS" } else { "FAIL" })
    }
}

/// `|a − b| / max(|a|, |b|, floor)`
pub fn relative_error(a: f64, b: f64) -> f64 {
    (a - b).abs() / a.abs().max(b.abs()).max(ABS_FLOOR)
}

/// Per-component comparison in the `θ ∥ τ ∥ φ` layout.
pub fn compare(adjoint: &GradientBundle, fd: &[f64], tol_theta_phi: f64, tol_tau: f64) -> GradcheckReport {
    let p = adjoint.grad_theta.len();
    let flat = adjoint.flatten();
    assert_eq!(flat.len(), fd.len(), "gradient layouts differ");
    let components = flat
        .iter()
        .zip(fd)
        .enumerate()
        .map(|(i, (&a, &b))| {
            let (label, tol) = if i < p {
                (format!("theta[{i}]"), tol_theta_phi)
            } else if i == p {
                ("tau".to_string(), tol_tau)
            } else {
                (format!("phi[{}]", i - p - 1), tol_theta_phi)
            };
            let rel_err = relative_error(a, b);
            ComponentCheck { label, adjoint: a, fd: b, rel_err, tol, pass: rel_err <= tol }
        })
        .collect();
    GradcheckReport { components, tau_step: None }
}

/// Finite differences of the grid loss at `(θ, τ, φ)`, with the τ step chosen
/// by [`tau_step`].
pub fn problem_fd_gradient(
    problem: &Problem<'_>,
    theta: &[f64],
    tau: f64,
    phi: &[f64],
    h_rel: f64,
) -> Result<(Vec<f64>, TauStep)> {
    let p = theta.len();
    let flat: Vec<f64> = theta.iter().copied().chain([tau]).chain(phi.iter().copied()).collect();
    let mut fd = fd_gradient(|x| problem.loss_flat(x), &flat, h_rel)?;

    let step = tau_step(tau, h_rel * tau.abs().max(1.0), problem.n_tau, problem.t_final);
    let at = |t: f64| {
        let mut x = flat.clone();
        x[p] = t;
        problem.loss_flat(&x)
    };
    fd[p] = match step.kind {
        StepKind::Central => (at(tau + step.h)? - at(tau - step.h)?) / (2.0 * step.h),
        StepKind::Forward => (at(tau + step.h)? - at(tau)?) / step.h,
        StepKind::Backward => (at(tau)? - at(tau - step.h)?) / step.h,
    };
    Ok((fd, step))
}

/// Full check of the adjoint gradients of `problem` at `(θ, τ, φ)`.
pub fn check_problem(
    problem: &Problem<'_>,
    theta: &[f64],
    tau: f64,
    phi: &[f64],
    h_rel: f64,
    tol_theta_phi: f64,
    tol_tau: f64,
) -> Result<GradcheckReport> {
    let delay = Delay::new(tau)?;
    let (_, mut grads, traj) = problem.loss_and_gradient(theta, delay, phi)?;
    // finite differences see the grid's last node move with τ
    let grid = SolveGrid::new(delay, problem.n_tau, problem.t_final)?;
    let pred = trajectory_spline(&traj)?;
    grads.grad_tau +=
        endpoint_derivative(problem.f, problem.history, theta, phi, &pred, problem.target, problem.loss, &grid)?;
    let (fd, step) = problem_fd_gradient(problem, theta, tau, phi, h_rel)?;
    let mut report = compare(&grads, &fd, tol_theta_phi, tol_tau);
    report.tau_step = Some(step);
    Ok(report)
}

/// Wraps a model and scales its `∂_θF` by `factor`, so that a gradient
/// check against it must fail for any `factor ≠ 1`.
pub struct CorruptedThetaJacobian<'a> {
    pub inner: &'a dyn DynamicsModel,
    pub factor: f64,
}

impl DynamicsModel for CorruptedThetaJacobian<'_> {
    fn name(&self) -> &str {
        self.inner.name()
    }
    fn dim(&self) -> usize {
        self.inner.dim()
    }
    fn n_params(&self) -> usize {
        self.inner.n_params()
    }
    fn eval(&self, x: &[f64], y: &[f64], tau: f64, t: f64, theta: &[f64]) -> Result<Vec<f64>> {
        self.inner.eval(x, y, tau, t, theta)
    }
    fn jac_x(&self, x: &[f64], y: &[f64], tau: f64, t: f64, theta: &[f64]) -> Result<Matrix> {
        self.inner.jac_x(x, y, tau, t, theta)
    }
    fn jac_y(&self, x: &[f64], y: &[f64], tau: f64, t: f64, theta: &[f64]) -> Result<Matrix> {
        self.inner.jac_y(x, y, tau, t, theta)
    }
    fn jac_tau(&self, x: &[f64], y: &[f64], tau: f64, t: f64, theta: &[f64]) -> Result<Vec<f64>> {
        self.inner.jac_tau(x, y, tau, t, theta)
    }
    fn jac_theta(&self, x: &[f64], y: &[f64], tau: f64, t: f64, theta: &[f64]) -> Result<Matrix> {
        let m = self.inner.jac_theta(x, y, tau, t, theta)?;
        let data = m.data().iter().map(|v| v * self.factor).collect();
        Ok(Matrix::from_rows(m.rows(), m.cols(), data))
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::types::ParamVec;

    #[test]
    fn quadratic_is_near_exact() {
        let g = fd_gradient(|p| Ok(p.iter().map(|x| x * x).sum()), &[1.0, 2.0], DEFAULT_H_REL).unwrap();
        assert!((g[0] - 2.0).abs() < 1e-8 && (g[1] - 4.0).abs() < 1e-8);
    }

    #[test]
    fn constant_gives_zero() {
        let g = fd_gradient(|_| Ok(3.5), &[0.3, -7.0, 100.0], DEFAULT_H_REL).unwrap();
        assert!(g.iter().all(|v| v.abs() < 1e-10));
    }

    fn bundle(theta: Vec<f64>, tau: f64, phi: Vec<f64>) -> GradientBundle {
        GradientBundle {
            grad_theta: ParamVec::new(theta).unwrap(),
            grad_tau: tau,
            grad_phi: ParamVec::new(phi).unwrap(),
        }
    }

    #[test]
    fn compare_identical_and_flagged() {
        let b = bundle(vec![1.0, -2.0], 0.5, vec![3.0]);
        let r = compare(&b, &[1.0, -2.0, 0.5, 3.0], 1e-2, 5e-2);
        assert!(r.pass());
        assert_eq!(r.max_rel_err(), 0.0);

        let r = compare(&b, &[1.1, -2.0, 0.5, 3.0], 1e-2, 5e-2);
        let bad: Vec<_> = r.failures().map(|c| c.label.as_str()).collect();
        assert_eq!(bad, vec!["theta[0]"]);
        assert!(r.to_string().contains("FAIL"));
    }

    #[test]
    fn compare_uses_absolute_floor() {
        let b = bundle(vec![1e-7], 0.0, vec![]);
        assert!(compare(&b, &[-1e-7, 5e-7], 1e-2, 5e-2).pass());
    }

    #[test]
    fn tau_step_avoids_step_count_changes() {
        // τ = 1.0, n_tau = 10, T = 10: 100 steps; any τ − h needs 101
        let s = tau_step(1.0, 1e-4, 10, 10.0);
        assert_eq!(s.kind, StepKind::Forward);
        assert_eq!(step_count(10.0, (1.0 + s.h) / 10.0), 100);

        // T = 9.95 sits mid-step at τ = 1, so the full central step is kept
        let s = tau_step(1.0, 1e-4, 10, 9.95);
        assert_eq!(s, TauStep { h: 1e-4, kind: StepKind::Central });

        // just below a transition: the step shrinks until both sides agree
        let tau = 1.0 + 2e-5;
        let s = tau_step(tau, 1e-3, 10, 10.0);
        assert_eq!(s.kind, StepKind::Central);
        assert!(s.h < 1e-3);
        let n0 = step_count(10.0, tau / 10.0);
        assert_eq!(step_count(10.0, (tau + s.h) / 10.0), n0);
        assert_eq!(step_count(10.0, (tau - s.h) / 10.0), n0);
    }
}
