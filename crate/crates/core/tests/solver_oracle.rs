//! Forward solver against an independently coded method-of-steps RK4.

use ddeid::models::{AffineIc, ExponentialDecay};
use ddeid::solver::solve_forward;
use ddeid::{Delay, InitialConditionModel};

const THETA: [f64; 2] = [-2.0, -2.0];
const PHI: [f64; 2] = [1.5, 4.0];

/// RK4 for `x' = θ₀x + θ₁x(t − 1)`, history `1.5t + 4`, step `h` with
/// `1/h` an integer. Delayed values at half steps come from the cubic
/// Hermite interpolant of the stored solution and its slope.
fn reference(h: f64, t_final: f64) -> Vec<f64> {
    let per_delay = (1.0 / h).round() as usize;
    let n = (t_final / h).round() as usize;
    let history = |t: f64| PHI[0] * t + PHI[1];
    let rhs = |x: f64, y: f64| THETA[0] * x + THETA[1] * y;
    let mut x = vec![history(0.0)];
    let mut slope: Vec<f64> = Vec::new();
    for k in 0..n {
        // delayed value at (k + s)·h − 1
        let delayed = |x: &[f64], slope: &[f64], s: f64| -> f64 {
            if k < per_delay {
                return history((k as f64 + s) * h - 1.0);
            }
            let j = k - per_delay;
            match s {
                0.0 => x[j],
                1.0 => x[j + 1],
                _ => 0.5 * (x[j] + x[j + 1]) + h / 8.0 * (slope[j] - slope[j + 1]),
            }
        };
        let xk = x[k];
        let y0 = delayed(&x, &slope, 0.0);
        slope.push(rhs(xk, y0));
        let ym = delayed(&x, &slope, 0.5);
        let y1 = delayed(&x, &slope, 1.0);
        let k1 = slope[k];
        let k2 = rhs(xk + 0.5 * h * k1, ym);
        let k3 = rhs(xk + 0.5 * h * k2, ym);
        let k4 = rhs(xk + h * k3, y1);
        x.push(xk + h / 6.0 * (k1 + 2.0 * k2 + 2.0 * k3 + k4));
    }
    x
}

fn heun(n_tau: usize) -> Vec<f64> {
    let traj =
        solve_forward(&ExponentialDecay, &AffineIc { dim: 1 }, &THETA, Delay::new(1.0).unwrap(), &PHI, 10.0, n_tau)
            .unwrap();
    traj.states().iter().map(|s| s[0]).collect()
}

#[test]
fn heun_matches_rk4_reference() {
    let fine = reference(0.001, 10.0);
    let coarse = heun(10);
    assert_eq!(coarse.len(), 101);
    let scale = fine.iter().fold(0.0f64, |m, v| m.max(v.abs()));
    let err = coarse.iter().enumerate().map(|(k, x)| (x - fine[100 * k]).abs()).fold(0.0, f64::max);
    assert!(err / scale <= 1e-2, "relative error {}", err / scale);
}

#[test]
fn heun_is_second_order_at_t5() {
    let fine = reference(0.001, 10.0);
    let e10 = (heun(10)[50] - fine[5000]).abs();
    let e20 = (heun(20)[100] - fine[5000]).abs();
    let ratio = e10 / e20;
    assert!((3.3..=4.8).contains(&ratio), "ratio {ratio}");
}

#[test]
fn reference_is_converged() {
    let a = reference(0.001, 10.0);
    let b = reference(0.0005, 10.0);
    let diff = (0..a.len()).map(|k| (a[k] - b[2 * k]).abs()).fold(0.0, f64::max);
    assert!(diff < 1e-8, "{diff}");
}

#[test]
fn starts_on_history() {
    let x = heun(10);
    assert_eq!(x[0], AffineIc { dim: 1 }.eval(0.0, &PHI)[0]);
}
