//! Natural cubic splines over a shared knot vector, fit component-wise.

use crate::error::{Error, Result};
use crate::types::StateVec;

/// Piecewise cubic interpolant of vector-valued data. Outside the knot range
/// the boundary interval's cubic is continued.
#[derive(Debug, Clone)]
pub struct CubicSpline {
    knots: Vec<f64>,
    dim: usize,
    // knot-major: values[k * dim + c]
    values: Vec<f64>,
    second: Vec<f64>,
}

impl CubicSpline {
    /// Natural boundary conditions (zero second derivative at both ends).
    /// Two knots give the connecting straight line.
    pub fn fit_natural(times: &[f64], values: &[StateVec]) -> Result<Self> {
        let n = times.len();
        if n < 2 {
            return Err(Error::DegenerateInput(format!("spline needs at least 2 knots, got {n}")));
        }
        if values.len() != n {
            return Err(Error::DimensionMismatch { expected: n, got: values.len() });
        }
        if let Some(w) = times.windows(2).position(|w| !(w[1] > w[0])) {
            return Err(Error::DegenerateInput(format!("knots not strictly increasing at index {}", w + 1)));
        }
        let dim = values[0].len();
        if let Some(bad) = values.iter().find(|v| v.len() != dim) {
            return Err(Error::DimensionMismatch { expected: dim, got: bad.len() });
        }

        let flat: Vec<f64> = values.iter().flat_map(|v| v.iter().copied()).collect();
        let mut second = vec![0.0; n * dim];
        if n > 2 {
            let h: Vec<f64> = times.windows(2).map(|w| w[1] - w[0]).collect();
            let m = n - 2;
            let mut rhs = vec![0.0; m];
            let mut sol = vec![0.0; m];
            for c in 0..dim {
                let y = |k: usize| flat[k * dim + c];
                for i in 1..n - 1 {
                    rhs[i - 1] = 6.0 * ((y(i + 1) - y(i)) / h[i] - (y(i) - y(i - 1)) / h[i - 1]);
                }
                solve_interior_system(&h, &rhs, &mut sol);
                for i in 1..n - 1 {
                    second[i * dim + c] = sol[i - 1];
                }
            }
        }

        Ok(Self { knots: times.to_vec(), dim, values: flat, second })
    }

    pub fn knots(&self) -> &[f64] {
        &self.knots
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    fn interval(&self, t: f64) -> usize {
        let n = self.knots.len();
        self.knots.partition_point(|&k| k <= t).clamp(1, n - 1) - 1
    }

    pub fn eval(&self, t: f64) -> StateVec {
        let mut out = vec![0.0; self.dim];
        self.eval_into(t, &mut out);
        // finite knots and finite t give finite output
        StateVec::new(out).unwrap_or_else(|_| StateVec::zeros(self.dim))
    }

    /// Writes the interpolant at `t` into `out` (length `dim`).
    pub fn eval_into(&self, t: f64, out: &mut [f64]) {
        let i = self.interval(t);
        let (lo, hi) = (self.knots[i], self.knots[i + 1]);
        let h = hi - lo;
        let a = (hi - t) / h;
        let b = (t - lo) / h;
        let ca = (a * a * a - a) * h * h / 6.0;
        let cb = (b * b * b - b) * h * h / 6.0;
        let d = self.dim;
        for (c, o) in out.iter_mut().enumerate() {
            *o = a * self.values[i * d + c]
                + b * self.values[(i + 1) * d + c]
                + ca * self.second[i * d + c]
                + cb * self.second[(i + 1) * d + c];
        }
    }

    /// First derivative of the interpolant at `t`.
    pub fn derivative(&self, t: f64) -> Vec<f64> {
        let i = self.interval(t);
        let (lo, hi) = (self.knots[i], self.knots[i + 1]);
        let h = hi - lo;
        let a = (hi - t) / h;
        let b = (t - lo) / h;
        let d = self.dim;
        (0..d)
            .map(|c| {
                (self.values[(i + 1) * d + c] - self.values[i * d + c]) / h
                    - (3.0 * a * a - 1.0) * h / 6.0 * self.second[i * d + c]
                    + (3.0 * b * b - 1.0) * h / 6.0 * self.second[(i + 1) * d + c]
            })
            .collect()
    }

    /// Second derivative of the interpolant at `t`.
    pub fn second_derivative(&self, t: f64) -> Vec<f64> {
        let i = self.interval(t);
        let (lo, hi) = (self.knots[i], self.knots[i + 1]);
        let h = hi - lo;
        let a = (hi - t) / h;
        let b = (t - lo) / h;
        let d = self.dim;
        (0..d).map(|c| a * self.second[i * d + c] + b * self.second[(i + 1) * d + c]).collect()
    }
}

/// Thomas algorithm for the symmetric tridiagonal system of interior second
/// derivatives: `h[i-1]·M[i-1] + 2(h[i-1]+h[i])·M[i] + h[i]·M[i+1] = rhs`.
fn solve_interior_system(h: &[f64], rhs: &[f64], sol: &mut [f64]) {
    let m = rhs.len();
    let mut c_prime = vec![0.0; m];
    let mut d_prime = vec![0.0; m];
    for i in 0..m {
        let diag = 2.0 * (h[i] + h[i + 1]);
        let sub = if i > 0 { h[i] } else { 0.0 };
        let sup = if i + 1 < m { h[i + 1] } else { 0.0 };
        let denom = diag - if i > 0 { sub * c_prime[i - 1] } else { 0.0 };
        c_prime[i] = sup / denom;
        d_prime[i] = (rhs[i] - if i > 0 { sub * d_prime[i - 1] } else { 0.0 }) / denom;
    }
    for i in (0..m).rev() {
        sol[i] = d_prime[i] - if i + 1 < m { c_prime[i] * sol[i + 1] } else { 0.0 };
    }
}
