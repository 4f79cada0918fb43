//! Value types shared by the solver, loss, adjoint and trainer, plus the two
//! model interfaces (right-hand side and history function).

use std::ops::Deref;

use crate::error::{Error, Result};

macro_rules! real_vector {
    ($(#[$meta:meta])* $name:ident) => {
        $(#[$meta])*
        #[derive(Debug, Clone, PartialEq)]
        pub struct $name(Vec<f64>);

        impl $name {
            /// Fails with `InvalidValue` if any component is NaN or infinite.
            pub fn new(components: Vec<f64>) -> Result<Self> {
                if let Some(i) = components.iter().position(|v| !v.is_finite()) {
                    return Err(Error::InvalidValue(format!(
                        "{} component {i} is not finite ({})",
                        stringify!($name),
                        components[i]
                    )));
                }
                Ok(Self(components))
            }

            pub fn zeros(len: usize) -> Self {
                Self(vec![0.0; len])
            }

            pub fn as_slice(&self) -> &[f64] {
                &self.0
            }

            pub fn into_inner(self) -> Vec<f64> {
                self.0
            }

            pub fn add(&self, other: &Self) -> Result<Self> {
                check_len(self.0.len(), other.0.len())?;
                Ok(Self(self.0.iter().zip(&other.0).map(|(a, b)| a + b).collect()))
            }

            pub fn scale(&self, factor: f64) -> Self {
                Self(self.0.iter().map(|a| a * factor).collect())
            }

            pub fn dot(&self, other: &Self) -> Result<f64> {
                check_len(self.0.len(), other.0.len())?;
                Ok(dot(&self.0, &other.0))
            }
        }

        impl Deref for $name {
            type Target = [f64];

            fn deref(&self) -> &[f64] {
                &self.0
            }
        }
    };
}

real_vector!(
    /// A point in state space, `x(t) ∈ ℝᵈ`.
    StateVec
);

real_vector!(
    /// A parameter vector: the right-hand-side parameters or the history
    /// parameters.
    ParamVec
);

fn check_len(expected: usize, got: usize) -> Result<()> {
    if expected != got {
        return Err(Error::DimensionMismatch { expected, got });
    }
    Ok(())
}

pub(crate) fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

pub(crate) fn all_finite(v: &[f64]) -> bool {
    v.iter().all(|x| x.is_finite())
}

/// Strictly positive time delay.
#[derive(Debug, Clone, Copy, PartialEq, PartialOrd)]
pub struct Delay(f64);

impl Delay {
    pub fn new(value: f64) -> Result<Self> {
        if !(value.is_finite() && value > 0.0) {
            return Err(Error::InvalidValue(format!("delay must be positive, got {value}")));
        }
        Ok(Self(value))
    }

    pub fn value(self) -> f64 {
        self.0
    }
}

/// States on a uniform grid `t0 + k·dt`, `k = 0..len`. Times are derived
/// from the index and never stored.
#[derive(Debug, Clone, PartialEq)]
pub struct Trajectory {
    t0: f64,
    dt: f64,
    states: Vec<StateVec>,
}

impl Trajectory {
    pub fn new(t0: f64, dt: f64, states: Vec<StateVec>) -> Result<Self> {
        if !(dt.is_finite() && dt > 0.0) || !t0.is_finite() {
            return Err(Error::InvalidValue(format!("bad grid t0 = {t0}, dt = {dt}")));
        }
        if let Some(first) = states.first() {
            let d = first.len();
            if d == 0 {
                return Err(Error::DegenerateInput("zero-dimensional state".into()));
            }
            if let Some(bad) = states.iter().find(|s| s.len() != d) {
                return Err(Error::DimensionMismatch { expected: d, got: bad.len() });
            }
        }
        Ok(Self { t0, dt, states })
    }

    pub fn t0(&self) -> f64 {
        self.t0
    }

    pub fn dt(&self) -> f64 {
        self.dt
    }

    pub fn len(&self) -> usize {
        self.states.len()
    }

    pub fn is_empty(&self) -> bool {
        self.states.is_empty()
    }

    pub fn dim(&self) -> usize {
        self.states.first().map_or(0, |s| s.len())
    }

    pub fn time(&self, k: usize) -> f64 {
        self.t0 + k as f64 * self.dt
    }

    pub fn times(&self) -> Vec<f64> {
        (0..self.states.len()).map(|k| self.time(k)).collect()
    }

    pub fn state(&self, k: usize) -> Option<&StateVec> {
        self.states.get(k)
    }

    pub fn states(&self) -> &[StateVec] {
        &self.states
    }

    pub fn last(&self) -> Option<&StateVec> {
        self.states.last()
    }

    /// Index `k` of the node at time `t`, accepting `|t − t_k| ≤ 1e−9·max(1, |t|)`.
    pub fn index_of(&self, t: f64) -> Result<usize> {
        let off_grid = Error::NotOnGrid { t, t0: self.t0, dt: self.dt };
        let k = ((t - self.t0) / self.dt).round();
        if !k.is_finite() || k < 0.0 || k as usize >= self.states.len() {
            return Err(off_grid);
        }
        let k = k as usize;
        if (t - self.time(k)).abs() <= 1e-9 * t.abs().max(1.0) {
            Ok(k)
        } else {
            Err(off_grid)
        }
    }
}

/// Dense row-major matrix, used for Jacobians.
#[derive(Debug, Clone, PartialEq)]
pub struct Matrix {
    rows: usize,
    cols: usize,
    data: Vec<f64>,
}

impl Matrix {
    pub fn zeros(rows: usize, cols: usize) -> Self {
        Self { rows, cols, data: vec![0.0; rows * cols] }
    }

    pub fn from_rows(rows: usize, cols: usize, data: Vec<f64>) -> Self {
        assert_eq!(data.len(), rows * cols, "matrix data has wrong length");
        Self { rows, cols, data }
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    pub fn get(&self, r: usize, c: usize) -> f64 {
        self.data[r * self.cols + c]
    }

    pub fn set(&mut self, r: usize, c: usize, v: f64) {
        self.data[r * self.cols + c] = v;
    }

    pub fn data(&self) -> &[f64] {
        &self.data
    }

    /// `A·v`
    pub fn mul_vec(&self, v: &[f64]) -> Vec<f64> {
        debug_assert_eq!(v.len(), self.cols);
        self.data.chunks_exact(self.cols.max(1)).take(self.rows).map(|row| dot(row, v)).collect()
    }

    /// `Aᵀ·v`
    pub fn tr_mul_vec(&self, v: &[f64]) -> Vec<f64> {
        debug_assert_eq!(v.len(), self.rows);
        let mut out = vec![0.0; self.cols];
        for (r, &vr) in v.iter().enumerate() {
            if vr == 0.0 {
                continue;
            }
            for (c, o) in out.iter_mut().enumerate() {
                *o += self.data[r * self.cols + c] * vr;
            }
        }
        out
    }
}

/// Right-hand side `F(x, y, τ, t, θ)` of `ẋ(t) = F(x(t), x(t − τ), τ, t, θ)`
/// together with its partial derivatives.
pub trait DynamicsModel: Send + Sync {
    fn name(&self) -> &str;

    /// State dimension `d`.
    fn dim(&self) -> usize;

    /// Length of `θ`.
    fn n_params(&self) -> usize;

    fn eval(&self, x: &[f64], y: &[f64], tau: f64, t: f64, theta: &[f64]) -> Result<Vec<f64>>;

    /// `∂F/∂x`, d×d.
    fn jac_x(&self, x: &[f64], y: &[f64], tau: f64, t: f64, theta: &[f64]) -> Result<Matrix>;

    /// `∂F/∂y`, d×d.
    fn jac_y(&self, x: &[f64], y: &[f64], tau: f64, t: f64, theta: &[f64]) -> Result<Matrix>;

    /// `∂F/∂τ`, length d.
    fn jac_tau(&self, x: &[f64], y: &[f64], tau: f64, t: f64, theta: &[f64]) -> Result<Vec<f64>>;

    /// `∂F/∂θ`, d×p.
    fn jac_theta(&self, x: &[f64], y: &[f64], tau: f64, t: f64, theta: &[f64]) -> Result<Matrix>;
}

/// History function `X₀(t, φ)` on `[−τ, 0]`.
pub trait InitialConditionModel: Send + Sync {
    fn name(&self) -> &str;

    fn dim(&self) -> usize;

    /// Length of `φ`.
    fn n_params(&self) -> usize;

    fn eval(&self, t: f64, phi: &[f64]) -> Vec<f64>;

    /// `∂X₀/∂φ`, d×q.
    fn jac_phi(&self, t: f64, phi: &[f64]) -> Matrix;

    /// `∂X₀/∂t`. Needed because the delayed history `X₀(t − τ)` moves with τ.
    fn time_derivative(&self, t: f64, phi: &[f64]) -> Vec<f64>;
}
