//! Adjoint-based identification of parameters, delay and history of delay
//! differential equations.

#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod adjoint;
pub mod data;
pub mod error;
pub mod gradcheck;
pub mod interpolation;
pub mod loss;
pub mod models;
pub mod optimizer;
pub mod solver;
pub mod trainer;
pub mod types;

pub use error::{Error, Result};
pub use types::{Delay, DynamicsModel, InitialConditionModel, Matrix, ParamVec, StateVec, Trajectory};
