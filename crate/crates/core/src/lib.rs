//! Radial finite-difference solvers and diagnostics for axisymmetric Poiseuille
//! flow of the hyperbolic Ericksen–Leslie liquid-crystal system.

pub mod blowup;
pub mod commands;
pub mod config;
pub mod diagnostics;
pub mod error;
pub mod gl;
pub mod grid;
pub mod initial;
pub mod io;
pub mod solver;
mod tridiag;

pub use error::{ElsError, Result};
pub use grid::{AxisPolicy, RadialField, RadialGrid};
pub use initial::{InitialDataSpec, Profile};
pub use solver::{
    init_state, run, step, FieldState, Formulation, SolverConfig, StepRecord, Trajectory,
};
