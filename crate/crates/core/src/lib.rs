//! First-order dynamically regularized Lagrange multiplier (DRLM) scheme
//! for the 2D incompressible Navier-Stokes equations on a MAC grid.
//!
//! Each time step solves two generalized Stokes problems with the same
//! constant operator, assembles a scalar quadratic for the multiplier `q`,
//! takes its unique positive root and superposes the two solutions.

pub mod audit;
pub mod drlm;
pub mod error;
pub mod grid;
pub mod harness;
pub mod manufactured;
pub mod operators;
pub mod spectral;
pub mod stokes;

pub use drlm::{
    drlm_step, multiplier_bound_c0, positive_root, quadratic_coefficients, run_simulation,
    DrlmState, QuadraticCoefficients, RunConfig, RunFailure, RunOutput, StepDiagnostics,
};
pub use error::{Error, Result};
pub use grid::{apply_velocity_bc, project_mean_zero, CellField, MacGrid, VelocityField};
pub use manufactured::{ErrorNorms, Manufactured};
pub use operators::DiscreteNorms;
pub use stokes::{dense_oracle_solve, StokesOperator, StokesSolution};
