//! Explicit finite-difference Fokker-Planck solvers.
//!
//! All problems share the drift-diffusion form
//!
//! ```text
//! d rho/dt = -div(v rho) + (1/2) sum_ij G_ij d_i d_j rho
//! ```
//!
//! with a constant diffusion matrix `G`, explicit Euler in time and central
//! differences in space. Three models are provided: the real-axis Bohmian
//! equation, the complex-plane equation for `(Re z, Im z)` and the Duffing
//! oscillator, whose stationary density is known in closed form.

mod grid;
mod solver;
mod stepper;

pub use grid::{field_mass, AxisSpec, Field1D, Field2D, FpField, GridAxis};
pub use solver::{
    duffing_exact, duffing_exact_field, gaussian_initial, plane_born, solve_fp, DuffingParams, FpModel,
    FpProblem, FpSnapshot, FpSolution, InitialCondition,
};
pub use stepper::{
    duffing_step, fp_step_1d, fp_step_2d, LineOperator, PlaneOperator, StencilForm, StepReport,
};
