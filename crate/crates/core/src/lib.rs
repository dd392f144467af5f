//! Complex-plane random motion for quantum harmonic-oscillator eigenstates.
//!
//! * [`wavefunction`]: eigenstates, Hermite polynomials, drifts and densities.
//! * [`sde`]: Euler-Maruyama integration of complex and real-axis motion.
//! * [`stats`]: point-set extraction, histograms and correlation scores.
//! * [`fokker_planck`]: explicit finite-difference density evolution.

pub mod error;
pub mod fokker_planck;
pub mod sde;
pub mod stats;
pub mod wavefunction;

/// Complex number type used throughout the crate.
pub type ComplexValue = num_complex::Complex64;

pub use error::{FpError, SdeError, StatsError, WaveError};
pub use sde::{
    bohmian_drift, nelson_drift, simulate_ensemble, simulate_ensemble_streaming,
    simulate_trajectory, step_bohmian, step_complex, ComplexSample, SdeConfig, SdeKind, Trajectory,
};
pub use wavefunction::{
    born_density, classical_density, complex_drift, eigenstate, hermite, log_derivative,
    QuantumState,
};
pub use fokker_planck::{
    duffing_exact, field_mass, solve_fp, DuffingParams, Field1D, Field2D, FpProblem, FpSolution,
};
pub use stats::{
    build_histogram, detect_crossings, marginal_y, pearson_correlation, project_real, BinSpec,
    CrossingRecord, DensityHistogram, PointSet, PointSetAccumulator,
};
