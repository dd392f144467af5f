use thiserror::Error;

use crate::ComplexValue;

/// Errors raised by the wavefunction evaluators.
#[derive(Debug, Clone, PartialEq, Error)]
pub enum WaveError {
    #[error("|H_{n}(z)| = {magnitude:e} at z = {z} is below the node threshold")]
    NodeProximity {
        n: u32,
        z: ComplexValue,
        magnitude: f64,
    },
    #[error("e^(-z^2/2) overflows at z = {z} (exponent {exponent:.1})")]
    Overflow { z: ComplexValue, exponent: f64 },
    #[error("non-finite argument {0}")]
    NonFinite(ComplexValue),
}

/// Errors raised by the trajectory integrators and ensemble runner.
#[derive(Debug, Clone, PartialEq, Error)]
pub enum SdeError {
    #[error("invalid SDE configuration: {0}")]
    InvalidConfig(String),
    #[error("trajectory {index} aborted at step {step}: {cause}")]
    Aborted {
        index: usize,
        step: usize,
        cause: String,
    },
    #[error("{aborted} of {total} trajectories aborted (limit {limit}); first: {first}")]
    TooManyAborts {
        aborted: usize,
        total: usize,
        limit: usize,
        first: String,
    },
    #[error(transparent)]
    Wave(#[from] WaveError),
}

/// Errors raised while turning samples and fields into densities.
#[derive(Debug, Clone, PartialEq, Error)]
pub enum StatsError {
    #[error("invalid histogram specification: {0}")]
    InvalidBins(String),
    #[error("no samples fell inside [{lo}, {hi}]")]
    EmptyRange { lo: f64, hi: f64 },
    #[error("need at least {needed} bins for a correlation, got {got}")]
    TooFewBins { needed: usize, got: usize },
    #[error("zero variance in {0}")]
    ZeroVariance(&'static str),
    #[error("field contains a non-finite value at ({x}, {y})")]
    NonFiniteField { x: f64, y: f64 },
    #[error("field mass {mass:.4} deviates from 1 by more than 5%")]
    NotNormalized { mass: f64 },
}

/// Errors raised by the Fokker-Planck solvers.
#[derive(Debug, Clone, PartialEq, Error)]
pub enum FpError {
    #[error("invalid Fokker-Planck problem: {0}")]
    InvalidProblem(String),
    #[error("time step {dt:e} violates the stability bound {bound:e} ({reason})")]
    StabilityBound {
        dt: f64,
        bound: f64,
        reason: &'static str,
    },
    #[error("instability at t = {t:.4}: max density {max:e} exceeds 10x the initial maximum {initial:e} (reduce dt or refine the grid)")]
    Unstable { t: f64, max: f64, initial: f64 },
    #[error("under-resolved at t = {t:.4}: {cells} cells ({fraction:.3}% of the grid) undershot below zero in one step")]
    UnderResolved { t: f64, cells: usize, fraction: f64 },
    #[error("non-finite density at t = {t:.4}")]
    NonFinite { t: f64 },
    #[error(transparent)]
    Wave(#[from] WaveError),
}
