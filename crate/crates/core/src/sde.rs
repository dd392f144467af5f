//! Euler-Maruyama integration of the complex, Bohmian and Nelson random
//! motions, and reproducible ensembles of independent trajectories.
//!
//! The complex motion is driven by a single real Wiener process whose
//! increment enters both coordinates with opposite signs:
//!
//! ```text
//! z_{j+1} = z_j + u*(z_j) dt + (-1 + i) xi sqrt(dt / 2),   xi ~ N(0, 1)
//! ```
//!
//! The real-axis motion is `x_{j+1} = x_j + v_B(x_j) dt + xi sqrt(dt)`.
//!
//! Every trajectory owns a ChaCha8 stream selected by its index on top of the
//! ensemble's master seed, so a trajectory is fully determined by
//! `(master_seed, index)` and ensembles do not depend on the worker count.

use std::io::{self, Write};

use num_complex::Complex64;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{SdeError, WaveError};
use crate::wavefunction::{
    self, clamp_magnitude, eigenstate, eigenstate_dz, hermite, log_derivative_unchecked,
    QuantumState, DRIFT_CLAMP, NODE_THRESHOLD,
};
use crate::ComplexValue;

/// Trajectories handed to one worker task. Fixed so that the partition of
/// work, and therefore the merge order, never depends on the thread count.
const CHUNK: usize = 64;

/// Which random motion to integrate.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SdeKind {
    /// Complex-plane motion driven by `u* = -i d(ln Psi)/dz`.
    Complex,
    /// Real-axis Bohmian motion `dx = v_B dt + dw`.
    Bohmian,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SdeConfig {
    pub kind: SdeKind,
    pub state: QuantumState,
    pub dt: f64,
    pub n_steps: usize,
    /// Trajectory `k` starts at `initial_positions[k % len]`.
    pub initial_positions: Vec<ComplexValue>,
    pub n_trajectories: usize,
    pub master_seed: u64,
    /// Samples with `t < burn_in_time` are integrated but not recorded.
    pub burn_in_time: f64,
    pub record_stride: usize,
    pub drift_clamp: f64,
}

impl Default for SdeConfig {
    fn default() -> Self {
        Self {
            kind: SdeKind::Complex,
            state: QuantumState::new(1),
            dt: 1e-3,
            n_steps: 10_000,
            initial_positions: vec![Complex64::new(0.95, 0.0), Complex64::new(-0.95, 0.0)],
            n_trajectories: 100_000,
            master_seed: 20_240_917,
            burn_in_time: 1.0,
            record_stride: 1,
            drift_clamp: DRIFT_CLAMP,
        }
    }
}

impl SdeConfig {
    pub fn validate(&self) -> Result<(), SdeError> {
        let bad = |msg: String| Err(SdeError::InvalidConfig(msg));
        if !(self.dt > 0.0 && self.dt.is_finite()) {
            return bad(format!("dt must be positive, got {}", self.dt));
        }
        if self.n_steps == 0 {
            return bad("n_steps must be positive".into());
        }
        if !(self.burn_in_time >= 0.0 && self.burn_in_time < self.n_steps as f64 * self.dt) {
            return bad(format!(
                "burn_in_time {} must lie in [0, n_steps*dt = {})",
                self.burn_in_time,
                self.n_steps as f64 * self.dt
            ));
        }
        if self.n_trajectories == 0 {
            return bad("n_trajectories must be at least 1".into());
        }
        if self.record_stride == 0 {
            return bad("record_stride must be at least 1".into());
        }
        if !(self.drift_clamp > 0.0) {
            return bad("drift_clamp must be positive".into());
        }
        if self.initial_positions.is_empty() {
            return bad("at least one initial position is required".into());
        }
        for z in &self.initial_positions {
            if !(z.re.is_finite() && z.im.is_finite()) {
                return bad(format!("initial position {z} is not finite"));
            }
            if self.kind == SdeKind::Bohmian && z.im != 0.0 {
                return bad(format!("Bohmian initial position {z} must be real"));
            }
            if hermite(self.state.n(), *z).norm() < NODE_THRESHOLD {
                return bad(format!("initial position {z} sits on a node of the state"));
            }
        }
        Ok(())
    }

    /// First step index whose time `k * dt` is at or past the burn-in.
    fn first_recorded_step(&self) -> usize {
        let k = (self.burn_in_time / self.dt - 1e-9).ceil();
        (k.max(1.0)) as usize
    }
}

/// One recorded point `(t, x, y)` of a trajectory.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ComplexSample {
    pub t: f64,
    pub x: f64,
    pub y: f64,
}

impl ComplexSample {
    pub fn z(&self) -> ComplexValue {
        Complex64::new(self.x, self.y)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Trajectory {
    pub index: usize,
    /// ChaCha stream id of this trajectory (equal to its index).
    pub stream: u64,
    pub samples: Vec<ComplexSample>,
    pub clamp_count: u64,
}

impl Trajectory {
    /// CSV with header `t,x,y`, one row per recorded sample.
    pub fn write_csv<W: Write>(&self, mut out: W) -> io::Result<()> {
        writeln!(out, "t,x,y")?;
        for s in &self.samples {
            writeln!(out, "{:.16e},{:.16e},{:.16e}", s.t, s.x, s.y)?;
        }
        Ok(())
    }
}

/// Receives the recorded samples of trajectories, one trajectory at a time.
pub trait SampleSink {
    fn begin_trajectory(&mut self, _index: usize) {}
    fn record(&mut self, sample: ComplexSample);
    fn end_trajectory(&mut self) {}
}

/// Partial results that can be combined. Ensembles merge per-chunk partials
/// in chunk order.
pub trait Merge {
    fn merge(&mut self, other: Self);
}

impl SampleSink for Vec<ComplexSample> {
    fn record(&mut self, sample: ComplexSample) {
        self.push(sample);
    }
}

/// One Euler-Maruyama step of the complex motion. The same draw `xi` feeds
/// the real part with `-xi sqrt(dt/2)` and the imaginary part with
/// `+xi sqrt(dt/2)`.
pub fn step_complex(
    state: &QuantumState,
    z: ComplexValue,
    dt: f64,
    xi: f64,
) -> Result<ComplexValue, SdeError> {
    let stepper = Stepper::new(SdeKind::Complex, *state, dt, DRIFT_CLAMP);
    stepper
        .advance(z, xi)
        .map(|(z, _)| z)
        .map_err(|cause| SdeError::Aborted {
            index: 0,
            step: 0,
            cause,
        })
}

/// One Euler-Maruyama step of the Bohmian motion, `x + v_B dt + xi sqrt(dt)`.
pub fn step_bohmian(state: &QuantumState, x: f64, dt: f64, xi: f64) -> Result<f64, SdeError> {
    let stepper = Stepper::new(SdeKind::Bohmian, *state, dt, DRIFT_CLAMP);
    stepper
        .advance(Complex64::new(x, 0.0), xi)
        .map(|(z, _)| z.re)
        .map_err(|cause| SdeError::Aborted {
            index: 0,
            step: 0,
            cause,
        })
}

fn check_real_node(state: &QuantumState, x: f64) -> Result<(), WaveError> {
    let z = Complex64::new(x, 0.0);
    let magnitude = hermite(state.n(), z).norm();
    if magnitude < NODE_THRESHOLD {
        Err(WaveError::NodeProximity {
            n: state.n(),
            z,
            magnitude,
        })
    } else {
        Ok(())
    }
}

/// Bohmian drift `v_B = dS_B/dx + (1/2) d(ln R_B^2)/dx`, read off the
/// polar decomposition `Psi = R_B e^{i S_B}` of the eigenstate at `t = 0`.
pub fn bohmian_drift(state: &QuantumState, x: f64) -> Result<f64, WaveError> {
    check_real_node(state, x)?;
    let z = Complex64::new(x, 0.0);
    let psi = eigenstate(state, 0.0, z)?;
    let dpsi = eigenstate_dz(state, 0.0, z)?;
    let rho = psi.norm_sqr();
    // d S_B / dx = Im(conj(psi) psi') / |psi|^2
    let phase_gradient = (psi.conj() * dpsi).im / rho;
    // (1/2) d ln R^2 / dx = Re(conj(psi) psi') / |psi|^2
    let half_log_density_gradient = (psi.conj() * dpsi).re / rho;
    Ok(phase_gradient + half_log_density_gradient)
}

/// Nelson's mean forward velocity `b+ = v_rho + u_rho` with the current
/// velocity `dS_N/dx` and osmotic velocity `(1/2) d(ln rho)/dx`, where
/// `rho = [C_n H_n(x)]^2 e^{-x^2}` is differentiated in closed form.
pub fn nelson_drift(state: &QuantumState, x: f64) -> Result<f64, WaveError> {
    check_real_node(state, x)?;
    let n = state.n();
    let z = Complex64::new(x, 0.0);
    // S_N = arg Psi, so dS_N/dx = Im(Psi'/Psi)
    let psi = eigenstate(state, 0.0, z)?;
    let current = (eigenstate_dz(state, 0.0, z)? / psi).im;
    // rho'/(2 rho) = H_n'/H_n - x with H_n' = 2n H_{n-1}
    let h_n = hermite(n, z).re;
    let dh_n = if n == 0 {
        0.0
    } else {
        2.0 * n as f64 * hermite(n - 1, z).re
    };
    let osmotic = dh_n / h_n - x;
    Ok(current + osmotic)
}

/// Deterministic part of one step for a given kind of motion.
#[derive(Debug, Clone, Copy)]
struct Stepper {
    kind: SdeKind,
    n: u32,
    dt: f64,
    noise: f64,
    clamp: f64,
}

impl Stepper {
    fn new(kind: SdeKind, state: QuantumState, dt: f64, clamp: f64) -> Self {
        let noise = match kind {
            SdeKind::Complex => (dt / 2.0).sqrt(),
            SdeKind::Bohmian => dt.sqrt(),
        };
        Self {
            kind,
            n: state.n(),
            dt,
            noise,
            clamp,
        }
    }

    /// Returns the new position and whether the drift was clamped.
    fn advance(&self, z: Complex64, xi: f64) -> Result<(Complex64, bool), String> {
        let f = log_derivative_unchecked(self.n, z)
            .ok_or_else(|| format!("landed exactly on a node at {z}"))?;
        let next = match self.kind {
            SdeKind::Complex => {
                let (u, clamped) = clamp_magnitude(Complex64::new(f.im, -f.re), self.clamp);
                let kick = xi * self.noise;
                (
                    Complex64::new(z.re + u.re * self.dt - kick, z.im + u.im * self.dt + kick),
                    clamped,
                )
            }
            SdeKind::Bohmian => {
                let v = f.re;
                let (v, clamped) = if v.abs() > self.clamp {
                    (self.clamp.copysign(v), true)
                } else {
                    (v, false)
                };
                (
                    Complex64::new(z.re + v * self.dt + xi * self.noise, 0.0),
                    clamped,
                )
            }
        };
        if next.0.re.is_finite() && next.0.im.is_finite() {
            Ok(next)
        } else {
            Err(format!("non-finite position after stepping from {z}"))
        }
    }
}

fn trajectory_rng(master_seed: u64, index: usize) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(master_seed);
    rng.set_stream(index as u64);
    rng
}

/// Integrate trajectory `index` and stream its recorded samples into `sink`.
/// Returns the number of clamped drift evaluations.
pub fn simulate_trajectory_into<S: SampleSink + ?Sized>(
    config: &SdeConfig,
    index: usize,
    sink: &mut S,
) -> Result<u64, SdeError> {
    if index >= config.n_trajectories {
        return Err(SdeError::InvalidConfig(format!(
            "trajectory index {index} out of range (n_trajectories = {})",
            config.n_trajectories
        )));
    }
    if config.initial_positions.is_empty() {
        return Err(SdeError::InvalidConfig("no initial positions".into()));
    }
    let stepper = Stepper::new(config.kind, config.state, config.dt, config.drift_clamp);
    let mut rng = trajectory_rng(config.master_seed, index);
    let first = config.first_recorded_step();
    let stride = config.record_stride.max(1);
    let mut z = config.initial_positions[index % config.initial_positions.len()];
    let mut clamps = 0u64;

    sink.begin_trajectory(index);
    for k in 1..=config.n_steps {
        let xi: f64 = StandardNormal.sample(&mut rng);
        let (next, clamped) = stepper.advance(z, xi).map_err(|cause| {
            sink.end_trajectory();
            SdeError::Aborted {
                index,
                step: k,
                cause,
            }
        })?;
        clamps += clamped as u64;
        z = next;
        if k >= first && k % stride == 0 {
            sink.record(ComplexSample {
                t: k as f64 * config.dt,
                x: z.re,
                y: z.im,
            });
        }
    }
    sink.end_trajectory();
    Ok(clamps)
}

pub fn simulate_trajectory(config: &SdeConfig, index: usize) -> Result<Trajectory, SdeError> {
    let mut samples = Vec::new();
    let clamp_count = simulate_trajectory_into(config, index, &mut samples)?;
    Ok(Trajectory {
        index,
        stream: index as u64,
        samples,
        clamp_count,
    })
}

/// Retained ensemble: every trajectory with all of its samples.
#[derive(Debug, Clone)]
pub struct EnsembleRun {
    pub config: SdeConfig,
    pub trajectories: Vec<Trajectory>,
    pub aborted: Vec<SdeError>,
}

impl EnsembleRun {
    pub fn clamp_count(&self) -> u64 {
        self.trajectories.iter().map(|t| t.clamp_count).sum()
    }
}

/// Streamed ensemble: merged sink plus bookkeeping.
#[derive(Debug, Clone)]
pub struct EnsembleStats<S> {
    pub sink: S,
    pub n_trajectories: usize,
    pub clamp_count: u64,
    pub aborted: Vec<SdeError>,
}

fn abort_limit(total: usize) -> usize {
    total / 1000
}

fn check_aborts(aborted: &[SdeError], total: usize) -> Result<(), SdeError> {
    let limit = abort_limit(total);
    if aborted.len() > limit {
        return Err(SdeError::TooManyAborts {
            aborted: aborted.len(),
            total,
            limit,
            first: aborted[0].to_string(),
        });
    }
    Ok(())
}

/// Run all trajectories, keeping them in memory. Meant for small ensembles
/// and trajectory dumps; use [`simulate_ensemble_streaming`] for statistics.
pub fn simulate_ensemble(config: &SdeConfig) -> Result<EnsembleRun, SdeError> {
    config.validate()?;
    let results: Vec<Result<Trajectory, SdeError>> = (0..config.n_trajectories)
        .into_par_iter()
        .with_min_len(CHUNK)
        .map(|index| simulate_trajectory(config, index))
        .collect();
    let mut trajectories = Vec::with_capacity(results.len());
    let mut aborted = Vec::new();
    for r in results {
        match r {
            Ok(t) => trajectories.push(t),
            Err(e) => aborted.push(e),
        }
    }
    check_aborts(&aborted, config.n_trajectories)?;
    Ok(EnsembleRun {
        config: config.clone(),
        trajectories,
        aborted,
    })
}

/// Run all trajectories, streaming samples into per-chunk sinks built by
/// `make_sink` and merging them in chunk order.
pub fn simulate_ensemble_streaming<S, F>(
    config: &SdeConfig,
    make_sink: F,
) -> Result<EnsembleStats<S>, SdeError>
where
    S: SampleSink + Merge + Send,
    F: Fn() -> S + Sync,
{
    config.validate()?;
    let total = config.n_trajectories;
    let n_chunks = total.div_ceil(CHUNK);
    let partials: Vec<(S, u64, Vec<SdeError>)> = (0..n_chunks)
        .into_par_iter()
        .map(|c| {
            let mut sink = make_sink();
            let mut clamps = 0;
            let mut aborted = Vec::new();
            for index in c * CHUNK..((c + 1) * CHUNK).min(total) {
                match simulate_trajectory_into(config, index, &mut sink) {
                    Ok(k) => clamps += k,
                    Err(e) => aborted.push(e),
                }
            }
            (sink, clamps, aborted)
        })
        .collect();

    let mut sink = make_sink();
    let mut clamp_count = 0;
    let mut aborted = Vec::new();
    for (s, k, a) in partials {
        sink.merge(s);
        clamp_count += k;
        aborted.extend(a);
    }
    check_aborts(&aborted, total)?;
    Ok(EnsembleStats {
        sink,
        n_trajectories: total,
        clamp_count,
        aborted,
    })
}

/// Drift of the motion as used by the integrator (before clamping), for
/// diagnostics.
pub fn integrator_drift(
    kind: SdeKind,
    state: &QuantumState,
    z: ComplexValue,
) -> Result<ComplexValue, WaveError> {
    match kind {
        SdeKind::Complex => {
            wavefunction::complex_drift_clamped(state, z, f64::INFINITY).map(|d| d.velocity)
        }
        SdeKind::Bohmian => bohmian_drift(state, z.re).map(|v| Complex64::new(v, 0.0)),
    }
}
