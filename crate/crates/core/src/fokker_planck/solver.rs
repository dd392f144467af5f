use serde::{Deserialize, Serialize};

use super::grid::{AxisSpec, Field1D, Field2D, FpField, GridAxis};
use super::stepper::{step_in_place, LineOperator, PlaneOperator, StencilForm};
use crate::error::FpError;
use crate::wavefunction::{born_density, QuantumState};

/// Runs whose grid mass drops below this are flagged as leaking.
const MASS_FLOOR: f64 = 0.95;
/// Largest fraction of cells allowed to undershoot significantly in one step.
const MAX_NEGATIVE_FRACTION: f64 = 1e-3;
/// Growth of the peak density over its initial value treated as blow-up.
const BLOW_UP_FACTOR: f64 = 10.0;

/// Duffing oscillator `X'' + 2 alpha X' + beta X + gamma X^3 = sigma xi(t)`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct DuffingParams {
    pub alpha: f64,
    pub beta: f64,
    pub gamma: f64,
    pub sigma: f64,
}

impl Default for DuffingParams {
    fn default() -> Self {
        Self {
            alpha: 0.25,
            beta: -1.0,
            gamma: 0.2,
            sigma: 1.0,
        }
    }
}

impl DuffingParams {
    pub fn validate(&self) -> Result<(), FpError> {
        let all_finite = [self.alpha, self.beta, self.gamma, self.sigma]
            .iter()
            .all(|v| v.is_finite());
        if !all_finite || self.alpha <= 0.0 || self.gamma <= 0.0 || self.sigma <= 0.0 {
            return Err(FpError::InvalidProblem(format!(
                "Duffing parameters need finite alpha, gamma, sigma > 0: {self:?}"
            )));
        }
        Ok(())
    }
}

/// Unnormalized stationary Duffing density
/// `exp{-(2 alpha / sigma^2)(Y^2 + beta X^2 + (gamma/2) X^4)}`.
pub fn duffing_exact(params: &DuffingParams, x: f64, y: f64) -> f64 {
    let k = 2.0 * params.alpha / (params.sigma * params.sigma);
    (-k * (y * y + params.beta * x * x + 0.5 * params.gamma * x.powi(4))).exp()
}

/// [`duffing_exact`] sampled on a grid and normalized to unit grid mass.
pub fn duffing_exact_field(params: &DuffingParams, x: GridAxis, y: GridAxis) -> Field2D {
    let mut f = Field2D::from_fn(x, y, |a, b| duffing_exact(params, a, b));
    let mass = f.mass();
    normalize(&mut f.values, mass);
    f
}

/// Gaussian `exp[-((X - mu1)/(2 theta1))^2 - ((Y - mu2)/(2 theta2))^2]`
/// normalized to unit grid mass.
pub fn gaussian_initial(
    mu: [f64; 2],
    theta: [f64; 2],
    x: GridAxis,
    y: GridAxis,
) -> Result<Field2D, FpError> {
    check_widths(theta)?;
    let mut f = Field2D::from_fn(x, y, |a, b| gaussian(mu, theta, a, b));
    let mass = f.mass();
    if !(mass > 0.0) {
        return Err(FpError::InvalidProblem(
            "Gaussian initial condition has no mass on the grid".into(),
        ));
    }
    normalize(&mut f.values, mass);
    Ok(f)
}

fn gaussian(mu: [f64; 2], theta: [f64; 2], x: f64, y: f64) -> f64 {
    let a = (x - mu[0]) / (2.0 * theta[0]);
    let b = (y - mu[1]) / (2.0 * theta[1]);
    (-a * a - b * b).exp()
}

fn check_widths(theta: [f64; 2]) -> Result<(), FpError> {
    if theta.iter().all(|t| *t > 0.0 && t.is_finite()) {
        Ok(())
    } else {
        Err(FpError::InvalidProblem(format!(
            "Gaussian widths must be positive, got {theta:?}"
        )))
    }
}

fn normalize(values: &mut [f64], mass: f64) {
    for v in values.iter_mut() {
        *v /= mass;
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum FpModel {
    /// `d rho/dt = -d(v_B rho)/dx + (1/2) rho''` on the real axis.
    Bohmian1d { state: QuantumState },
    /// Density of the complex motion over `(Re z, Im z)`.
    Complex2d { state: QuantumState },
    Duffing {
        #[serde(default)]
        params: DuffingParams,
    },
}

impl FpModel {
    fn nodes(&self) -> Vec<f64> {
        match self {
            FpModel::Bohmian1d { state } | FpModel::Complex2d { state } => state.real_nodes(),
            FpModel::Duffing { .. } => Vec::new(),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case", deny_unknown_fields)]
pub enum InitialCondition {
    /// Born density of the state; in the plane
    /// `rho_B(x) e^(-y^2) + e^(-x^2) rho_B(y)`, renormalized.
    Born,
    /// Gaussian centred on `mu` with widths `theta` (first components on a line).
    Gaussian { mu: [f64; 2], theta: [f64; 2] },
    /// The exact stationary Duffing density.
    DuffingExact,
}

/// Unnormalized planar Born start; for n = 1 it is `2 (x^2 + y^2) e^(-r^2) / sqrt(pi)`.
pub fn plane_born(state: &QuantumState, x: f64, y: f64) -> f64 {
    born_density(state, x) * (-y * y).exp() + (-x * x).exp() * born_density(state, y)
}

fn default_dt() -> f64 {
    1e-4
}

fn default_t_final() -> f64 {
    5.0
}

fn default_check_interval() -> f64 {
    0.1
}

fn default_tolerance() -> Option<f64> {
    Some(1e-6)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FpProblem {
    pub model: FpModel,
    pub x_axis: AxisSpec,
    /// Defaults to `x_axis`; ignored on a line.
    #[serde(default)]
    pub y_axis: Option<AxisSpec>,
    #[serde(default = "default_dt")]
    pub dt: f64,
    /// Final time, or the cap when stationarity detection is on.
    #[serde(default = "default_t_final")]
    pub t_final: f64,
    /// Defaults to `born` for quantum models and the standard Gaussian for Duffing.
    #[serde(default)]
    pub initial: Option<InitialCondition>,
    /// Defaults to `conservative`.
    #[serde(default)]
    pub form: Option<StencilForm>,
    /// Store a snapshot every this many time units (initial and final are
    /// always stored).
    #[serde(default)]
    pub snapshot_interval: Option<f64>,
    /// Stop once the max-norm change per unit time drops below this.
    #[serde(default = "default_tolerance")]
    pub stationarity_tol: Option<f64>,
    /// Spacing in time of mass records and stationarity checks.
    #[serde(default = "default_check_interval")]
    pub check_interval: f64,
}

impl FpProblem {
    fn with_model(model: FpModel, x_axis: AxisSpec) -> Self {
        Self {
            model,
            x_axis,
            y_axis: None,
            dt: default_dt(),
            t_final: default_t_final(),
            initial: None,
            form: None,
            snapshot_interval: None,
            stationarity_tol: default_tolerance(),
            check_interval: default_check_interval(),
        }
    }

    /// Real-axis problem on 401 points over `[-5, 5]`.
    pub fn bohmian_1d(n: u32) -> Self {
        Self::with_model(
            FpModel::Bohmian1d {
                state: QuantumState::new(n),
            },
            AxisSpec::Uniform {
                min: -5.0,
                max: 5.0,
                points: 401,
            },
        )
    }

    /// Complex-plane problem on a node-centred grid with spacing near 0.05
    /// reaching at least 4 past the classical turning point.
    pub fn complex_2d(n: u32) -> Self {
        let state = QuantumState::new(n);
        let half_width = (state.classical_amplitude().ceil() + 4.0).max(6.0);
        Self::with_model(
            FpModel::Complex2d { state },
            AxisSpec::NodeCentered {
                half_width,
                spacing: 0.05,
            },
        )
    }

    /// Duffing problem on 201 x 201 points over `[-5, 5]^2` from the Gaussian
    /// at `(-2, -1.8)` with widths 0.1.
    pub fn duffing(params: DuffingParams) -> Self {
        let mut p = Self::with_model(
            FpModel::Duffing { params },
            AxisSpec::Uniform {
                min: -5.0,
                max: 5.0,
                points: 201,
            },
        );
        p.t_final = 100.0;
        p.stationarity_tol = Some(1e-4);
        p
    }

    pub fn initial_condition(&self) -> InitialCondition {
        self.initial.unwrap_or(match self.model {
            FpModel::Duffing { .. } => InitialCondition::Gaussian {
                mu: [-2.0, -1.8],
                theta: [0.1, 0.1],
            },
            _ => InitialCondition::Born,
        })
    }

    pub fn stencil_form(&self) -> StencilForm {
        self.form.unwrap_or_default()
    }

    pub fn validate(&self) -> Result<(), FpError> {
        let bad = |m: String| Err(FpError::InvalidProblem(m));
        if !(self.dt > 0.0 && self.dt.is_finite()) {
            return bad(format!("dt must be positive, got {}", self.dt));
        }
        if !(self.t_final >= 0.0 && self.t_final.is_finite()) {
            return bad(format!(
                "t_final must be non-negative, got {}",
                self.t_final
            ));
        }
        if !(self.check_interval > 0.0) {
            return bad("check_interval must be positive".into());
        }
        if let Some(s) = self.snapshot_interval {
            if !(s > 0.0) {
                return bad("snapshot_interval must be positive".into());
            }
        }
        if let Some(tol) = self.stationarity_tol {
            if !(tol > 0.0) {
                return bad("stationarity_tol must be positive".into());
            }
        }
        if let FpModel::Duffing { params } = &self.model {
            params.validate()?;
        }
        match (self.model, self.initial_condition()) {
            (FpModel::Duffing { .. }, InitialCondition::Born) => {
                bad("the Born initial condition needs a quantum model".into())
            }
            (
                FpModel::Bohmian1d { .. } | FpModel::Complex2d { .. },
                InitialCondition::DuffingExact,
            ) => bad("the Duffing initial condition needs the Duffing model".into()),
            (_, InitialCondition::Gaussian { theta, .. }) => check_widths(theta),
            _ => Ok(()),
        }
    }

    pub fn axes(&self) -> Result<(GridAxis, GridAxis), FpError> {
        let nodes = self.model.nodes();
        let x = self.x_axis.resolve(&nodes)?;
        let y = self.y_axis.unwrap_or(self.x_axis).resolve(&nodes)?;
        Ok((x, y))
    }

    fn steps_of(&self, interval: f64) -> usize {
        ((interval / self.dt).round() as usize).max(1)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct FpSnapshot {
    pub t: f64,
    pub mass: f64,
    pub field: FpField,
}

#[derive(Debug, Clone, PartialEq)]
pub struct FpSolution {
    /// Initial state, periodic snapshots and the final state, in time order.
    pub snapshots: Vec<FpSnapshot>,
    /// `(t, mass)` at every check.
    pub mass_trace: Vec<(f64, f64)>,
    pub steps: usize,
    pub t_end: f64,
    /// Time at which the stationarity criterion was met, if it was.
    pub stationary_at: Option<f64>,
    /// Total cells clipped from negative values over the run.
    pub clipped_cells: u64,
    /// Most significant undershoots in any single step.
    pub max_significant_per_step: usize,
    /// Most negative value seen before clipping, relative to the peak then.
    pub worst_relative_undershoot: f64,
    pub stability_bound: f64,
    /// Mass fell below 0.95 at some check.
    pub mass_loss_flagged: bool,
}

impl FpSolution {
    pub fn final_snapshot(&self) -> &FpSnapshot {
        self.snapshots
            .last()
            .expect("a solution always holds the initial snapshot")
    }

    pub fn final_field(&self) -> &FpField {
        &self.final_snapshot().field
    }
}

enum Operator {
    Line(LineOperator),
    Plane(PlaneOperator),
}

impl Operator {
    fn apply(&self, cur: &[f64], next: &mut [f64], dt: f64) {
        match self {
            Operator::Line(op) => op.apply(cur, next, dt),
            Operator::Plane(op) => op.apply(cur, next, dt),
        }
    }

    fn stability_bound(&self) -> (f64, &'static str) {
        match self {
            Operator::Line(op) => op.stability_bound(),
            Operator::Plane(op) => op.stability_bound(),
        }
    }
}

fn build(problem: &FpProblem) -> Result<(Operator, FpField), FpError> {
    let (x, y) = problem.axes()?;
    let form = problem.stencil_form();
    let ic = problem.initial_condition();
    let (op, mut field) = match problem.model {
        FpModel::Bohmian1d { state } => {
            let op = LineOperator::bohmian(&state, x, form)?;
            let f = match ic {
                InitialCondition::Gaussian { mu, theta } => {
                    Field1D::from_fn(x, |a| gaussian(mu, theta, a, mu[1]))
                }
                _ => Field1D::from_fn(x, |a| born_density(&state, a)),
            };
            (Operator::Line(op), FpField::Line(f))
        }
        FpModel::Complex2d { state } => {
            let op = PlaneOperator::complex(&state, x, y, form)?;
            let f = match ic {
                InitialCondition::Gaussian { mu, theta } => gaussian_initial(mu, theta, x, y)?,
                _ => Field2D::from_fn(x, y, |a, b| plane_born(&state, a, b)),
            };
            (Operator::Plane(op), FpField::Plane(f))
        }
        FpModel::Duffing { params } => {
            let op = PlaneOperator::duffing(&params, x, y, form)?;
            let f = match ic {
                InitialCondition::Gaussian { mu, theta } => gaussian_initial(mu, theta, x, y)?,
                _ => duffing_exact_field(&params, x, y),
            };
            (Operator::Plane(op), FpField::Plane(f))
        }
    };
    // fixed points (edges, pinned nodes) start at zero like every later step
    let mut pinned = vec![0.0; field.values().len()];
    op.apply(field.values(), &mut pinned, 0.0);
    field.values_mut().copy_from_slice(&pinned);
    let mass = field.mass();
    if !(mass > 0.0 && mass.is_finite()) {
        return Err(FpError::InvalidProblem(
            "initial condition has no mass on the grid".into(),
        ));
    }
    normalize(field.values_mut(), mass);
    Ok((op, field))
}

/// Evolve the problem's initial condition to `t_final`, or until the
/// density is stationary.
pub fn solve_fp(problem: &FpProblem) -> Result<FpSolution, FpError> {
    problem.validate()?;
    let (op, initial) = build(problem)?;
    let (bound, reason) = op.stability_bound();
    if problem.dt > bound {
        return Err(FpError::StabilityBound {
            dt: problem.dt,
            bound,
            reason,
        });
    }

    let dt = problem.dt;
    let cells = initial.values().len();
    let initial_max = initial.max();
    let initial_mass = initial.mass();
    let n_steps = (problem.t_final / dt).round() as usize;
    let check_every = problem.steps_of(problem.check_interval);
    let snapshot_every = problem.snapshot_interval.map(|s| problem.steps_of(s));

    let mut solution = FpSolution {
        snapshots: vec![FpSnapshot {
            t: 0.0,
            mass: initial_mass,
            field: initial.clone(),
        }],
        mass_trace: vec![(0.0, initial_mass)],
        steps: 0,
        t_end: 0.0,
        stationary_at: None,
        clipped_cells: 0,
        max_significant_per_step: 0,
        worst_relative_undershoot: 0.0,
        stability_bound: bound,
        mass_loss_flagged: false,
    };

    let mut field = initial;
    let mut cur = field.values().to_vec();
    let mut scratch = vec![0.0; cells];
    let mut checkpoint = cur.clone();
    let mut peak = initial_max;

    for k in 1..=n_steps {
        let t = k as f64 * dt;
        let peak_before = peak;
        let report = step_in_place(|c, n| op.apply(c, n, dt), &mut cur, &mut scratch, peak);
        peak = report.max.max(0.0);
        if !report.finite {
            return Err(FpError::NonFinite { t });
        }
        if report.significant as f64 > MAX_NEGATIVE_FRACTION * cells as f64 {
            return Err(FpError::UnderResolved {
                t,
                cells: report.significant,
                fraction: 100.0 * report.significant as f64 / cells as f64,
            });
        }
        if report.max > BLOW_UP_FACTOR * initial_max {
            return Err(FpError::Unstable {
                t,
                max: report.max,
                initial: initial_max,
            });
        }
        solution.clipped_cells += report.clipped as u64;
        solution.max_significant_per_step =
            solution.max_significant_per_step.max(report.significant);
        if peak_before > 0.0 {
            solution.worst_relative_undershoot = solution
                .worst_relative_undershoot
                .min(report.min / peak_before);
        }
        solution.steps = k;
        solution.t_end = t;

        let at_check = k % check_every == 0;
        let at_snapshot = snapshot_every.is_some_and(|s| k % s == 0);
        if at_check || at_snapshot || k == n_steps {
            field.values_mut().copy_from_slice(&cur);
        }
        let mut stop = false;
        if at_check {
            let mass = field.mass();
            solution.mass_trace.push((t, mass));
            if let Some(tol) = problem.stationarity_tol {
                let change = cur
                    .iter()
                    .zip(&checkpoint)
                    .map(|(a, b)| (a - b).abs())
                    .fold(0.0, f64::max);
                if change / (check_every as f64 * dt) < tol {
                    solution.stationary_at = Some(t);
                    stop = true;
                }
                checkpoint.copy_from_slice(&cur);
            }
        }
        if at_snapshot || stop || k == n_steps {
            solution.snapshots.push(FpSnapshot {
                t,
                mass: field.mass(),
                field: field.clone(),
            });
        }
        if stop {
            break;
        }
    }
    solution.mass_loss_flagged = solution.mass_trace.iter().any(|(_, m)| *m < MASS_FLOOR)
        || solution.snapshots.iter().any(|s| s.mass < MASS_FLOOR);
    Ok(solution)
}
