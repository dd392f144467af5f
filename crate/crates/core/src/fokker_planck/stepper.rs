use num_complex::Complex64;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::grid::{Field1D, Field2D, GridAxis};
use super::solver::DuffingParams;
use crate::error::FpError;
use crate::wavefunction::{
    complex_drift_clamped, drift_divergence, hermite, log_derivative, log_derivative_dz,
    QuantumState, DRIFT_CLAMP,
};

/// Points with `|H_n(x)|` below this are pinned to zero on real-axis grids.
const PIN_THRESHOLD: f64 = 1e-9;

/// A negative value counts as a significant undershoot below this fraction
/// of the current peak density.
const NEGATIVE_FRACTION: f64 = 1e-6;

/// How the advection term `-div(v rho)` is discretized.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum StencilForm {
    /// Central difference of the flux: `-[(v rho)_{i+1} - (v rho)_{i-1}] / 2h`.
    #[default]
    Conservative,
    /// Product rule: `-(div v) rho - v . grad rho`, each factor by central
    /// differences.
    Expanded,
}

/// Bookkeeping from one explicit step.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct StepReport {
    /// Cells clipped from a negative value to zero.
    pub clipped: usize,
    /// Clipped cells whose undershoot exceeded `1e-6` of the peak.
    pub significant: usize,
    /// Most negative value before clipping (0 if none).
    pub min: f64,
    /// Largest value after the step.
    pub max: f64,
    pub finite: bool,
}

fn clip(values: &mut [f64], peak: f64) -> StepReport {
    const LANES: usize = 8;
    // lane-wise reductions vectorize; a NaN or infinity anywhere poisons the sum
    let mut sums = [0.0; LANES];
    let mut mins = [f64::INFINITY; LANES];
    let mut maxes = [f64::NEG_INFINITY; LANES];
    let mut chunks = values.chunks_exact(LANES);
    for chunk in &mut chunks {
        for k in 0..LANES {
            sums[k] += chunk[k];
            mins[k] = mins[k].min(chunk[k]);
            maxes[k] = maxes[k].max(chunk[k]);
        }
    }
    for (k, &x) in chunks.remainder().iter().enumerate() {
        sums[k] += x;
        mins[k] = mins[k].min(x);
        maxes[k] = maxes[k].max(x);
    }
    let mut report = StepReport {
        finite: sums.iter().sum::<f64>().is_finite(),
        max: maxes.iter().copied().fold(0.0, f64::max),
        ..StepReport::default()
    };
    if mins.iter().any(|m| *m < 0.0) {
        let floor = -NEGATIVE_FRACTION * peak;
        for v in values.iter_mut() {
            if *v < 0.0 {
                report.clipped += 1;
                report.significant += (*v < floor) as usize;
                report.min = report.min.min(*v);
                *v = 0.0;
            }
        }
    }
    report
}

fn peak(values: &[f64]) -> f64 {
    values.iter().copied().fold(0.0, f64::max)
}

/// Drift-diffusion operator on a rectangular grid with Dirichlet-zero edges.
#[derive(Debug, Clone)]
pub struct PlaneOperator {
    pub x: GridAxis,
    pub y: GridAxis,
    pub vx: Vec<f64>,
    pub vy: Vec<f64>,
    /// `d vx/dx + d vy/dy`, used by the expanded form.
    pub div: Vec<f64>,
    /// Diffusion matrix `G = sigma sigma^T`.
    pub g: [[f64; 2]; 2],
    pub form: StencilForm,
}

impl PlaneOperator {
    /// Build from a drift callback returning `(vx, vy, div v)` at a point.
    pub fn from_drift(
        x: GridAxis,
        y: GridAxis,
        g: [[f64; 2]; 2],
        form: StencilForm,
        drift: impl Fn(f64, f64) -> Result<(f64, f64, f64), FpError> + Sync,
    ) -> Result<Self, FpError> {
        let xs = x.coords();
        let ys = y.coords();
        let cells: Vec<(f64, f64, f64)> = xs
            .par_iter()
            .flat_map_iter(|&xv| ys.iter().map(move |&yv| (xv, yv)))
            .map(|(xv, yv)| drift(xv, yv))
            .collect::<Result<_, _>>()?;
        let mut vx = Vec::with_capacity(cells.len());
        let mut vy = Vec::with_capacity(cells.len());
        let mut div = Vec::with_capacity(cells.len());
        for (a, b, c) in cells {
            vx.push(a);
            vy.push(b);
            div.push(c);
        }
        Ok(Self {
            x,
            y,
            vx,
            vy,
            div,
            g,
            form,
        })
    }

    /// Complex-plane operator: drift `(Re u*, Im u*)` clamped to the drift
    /// limit, noise `(-D, D)` with `D^2 = 1/2`, so the diffusion term is
    /// `(1/4)(rho_xx - 2 rho_xy + rho_yy)`.
    pub fn complex(
        state: &QuantumState,
        x: GridAxis,
        y: GridAxis,
        form: StencilForm,
    ) -> Result<Self, FpError> {
        let state = *state;
        Self::from_drift(x, y, [[0.5, -0.5], [-0.5, 0.5]], form, move |xv, yv| {
            let z = Complex64::new(xv, yv);
            let u = complex_drift_clamped(&state, z, DRIFT_CLAMP)?.velocity;
            let div = drift_divergence(&state, z)?;
            Ok((u.re, u.im, div))
        })
    }

    /// Duffing operator in `(X, Y)`: drift `(Y, -(2 alpha Y + beta X + gamma X^3))`,
    /// diffusion `sigma^2` in `Y` only.
    pub fn duffing(
        params: &DuffingParams,
        x: GridAxis,
        y: GridAxis,
        form: StencilForm,
    ) -> Result<Self, FpError> {
        let p = *params;
        let s2 = p.sigma * p.sigma;
        Self::from_drift(x, y, [[0.0, 0.0], [0.0, s2]], form, move |xv, yv| {
            let vy = -(2.0 * p.alpha * yv + p.beta * xv + p.gamma * xv.powi(3));
            Ok((yv, vy, -2.0 * p.alpha))
        })
    }

    pub fn cells(&self) -> usize {
        self.x.points * self.y.points
    }

    /// Largest stable `dt`: `0.2 h^2 / max G_ii` and `0.2 h / max |v|`.
    pub fn stability_bound(&self) -> (f64, &'static str) {
        let h = self.x.spacing().min(self.y.spacing());
        let gmax = self.g[0][0].max(self.g[1][1]);
        let diffusive = if gmax > 0.0 {
            0.2 * h * h / gmax
        } else {
            f64::INFINITY
        };
        let vmax = self
            .vx
            .iter()
            .zip(&self.vy)
            .map(|(a, b)| a.hypot(*b))
            .fold(0.0, f64::max);
        let advective = if vmax > 0.0 {
            0.2 * h / vmax
        } else {
            f64::INFINITY
        };
        if diffusive <= advective {
            (diffusive, "diffusion: dt <= 0.2 h^2 / max G_ii")
        } else {
            (advective, "advection: dt <= 0.2 h / max |v|")
        }
    }

    /// Write one explicit Euler step of `cur` into `next` (edges zero).
    pub fn apply(&self, cur: &[f64], next: &mut [f64], dt: f64) {
        let nx = self.x.points;
        let ny = self.y.points;
        let hx = self.x.spacing();
        let hy = self.y.spacing();
        let (ihx2, ihy2) = (0.5 / hx, 0.5 / hy);
        let (ihxx, ihyy, ihxy) = (1.0 / (hx * hx), 1.0 / (hy * hy), 0.25 / (hx * hy));
        let [[gxx, gxy], [_, gyy]] = self.g;
        let (dxx, dxy, dyy) = (0.5 * gxx, gxy, 0.5 * gyy);
        let form = self.form;
        let (vx, vy, div) = (&self.vx, &self.vy, &self.div);

        next.par_chunks_mut(ny).enumerate().with_min_len(32).for_each(|(i, row)| {
            if i == 0 || i + 1 == nx {
                row.fill(0.0);
                return;
            }
            let (rw, rc, re) = (band(ny, cur, i - 1), band(ny, cur, i), band(ny, cur, i + 1));
            let (vxw, vxe, vyc) = (band(ny, vx, i - 1), band(ny, vx, i + 1), band(ny, vy, i));
            let (vxc, dc) = (band(ny, vx, i), band(ny, div, i));
            row[0] = 0.0;
            row[ny - 1] = 0.0;
            let interior = &mut row[1..ny - 1];
            let cells = rw
                .windows(3)
                .zip(rc.windows(3))
                .zip(re.windows(3))
                .zip(vyc.windows(3));
            let diffusion = |w: &[f64], c: &[f64], e: &[f64]| {
                let rxx = (e[1] - 2.0 * c[1] + w[1]) * ihxx;
                let ryy = (c[2] - 2.0 * c[1] + c[0]) * ihyy;
                let rxy = (e[2] - e[0] - w[2] + w[0]) * ihxy;
                dxx * rxx + dxy * rxy + dyy * ryy
            };
            match form {
                StencilForm::Conservative => {
                    let flux_x = vxw[1..].iter().zip(&vxe[1..]);
                    for (out, ((((w, c), e), vy), (vw, ve))) in
                        interior.iter_mut().zip(cells.zip(flux_x))
                    {
                        let advection = -(ve * e[1] - vw * w[1]) * ihx2
                            - (vy[2] * c[2] - vy[0] * c[0]) * ihy2;
                        *out = c[1] + dt * (advection + diffusion(w, c, e));
                    }
                }
                StencilForm::Expanded => {
                    let local = vxc[1..].iter().zip(&dc[1..]);
                    for (out, ((((w, c), e), vy), (vx, d))) in
                        interior.iter_mut().zip(cells.zip(local))
                    {
                        let advection = -d * c[1]
                            - vx * (e[1] - w[1]) * ihx2
                            - vy[1] * (c[2] - c[0]) * ihy2;
                        *out = c[1] + dt * (advection + diffusion(w, c, e));
                    }
                }
            }
        });
    }
}

fn band(ny: usize, v: &[f64], k: usize) -> &[f64] {
    &v[k * ny..(k + 1) * ny]
}

/// Drift-diffusion operator on a line with Dirichlet-zero ends and
/// additional points pinned to zero.
#[derive(Debug, Clone)]
pub struct LineOperator {
    pub axis: GridAxis,
    pub v: Vec<f64>,
    /// `-dv/dx`, used by the expanded form.
    pub reaction: Vec<f64>,
    pub g: f64,
    /// Points held at zero: both ends plus any pinned nodes.
    pub fixed: Vec<bool>,
    pub form: StencilForm,
}

impl LineOperator {
    /// Real-axis Bohmian operator `-d(v_B rho)/dx + (1/2) rho''` with
    /// `v_B = d(ln Psi_n)/dx`. Grid points on a node of `Psi_n` are pinned
    /// to zero, where the density of every solution vanishes.
    pub fn bohmian(
        state: &QuantumState,
        axis: GridAxis,
        form: StencilForm,
    ) -> Result<Self, FpError> {
        let n = axis.points;
        let mut v = vec![0.0; n];
        let mut reaction = vec![0.0; n];
        let mut fixed = vec![false; n];
        fixed[0] = true;
        fixed[n - 1] = true;
        for (i, x) in axis.coords().into_iter().enumerate() {
            let z = Complex64::new(x, 0.0);
            if hermite(state.n(), z).norm() < PIN_THRESHOLD {
                fixed[i] = true;
                continue;
            }
            let f = log_derivative(state, z)?.re;
            v[i] = f.clamp(-DRIFT_CLAMP, DRIFT_CLAMP);
            reaction[i] = -log_derivative_dz(state, z)?.re;
        }
        Ok(Self {
            axis,
            v,
            reaction,
            g: 1.0,
            fixed,
            form,
        })
    }

    pub fn stability_bound(&self) -> (f64, &'static str) {
        let h = self.axis.spacing();
        let diffusive = 0.2 * h * h / self.g;
        let vmax = self
            .v
            .iter()
            .zip(&self.fixed)
            .filter(|(_, f)| !**f)
            .map(|(v, _)| v.abs())
            .fold(0.0, f64::max);
        let advective = if vmax > 0.0 {
            0.2 * h / vmax
        } else {
            f64::INFINITY
        };
        if diffusive <= advective {
            (diffusive, "diffusion: dt <= 0.2 h^2 / G")
        } else {
            (advective, "advection: dt <= 0.2 h / max |v|")
        }
    }

    pub fn apply(&self, cur: &[f64], next: &mut [f64], dt: f64) {
        let h = self.axis.spacing();
        let (ih2, ihh) = (0.5 / h, 1.0 / (h * h));
        let d = 0.5 * self.g;
        for k in 0..cur.len() {
            if self.fixed[k] {
                next[k] = 0.0;
                continue;
            }
            let (r, re, rw) = (cur[k], cur[k + 1], cur[k - 1]);
            let advection = match self.form {
                StencilForm::Conservative => -(self.v[k + 1] * re - self.v[k - 1] * rw) * ih2,
                StencilForm::Expanded => self.reaction[k] * r - self.v[k] * (re - rw) * ih2,
            };
            next[k] = r + dt * (advection + d * (re - 2.0 * r + rw) * ihh);
        }
    }
}

/// One explicit step of the real-axis equation, with negative undershoot
/// clipped to zero.
pub fn fp_step_1d(op: &LineOperator, rho: &Field1D, dt: f64) -> (Field1D, StepReport) {
    let mut next = Field1D::zeros(rho.axis);
    op.apply(&rho.values, &mut next.values, dt);
    let report = clip(&mut next.values, peak(&rho.values));
    (next, report)
}

/// One explicit step of a planar drift-diffusion equation, with negative
/// undershoot clipped to zero.
pub fn fp_step_2d(op: &PlaneOperator, rho: &Field2D, dt: f64) -> (Field2D, StepReport) {
    let mut next = Field2D::zeros(rho.x, rho.y);
    op.apply(&rho.values, &mut next.values, dt);
    let report = clip(&mut next.values, peak(&rho.values));
    (next, report)
}

/// One explicit step of the Duffing equation on `rho`'s grid.
pub fn duffing_step(
    params: &DuffingParams,
    rho: &Field2D,
    dt: f64,
) -> Result<(Field2D, StepReport), FpError> {
    let op = PlaneOperator::duffing(params, rho.x, rho.y, StencilForm::Conservative)?;
    Ok(fp_step_2d(&op, rho, dt))
}

/// Step `cur` into `scratch`, clip, and swap. `peak` is the maximum of `cur`.
pub(super) fn step_in_place(
    apply: impl Fn(&[f64], &mut [f64]),
    cur: &mut Vec<f64>,
    scratch: &mut Vec<f64>,
    peak: f64,
) -> StepReport {
    apply(cur, scratch);
    let report = clip(scratch, peak);
    std::mem::swap(cur, scratch);
    report
}
