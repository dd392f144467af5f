//! Experiment drivers. Each one computes its metrics and builds every
//! artifact in memory; nothing touches the disk here.

use std::collections::BTreeMap;

use cqrt_core::fokker_planck::{
    duffing_exact_field, solve_fp, Field2D, FpModel, FpProblem, FpSnapshot, FpSolution,
    GridAxis,
};
use cqrt_core::sde::simulate_ensemble_streaming;
use cqrt_core::stats::{
    marginal_y, pearson, pearson_correlation, pearson_correlation_windowed, BinSpec,
    DensityHistogram, PointSet, PointSetAccumulator,
};
use cqrt_core::wavefunction::{born_density, classical_density, magnitude_squared_complex};
use cqrt_core::{ComplexValue, QuantumState, SdeConfig};
use serde::Serialize;
use serde_json::Value;

use crate::config::{CrossStart, ExperimentConfig, ExperimentKind, PsiGrid};
use crate::error::CliError;

/// A file to be written under the output directory.
#[derive(Debug, Clone, PartialEq)]
pub struct Artifact {
    pub name: String,
    pub bytes: Vec<u8>,
}

/// Named scalar and array results of one run.
#[derive(Debug, Clone, Default, PartialEq, Serialize, serde::Deserialize)]
#[serde(transparent)]
pub struct Metrics(pub BTreeMap<String, Value>);

impl Metrics {
    pub fn set(&mut self, key: &str, value: impl Serialize) {
        let v = serde_json::to_value(value).expect("metrics are plain data");
        self.0.insert(key.to_string(), v);
    }

    pub fn get_f64(&self, key: &str) -> Option<f64> {
        self.0.get(key).and_then(Value::as_f64)
    }
}

#[derive(Debug, Clone, Default)]
pub struct Output {
    pub metrics: Metrics,
    pub artifacts: Vec<Artifact>,
}

impl Output {
    fn add(&mut self, name: impl Into<String>, bytes: Vec<u8>) {
        self.artifacts.push(Artifact {
            name: name.into(),
            bytes,
        });
    }
}

/// Metrics an experiment always reports, used to validate acceptance bounds
/// before running.
pub fn produced_metrics(config: &ExperimentConfig) -> Vec<&'static str> {
    let mut m = match config.experiment {
        ExperimentKind::BohmianHist | ExperimentKind::PointsetA => vec!["gamma"],
        ExperimentKind::PointsetB => vec!["gamma", "gamma_born", "gamma_margin"],
        ExperimentKind::Fp1d => vec!["max_error", "max_mass_deviation"],
        ExperimentKind::Fp2d => vec!["max_asymmetry", "max_mass_deviation", "min_node_fraction"],
        ExperimentKind::Duffing => vec!["l2_error", "max_mass_deviation"],
        ExperimentKind::PsiMagnitude => vec!["y_growth"],
    };
    if config.cross_validation.is_some() {
        m.push("cross_gamma");
    }
    m
}

/// Run a resolved config.
pub fn execute(config: &ExperimentConfig) -> Result<Output, CliError> {
    match config.experiment {
        ExperimentKind::BohmianHist | ExperimentKind::PointsetA | ExperimentKind::PointsetB => {
            histogram_experiment(config)
        }
        ExperimentKind::Fp1d => fp1d(config),
        ExperimentKind::Fp2d => fp2d(config),
        ExperimentKind::Duffing => duffing(config),
        ExperimentKind::PsiMagnitude => psi_magnitude(config.psi.as_ref().expect("resolved")),
    }
}

/// CSV with `header` and one row per index, all values as `{:.16e}`.
pub fn csv(header: &str, columns: &[&[f64]]) -> Vec<u8> {
    use std::fmt::Write;
    let rows = columns.first().map_or(0, |c| c.len());
    let mut s = String::with_capacity(24 * rows * columns.len() + header.len() + 1);
    s.push_str(header);
    s.push('\n');
    for r in 0..rows {
        for (k, col) in columns.iter().enumerate() {
            if k > 0 {
                s.push(',');
            }
            write!(s, "{:.16e}", col[r]).unwrap();
        }
        s.push('\n');
    }
    s.into_bytes()
}

fn to_bytes(write: impl FnOnce(&mut Vec<u8>) -> std::io::Result<()>) -> Vec<u8> {
    let mut buf = Vec::new();
    write(&mut buf).expect("writing to memory");
    buf
}

struct Ensemble {
    histogram: DensityHistogram,
    points: u64,
    clamp_count: u64,
    aborted: usize,
}

fn run_point_set(sde: &SdeConfig, set: PointSet, bins: BinSpec) -> Result<Ensemble, CliError> {
    let run = simulate_ensemble_streaming(sde, || {
        PointSetAccumulator::new(set, bins).expect("validated bins")
    })?;
    Ok(Ensemble {
        histogram: run.sink.histogram.finish()?,
        points: run.sink.points,
        clamp_count: run.clamp_count,
        aborted: run.aborted.len(),
    })
}

fn record_ensemble(m: &mut Metrics, prefix: &str, sde: &SdeConfig, e: &Ensemble) {
    m.set(&format!("{prefix}n_trajectories"), sde.n_trajectories);
    m.set(&format!("{prefix}points"), e.points);
    m.set(&format!("{prefix}points_in_range"), e.histogram.total_samples);
    m.set(&format!("{prefix}out_of_range"), e.histogram.out_of_range);
    m.set(&format!("{prefix}clamp_count"), e.clamp_count);
    m.set(&format!("{prefix}aborted"), e.aborted);
}

fn gamma(
    hist: &DensityHistogram,
    reference: impl Fn(f64) -> f64,
    window: Option<[f64; 2]>,
) -> Result<f64, CliError> {
    Ok(match window {
        Some([lo, hi]) => pearson_correlation_windowed(hist, reference, (lo, hi))?,
        None => pearson_correlation(hist, reference)?,
    })
}

fn histogram_experiment(config: &ExperimentConfig) -> Result<Output, CliError> {
    let sde = config.sde.as_ref().expect("resolved");
    let bins = config.histogram.expect("resolved");
    let set = match config.experiment {
        ExperimentKind::PointsetA => PointSet::A,
        _ => PointSet::B,
    };
    let state = sde.state;
    let e = run_point_set(sde, set, bins)?;
    let h = &e.histogram;
    let mut out = Output::default();
    record_ensemble(&mut out.metrics, "", sde, &e);
    let centers = h.centers();
    let born: Vec<f64> = centers.iter().map(|&x| born_density(&state, x)).collect();
    let born_gamma = gamma(h, |x| born_density(&state, x), config.window)?;
    if config.experiment == ExperimentKind::PointsetB {
        let classical: Vec<f64> = centers
            .iter()
            .map(|&x| classical_density(&state, x))
            .collect();
        let g = gamma(h, |x| classical_density(&state, x), config.window)?;
        out.metrics.set("gamma", g);
        out.metrics.set("gamma_born", born_gamma);
        out.metrics.set("gamma_margin", g - born_gamma);
        out.add(
            "plot.csv",
            csv(
                "bin_center,empirical,classical,born",
                &[&centers, &h.densities, &classical, &born],
            ),
        );
    } else {
        out.metrics.set("gamma", born_gamma);
        out.add(
            "plot.csv",
            csv("bin_center,empirical,reference", &[&centers, &h.densities, &born]),
        );
    }
    out.add("histogram.csv", to_bytes(|b| h.write_csv(b)));
    Ok(out)
}

/// Snapshots written as files: those on the configured cadence, plus the
/// first and last. The solve may store more (for time averages).
fn file_snapshots<'a>(problem: &FpProblem, s: &'a FpSolution) -> Vec<&'a FpSnapshot> {
    let Some(every) = problem.snapshot_interval else {
        return Vec::new();
    };
    let last = s.snapshots.len() - 1;
    s.snapshots
        .iter()
        .enumerate()
        .filter(|(k, p)| {
            let r = p.t / every;
            *k == 0 || *k == last || (r - r.round()).abs() * every < 0.5 * problem.dt
        })
        .map(|(_, p)| p)
        .collect()
}

fn fp_common(problem: &FpProblem, s: &FpSolution, out: &mut Output) {
    let m = &mut out.metrics;
    let masses = s
        .mass_trace
        .iter()
        .map(|p| p.1)
        .chain(s.snapshots.iter().map(|p| p.mass));
    let deviation = masses.fold(0.0f64, |d, v| d.max((v - 1.0).abs()));
    m.set("steps", s.steps);
    m.set("t_end", s.t_end);
    m.set("stationary_at", s.stationary_at);
    m.set("final_mass", s.final_snapshot().mass);
    m.set("max_mass_deviation", deviation);
    m.set("mass_loss_flagged", s.mass_loss_flagged);
    m.set("mass_trace", &s.mass_trace);
    m.set("clipped_cells", s.clipped_cells);
    m.set("max_significant_per_step", s.max_significant_per_step);
    m.set("worst_relative_undershoot", s.worst_relative_undershoot);
    m.set("stability_bound", s.stability_bound);
    let (t, mass): (Vec<f64>, Vec<f64>) = s.mass_trace.iter().copied().unzip();
    out.add("mass.csv", csv("t,mass", &[&t, &mass]));
    let snaps = file_snapshots(problem, s);
    if !snaps.is_empty() {
        let idx: Vec<f64> = (0..snaps.len()).map(|k| k as f64).collect();
        let ts: Vec<f64> = snaps.iter().map(|p| p.t).collect();
        let ms: Vec<f64> = snaps.iter().map(|p| p.mass).collect();
        out.add("snapshots.csv", csv("index,t,mass", &[&idx, &ts, &ms]));
        for (k, snap) in snaps.iter().enumerate() {
            out.add(
                format!("snapshot_{k:03}.csv"),
                to_bytes(|b| snap.field.write_csv(b)),
            );
        }
    }
}

fn fp1d(config: &ExperimentConfig) -> Result<Output, CliError> {
    let problem = config.fp.as_ref().expect("resolved");
    let FpModel::Bohmian1d { state } = problem.model else {
        unreachable!("resolved config")
    };
    let s = solve_fp(problem)?;
    let field = s.final_field().as_line().expect("line model");
    let xs = field.axis.coords();
    let born: Vec<f64> = xs.iter().map(|&x| born_density(&state, x)).collect();
    let [lo, hi] = config.window.expect("resolved");
    let max_error = xs
        .iter()
        .zip(field.values.iter().zip(&born))
        .filter(|(x, _)| **x >= lo && **x <= hi)
        .map(|(_, (a, b))| (a - b).abs())
        .fold(0.0, f64::max);
    let mut out = Output::default();
    out.metrics.set("max_error", max_error);
    fp_common(problem, &s, &mut out);
    out.add("rho.csv", to_bytes(|b| field.write_csv(b)));
    out.add(
        "comparison.csv",
        csv("x,fp,born", &[&xs, &field.values, &born]),
    );
    Ok(out)
}

/// Linear interpolation of bin densities between bin centres.
pub fn interpolate(h: &DensityHistogram, x: f64) -> f64 {
    let c = h.centers();
    let k = c.partition_point(|v| *v <= x);
    if k == 0 || k == c.len() {
        return h.density_at(x);
    }
    let w = (x - c[k - 1]) / (c[k] - c[k - 1]);
    (1.0 - w) * h.densities[k - 1] + w * h.densities[k]
}

/// Trapezoid-in-time average of marginals over `[lo, hi]`.
fn time_average(marginals: &[(f64, DensityHistogram)], (lo, hi): (f64, f64)) -> Vec<f64> {
    let slack = 1e-9 * hi.abs().max(1.0);
    let inside: Vec<&(f64, DensityHistogram)> = marginals
        .iter()
        .filter(|(t, _)| *t >= lo - slack && *t <= hi + slack)
        .collect();
    let nb = marginals[0].1.n_bins();
    if inside.len() == 1 {
        return inside[0].1.densities.clone();
    }
    let mut avg = vec![0.0; nb];
    let mut span = 0.0;
    for w in inside.windows(2) {
        let dt = w[1].0 - w[0].0;
        span += dt;
        let (a, b) = (&w[0].1.densities, &w[1].1.densities);
        for (v, (x, y)) in avg.iter_mut().zip(a.iter().zip(b)) {
            *v += 0.5 * dt * (x + y);
        }
    }
    avg.iter().map(|v| v / span).collect()
}

fn fp2d(config: &ExperimentConfig) -> Result<Output, CliError> {
    let problem = config.fp.as_ref().expect("resolved");
    let FpModel::Complex2d { state } = problem.model else {
        unreachable!("resolved config")
    };
    let cv = config.cross_validation.as_ref();
    let mut solve = problem.clone();
    if let Some(cv) = cv {
        solve.snapshot_interval = Some(match problem.snapshot_interval {
            Some(every) if every <= cv.average_interval => every,
            _ => cv.average_interval,
        });
    }
    let s = solve_fp(&solve)?;
    let field = s.final_field().as_plane().expect("plane model");
    let asymmetry = s
        .snapshots
        .iter()
        .map(|p| p.field.as_plane().expect("plane model").point_asymmetry())
        .fold(0.0, f64::max);
    let marginal = marginal_y(field)?;
    let peak = marginal.densities.iter().copied().fold(0.0, f64::max);
    let nodes = state.real_nodes();
    let node_values: Vec<f64> = nodes.iter().map(|&x| interpolate(&marginal, x)).collect();
    let min_fraction = node_values
        .iter()
        .map(|v| v / peak)
        .fold(f64::INFINITY, f64::min);
    let mut out = Output::default();
    let m = &mut out.metrics;
    m.set("max_asymmetry", asymmetry);
    m.set("grid_spacing", field.x.spacing());
    m.set("grid_points", field.nx());
    m.set("marginal_peak", peak);
    m.set("nodes", &nodes);
    m.set("node_values", &node_values);
    m.set("min_node_fraction", min_fraction);
    fp_common(problem, &s, &mut out);
    let centers = marginal.centers();
    let born: Vec<f64> = centers.iter().map(|&x| born_density(&state, x)).collect();
    out.metrics.set(
        "gamma_marginal_born",
        pearson(&marginal.densities, &born)?,
    );
    out.add("field.csv", to_bytes(|b| field.write_csv(b)));
    out.add("marginal.csv", to_bytes(|b| marginal.write_csv(b)));
    out.add(
        "plot.csv",
        csv(
            "bin_center,empirical,reference",
            &[&centers, &marginal.densities, &born],
        ),
    );
    if let Some(cv) = cv {
        let marginals = s
            .snapshots
            .iter()
            .map(|p| Ok((p.t, marginal_y(p.field.as_plane().expect("plane model"))?)))
            .collect::<Result<Vec<_>, CliError>>()?;
        let reference = time_average(&marginals, cv.window());
        let mut sde = cv.sde.clone();
        if cv.start == CrossStart::FpInitial {
            let f0 = s.snapshots[0].field.as_plane().expect("plane model");
            sde.initial_positions = f0
                .systematic_sample(sde.n_trajectories)
                .into_iter()
                .map(|(x, y)| ComplexValue::new(x, y))
                .collect();
        }
        let n = marginal.n_bins();
        let bins = BinSpec::new(marginal.bin_edges[0], marginal.bin_edges[n], n)?;
        let e = run_point_set(&sde, PointSet::B, bins)?;
        let g = pearson(&e.histogram.densities, &reference)?;
        out.metrics.set("cross_gamma", g);
        out.metrics.set(
            "cross_gamma_final",
            pearson(&e.histogram.densities, &marginal.densities)?,
        );
        record_ensemble(&mut out.metrics, "cross_", &sde, &e);
        out.add(
            "crossval.csv",
            csv(
                "bin_center,empirical,reference,final",
                &[&centers, &e.histogram.densities, &reference, &marginal.densities],
            ),
        );
    }
    Ok(out)
}

fn duffing(config: &ExperimentConfig) -> Result<Output, CliError> {
    let problem = config.fp.as_ref().expect("resolved");
    let FpModel::Duffing { params } = problem.model else {
        unreachable!("resolved config")
    };
    let s = solve_fp(problem)?;
    let field = s.final_field().as_plane().expect("plane model");
    let exact = duffing_exact_field(&params, field.x, field.y);
    let margin = config.interior_margin.expect("resolved");
    let l2 = field
        .relative_l2(&exact, margin)
        .ok_or_else(|| CliError::Config(format!("interior margin {margin} leaves no cells")))?;
    let mut out = Output::default();
    out.metrics.set("l2_error", l2);
    fp_common(problem, &s, &mut out);
    out.add("field.csv", to_bytes(|b| field.write_csv(b)));
    out.add("exact.csv", to_bytes(|b| exact.write_csv(b)));
    Ok(out)
}

fn psi_magnitude(grid: &PsiGrid) -> Result<Output, CliError> {
    let axis = GridAxis::new(-grid.half_width, grid.half_width, grid.points)?;
    let state: QuantumState = grid.state;
    let coords = axis.coords();
    let mut values = Vec::with_capacity(coords.len() * coords.len());
    for &x in &coords {
        for &y in &coords {
            let v = magnitude_squared_complex(&state, ComplexValue::new(x, y))
                .map_err(|e| CliError::Config(format!("psi grid: {e}")))?;
            values.push(v);
        }
    }
    let field = Field2D {
        x: axis,
        y: axis,
        values,
    };
    let nearest = |t: f64| {
        (0..coords.len())
            .min_by(|&a, &b| (coords[a] - t).abs().total_cmp(&(coords[b] - t).abs()))
            .expect("non-empty axis")
    };
    let (i, j0) = (nearest(grid.probe_x), nearest(0.0));
    let top = field.get(i, coords.len() - 1);
    let axis_value = field.get(i, j0);
    let mut out = Output::default();
    let m = &mut out.metrics;
    m.set("probe_x", coords[i]);
    m.set("value_on_axis", axis_value);
    m.set("value_at_edge", top);
    m.set("y_growth", top / axis_value);
    m.set("grid_integral", field.mass());
    m.set(
        "max_value",
        field.values.iter().copied().fold(0.0, f64::max),
    );
    let (mut xs, mut ys) = (Vec::new(), Vec::new());
    for &x in &coords {
        for &y in &coords {
            xs.push(x);
            ys.push(y);
        }
    }
    out.add(
        "psi.csv",
        csv("x,y,magnitude_sq", &[&xs, &ys, &field.values]),
    );
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn csv_layout() {
        let bytes = csv("a,b", &[&[1.0, 2.0], &[0.5, -0.25]]);
        let text = String::from_utf8(bytes).unwrap();
        assert_eq!(
            text,
            "a,b\n1.0000000000000000e0,5.0000000000000000e-1\n2.0000000000000000e0,-2.5000000000000000e-1\n"
        );
    }

    #[test]
    fn interpolation_between_centres() {
        let h = DensityHistogram::from_weights(vec![0.0, 1.0, 2.0], vec![1.0, 3.0], 0).unwrap();
        assert!((interpolate(&h, 1.0) - 0.5).abs() < 1e-15);
        assert!((interpolate(&h, 0.25) - 0.25).abs() < 1e-15);
        assert_eq!(interpolate(&h, 5.0), 0.0);
    }

    #[test]
    fn time_average_is_trapezoid() {
        let h = |v: f64| DensityHistogram::from_weights(vec![0.0, 1.0, 2.0], vec![v, 1.0 - v], 0).unwrap();
        let ms = vec![(0.0, h(0.0)), (1.0, h(0.5)), (3.0, h(1.0))];
        let avg = time_average(&ms, (0.0, 3.0));
        // (0.5 * (0 + 0.5) + 2 * 0.5 * (0.5 + 1)) / 3
        assert!((avg[0] - 1.75 / 3.0).abs() < 1e-15);
        assert_eq!(time_average(&ms, (1.0, 1.0))[0], 0.5);
    }

    #[test]
    fn psi_grows_off_axis() {
        let out = psi_magnitude(&PsiGrid::default()).unwrap();
        let g = out.metrics.get_f64("y_growth").unwrap();
        let expected = {
            let s = QuantumState::new(1);
            magnitude_squared_complex(&s, ComplexValue::new(1.0, 3.0)).unwrap()
                / born_density(&s, 1.0)
        };
        assert!((g / expected - 1.0).abs() < 1e-9, "{g} vs {expected}");
        assert!(g > 1e3);
    }
}
