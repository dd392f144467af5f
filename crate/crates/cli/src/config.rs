//! Experiment configuration files.
//!
//! A config is a JSON object naming an `experiment` plus the sections that
//! experiment reads. Missing sections take documented defaults; sections the
//! experiment does not read are rejected so typos surface early.

use std::path::{Path, PathBuf};

use cqrt_core::fokker_planck::{DuffingParams, FpModel, FpProblem};
use cqrt_core::stats::BinSpec;
use cqrt_core::{QuantumState, SdeConfig, SdeKind};
use serde::{Deserialize, Serialize};

use crate::error::CliError;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ExperimentKind {
    /// Histogram of real-axis Bohmian trajectories against the Born density.
    BohmianHist,
    /// Real-axis crossings of complex trajectories against the Born density.
    PointsetA,
    /// Real parts of complex trajectory samples against classical and Born densities.
    PointsetB,
    /// Real-axis Fokker-Planck solve against the Born density.
    Fp1d,
    /// Complex-plane Fokker-Planck solve and its `y` marginal.
    Fp2d,
    /// Duffing Fokker-Planck solve against the exact stationary density.
    Duffing,
    /// `|Psi(z)|^2` over a patch of the complex plane.
    PsiMagnitude,
}

impl ExperimentKind {
    pub fn name(self) -> &'static str {
        match self {
            ExperimentKind::BohmianHist => "bohmian_hist",
            ExperimentKind::PointsetA => "pointset_a",
            ExperimentKind::PointsetB => "pointset_b",
            ExperimentKind::Fp1d => "fp1d",
            ExperimentKind::Fp2d => "fp2d",
            ExperimentKind::Duffing => "duffing",
            ExperimentKind::PsiMagnitude => "psi_magnitude",
        }
    }

    fn reads(self) -> &'static [Section] {
        use Section::*;
        match self {
            ExperimentKind::BohmianHist | ExperimentKind::PointsetA | ExperimentKind::PointsetB => {
                &[Sde, Histogram, Window]
            }
            ExperimentKind::Fp1d => &[Fp, Window],
            ExperimentKind::Fp2d => &[Fp, CrossValidation],
            ExperimentKind::Duffing => &[Fp, InteriorMargin],
            ExperimentKind::PsiMagnitude => &[Psi],
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum Section {
    Sde,
    Histogram,
    Window,
    Fp,
    CrossValidation,
    InteriorMargin,
    Psi,
}

impl Section {
    fn key(self) -> &'static str {
        match self {
            Section::Sde => "sde",
            Section::Histogram => "histogram",
            Section::Window => "window",
            Section::Fp => "fp",
            Section::CrossValidation => "cross_validation",
            Section::InteriorMargin => "interior_margin",
            Section::Psi => "psi",
        }
    }
}

/// Where cross-validation trajectories start.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum CrossStart {
    /// Systematic resample of the solver's initial density, one start per
    /// trajectory; `sde.initial_positions` is ignored.
    #[default]
    FpInitial,
    /// `sde.initial_positions` as given.
    Configured,
}

/// Ensemble that feeds a point-set-B histogram binned like the FP marginal.
/// The reference is the FP marginal averaged over the ensemble's recording
/// window `[sde.burn_in_time, sde.n_steps * sde.dt]`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct CrossValidation {
    pub sde: SdeConfig,
    pub start: CrossStart,
    /// Spacing in time of the marginals entering the average.
    pub average_interval: f64,
}

impl Default for CrossValidation {
    fn default() -> Self {
        Self {
            sde: SdeConfig {
                n_trajectories: 10_000,
                n_steps: 5_000,
                ..SdeConfig::default()
            },
            start: CrossStart::FpInitial,
            average_interval: 0.1,
        }
    }
}

impl CrossValidation {
    pub fn window(&self) -> (f64, f64) {
        (self.sde.burn_in_time, self.sde.n_steps as f64 * self.sde.dt)
    }
}

/// Square patch `[-half_width, half_width]^2` sampled on `points^2` nodes.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PsiGrid {
    pub state: QuantumState,
    pub half_width: f64,
    pub points: usize,
    /// Column used for the growth-along-`y` metric (nearest grid point).
    pub probe_x: f64,
}

impl Default for PsiGrid {
    fn default() -> Self {
        Self {
            state: QuantumState::new(1),
            half_width: 3.0,
            points: 121,
            probe_x: 1.0,
        }
    }
}

/// Optional bounds checked after a run; any violation exits with status 4.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct Acceptance {
    pub min_gamma: Option<f64>,
    pub min_gamma_margin: Option<f64>,
    pub max_error: Option<f64>,
    pub max_l2: Option<f64>,
    pub max_asymmetry: Option<f64>,
    pub max_mass_deviation: Option<f64>,
    pub min_node_fraction: Option<f64>,
    pub min_cross_gamma: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub experiment: ExperimentKind,
    /// Where artifacts go unless `--out` is given; defaults to `cqrt-out/<experiment>`.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub output_dir: Option<PathBuf>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub sde: Option<SdeConfig>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub histogram: Option<BinSpec>,
    /// Comparison window `[lo, hi]` for correlations and max errors.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub window: Option<[f64; 2]>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub fp: Option<FpProblem>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub cross_validation: Option<CrossValidation>,
    /// Boundary cells excluded from the Duffing L2 error.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub interior_margin: Option<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub psi: Option<PsiGrid>,
    #[serde(default)]
    pub acceptance: Acceptance,
}

impl ExperimentConfig {
    pub fn from_json(text: &str) -> Result<Self, CliError> {
        serde_json::from_str(text).map_err(|e| CliError::Config(e.to_string()))
    }

    pub fn load(path: &Path) -> Result<Self, CliError> {
        let text = std::fs::read_to_string(path).map_err(|e| CliError::io(path, e))?;
        Self::from_json(&text).map_err(|e| match e {
            CliError::Config(msg) => CliError::Config(format!("{}: {msg}", path.display())),
            other => other,
        })
    }

    fn present(&self, section: Section) -> bool {
        match section {
            Section::Sde => self.sde.is_some(),
            Section::Histogram => self.histogram.is_some(),
            Section::Window => self.window.is_some(),
            Section::Fp => self.fp.is_some(),
            Section::CrossValidation => self.cross_validation.is_some(),
            Section::InteriorMargin => self.interior_margin.is_some(),
            Section::Psi => self.psi.is_some(),
        }
    }

    /// Fill defaults for every section the experiment reads and validate
    /// them. The result is what gets echoed into the summary.
    pub fn resolve(mut self, seed: Option<u64>) -> Result<Self, CliError> {
        let kind = self.experiment;
        let all = [
            Section::Sde,
            Section::Histogram,
            Section::Window,
            Section::Fp,
            Section::CrossValidation,
            Section::InteriorMargin,
            Section::Psi,
        ];
        for s in all {
            if self.present(s) && !kind.reads().contains(&s) {
                return Err(CliError::Config(format!(
                    "section `{}` is not used by experiment {}",
                    s.key(),
                    kind.name()
                )));
            }
        }
        match kind {
            ExperimentKind::BohmianHist | ExperimentKind::PointsetA | ExperimentKind::PointsetB => {
                let want = if kind == ExperimentKind::BohmianHist {
                    SdeKind::Bohmian
                } else {
                    SdeKind::Complex
                };
                let mut sde = self.sde.take().unwrap_or_else(|| SdeConfig {
                    kind: want,
                    ..SdeConfig::default()
                });
                if sde.kind != want {
                    return Err(CliError::Config(format!(
                        "experiment {} needs sde.kind = {:?}",
                        kind.name(),
                        want
                    )));
                }
                if let Some(seed) = seed {
                    sde.master_seed = seed;
                }
                sde.validate()?;
                let bins = self.histogram.unwrap_or(BinSpec {
                    lo: -5.0,
                    hi: 5.0,
                    bins: 100,
                });
                bins.validate()?;
                self.sde = Some(sde);
                self.histogram = Some(bins);
                if kind == ExperimentKind::PointsetB && self.window.is_none() {
                    let a = 0.9 * self.sde.as_ref().unwrap().state.classical_amplitude();
                    self.window = Some([-a, a]);
                }
            }
            ExperimentKind::Fp1d => {
                let fp = self.fp.take().unwrap_or_else(|| FpProblem::bohmian_1d(1));
                require_model(&fp, kind, |m| matches!(m, FpModel::Bohmian1d { .. }))?;
                self.fp = Some(fp);
                self.window.get_or_insert([-4.0, 4.0]);
            }
            ExperimentKind::Fp2d => {
                let fp = self.fp.take().unwrap_or_else(|| FpProblem::complex_2d(1));
                require_model(&fp, kind, |m| matches!(m, FpModel::Complex2d { .. }))?;
                if let Some(cv) = self.cross_validation.as_mut() {
                    if let Some(seed) = seed {
                        cv.sde.master_seed = seed;
                    }
                    if cv.sde.kind != SdeKind::Complex {
                        return Err(CliError::Config(
                            "cross_validation.sde.kind must be complex".into(),
                        ));
                    }
                    let FpModel::Complex2d { state } = fp.model else {
                        unreachable!()
                    };
                    if cv.sde.state != state {
                        return Err(CliError::Config(
                            "cross_validation.sde.state differs from fp.model.state".into(),
                        ));
                    }
                    cv.sde.validate()?;
                    let (_, end) = cv.window();
                    if end > fp.t_final * (1.0 + 1e-12) {
                        return Err(CliError::Config(format!(
                            "cross_validation records up to t = {end} past fp.t_final = {}",
                            fp.t_final
                        )));
                    }
                    if fp.stationarity_tol.is_some() {
                        return Err(CliError::Config(
                            "cross_validation needs fp.stationarity_tol = null so the solve covers the recording window".into(),
                        ));
                    }
                    if !(cv.average_interval > 0.0 && cv.average_interval <= end - cv.sde.burn_in_time) {
                        return Err(CliError::Config(
                            "cross_validation.average_interval must be positive and fit the recording window".into(),
                        ));
                    }
                }
                self.fp = Some(fp);
            }
            ExperimentKind::Duffing => {
                let fp = self
                    .fp
                    .take()
                    .unwrap_or_else(|| FpProblem::duffing(DuffingParams::default()));
                require_model(&fp, kind, |m| matches!(m, FpModel::Duffing { .. }))?;
                self.fp = Some(fp);
                self.interior_margin.get_or_insert(1);
            }
            ExperimentKind::PsiMagnitude => {
                let psi = self.psi.unwrap_or_default();
                if !(psi.half_width > 0.0 && psi.half_width.is_finite()) || psi.points < 3 {
                    return Err(CliError::Config(
                        "psi grid needs half_width > 0 and at least 3 points".into(),
                    ));
                }
                self.psi = Some(psi);
            }
        }
        if let Some([lo, hi]) = self.window {
            if !(lo < hi) {
                return Err(CliError::Config(format!("window [{lo}, {hi}] is empty")));
            }
        }
        Ok(self)
    }

    pub fn seed(&self) -> Option<u64> {
        self.sde
            .as_ref()
            .or(self.cross_validation.as_ref().map(|c| &c.sde))
            .map(|s| s.master_seed)
    }

    pub fn default_output_dir(&self) -> PathBuf {
        self.output_dir
            .clone()
            .unwrap_or_else(|| Path::new("cqrt-out").join(self.experiment.name()))
    }
}

fn require_model(
    fp: &FpProblem,
    kind: ExperimentKind,
    ok: impl Fn(&FpModel) -> bool,
) -> Result<(), CliError> {
    if !ok(&fp.model) {
        return Err(CliError::Config(format!(
            "fp.model {:?} does not fit experiment {}",
            fp.model,
            kind.name()
        )));
    }
    fp.validate()?;
    fp.axes()?;
    Ok(())
}
