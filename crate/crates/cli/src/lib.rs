//! Batch runner for trajectory and Fokker-Planck experiments.
//!
//! [`run`] resolves a config, executes it fully in memory, checks the
//! optional acceptance bounds and only then writes the artifacts plus a
//! `summary.json` into the output directory.

pub mod config;
pub mod error;
pub mod experiments;
pub mod presets;

use std::fs;
use std::path::{Path, PathBuf};
use std::time::Instant;

use serde::{Deserialize, Serialize};

pub use config::{Acceptance, ExperimentConfig, ExperimentKind};
pub use error::CliError;
pub use experiments::{Artifact, Metrics};

/// One acceptance bound evaluated against a metric.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Check {
    pub metric: String,
    /// `">="`, `">"` or `"<="`.
    pub relation: String,
    pub bound: f64,
    pub value: f64,
    pub passed: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunSummary {
    pub experiment: ExperimentKind,
    pub seed: Option<u64>,
    pub wall_time_s: f64,
    pub metrics: Metrics,
    pub checks: Vec<Check>,
    pub passed: bool,
    pub artifacts: Vec<String>,
    /// The resolved config, defaults included.
    pub config: ExperimentConfig,
}

/// Result of a run kept in memory.
#[derive(Debug, Clone)]
pub struct RunOutcome {
    pub summary: RunSummary,
    pub artifacts: Vec<Artifact>,
}

impl RunOutcome {
    pub fn artifact(&self, name: &str) -> Option<&Artifact> {
        self.artifacts.iter().find(|a| a.name == name)
    }
}

fn bounds(a: &Acceptance) -> Vec<(&'static str, &'static str, f64)> {
    let pairs = [
        ("gamma", ">=", a.min_gamma),
        ("gamma_margin", ">", a.min_gamma_margin),
        ("max_error", "<=", a.max_error),
        ("l2_error", "<=", a.max_l2),
        ("max_asymmetry", "<=", a.max_asymmetry),
        ("max_mass_deviation", "<=", a.max_mass_deviation),
        ("min_node_fraction", ">=", a.min_node_fraction),
        ("cross_gamma", ">=", a.min_cross_gamma),
    ];
    pairs
        .into_iter()
        .filter_map(|(m, r, b)| b.map(|b| (m, r, b)))
        .collect()
}

/// Resolve defaults, apply a seed override and check that every acceptance
/// bound names a metric the experiment reports.
pub fn prepare(config: ExperimentConfig, seed: Option<u64>) -> Result<ExperimentConfig, CliError> {
    let config = config.resolve(seed)?;
    let produced = experiments::produced_metrics(&config);
    for (metric, _, bound) in bounds(&config.acceptance) {
        if !produced.contains(&metric) {
            return Err(CliError::Config(format!(
                "acceptance bound on `{metric}` but experiment {} does not report it",
                config.experiment.name()
            )));
        }
        if !bound.is_finite() {
            return Err(CliError::Config(format!("acceptance bound on `{metric}` is not finite")));
        }
    }
    Ok(config)
}

/// Execute a prepared config without writing anything.
pub fn execute(config: &ExperimentConfig) -> Result<RunOutcome, CliError> {
    let start = Instant::now();
    let out = experiments::execute(config)?;
    let checks: Vec<Check> = bounds(&config.acceptance)
        .into_iter()
        .map(|(metric, relation, bound)| {
            let value = out.metrics.get_f64(metric).unwrap_or(f64::NAN);
            let passed = match relation {
                ">=" => value >= bound,
                ">" => value > bound,
                _ => value <= bound,
            };
            Check {
                metric: metric.to_string(),
                relation: relation.to_string(),
                bound,
                value,
                passed,
            }
        })
        .collect();
    let summary = RunSummary {
        experiment: config.experiment,
        seed: config.seed(),
        wall_time_s: start.elapsed().as_secs_f64(),
        metrics: out.metrics,
        passed: checks.iter().all(|c| c.passed),
        checks,
        artifacts: out.artifacts.iter().map(|a| a.name.clone()).collect(),
        config: config.clone(),
    };
    Ok(RunOutcome {
        summary,
        artifacts: out.artifacts,
    })
}

/// Write every artifact and `summary.json` into `dir`.
pub fn write_outputs(outcome: &RunOutcome, dir: &Path) -> Result<(), CliError> {
    fs::create_dir_all(dir).map_err(|e| CliError::io(dir, e))?;
    for a in &outcome.artifacts {
        let path = dir.join(&a.name);
        fs::write(&path, &a.bytes).map_err(|e| CliError::io(path, e))?;
    }
    let path = dir.join("summary.json");
    let mut text = serde_json::to_string_pretty(&outcome.summary).expect("summary serializes");
    text.push('\n');
    fs::write(&path, text).map_err(|e| CliError::io(path, e))
}

/// Full pipeline: prepare, execute, write. Failed acceptance bounds still
/// write their artifacts, then surface as [`CliError::Acceptance`].
pub fn run(
    config: ExperimentConfig,
    out: Option<&Path>,
    seed: Option<u64>,
) -> Result<(RunSummary, PathBuf), CliError> {
    let config = prepare(config, seed)?;
    let dir = out.map_or_else(|| config.default_output_dir(), Path::to_path_buf);
    let outcome = execute(&config)?;
    write_outputs(&outcome, &dir)?;
    let failed: Vec<String> = outcome
        .summary
        .checks
        .iter()
        .filter(|c| !c.passed)
        .map(|c| format!("{} = {} not {} {}", c.metric, c.value, c.relation, c.bound))
        .collect();
    if failed.is_empty() {
        Ok((outcome.summary, dir))
    } else {
        Err(CliError::Acceptance(failed))
    }
}
