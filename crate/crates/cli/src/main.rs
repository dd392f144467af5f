use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use cqrt_cli::presets::{preset, PRESETS};
use cqrt_cli::{run, CliError, ExperimentConfig};

/// Complex-plane quantum trajectory experiments.
#[derive(Parser)]
#[command(name = "cqrt", version)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run the experiment described by a JSON config file.
    Run {
        config: PathBuf,
        #[command(flatten)]
        opts: RunOpts,
    },
    /// Run a built-in config.
    Preset {
        name: String,
        #[command(flatten)]
        opts: RunOpts,
    },
    /// List the built-in configs.
    Presets,
    /// Print a built-in config.
    Show { name: String },
}

#[derive(Args)]
struct RunOpts {
    /// Output directory (overrides `output_dir` in the config).
    #[arg(long)]
    out: Option<PathBuf>,
    /// Master seed (overrides every `master_seed` in the config).
    #[arg(long)]
    seed: Option<u64>,
    /// Worker threads; outputs do not depend on it.
    #[arg(long)]
    threads: Option<usize>,
}

fn named(name: &str) -> Result<&'static str, CliError> {
    preset(name).ok_or_else(|| {
        let known: Vec<&str> = PRESETS.iter().map(|p| p.0).collect();
        CliError::Config(format!("unknown preset `{name}` (known: {})", known.join(", ")))
    })
}

fn execute(config: ExperimentConfig, opts: RunOpts) -> Result<(), CliError> {
    if let Some(k) = opts.threads {
        if k == 0 {
            return Err(CliError::Config("--threads must be at least 1".into()));
        }
        rayon::ThreadPoolBuilder::new()
            .num_threads(k)
            .build_global()
            .map_err(|e| CliError::Config(e.to_string()))?;
    }
    let (summary, dir) = run(config, opts.out.as_deref(), opts.seed)?;
    println!("{} finished in {:.2} s", summary.experiment.name(), summary.wall_time_s);
    for (key, value) in &summary.metrics.0 {
        if value.is_number() {
            println!("  {key} = {value}");
        }
    }
    for c in &summary.checks {
        println!("  check {} {} {}: ok", c.metric, c.relation, c.bound);
    }
    println!("wrote {}", dir.display());
    Ok(())
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let result = match cli.command {
        Command::Run { config, opts } => {
            ExperimentConfig::load(&config).and_then(|c| execute(c, opts))
        }
        Command::Preset { name, opts } => named(&name)
            .and_then(ExperimentConfig::from_json)
            .and_then(|c| execute(c, opts)),
        Command::Presets => {
            for (name, description, _) in PRESETS {
                println!("{name:<18} {description}");
            }
            Ok(())
        }
        Command::Show { name } => named(&name).map(|json| print!("{json}")),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("cqrt: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
