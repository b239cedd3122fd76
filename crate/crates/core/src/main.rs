use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use log::{error, info};

use schauder_lab::harness::{load_config, run, ExperimentConfig, ExperimentKind};
use schauder_lab::regularity::Pathway;

#[derive(Debug, Parser)]
#[command(version, about = "Stochastic transport-diffusion experiments")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Moment identities of Wiener and compensated Poisson integrals.
    Isometry(Flags),
    /// One mild-solution sample on the spatial grid.
    Mild(Flags),
    /// Monte Carlo gradient increment moment against the quadrature value.
    GradientMoment(Flags),
    /// Transport-term fixed point by windowed Picard iteration.
    Picard(Flags),
    /// Hölder exponent of the gradient from a log-log fit.
    Exponent(Flags),
    /// Ratio tables showing the exponent cannot be improved.
    Optimality(Flags),
}

#[derive(Debug, Args)]
struct Flags {
    /// TOML experiment configuration.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Master seed; overrides the config.
    #[arg(long)]
    seed: Option<u64>,
    /// Monte Carlo path count; overrides the config.
    #[arg(long)]
    paths: Option<usize>,
    /// Output directory.
    #[arg(long)]
    out: Option<PathBuf>,
    /// Force p = 2 and the isometry quadrature pathway.
    #[arg(long)]
    exact: bool,
}

fn build_config(kind: ExperimentKind, flags: &Flags) -> Result<ExperimentConfig, String> {
    let mut config = match &flags.config {
        Some(path) => {
            let text = std::fs::read_to_string(path).map_err(|e| format!("{}: {e}", path.display()))?;
            let config = load_config(&text).map_err(|e| format!("{}: {e}", path.display()))?;
            if config.experiment != kind {
                return Err(format!(
                    "{} describes a `{}` experiment, not `{kind}`",
                    path.display(),
                    config.experiment
                ));
            }
            config
        }
        None => ExperimentConfig::minimal(kind),
    };
    if let Some(seed) = flags.seed {
        config.seed = seed;
    }
    if let Some(paths) = flags.paths {
        config.paths = paths;
    }
    if let Some(out) = &flags.out {
        config.out = Some(out.clone());
    }
    if flags.exact {
        config.p = Some(2.0);
        if kind == ExperimentKind::Exponent {
            let mut resolved = config.resolved();
            if let Some(e) = resolved.exponent.as_mut() {
                e.pathway = Pathway::Exact;
            }
            config.exponent = resolved.exponent;
        }
    }
    Ok(config)
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info")).init();
    let cli = Cli::parse();
    let (kind, flags) = match &cli.command {
        Command::Isometry(f) => (ExperimentKind::Isometry, f),
        Command::Mild(f) => (ExperimentKind::Mild, f),
        Command::GradientMoment(f) => (ExperimentKind::GradientMoment, f),
        Command::Picard(f) => (ExperimentKind::Picard, f),
        Command::Exponent(f) => (ExperimentKind::Exponent, f),
        Command::Optimality(f) => (ExperimentKind::Optimality, f),
    };
    let config = match build_config(kind, flags) {
        Ok(c) => c,
        Err(e) => {
            error!("{e}");
            return ExitCode::from(2);
        }
    };
    let out = config
        .out
        .clone()
        .unwrap_or_else(|| PathBuf::from("out").join(kind.name()));
    match run(&config, &out) {
        Ok(outcome) => {
            if let Some(e) = &outcome.error {
                error!("{e}");
            }
            info!(
                "{kind}: {} ({} written to {})",
                if outcome.pass { "pass" } else { "FAIL" },
                outcome.files.join(", "),
                out.display()
            );
            if outcome.pass {
                ExitCode::SUCCESS
            } else {
                ExitCode::FAILURE
            }
        }
        Err(e) => {
            error!("{e}");
            ExitCode::from(2)
        }
    }
}
