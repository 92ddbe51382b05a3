use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use stqr::report::{exit_code, parse_list, run, Command, Overrides, RunConfig, Season};

#[derive(Parser)]
#[command(name = "stqr", version, about = "Spatio-temporal quantile trends for daily temperature")]
struct Cli {
    #[command(subcommand)]
    command: Cmd,
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Comma-separated station ids.
    #[arg(long, global = true)]
    stations: Option<String>,
    #[arg(long, global = true, value_parser = ["all", "djf", "jja"])]
    season: Option<String>,
    /// Comma-separated quantile levels.
    #[arg(long, global = true)]
    tau: Option<String>,
    #[arg(long, global = true)]
    max_missing: Option<f64>,
}

#[derive(Subcommand, Clone, Copy)]
enum Cmd {
    /// Load, calendar-normalize and filter station files.
    Ingest,
    /// Mean-model fit and residual diagnostics per station.
    Explore,
    /// Seasonal log-variance model per station.
    FitVariance,
    /// Posterior sampling of the quantile model.
    Fit,
    /// With/without-sigma simulation study.
    Simulate,
    /// Per-decade trend tables and GeoJSON from a fit.
    Report,
}

fn overrides(cli: &Cli) -> stqr::Result<Overrides> {
    Ok(Overrides {
        seed: cli.seed,
        stations: cli.stations.as_deref().map(|s| parse_list("--stations", s)).transpose()?,
        season: cli.season.as_deref().map(str::parse::<Season>).transpose()?,
        tau: cli.tau.as_deref().map(|s| parse_list("--tau", s)).transpose()?,
        max_missing: cli.max_missing,
    })
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info")).init();
    let cli = Cli::parse();
    let Some(path) = cli.config.clone() else {
        eprintln!("error: --config PATH is required");
        return ExitCode::from(2);
    };
    let command = match cli.command {
        Cmd::Ingest => Command::Ingest,
        Cmd::Explore => Command::Explore,
        Cmd::FitVariance => Command::FitVariance,
        Cmd::Fit => Command::Fit,
        Cmd::Simulate => Command::Simulate,
        Cmd::Report => Command::Report,
    };
    let result = overrides(&cli)
        .and_then(|o| RunConfig::load(&path, &o))
        .map_err(|e| (e, true))
        .and_then(|cfg| run(command, &cfg).map_err(|e| (e, false)));
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err((e, during_config)) => {
            eprintln!("error: {e}");
            ExitCode::from(if during_config { 2 } else { exit_code(&e) as u8 })
        }
    }
}
