//! Command-line front end.
//!
//! Every subcommand reads an optional TOML config (`--config`) and accepts
//! each config key as a same-named flag, which wins over the file.
//! Exit codes: 0 success, 2 configuration error, 3 data error, 4 numerical
//! failure.

mod commands;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use tvpvarx_core::{Error, RunConfig};

#[derive(Parser, Debug)]
#[command(name = "tvpvarx", version, about = "TVP-VAR-X estimation with a time-invariant long-run multiplier")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Run the sampler and write the chain, prior audit and summary.
    Estimate(Common),
    /// Level forecasts from a chain (or a constant VARX with mode=constant-var).
    Forecast(Common),
    /// Cumulative impulse responses to a permanent exogenous level change.
    Irf(Common),
    /// Long-run growth bands, annualized percent.
    Growth(Common),
    /// Rolling-origin comparison of the three methods.
    Benchmark(Common),
    /// Write a synthetic dataset and its true parameter paths.
    Simulate(Common),
}

#[derive(Args, Debug)]
struct Common {
    /// TOML config file; flags override its keys.
    #[arg(long)]
    config: Option<PathBuf>,
    #[command(flatten)]
    keys: ConfigFlags,
}

macro_rules! config_flags {
    ($($(#[doc = $doc:literal])* $field:ident),* $(,)?) => {
        #[derive(Args, Debug, Default)]
        struct ConfigFlags {
            $(
                $(#[doc = $doc])*
                #[arg(long, value_name = "VALUE")]
                $field: Option<String>,
            )*
        }

        impl ConfigFlags {
            fn pairs(&self) -> Vec<(String, String)> {
                let mut out = Vec::new();
                $(
                    if let Some(v) = &self.$field {
                        out.push((stringify!($field).replace('_', "-"), v.clone()));
                    }
                )*
                out
            }
        }
    };
}

config_flags! {
    /// Level CSV: date,<endo...>,<exo>
    data,
    date_column,
    /// Endogenous columns, comma-separated
    endo,
    /// Exogenous column (default: last)
    exo,
    /// Output directory
    output,
    /// Chain file (default: <output>/chain.txt)
    chain,
    /// constrained | unconstrained | constant-var
    mode,
    /// Lag order k
    lags,
    /// Training observations for the prior
    t0,
    burn_in,
    draws,
    thin,
    seed,
    chains,
    /// Threads for parallel chains
    workers,
    /// Prior variance diagonal of theta, comma-separated
    u0,
    kappa_q,
    kappa_q_tilde,
    kappa_g,
    kappa_w,
    /// Prior covariance inflation of the initial states
    inflation,
    vol_offset,
    singular_cond,
    max_redraws,
    divergence_window,
    divergence_fraction,
    /// frozen | walk
    forecast_mode,
    /// Forecast origin (index or YYYY-Qn)
    origin,
    horizon,
    /// Exogenous log-differences after the origin, comma-separated
    exo_path,
    /// Forecast band quantiles, e.g. 0.1,0.9
    band,
    first_origin,
    last_origin,
    /// Re-estimate at every evaluation origin
    refit,
    /// Relative exogenous level change, e.g. 0.1
    shock,
    irf_horizon,
    irf_origins,
    irf_quantiles,
    growth_origins,
    growth_quantiles,
    /// Simulated log-difference observations
    periods,
    /// Amplitude of the simulated short-run drift
    drift,
}

fn load_config(common: &Common) -> Result<RunConfig, Error> {
    let text = match &common.config {
        Some(p) => Some(std::fs::read_to_string(p).map_err(|e| Error::Config(format!("{}: {e}", p.display())))?),
        None => None,
    };
    RunConfig::load(text.as_deref(), &common.keys.pairs())
}

fn run(cli: Cli) -> Result<String, Error> {
    let (name, common) = match &cli.command {
        Command::Estimate(c) => ("estimate", c),
        Command::Forecast(c) => ("forecast", c),
        Command::Irf(c) => ("irf", c),
        Command::Growth(c) => ("growth", c),
        Command::Benchmark(c) => ("benchmark", c),
        Command::Simulate(c) => ("simulate", c),
    };
    let cfg = load_config(common)?;
    let mut run = commands::Run::new(name, cfg)?;
    match cli.command {
        Command::Estimate(_) => run.estimate(),
        Command::Forecast(_) => run.forecast(),
        Command::Irf(_) => run.irf(),
        Command::Growth(_) => run.growth(),
        Command::Benchmark(_) => run.benchmark(),
        Command::Simulate(_) => run.simulate(),
    }?;
    run.finish()
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(cli) {
        Ok(summary) => {
            print!("{summary}");
            ExitCode::SUCCESS
        }
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
