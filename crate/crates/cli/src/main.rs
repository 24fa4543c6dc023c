//! `biphoton`: model a fiber-coupled photon-pair source, sweep its
//! focusing, invert measured count rates, and exercise the whole chain on
//! synthetic data.
//!
//! Exit codes: 0 success (warnings allowed), 2 config/domain error,
//! 3 I/O error, 4 numerical failure.

mod commands;
mod config;

use std::path::PathBuf;
use std::process;

use biphoton::Error;
use clap::{Parser, Subcommand};

use commands::{Format, Output};

#[derive(Parser)]
#[command(
    name = "biphoton",
    version,
    about = "Photon-pair source modeling: emission rates, fiber coupling, detector statistics"
)]
struct Cli {
    /// JSON run configuration; built-in KTP 780→1560 defaults when omitted.
    #[arg(long, global = true, value_name = "FILE")]
    config: Option<PathBuf>,
    /// Output file (stdout when omitted; simulate requires it).
    #[arg(long, global = true, value_name = "FILE")]
    out: Option<PathBuf>,
    /// Output rendering.
    #[arg(long, global = true, value_enum, default_value_t = Format::Csv)]
    format: Format,
    /// Override the pump focal parameter of the focus or sweep block.
    #[arg(long = "xi-p", global = true, value_name = "XI")]
    xi_p: Option<f64>,
    /// Override the simulation seed.
    #[arg(long, global = true, value_name = "N")]
    seed: Option<u64>,
    /// Override the measurement input file.
    #[arg(long, global = true, value_name = "FILE")]
    input: Option<PathBuf>,
    #[command(subcommand)]
    command: Cmd,
}

#[derive(Subcommand)]
enum Cmd {
    /// Refractive and group indices of the three interacting waves
    Index,
    /// Emission rates and coupling efficiency at one focus point
    Rates,
    /// Efficiency/pair-rate curves over collection focus
    Sweep,
    /// Recover intrinsic rates and eta_c from measured count rates
    Invert,
    /// Synthetic timestream measurement with a ground-truth sidecar
    Simulate,
    /// Fit the effective nonlinearity to measured pair rates
    FitDeff,
}

impl Cmd {
    fn block_name(&self) -> &'static str {
        match self {
            Cmd::Index => "index",
            Cmd::Rates => "rates",
            Cmd::Sweep => "sweep",
            Cmd::Invert => "invert",
            Cmd::Simulate => "simulate",
            Cmd::FitDeff => "fit_deff",
        }
    }
}

fn run(cli: &Cli) -> biphoton::Result<()> {
    let cfg = match &cli.config {
        Some(path) => config::FileConfig::load(path)?,
        None => config::FileConfig::default(),
    };
    cfg.check_single_block(cli.command.block_name())?;
    let out = Output {
        path: cli.out.as_deref(),
        format: cli.format,
    };
    match cli.command {
        Cmd::Index => commands::index(&cfg, &out),
        Cmd::Rates => commands::rates(&cfg, cli.xi_p, &out),
        Cmd::Sweep => commands::sweep_cmd(&cfg, cli.xi_p, &out),
        Cmd::Invert => commands::invert(&cfg, cli.input.as_deref(), &out),
        Cmd::Simulate => commands::simulate(&cfg, cli.seed, cli.xi_p, &out),
        Cmd::FitDeff => commands::fit_deff(&cfg, cli.input.as_deref(), &out),
    }
}

fn main() {
    let cli = Cli::parse();
    if let Err(e) = run(&cli) {
        eprintln!("error: {e}");
        process::exit(match e {
            Error::Io(_) => 3,
            Error::Numerical(_) => 4,
            _ => 2,
        });
    }
}
