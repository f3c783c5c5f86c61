//! Command-line front end: run scenarios, check configs, size the duty ratio.

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};

use vsg_core::config::{self, solve_duty, ConfigError};
use vsg_core::runner::{emit, run_scenario, SimError};

const EXIT_IO: u8 = 1;
const EXIT_VALIDATION: u8 = 2;
const EXIT_NUMERIC: u8 = 3;

#[derive(Parser)]
#[command(
    name = "vsg-sim",
    version,
    about = "Islanded Y-source VSG microgrid simulator"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run a scenario and write timeseries.csv and summary.json.
    Simulate {
        #[arg(long)]
        config: PathBuf,
        #[arg(long)]
        out_dir: PathBuf,
        /// Override the plant integration step, seconds.
        #[arg(long)]
        dt: Option<f64>,
        /// Override the output decimation.
        #[arg(long)]
        decimation: Option<usize>,
        /// Accepted for compatibility; runs are always deterministic.
        #[arg(long)]
        seedless: bool,
    },
    /// Parse and validate a configuration file.
    CheckConfig {
        #[arg(long)]
        config: PathBuf,
    },
    /// Shoot-through duty for a target DC-link boost.
    Design {
        #[arg(long)]
        boost: f64,
        #[arg(long)]
        k: f64,
        #[arg(long)]
        p: f64,
    },
}

fn read_config(path: &PathBuf) -> Result<config::Config, ExitCode> {
    let text = std::fs::read_to_string(path).map_err(|e| {
        eprintln!("error: cannot read {}: {e}", path.display());
        ExitCode::from(EXIT_IO)
    })?;
    config::parse_config(&text).map_err(|e| {
        eprintln!("error: {e}");
        ExitCode::from(EXIT_VALIDATION)
    })
}

fn simulate(
    path: PathBuf,
    out_dir: PathBuf,
    dt: Option<f64>,
    decimation: Option<usize>,
) -> Result<(), ExitCode> {
    let mut raw = read_config(&path)?;
    if let Some(dt) = dt {
        raw.scenario.dt = dt;
    }
    if let Some(n) = decimation {
        raw.scenario.decimation = n;
    }
    let cfg = config::validate(raw).map_err(|v| {
        eprint!("{v}");
        ExitCode::from(EXIT_VALIDATION)
    })?;

    let out = run_scenario(&cfg).map_err(|e| {
        eprintln!("error: {e}");
        match e {
            SimError::Config(_) => ExitCode::from(EXIT_VALIDATION),
            _ => ExitCode::from(EXIT_NUMERIC),
        }
    })?;

    std::fs::create_dir_all(&out_dir).map_err(|e| {
        eprintln!("error: cannot create {}: {e}", out_dir.display());
        ExitCode::from(EXIT_IO)
    })?;
    emit(
        &out,
        &out_dir.join("timeseries.csv"),
        &out_dir.join("summary.json"),
    )
    .map_err(|e| {
        eprintln!("error: {e}");
        ExitCode::from(EXIT_IO)
    })?;

    for w in &out.windows {
        let m = &w.metrics;
        println!(
            "{:<12} [{:.2}, {:.2}] s  P = {:8.1} W  Q = {:7.1} var  Vrms = {:6.2} V  f = {:.4} Hz  THD = {:.3} %  eff = {:.3} %",
            w.span.label.as_str(),
            w.span.t_start,
            w.span.t_end,
            m.p_active,
            m.q_reactive,
            m.v_rms,
            m.f_est,
            100.0 * m.thd,
            100.0 * m.efficiency,
        );
    }
    Ok(())
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let result = match cli.command {
        Command::Simulate {
            config,
            out_dir,
            dt,
            decimation,
            seedless: _,
        } => simulate(config, out_dir, dt, decimation),
        Command::CheckConfig { config } => match config::load_config(&config) {
            Ok(cfg) => {
                println!("ok ({})", cfg.hash());
                Ok(())
            }
            Err(ConfigError::Io { path, source }) => {
                eprintln!("error: cannot read {path}: {source}");
                Err(ExitCode::from(EXIT_IO))
            }
            Err(e) => {
                eprint!("{e}");
                if !matches!(e, ConfigError::Invalid(_)) {
                    eprintln!();
                }
                Err(ExitCode::from(EXIT_VALIDATION))
            }
        },
        Command::Design { boost, k, p } => match solve_duty(boost, k, p) {
            Ok(d) => {
                println!("{d}");
                Ok(())
            }
            Err(e) => {
                eprintln!("error: {e}");
                Err(ExitCode::from(EXIT_VALIDATION))
            }
        },
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(code) => code,
    }
}
