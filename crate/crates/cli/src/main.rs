use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{Context, Result};
use clap::{Parser, Subcommand};

use wrcouple::field::{validate_assumptions, ValidationOptions};
use wrcouple::io::{load_field_reference_unchecked, run_simulation, Mode, Problem, RunConfig};
use wrcouple::netlist::parse_netlist;
use wrcouple::topology::analyze;
use wrcouple::{Prediction, WrStatus};

#[derive(Parser)]
#[command(name = "wrcouple", version, about = "Field/circuit co-simulation by waveform relaxation")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Predict WR convergence from the circuit topology.
    Analyze {
        netlist: PathBuf,
        /// Print the report as JSON.
        #[arg(long)]
        json: bool,
    },
    /// Run WR and/or the monolithic solver and write the probe traces as CSV.
    Simulate {
        #[arg(long)]
        config: PathBuf,
        /// wr, mono or both.
        #[arg(long, value_parser = parse_mode)]
        mode: Option<Mode>,
        #[arg(long)]
        probe: Option<String>,
        /// CSV destination; stdout when neither this nor the config names one.
        #[arg(long)]
        out: Option<PathBuf>,
        #[arg(long)]
        t_end: Option<f64>,
        #[arg(long)]
        dt: Option<f64>,
        #[arg(long)]
        wr_tol: Option<f64>,
        #[arg(long)]
        k_max: Option<usize>,
        #[arg(long)]
        windows: Option<usize>,
        /// Keep only the last two WR iterates.
        #[arg(long)]
        low_memory: bool,
    },
    /// Check the structural assumptions of a field model.
    Validate {
        /// Builtin name or directory with M.mtx, K.mtx and X.mtx.
        model: String,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long, default_value_t = 50)]
        samples: usize,
        #[arg(long, default_value_t = 200)]
        pairs: usize,
    },
}

fn parse_mode(s: &str) -> Result<Mode, String> {
    Mode::parse(s).ok_or_else(|| format!("unknown mode `{s}` (expected wr, mono or both)"))
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(cli.command) {
        Ok(code) => ExitCode::from(code),
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(1)
        }
    }
}

fn run(command: Command) -> Result<u8> {
    match command {
        Command::Analyze { netlist, json } => {
            let text = read(&netlist)?;
            let parsed = parse_netlist(&text).with_context(|| netlist.display().to_string())?;
            let report = analyze(&parsed)?;
            if json {
                println!("{}", serde_json::to_string_pretty(&report.to_json())?);
            } else {
                print!("{report}");
            }
            Ok(match report.prediction {
                Prediction::GuaranteedConvergent => 0,
                Prediction::NotGuaranteed => 2,
            })
        }
        Command::Simulate { config, mode, probe, out, t_end, dt, wr_tol, k_max, windows, low_memory } => {
            let mut cfg = RunConfig::load(&config)?;
            if let Some(m) = mode {
                cfg.mode = m;
            }
            if let Some(p) = probe {
                cfg.probe = p;
            }
            if out.is_some() {
                cfg.output = out;
            }
            cfg.t_end = t_end.unwrap_or(cfg.t_end);
            cfg.dt = dt.unwrap_or(cfg.dt);
            cfg.wr_tol = wr_tol.unwrap_or(cfg.wr_tol);
            cfg.k_max = k_max.unwrap_or(cfg.k_max);
            cfg.windows = windows.unwrap_or(cfg.windows);
            cfg.low_memory |= low_memory;
            cfg.validate()?;
            let problem = Problem::load(&cfg)?;
            let output = run_simulation(&problem, &cfg, cfg.mode)?;
            let csv = output.table.to_csv();
            match &cfg.output {
                Some(path) => std::fs::write(path, csv).with_context(|| path.display().to_string())?,
                None => print!("{csv}"),
            }
            let Some(status) = output.wr_status() else {
                eprintln!("status: monolithic solve finished");
                return Ok(0);
            };
            let (line, code) = match status {
                WrStatus::Converged(k) => (format!("converged after {k} iterations"), 0),
                WrStatus::Diverged(k) => (format!("diverged at iteration {k}"), 2),
                WrStatus::MaxIterations => (format!("not converged within {} iterations", cfg.k_max), 2),
            };
            eprintln!("status: {line}");
            if let Some(wr) = &output.wr {
                let deltas: Vec<String> = wr.deltas().iter().map(|d| format!("{d:.3e}")).collect();
                eprintln!("deltas: {}", deltas.join(" "));
            }
            Ok(code)
        }
        Command::Validate { model, seed, samples, pairs } => {
            let field = load_field_reference_unchecked(&model, Path::new("."))?;
            let opts = ValidationOptions { seed, samples, pairs, ..ValidationOptions::default() };
            let report = validate_assumptions(&field, &opts);
            print!("{report}");
            Ok(if report.all_passed() { 0 } else { 2 })
        }
    }
}

fn read(path: &Path) -> Result<String> {
    std::fs::read_to_string(path).with_context(|| format!("cannot read {}", path.display()))
}
