//! Command-line entry points.

use std::path::{Path, PathBuf};

use clap::{Parser, Subcommand};

use crate::diagnostics::{
    dissipative_envelope, energy_inequality_check, envelope_constants, infer_viscosity, DiagnosticsRecord,
};
use crate::error::{Error, Result};
use crate::harness::{dt_order_study, galerkin_refinement, taylor_green, StudyResult};
use crate::hypotheses::audit;
use crate::io::config::{parse_config, SimConfig};
use crate::io::csv::read_diagnostics;
use crate::kernel::KernelOnGrid;
use crate::potential::Potential;
use crate::run::{run, RunOptions};
use crate::spectral::Grid;

/// Exit code for a completed command whose checks all passed.
pub const EXIT_OK: i32 = 0;
/// Exit code when a check or invariant failed.
pub const EXIT_FAILED: i32 = 1;
/// Exit code for bad input or an aborted run.
pub const EXIT_ERROR: i32 = 2;

#[derive(Debug, Parser)]
#[command(name = "nlchns", version, about = "Nonlocal Cahn-Hilliard-Navier-Stokes simulator and invariant auditor")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Run a simulation, writing diagnostics.csv, report.txt, summary.txt and snapshots.
    Run {
        config: PathBuf,
        /// Run even if (H1)-(H3) fail.
        #[arg(long)]
        force: bool,
        /// Override the seed of random initial data.
        #[arg(long)]
        seed: Option<u64>,
    },
    /// Audit the hypotheses for a configuration and print the report.
    Check { config: PathBuf },
    /// Grid-refinement and/or time-step studies.
    Convergence {
        config: PathBuf,
        #[arg(long, value_delimiter = ',')]
        sizes: Vec<usize>,
        #[arg(long, value_delimiter = ',')]
        dts: Vec<f64>,
    },
    /// Oracle benchmarks.
    Benchmark {
        #[command(subcommand)]
        which: Benchmark,
    },
    /// Re-audit a diagnostics file offline.
    Report {
        csv: PathBuf,
        /// Viscosity of the run; inferred from the residual column when
        /// absent (valid for files recorded every step).
        #[arg(long)]
        nu: Option<f64>,
        /// Configuration of the run, enabling the dissipative-envelope check.
        #[arg(long)]
        config: Option<PathBuf>,
    },
}

#[derive(Debug, Subcommand)]
pub enum Benchmark {
    /// Taylor-Green kinetic-energy decay against the exact solution.
    TaylorGreen {
        config: PathBuf,
        #[arg(long, value_delimiter = ',', default_value = "1e-3,5e-4,2.5e-4")]
        dts: Vec<f64>,
    },
}

fn load_config(path: &Path) -> Result<SimConfig> {
    let text = std::fs::read_to_string(path)?;
    parse_config(&text)
}

/// Parses `args` (including the program name), runs the command and
/// returns the process exit code.
pub fn main_with_args<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<std::ffi::OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { EXIT_ERROR } else { EXIT_OK };
        }
    };
    match execute(cli.command) {
        Ok(code) => code,
        Err(e) => {
            eprintln!("error: {e}");
            EXIT_ERROR
        }
    }
}

fn verdict_code(passed: bool) -> i32 {
    if passed {
        EXIT_OK
    } else {
        EXIT_FAILED
    }
}

fn print_study(r: &StudyResult) {
    print!("{}", r.summary());
}

fn execute(command: Command) -> Result<i32> {
    match command {
        Command::Run { config, force, seed } => {
            let cfg = load_config(&config)?;
            let opts = RunOptions {
                force,
                seed,
                write_files: true,
            };
            let outcome = run(&cfg, &opts)?;
            print!("{}", outcome.summary());
            Ok(verdict_code(outcome.passed()))
        }
        Command::Check { config } => {
            let cfg = load_config(&config)?;
            let grid = Grid::new(cfg.n, cfg.l)?;
            let kernel = KernelOnGrid::build(&cfg.kernel, &grid)?;
            let potential = Potential::new(&cfg.potential)?;
            let report = audit(&kernel, &potential, &cfg.forcing, cfg.range);
            print!("{}", report.to_text());
            let ok = report.check_ok(cfg.checks.dissipative);
            println!("result = {}", if ok { "PASS" } else { "FAIL" });
            Ok(verdict_code(ok))
        }
        Command::Convergence { config, sizes, dts } => {
            let cfg = load_config(&config)?;
            if sizes.is_empty() && dts.is_empty() {
                return Err(Error::Config("convergence needs --sizes and/or --dts".into()));
            }
            let mut ok = true;
            if !sizes.is_empty() {
                let r = galerkin_refinement(&cfg, &sizes)?;
                print_study(&r);
                ok &= r.passed();
            }
            if !dts.is_empty() {
                let r = dt_order_study(&cfg, &dts)?;
                print_study(&r);
                ok &= r.passed();
            }
            Ok(verdict_code(ok))
        }
        Command::Benchmark {
            which: Benchmark::TaylorGreen { config, dts },
        } => {
            let r = taylor_green(&load_config(&config)?, &dts)?;
            print_study(&r);
            Ok(verdict_code(r.passed()))
        }
        Command::Report { csv, nu, config } => report(&csv, nu, config.as_deref()),
    }
}

fn report(csv: &Path, nu: Option<f64>, config: Option<&Path>) -> Result<i32> {
    let series: Vec<DiagnosticsRecord> = read_diagnostics(csv)?;
    if series.is_empty() {
        return Err(Error::Config(format!("{} has no records", csv.display())));
    }
    let cfg = config.map(load_config).transpose()?;
    let nu = nu
        .or(cfg.as_ref().map(|c| c.nu))
        .or_else(|| infer_viscosity(&series))
        .unwrap_or(0.0);
    println!("records = {}", series.len());
    println!("nu = {nu}");
    let ineq = energy_inequality_check(&series, nu);
    println!(
        "energy_inequality = {} (worst margin {:e} at t = {}, slack {:e})",
        if ineq.passed { "PASS" } else { "FAIL" },
        ineq.worst_margin,
        ineq.worst_t,
        ineq.slack
    );
    let mut ok = ineq.passed;
    if let Some(cfg) = cfg {
        let grid = Grid::new(cfg.n, cfg.l)?;
        let kernel = KernelOnGrid::build(&cfg.kernel, &grid)?;
        let potential = Potential::new(&cfg.potential)?;
        let m = series[0].mass / grid.area();
        match envelope_constants(&potential, &kernel, nu, m, &cfg.forcing, cfg.range) {
            Ok(c) => {
                let e = dissipative_envelope(&series, &c);
                println!(
                    "envelope = {} (k = {}, K = {}, offset = {}, worst margin {:e} at t = {})",
                    if e.passed { "PASS" } else { "FAIL" },
                    c.k,
                    c.big_k,
                    c.offset,
                    e.worst_margin,
                    e.worst_t
                );
                ok &= e.passed;
            }
            Err(why) => println!("envelope = N/A ({why})"),
        }
    }
    println!("result = {}", if ok { "PASS" } else { "FAIL" });
    Ok(verdict_code(ok))
}
