//! `ddwave`: runs delay-Doppler waveform experiments from a JSON config.

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use ddwave::par::{with_workers, Exec};
use ddwave::scheme::SchemeKind;
use ddwave::sim::{parse_config, run_plan_with};
use ddwave::verify::oracle_suite;
use ddwave::Error;

#[derive(Parser)]
#[command(name = "ddwave", version, about = "Delay-Doppler waveform experiments")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run the experiment described by a JSON config file.
    Run {
        config: PathBuf,
        /// Overrides the config seed.
        #[arg(long)]
        seed: Option<u64>,
        /// Overrides the config output directory.
        #[arg(long)]
        out: Option<PathBuf>,
        /// Worker threads; 1 runs sequentially.
        #[arg(long, default_value_t = default_workers())]
        workers: usize,
    },
    /// Check every fast signal path against its dense-matrix oracle.
    Oracle,
    /// Print the scheme identifiers accepted in configs.
    ListSchemes,
}

fn default_workers() -> usize {
    std::thread::available_parallelism().map_or(1, |n| n.get())
}

fn exit_code(e: &Error) -> ExitCode {
    match e {
        Error::Config { .. } => ExitCode::from(2),
        Error::Numerical(_) => ExitCode::from(3),
        _ => ExitCode::from(1),
    }
}

fn run(config: PathBuf, seed: Option<u64>, out: Option<PathBuf>, workers: usize) -> Result<(), Error> {
    if workers == 0 {
        return Err(Error::Config {
            field: "--workers".into(),
            message: "must be at least 1".into(),
        });
    }
    let mut cfg = parse_config(&config)?;
    if let Some(s) = seed {
        cfg.seed = s;
    }
    if let Some(d) = out {
        cfg.output_dir = d;
    }
    let plan = cfg.resolve()?;
    for w in &plan.warnings {
        eprintln!("warning: {w}");
    }
    let exec = if workers > 1 { Exec::Parallel } else { Exec::Sequential };
    let output = with_workers(workers, || run_plan_with(&plan, exec))?;
    for p in output.write(&plan.config.output_dir)? {
        println!("{}", p.display());
    }
    Ok(())
}

fn oracle() -> Result<(), Error> {
    let checks = oracle_suite()?;
    let mut failed = 0;
    for c in &checks {
        let tag = if c.passed() { "ok  " } else { "FAIL" };
        println!("{tag} {:<40} {:.3e} (tol {:.0e})", c.name, c.max_abs_error, c.tolerance);
        failed += usize::from(!c.passed());
    }
    if failed > 0 {
        return Err(Error::Numerical(format!("{failed} of {} oracle checks failed", checks.len())));
    }
    println!("{} checks passed", checks.len());
    Ok(())
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let result = match cli.command {
        Command::Run {
            config,
            seed,
            out,
            workers,
        } => run(config, seed, out, workers),
        Command::Oracle => oracle(),
        Command::ListSchemes => {
            for k in SchemeKind::ALL {
                println!("{:<8} {}", k.id(), k.description());
            }
            Ok(())
        }
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            exit_code(&e)
        }
    }
}
