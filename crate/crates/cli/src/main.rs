mod commands;
mod config;

use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use thiserror::Error;

use commands::{Command, Loaded, Outcome, Overrides};

#[derive(Debug, Error)]
pub enum CliError {
    #[error("{0}: {1}")]
    Io(PathBuf, std::io::Error),
    #[error("parse error in {0}: {1}")]
    Parse(PathBuf, String),
    #[error("validation error: {0}")]
    Validation(#[from] sisnet::Error),
    #[error("{0}")]
    Model(sisnet::Error),
}

#[derive(Debug, Parser)]
#[command(name = "sisnet", version, about = "SIS patch-network models: validation, simulation and limit verification")]
struct Cli {
    #[command(subcommand)]
    command: Cmd,
    /// Output directory; results go to <out>/<scenario name>/.
    #[arg(long, global = true)]
    out: Option<PathBuf>,
    /// Override the integration end time.
    #[arg(long, global = true)]
    t_end: Option<f64>,
    /// Override the verdict tolerance.
    #[arg(long, global = true)]
    tol: Option<f64>,
    /// Print the fully expanded scenario file instead of running.
    #[arg(long, global = true)]
    dump_config: bool,
    /// Seed for the randomized starts of the N* optimizer.
    #[arg(long, global = true)]
    seed: Option<u64>,
}

#[derive(Debug, Subcommand)]
enum Cmd {
    /// Check the scenario and print the Perron vector and risk sets.
    Validate { path: PathBuf },
    /// Integrate and write trajectory.csv and summary.json.
    Simulate { path: PathBuf },
    /// Compare the predicted limit with the simulated final state.
    Verify { path: PathBuf },
    /// Compute the threshold N* (mass action, dS = 0).
    Nstar { path: PathBuf },
}

fn scenario_paths(path: &Path) -> Result<Vec<PathBuf>, CliError> {
    if !path.is_dir() {
        return Ok(vec![path.to_path_buf()]);
    }
    let entries = std::fs::read_dir(path).map_err(|e| CliError::Io(path.to_path_buf(), e))?;
    let mut paths = Vec::new();
    for entry in entries {
        let p = entry.map_err(|e| CliError::Io(path.to_path_buf(), e))?.path();
        if p.extension().is_some_and(|e| e == "toml") {
            paths.push(p);
        }
    }
    paths.sort();
    Ok(paths)
}

fn run_one(command: Command, path: &Path, overrides: &Overrides, dump: bool) -> Result<Outcome, CliError> {
    let loaded = Loaded::new(path, overrides)?;
    if dump {
        return Ok(Outcome {
            stdout: loaded.file.dump(),
            ok: true,
        });
    }
    commands::run(command, &loaded)
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let (command, path) = match cli.command {
        Cmd::Validate { path } => (Command::Validate, path),
        Cmd::Simulate { path } => (Command::Simulate, path),
        Cmd::Verify { path } => (Command::Verify, path),
        Cmd::Nstar { path } => (Command::NStar, path),
    };
    let overrides = Overrides {
        out: cli.out,
        t_end: cli.t_end,
        tol: cli.tol,
        seed: cli.seed,
    };
    let paths = match scenario_paths(&path) {
        Ok(p) => p,
        Err(e) => {
            eprintln!("error: {e}");
            return ExitCode::FAILURE;
        }
    };
    let batch = path.is_dir();

    // one worker per scenario; each writes only under its own output directory
    let results: Vec<Result<Outcome, CliError>> = std::thread::scope(|scope| {
        let handles: Vec<_> = paths
            .iter()
            .map(|p| scope.spawn(|| run_one(command, p, &overrides, cli.dump_config)))
            .collect();
        handles
            .into_iter()
            .map(|h| h.join().expect("scenario worker panicked"))
            .collect()
    });

    let mut all_ok = !paths.is_empty();
    for (p, result) in paths.iter().zip(results) {
        if batch {
            println!("# {}", p.display());
        }
        match result {
            Ok(outcome) => {
                print!("{}", outcome.stdout);
                all_ok &= outcome.ok;
            }
            Err(e) => {
                eprintln!("error: {}: {e}", p.display());
                all_ok = false;
            }
        }
    }
    if all_ok {
        ExitCode::SUCCESS
    } else {
        ExitCode::FAILURE
    }
}
