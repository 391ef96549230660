//! `sma`: run scenarios, sweep experiment grids and calibrate parameters.

mod identify;
mod run;
mod sweep;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use sma_core::scenario::Scenario;
use sma_core::{Error, MaterialParams};

#[derive(Parser)]
#[command(name = "sma", version, about = "Hybrid and baseline SMA wire simulations")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run one scenario and write trajectories, transitions and a summary.
    Run {
        /// Scenario file; omit with --bundled.
        scenario: Option<PathBuf>,
        /// Use a bundled scenario by name.
        #[arg(long, conflicts_with = "scenario")]
        bundled: Option<String>,
        #[command(flatten)]
        common: Common,
    },
    /// Compare both models over a grid of strains, rates and powers.
    Sweep(sweep::SweepArgs),
    /// Calibrate parameters against the datasets of a manifest.
    Identify {
        manifest: PathBuf,
        #[arg(short, long, default_value = "identify_out")]
        out: PathBuf,
        /// Iteration cap for each simplex stage.
        #[arg(long)]
        max_iters: Option<u64>,
    },
    /// Check scenario and parameter files without running them.
    Validate {
        /// Scenario files.
        scenarios: Vec<PathBuf>,
        /// Parameter files.
        #[arg(long = "params")]
        params: Vec<PathBuf>,
    },
    /// List the bundled scenarios.
    List,
}

/// Options shared by the simulation commands.
#[derive(Args, Clone, Debug, Default)]
pub struct Common {
    /// Relative tolerance override.
    #[arg(long)]
    pub rtol: Option<f64>,
    /// Absolute tolerance override.
    #[arg(long)]
    pub atol: Option<f64>,
    /// Output sampling period override [s].
    #[arg(long)]
    pub sample_period_s: Option<f64>,
    /// Output directory (defaults to the scenario's, then `out`).
    #[arg(short, long)]
    pub out: Option<PathBuf>,
}

impl Common {
    pub fn apply(&self, sc: &mut Scenario) -> Result<(), Error> {
        if let Some(v) = self.rtol {
            sc.solver.rtol = v;
        }
        if let Some(v) = self.atol {
            sc.solver.atol = v;
        }
        if let Some(v) = self.sample_period_s {
            sc.solver.sample_period_s = v;
        }
        sc.validate()
    }
}

/// Exit status: 1 for input problems, 2 for failures of the models or solvers.
pub fn exit_code(e: &Error) -> u8 {
    match e {
        Error::Config(_) | Error::Io(_) | Error::InvalidParameter { .. } | Error::Signal(_) | Error::Precondition(_) => 1,
        _ => 2,
    }
}

fn fail(e: Error) -> ExitCode {
    eprintln!("error: {e}");
    ExitCode::from(exit_code(&e))
}

fn validate(scenarios: &[PathBuf], params: &[PathBuf]) -> Result<(), Error> {
    let mut first = None;
    for path in scenarios {
        match Scenario::load(path).and_then(|sc| sc.params().and_then(|p| sc.drive(&p).map(|_| ()))) {
            Ok(()) => println!("{}: ok", path.display()),
            Err(e) => {
                eprintln!("{}: {e}", path.display());
                first.get_or_insert(e);
            }
        }
    }
    for path in params {
        match MaterialParams::load(path) {
            Ok(_) => println!("{}: ok", path.display()),
            Err(e) => {
                eprintln!("{}: {e}", path.display());
                first.get_or_insert(e);
            }
        }
    }
    first.map_or(Ok(()), Err)
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let result = match cli.command {
        Command::Run { scenario, bundled, common } => {
            let sc = match (scenario, bundled) {
                (Some(path), _) => Scenario::load(&path),
                (None, Some(name)) => Scenario::bundled(&name),
                (None, None) => Err(Error::Config("give a scenario file or --bundled NAME".into())),
            };
            sc.and_then(|mut sc| {
                common.apply(&mut sc)?;
                run::run(&sc, &common)
            })
        }
        Command::Sweep(args) => sweep::sweep(&args),
        Command::Identify { manifest, out, max_iters } => identify::identify(&manifest, &out, max_iters),
        Command::Validate { scenarios, params } => validate(&scenarios, &params),
        Command::List => {
            for (name, _) in sma_core::scenario::bundled() {
                println!("{name}");
            }
            Ok(())
        }
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => fail(e),
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn exit_codes() {
        assert_eq!(exit_code(&Error::Config("x".into())), 1);
        assert_eq!(exit_code(&Error::SolverFailure { t: 0.0, reason: "x".into() }), 2);
        assert_eq!(exit_code(&Error::Zeno { t: 0.0, limit: 3, log: String::new() }), 2);
    }

    #[test]
    fn overrides_are_validated() {
        let mut sc = Scenario::bundled("fig7_low_power").unwrap();
        let c = Common { rtol: Some(1e-8), ..Common::default() };
        c.apply(&mut sc).unwrap();
        assert_eq!(sc.solver.rtol, 1e-8);
        let bad = Common { atol: Some(-1.0), ..Common::default() };
        assert!(bad.apply(&mut sc).is_err());
    }
}
