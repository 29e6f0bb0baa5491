//! `backflip`: scenario runner for the quadcopter backflip toolkit.

use backflip_cli::config::Ini;
use backflip_cli::pipeline::{
    self, compare_runs, optimize_flip_params, plan_only, run_scenario, train_gp, PipelineError,
};
use backflip_cli::scenario::Scenario;
use clap::{Parser, Subcommand};
use std::path::{Path, PathBuf};
use std::process::ExitCode;

#[derive(Parser)]
#[command(name = "backflip", version, about = "Quadcopter backflip maneuver toolkit")]
struct Cli {
    /// Root directory for run outputs (overrides BACKFLIP_OUTPUT_ROOT).
    #[arg(long, global = true)]
    output_root: Option<PathBuf>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Execute a scenario file and write traj.csv + summary.json.
    Run { scenario: PathBuf },
    /// Offline optimizations producing persisted artifacts.
    Optimize {
        #[command(subcommand)]
        what: OptimizeCommand,
    },
    /// Plan the flip reference trajectory only.
    Plan { config: PathBuf },
    /// Compare two or more run directories channel by channel.
    Compare {
        dirs: Vec<PathBuf>,
        /// Output JSON path (a CSV twin is written next to it).
        #[arg(long, default_value = "comparison.json")]
        out: PathBuf,
    },
    /// Print the toolkit version.
    Version,
}

#[derive(Subcommand)]
enum OptimizeCommand {
    /// Bayesian optimization of the five bang-bang flip parameters.
    FlipParams { config: PathBuf },
    /// Train the torque-residual GPs from simulated flights and export
    /// lookup tables.
    GpTrain { config: PathBuf },
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match dispatch(&cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(err) => {
            eprintln!("error: {err}");
            if err.is_schema() {
                ExitCode::from(2)
            } else {
                ExitCode::from(1)
            }
        }
    }
}

fn dispatch(cli: &Cli) -> Result<(), PipelineError> {
    let output_root = cli.output_root.as_deref();
    match &cli.command {
        Command::Run { scenario } => {
            let s = Scenario::load(scenario)?;
            let artifacts = run_scenario(&s, output_root)?;
            println!("wrote {}", artifacts.dir.join("traj.csv").display());
            println!("wrote {}", artifacts.dir.join("summary.json").display());
            Ok(())
        }
        Command::Optimize { what } => match what {
            OptimizeCommand::FlipParams { config } => {
                let ini = Ini::load(config)?;
                let eta_path = optimize_flip_params(&ini, parent(config))?;
                println!("wrote {}", eta_path.display());
                Ok(())
            }
            OptimizeCommand::GpTrain { config } => {
                let ini = Ini::load(config)?;
                let artifacts = train_gp(&ini, parent(config))?;
                println!("wrote {}", artifacts.pack_path.display());
                println!(
                    "held-out rmse: roll {:.2e} N·m, pitch {:.2e} N·m; 2σ coverage {:.1}%",
                    artifacts.summary.rmse[0],
                    artifacts.summary.rmse[1],
                    100.0 * artifacts.summary.coverage_2sigma
                );
                Ok(())
            }
        },
        Command::Plan { config } => {
            let s = Scenario::load_for_plan(config)?;
            let dir = plan_only(&s, output_root)?;
            println!("wrote {}", dir.join("reference.csv").display());
            Ok(())
        }
        Command::Compare { dirs, out } => {
            let report = compare_runs(dirs)?;
            pipeline::write_comparison(&report, out)?;
            println!("wrote {}", out.display());
            Ok(())
        }
        Command::Version => {
            println!("backflip {}", env!("CARGO_PKG_VERSION"));
            Ok(())
        }
    }
}

fn parent(path: &Path) -> &Path {
    path.parent().unwrap_or(Path::new("."))
}
