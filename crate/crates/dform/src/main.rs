use clap::{Parser, Subcommand};

use std::path::{Path, PathBuf};
use std::process::ExitCode;

use dform::scenario::{
    build, cmd_analyze, cmd_predict, cmd_simulate, parse_scenario, ScenarioError, SimulateOptions,
};

#[derive(Parser)]
#[command(
    name = "dform",
    version,
    about = "Dihedral-symmetry formation control on cycle graphs"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Integrate the scenario's control law and write trajectory/residual
    /// tables plus a JSON summary.
    Simulate {
        scenario: PathBuf,
        /// Output directory (default: $DF_OUT_DIR/<name> or out/<name>).
        #[arg(long)]
        out: Option<PathBuf>,
        /// Integration step override.
        #[arg(long)]
        dt: Option<f64>,
        /// Horizon override.
        #[arg(long)]
        horizon: Option<f64>,
    },
    /// Print spectral and symmetry-structure facts for the scenario.
    Analyze { scenario: PathBuf },
    /// Print the closed-form steady state of the anchored flow.
    Predict { scenario: PathBuf },
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(err) => {
            eprintln!("dform: error[{}]: {err}", err.code_label());
            ExitCode::from(err.exit_code() as u8)
        }
    }
}

fn run(cli: Cli) -> Result<(), ScenarioError> {
    match cli.command {
        Command::Simulate {
            scenario,
            out,
            dt,
            horizon,
        } => {
            let built = load(&scenario)?;
            let options = SimulateOptions {
                out_dir: out,
                dt,
                horizon,
            };
            let (summary, dir) = cmd_simulate(&built, &options)?;
            println!("{}", to_json(&summary));
            eprintln!("dform: wrote {}", dir.display());
        }
        Command::Analyze { scenario } => {
            let built = load(&scenario)?;
            println!("{}", to_json(&cmd_analyze(&built)?));
        }
        Command::Predict { scenario } => {
            let built = load(&scenario)?;
            println!("{}", to_json(&cmd_predict(&built)?));
        }
    }
    Ok(())
}

fn load(path: &Path) -> Result<dform::BuiltScenario, ScenarioError> {
    let scenario = parse_scenario(path)?;
    let name = path
        .file_stem()
        .map(|s| s.to_string_lossy().into_owned())
        .unwrap_or_else(|| "scenario".to_string());
    build(&name, &scenario)
}

fn to_json<T: serde::Serialize>(value: &T) -> String {
    serde_json::to_string_pretty(value).expect("serializable summary")
}
