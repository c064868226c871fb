use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand, ValueEnum};

use hca::harness::{run, write_report, JoystickTrace, RunOptions};
use hca::pipeline::ResolutionMode;
use hca::sim_world::{resolve_scenario, ScenarioFile};
use hca::PlannerConfig;

#[derive(Parser)]
#[command(name = "hca", version, about = "Adaptive-resolution teleoperation planner and simulator")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Clone, Copy, ValueEnum)]
enum ModeArg {
    Adaptive,
    Fixed,
}

#[derive(Subcommand)]
enum Command {
    /// Run a scenario with a scripted joystick trace and write telemetry.
    Run {
        /// Built-in scenario name (window, door, clutter_cave) or a scenario JSON file.
        #[arg(long)]
        scenario: String,
        #[arg(long, value_enum, default_value = "adaptive")]
        mode: ModeArg,
        /// Voxel size for fixed mode, meters.
        #[arg(long)]
        voxel_size: Option<f64>,
        #[arg(long, default_value_t = 0.1)]
        alpha_min: f64,
        #[arg(long, default_value_t = 0.5)]
        alpha_max: f64,
        /// CSV trace `time_s,ax_forward,ax_vertical,ax_yaw`; defaults to 60 s of full forward.
        #[arg(long)]
        trace: Option<PathBuf>,
        #[arg(long, default_value = "out")]
        out: PathBuf,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        /// Write zero plan times so reruns produce identical files.
        #[arg(long)]
        no_timing: bool,
    },
    /// Serve the live WebSocket session for the operator UI.
    Serve {
        #[arg(long, default_value_t = hca::server::DEFAULT_PORT)]
        port: u16,
        #[arg(long, default_value = "window")]
        scenario: String,
        #[arg(long, default_value_t = 0)]
        seed: u64,
    },
    /// Print a built-in scenario as JSON.
    ExportScenario {
        #[arg(long)]
        scenario: String,
        #[arg(long, default_value_t = 0)]
        seed: u64,
    },
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::new().filter_or("HCA_LOG_LEVEL", "info")).init();
    match dispatch(Cli::parse()) {
        Ok(code) => code,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(2)
        }
    }
}

fn dispatch(cli: Cli) -> Result<ExitCode, Box<dyn std::error::Error>> {
    match cli.command {
        Command::Run { scenario, mode, voxel_size, alpha_min, alpha_max, trace, out, seed, no_timing } => {
            let scenario = resolve_scenario(&scenario, seed)?;
            let mode = match mode {
                ModeArg::Adaptive => ResolutionMode::Adaptive { alpha_min, alpha_max },
                ModeArg::Fixed => {
                    let alpha = voxel_size.ok_or("--voxel-size is required in fixed mode")?;
                    ResolutionMode::Fixed { alpha }
                }
            };
            let trace = match trace {
                Some(path) => JoystickTrace::load(&path)?,
                None => JoystickTrace::constant([1.0, 0.0, 0.0], 60.0),
            };
            let opts = RunOptions { record_plan_time: !no_timing };
            let report = run(&scenario, mode, &trace, &PlannerConfig::default(), opts)?;
            write_report(&report, &out)?;
            println!("{}", serde_json::to_string_pretty(&report.summary)?);
            Ok(if report.summary.collided { ExitCode::from(1) } else { ExitCode::SUCCESS })
        }
        Command::Serve { port, scenario, seed } => {
            let scenario = resolve_scenario(&scenario, seed)?;
            let runtime = tokio::runtime::Runtime::new()?;
            runtime.block_on(hca::server::serve(port, scenario, PlannerConfig::default()))?;
            Ok(ExitCode::SUCCESS)
        }
        Command::ExportScenario { scenario, seed } => {
            let scenario = resolve_scenario(&scenario, seed)?;
            println!("{}", serde_json::to_string_pretty(&ScenarioFile::from(&scenario))?);
            Ok(ExitCode::SUCCESS)
        }
    }
}
