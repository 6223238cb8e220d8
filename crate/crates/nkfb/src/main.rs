//! Command-line front end: run a configured experiment, run a named
//! preset, or validate a configuration without running anything.
//!
//! Exit codes: 0 success, 1 invalid configuration or arguments,
//! 2 runtime failure, 3 reference-curve validation failure.

use std::path::PathBuf;
use std::process::ExitCode;
use std::time::Instant;

use clap::{Parser, Subcommand};

use nkfb::config::{ExperimentConfig, OutputFormat};
use nkfb::ensemble::run_ensemble;
use nkfb::output::{emit_ensemble, Manifest};
use nkfb::presets::{run_preset, PresetName, PresetOptions};

#[derive(Parser)]
#[command(
    name = "nkfb",
    about = "Delayed-feedback qubit trajectory simulator",
    version = nkfb::output::BUILD_ID,
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run the experiment described by a TOML config file.
    Run {
        /// Path to the configuration file.
        #[arg(long)]
        config: PathBuf,
        /// Dotted-path overrides applied on top of the file,
        /// e.g. --override sim.dt=1e-4 --override system.gamma=0.5
        #[arg(long = "override", value_name = "KEY.PATH=VALUE")]
        overrides: Vec<String>,
    },
    /// Run a named preset experiment.
    Preset {
        /// One of: fig-bloch, fig-case1, fig-case2, fig-case3,
        /// fidelity-sweep, delay-sweep.
        name: String,
        /// Output directory for curve files and the manifest.
        #[arg(long)]
        out: PathBuf,
        /// Trajectories per ensemble (default 5000).
        #[arg(long = "n-traj")]
        n_traj: Option<u64>,
        /// Master seed (default 42).
        #[arg(long)]
        seed: Option<u64>,
        /// Worker threads (default: NKFB_WORKERS, then all cores).
        #[arg(long)]
        workers: Option<usize>,
        /// Output format: csv or json (default csv).
        #[arg(long)]
        format: Option<String>,
    },
    /// Parse and validate a config file, printing the resolved run.
    Validate {
        /// Path to the configuration file.
        #[arg(long)]
        config: PathBuf,
        /// Dotted-path overrides applied on top of the file.
        #[arg(long = "override", value_name = "KEY.PATH=VALUE")]
        overrides: Vec<String>,
    },
}

fn main() -> ExitCode {
    match dispatch(Cli::parse()) {
        Ok(code) => code,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code())
        }
    }
}

fn dispatch(cli: Cli) -> nkfb::Result<ExitCode> {
    match cli.command {
        Command::Run { config, overrides } => run_experiment(&config, &overrides),
        Command::Preset {
            name,
            out,
            n_traj,
            seed,
            workers,
            format,
        } => {
            let name: PresetName = name.parse()?;
            let format = format.as_deref().map(str::parse::<OutputFormat>).transpose()?;
            let opts = PresetOptions {
                n_traj,
                master_seed: seed,
                workers,
                format,
            };
            let outcome = run_preset(name, &out, &opts)?;
            for file in &outcome.files {
                println!("wrote {}", file.display());
            }
            for (curve, report) in &outcome.validations {
                println!("{curve}: {report}");
            }
            if outcome.all_valid() {
                Ok(ExitCode::SUCCESS)
            } else {
                eprintln!("error: ensemble disagrees with its reference curve");
                Ok(ExitCode::from(3))
            }
        }
        Command::Validate { config, overrides } => {
            let cfg = load_config(&config, &overrides)?;
            print_resolved(&cfg);
            Ok(ExitCode::SUCCESS)
        }
    }
}

fn load_config(path: &PathBuf, overrides: &[String]) -> nkfb::Result<ExperimentConfig> {
    let text = std::fs::read_to_string(path)?;
    ExperimentConfig::parse_with_overrides(&text, overrides)
}

fn print_resolved(cfg: &ExperimentConfig) {
    println!("system: omega = {} rad/time (T_Omega = {}), axis = {}, gamma = {} (T_gamma = {})",
        cfg.system.omega,
        cfg.t_rabi(),
        cfg.system.rabi_axis.label(),
        cfg.system.gamma,
        cfg.t_gamma(),
    );
    println!(
        "sim: dt = {}, t_final = {} ({} steps), tau = {} (kappa = {} steps), method = {}, feedback = {}",
        cfg.sim.dt,
        cfg.sim.t_final,
        cfg.n_steps(),
        cfg.sim.tau,
        cfg.kappa(),
        cfg.sim.method,
        cfg.sim.feedback,
    );
    println!(
        "ensemble: n_traj = {}, master_seed = {}, workers = {}",
        cfg.ensemble.n_traj, cfg.ensemble.master_seed, cfg.ensemble.workers
    );
    println!(
        "initial state: S = ({}, {}, {})",
        cfg.initial_bloch.sx, cfg.initial_bloch.sy, cfg.initial_bloch.sz
    );
    println!(
        "output: dir = {}, format = {}, record every {} steps ({} points)",
        cfg.output.dir.display(),
        cfg.output.format.as_str(),
        cfg.output.record_every,
        cfg.n_steps() / cfg.output.record_every + 1,
    );
}

fn run_experiment(path: &PathBuf, overrides: &[String]) -> nkfb::Result<ExitCode> {
    let started = Instant::now();
    let cfg = load_config(path, overrides)?;
    let plan = cfg.simulation_plan()?;
    let result = run_ensemble(
        &plan,
        cfg.ensemble.n_traj,
        cfg.ensemble.master_seed,
        cfg.ensemble.workers,
    )?;
    let file = emit_ensemble(&cfg.output.dir, "ensemble", &result, cfg.output.format)?;
    println!("wrote {}", file.display());

    let manifest = Manifest {
        name: "run".into(),
        params: serde_json::json!({
            "omega": cfg.system.omega,
            "rabi_axis": cfg.system.rabi_axis.label(),
            "gamma": cfg.system.gamma,
            "dt": cfg.sim.dt,
            "t_final": cfg.sim.t_final,
            "tau": cfg.sim.tau,
            "kappa": cfg.kappa(),
            "method": cfg.sim.method.as_str(),
            "feedback": cfg.sim.feedback,
            "record_every": cfg.output.record_every,
            "initial_bloch": [cfg.initial_bloch.sx, cfg.initial_bloch.sy, cfg.initial_bloch.sz],
        }),
        master_seed: cfg.ensemble.master_seed,
        n_traj: cfg.ensemble.n_traj,
        workers: cfg.ensemble.workers,
        elapsed_s: started.elapsed().as_secs_f64(),
    };
    let file = manifest.write(&cfg.output.dir)?;
    println!("wrote {}", file.display());
    Ok(ExitCode::SUCCESS)
}
