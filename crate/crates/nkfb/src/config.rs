//! Experiment configuration: a TOML schema with documented defaults,
//! strict validation (unknown keys are rejected, violations carry field
//! paths), and dotted-path command-line overrides.
//!
//! Times are expressed in the same unit everywhere; the drive period
//! T_Ω = 2π/Ω and the dephasing time T_γ = 1/γ are derived, never stored.

use std::path::PathBuf;

use serde::Deserialize;

use crate::ensemble::SimulationPlan;
use crate::error::{Error, Result};
use crate::operators::{rabi_hamiltonian, Axis, BlochVector, DensityMatrix, dephasing_coupling};
use crate::trajectory::{Method, StepConfig};

/// Relative tolerance for "τ is an integer multiple of dt".
const DELAY_GRID_REL_TOL: f64 = 1e-9;

/// Output file format for curves and manifests.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum OutputFormat {
    Csv,
    Json,
}

impl OutputFormat {
    pub fn as_str(&self) -> &'static str {
        match self {
            OutputFormat::Csv => "csv",
            OutputFormat::Json => "json",
        }
    }
}

impl std::str::FromStr for OutputFormat {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "csv" => Ok(OutputFormat::Csv),
            "json" => Ok(OutputFormat::Json),
            other => Err(Error::InvalidArgument {
                name: "format",
                reason: format!("unknown format {other:?}, expected csv or json"),
            }),
        }
    }
}

/// Physical system: drive frequency/axis and coupling strength.
#[derive(Debug, Clone, Copy)]
pub struct SystemConfig {
    /// Drive angular frequency Ω (rad per time unit).
    pub omega: f64,
    /// Drive axis: Ĥ = (Ω/2)·σ̂_axis.
    pub rabi_axis: Axis,
    /// Coupling strength γ: L̂ = sqrt(γ)·σ̂z.
    pub gamma: f64,
}

/// Simulation discretization and scheme.
#[derive(Debug, Clone, Copy)]
pub struct SimConfig {
    /// Step size δt.
    pub dt: f64,
    /// Simulation horizon; the step count is t_final/dt rounded to the
    /// nearest integer.
    pub t_final: f64,
    /// Feedback delay τ; must be an integer multiple of dt.
    pub tau: f64,
    pub method: Method,
    pub feedback: bool,
}

/// Monte Carlo size and reproducibility knobs.
#[derive(Debug, Clone, Copy)]
pub struct EnsembleConfig {
    pub n_traj: u64,
    pub master_seed: u64,
    /// Worker threads. Never affects results, only wall time.
    pub workers: usize,
}

/// Output location and data format.
#[derive(Debug, Clone)]
pub struct OutputConfig {
    pub dir: PathBuf,
    pub format: OutputFormat,
    /// Record every k-th step (1 = every step).
    pub record_every: usize,
}

/// A fully validated experiment description.
#[derive(Debug, Clone)]
pub struct ExperimentConfig {
    pub system: SystemConfig,
    pub sim: SimConfig,
    pub ensemble: EnsembleConfig,
    /// Initial state as a Bloch vector (defaults to the x+y equator state).
    pub initial_bloch: BlochVector,
    pub output: OutputConfig,
}

// ----- raw (pre-validation) schema -----

#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawConfig {
    system: Option<RawSystem>,
    sim: Option<RawSim>,
    ensemble: Option<RawEnsemble>,
    initial_state: Option<RawInitialState>,
    output: Option<RawOutput>,
}

#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawSystem {
    omega: Option<f64>,
    rabi_axis: Option<String>,
    gamma: Option<f64>,
}

#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawSim {
    dt: Option<f64>,
    t_final: Option<f64>,
    tau: Option<f64>,
    method: Option<String>,
    feedback: Option<bool>,
}

#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawEnsemble {
    n_traj: Option<u64>,
    master_seed: Option<u64>,
    workers: Option<u64>,
}

#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawInitialState {
    bloch: Option<[f64; 3]>,
}

#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawOutput {
    dir: Option<PathBuf>,
    format: Option<String>,
    record_every: Option<u64>,
}

/// Resolves the worker count: explicit config value, else the
/// `NKFB_WORKERS` environment variable, else all available cores.
fn workers_from(explicit: Option<u64>, env: Option<&str>) -> std::result::Result<usize, String> {
    if let Some(w) = explicit {
        if w == 0 {
            return Err("ensemble.workers: must be >= 1".into());
        }
        return Ok(w as usize);
    }
    if let Some(text) = env {
        let w: usize = text
            .parse()
            .map_err(|_| format!("NKFB_WORKERS: not a positive integer: {text:?}"))?;
        if w == 0 {
            return Err("NKFB_WORKERS: must be >= 1".into());
        }
        return Ok(w);
    }
    Ok(std::thread::available_parallelism().map_or(1, |n| n.get()))
}

/// Checks that `value` is an integer multiple of `dt` within
/// [`DELAY_GRID_REL_TOL`] and returns the step count.
pub(crate) fn steps_on_grid(value: f64, dt: f64) -> Option<usize> {
    let ratio = value / dt;
    let rounded = ratio.round();
    if (ratio - rounded).abs() <= DELAY_GRID_REL_TOL * ratio.abs().max(1.0) {
        Some(rounded as usize)
    } else {
        None
    }
}

impl ExperimentConfig {
    /// Parses and validates a TOML experiment description. Every omitted
    /// field takes its documented default; unknown keys are errors.
    pub fn parse(text: &str) -> Result<Self> {
        Self::parse_with_overrides(text, std::iter::empty::<&str>())
    }

    /// As [`ExperimentConfig::parse`], with `key.path=value` overrides
    /// applied on top of the file before validation.
    pub fn parse_with_overrides<I, S>(text: &str, overrides: I) -> Result<Self>
    where
        I: IntoIterator<Item = S>,
        S: AsRef<str>,
    {
        let mut table: toml::Table = text
            .parse()
            .map_err(|e| Error::Config(vec![format!("config is not valid TOML: {e}")]))?;
        for entry in overrides {
            apply_override(&mut table, entry.as_ref())?;
        }
        let raw: RawConfig = table
            .try_into()
            .map_err(|e| Error::Config(vec![e.to_string()]))?;
        Self::resolve(raw, std::env::var("NKFB_WORKERS").ok().as_deref())
    }

    fn resolve(raw: RawConfig, env_workers: Option<&str>) -> Result<Self> {
        let mut problems: Vec<String> = Vec::new();
        let system = raw.system.unwrap_or_default();
        let sim = raw.sim.unwrap_or_default();
        let ensemble = raw.ensemble.unwrap_or_default();
        let initial = raw.initial_state.unwrap_or_default();
        let output = raw.output.unwrap_or_default();

        let omega = system.omega.unwrap_or(2.0 * std::f64::consts::PI);
        if !omega.is_finite() {
            problems.push(format!("system.omega: must be finite, got {omega}"));
        }
        let rabi_axis = match system.rabi_axis.as_deref().map(str::parse::<Axis>) {
            None => Axis::Z,
            Some(Ok(a)) => a,
            Some(Err(e)) => {
                problems.push(format!("system.rabi_axis: {e}"));
                Axis::Z
            }
        };
        let gamma = system.gamma.unwrap_or(1.0);
        if gamma < 0.0 || !gamma.is_finite() {
            problems.push(format!("system.gamma: must be finite and >= 0, got {gamma}"));
        }

        // Default step: δt = 1e-3·T_Ω of the resolved drive frequency.
        let t_rabi = 2.0 * std::f64::consts::PI / omega.abs().max(f64::MIN_POSITIVE);
        let dt = sim.dt.unwrap_or(1e-3 * t_rabi);
        if dt <= 0.0 || !dt.is_finite() {
            problems.push(format!("sim.dt: must be finite and > 0, got {dt}"));
        }
        let t_final = sim.t_final.unwrap_or(3.0);
        if t_final < dt || !t_final.is_finite() {
            problems.push(format!(
                "sim.t_final: must be finite and at least one step (dt = {dt}), got {t_final}"
            ));
        }
        let tau = sim.tau.unwrap_or(0.1);
        if tau < 0.0 || !tau.is_finite() {
            problems.push(format!("sim.tau: must be finite and >= 0, got {tau}"));
        } else if dt > 0.0 && steps_on_grid(tau, dt).is_none() {
            problems.push(format!(
                "sim.tau: tau not an integer multiple of dt (tau = {tau}, dt = {dt})"
            ));
        }
        let method = match sim.method.as_deref().map(str::parse::<Method>) {
            None => Method::Operational,
            Some(Ok(m)) => m,
            Some(Err(e)) => {
                problems.push(format!("sim.method: {e}"));
                Method::Operational
            }
        };
        let feedback = sim.feedback.unwrap_or(true);
        if method != Method::Operational && feedback && tau == 0.0 {
            problems.push(
                "sim.method: delayed integrators are undefined at zero delay; \
                 use method=operational (or disable feedback)"
                    .into(),
            );
        }

        let n_traj = ensemble.n_traj.unwrap_or(5000);
        if n_traj == 0 {
            problems.push("ensemble.n_traj: must be >= 1".into());
        }
        let master_seed = ensemble.master_seed.unwrap_or(42);
        let workers = match workers_from(ensemble.workers, env_workers) {
            Ok(w) => w,
            Err(msg) => {
                problems.push(msg);
                1
            }
        };

        let bloch = initial
            .bloch
            .map(|[sx, sy, sz]| BlochVector::new(sx, sy, sz))
            .unwrap_or(BlochVector::new(
                std::f64::consts::FRAC_1_SQRT_2,
                std::f64::consts::FRAC_1_SQRT_2,
                0.0,
            ));
        if bloch.norm_squared() > 1.0 + 1e-10 || !bloch.norm_squared().is_finite() {
            problems.push(format!(
                "initial_state.bloch: |S| must be <= 1, got |S| = {}",
                bloch.norm()
            ));
        }

        let dir = output.dir.unwrap_or_else(|| PathBuf::from("out"));
        let format = match output.format.as_deref().map(str::parse::<OutputFormat>) {
            None => OutputFormat::Csv,
            Some(Ok(f)) => f,
            Some(Err(e)) => {
                problems.push(format!("output.format: {e}"));
                OutputFormat::Csv
            }
        };
        let record_every = output.record_every.unwrap_or(10);
        if record_every == 0 {
            problems.push("output.record_every: must be >= 1".into());
        }

        if !problems.is_empty() {
            return Err(Error::Config(problems));
        }
        Ok(ExperimentConfig {
            system: SystemConfig {
                omega,
                rabi_axis,
                gamma,
            },
            sim: SimConfig {
                dt,
                t_final,
                tau,
                method,
                feedback,
            },
            ensemble: EnsembleConfig {
                n_traj,
                master_seed,
                workers: workers.max(1),
            },
            initial_bloch: bloch,
            output: OutputConfig {
                dir,
                format,
                record_every: record_every as usize,
            },
        })
    }

    /// Drive period T_Ω = 2π/Ω.
    pub fn t_rabi(&self) -> f64 {
        2.0 * std::f64::consts::PI / self.system.omega.abs()
    }

    /// Dephasing time T_γ = 1/γ (infinite for γ = 0).
    pub fn t_gamma(&self) -> f64 {
        1.0 / self.system.gamma
    }

    /// Delay in steps, κ = τ/δt.
    pub fn kappa(&self) -> usize {
        steps_on_grid(self.sim.tau, self.sim.dt).expect("validated at parse time")
    }

    /// Total step count, t_final/δt rounded to the nearest integer.
    pub fn n_steps(&self) -> usize {
        (self.sim.t_final / self.sim.dt).round() as usize
    }

    /// Builds the per-step configuration (drive unitary, coupling, delay).
    pub fn step_config(&self) -> Result<StepConfig> {
        StepConfig::new(
            rabi_hamiltonian(self.system.omega, self.system.rabi_axis),
            dephasing_coupling(self.system.gamma)?,
            self.sim.dt,
            self.kappa(),
            self.sim.feedback,
        )
    }

    /// Builds the full per-trajectory simulation plan.
    pub fn simulation_plan(&self) -> Result<SimulationPlan> {
        SimulationPlan::new(
            self.step_config()?,
            self.sim.method,
            DensityMatrix::from_bloch(self.initial_bloch)?,
            self.n_steps(),
            self.output.record_every,
        )
    }
}

/// Applies one `dotted.path=value` override to a parsed TOML table.
fn apply_override(table: &mut toml::Table, entry: &str) -> Result<()> {
    let Some((path, raw_value)) = entry.split_once('=') else {
        return Err(Error::Config(vec![format!(
            "override {entry:?} is not of the form key.path=value"
        )]));
    };
    let path = path.trim();
    let raw_value = raw_value.trim();
    if path.is_empty() {
        return Err(Error::Config(vec![format!(
            "override {entry:?} has an empty key path"
        )]));
    }
    // Values follow TOML syntax; anything that does not parse as a TOML
    // literal (e.g. a bare word like `ito`) is taken as a string.
    let value = format!("v = {raw_value}")
        .parse::<toml::Table>()
        .ok()
        .and_then(|mut t| t.remove("v"))
        .unwrap_or_else(|| toml::Value::String(raw_value.to_string()));

    let mut segments = path.split('.').peekable();
    let mut current = table;
    while let Some(segment) = segments.next() {
        if segment.is_empty() {
            return Err(Error::Config(vec![format!(
                "override {entry:?} has an empty path segment"
            )]));
        }
        if segments.peek().is_none() {
            current.insert(segment.to_string(), value);
            break;
        }
        current = current
            .entry(segment.to_string())
            .or_insert_with(|| toml::Value::Table(toml::Table::new()))
            .as_table_mut()
            .ok_or_else(|| {
                Error::Config(vec![format!(
                    "override {entry:?}: {segment} is not a table"
                )])
            })?;
    }
    Ok(())
}
