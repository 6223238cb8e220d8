//! Crate-wide error type.

use thiserror::Error;

/// Errors produced by construction, configuration, and simulation.
#[derive(Debug, Error)]
pub enum Error {
    /// A matrix failed a structural requirement (shape, Hermiticity, ...).
    #[error("invalid operator: {0}")]
    InvalidOperator(String),

    /// A state failed a density-matrix invariant (trace, positivity, ...).
    #[error("invalid state: {0}")]
    InvalidState(String),

    /// An argument was outside its documented domain.
    #[error("invalid argument `{name}`: {reason}")]
    InvalidArgument { name: &'static str, reason: String },

    /// An operation that requires `[H, L] = 0` was called with
    /// non-commuting operators.
    #[error("operators do not commute: ||[H, L]||_F = {norm:.3e} exceeds {tol:.1e}")]
    NonCommuting { norm: f64, tol: f64 },

    /// A stochastic integrator produced a state outside its repairable
    /// region (eigenvalue below the hard floor), usually a sign that the
    /// time step is too coarse.
    #[error("integration step failed: {0}")]
    StepFailure(String),

    /// A trajectory inside an ensemble failed; the stream index identifies
    /// the offending noise realization.
    #[error("trajectory for noise stream {stream_index} failed: {source}")]
    Trajectory {
        stream_index: u64,
        #[source]
        source: Box<Error>,
    },

    /// Configuration file problems: one message per offending field.
    #[error("invalid configuration:\n{}", .0.join("\n"))]
    Config(Vec<String>),

    /// Mismatched grids or shapes between an ensemble and an oracle curve.
    #[error("grid mismatch: {0}")]
    GridMismatch(String),

    #[error("i/o error: {0}")]
    Io(#[from] std::io::Error),

    #[error("serialization error: {0}")]
    Serialize(String),
}

pub type Result<T> = std::result::Result<T, Error>;

impl Error {
    /// Process exit code for the CLI: 1 validation, 2 runtime.
    pub fn exit_code(&self) -> u8 {
        match self {
            Error::Config(_)
            | Error::InvalidArgument { .. }
            | Error::InvalidOperator(_)
            | Error::InvalidState(_) => 1,
            _ => 2,
        }
    }
}
