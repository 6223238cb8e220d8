//! Quantum-trajectory simulation of delayed no-knowledge measurement
//! feedback on a driven qubit.

pub mod error;
pub mod config;
pub mod ensemble;
pub mod noise;
pub mod operators;
pub mod oracles;
pub mod output;
pub mod presets;
pub mod sme;
pub mod superop;
pub mod trajectory;

pub use error::{Error, Result};
pub use noise::{coarsen_noise, DelayBuffer, NoiseStream};
pub use operators::{
    commutator_norm, dephasing_coupling, rabi_hamiltonian, unitary_from_generator, Axis,
    BlochVector, CMatrix, DensityMatrix, HermitianOperator, UnitaryOperator,
};
pub use config::{
    EnsembleConfig, ExperimentConfig, OutputConfig, OutputFormat, SimConfig, SystemConfig,
};
pub use ensemble::{
    fidelity_estimate, run_ensemble, validate_against_oracle, validate_with_threshold,
    EnsembleResult, ScalarEstimate, SimulationPlan, ValidationReport,
};
pub use presets::{run_preset, PresetName, PresetOptions, PresetOutcome};
pub use output::{
    emit_ensemble, emit_oracle, ensemble_csv, ensemble_json, oracle_csv, oracle_json,
    parse_curve_csv, CurveRow, Manifest, BUILD_ID, CSV_HEADER,
};
pub use oracles::{
    commuting_average, frozen_average, frozen_plateau, lindblad_propagate, rabi_reference,
    steady_fidelity, OracleCurve,
};
pub use sme::{
    delayed_ito_step, delayed_stratonovich_step, homodyne_record, ito_homodyne_step,
    stratonovich_homodyne_step, HomodyneConfig,
};
pub use trajectory::{
    compressed_commuting_propagator, run_trajectory, run_trajectory_with_method,
    run_trajectory_with_noises, step_no_feedback, step_with_feedback, Method, StepConfig,
    TrajectoryRecord,
};
