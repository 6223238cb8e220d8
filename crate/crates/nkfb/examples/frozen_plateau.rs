//! Ensemble stabilization of an undriven qubit by delayed feedback.
//!
//! Feedback undoes every measurement kick a delay τ later, so on average
//! only a τ-window of noise ever acts: the ensemble mean decays like the
//! unconditional master equation until t = τ and then freezes at
//! e^{D[L̂]τ}ρ₀. This reproduces the plateau family (1/√2)·e^{−2γτ}.
//!
//! Run with: cargo run --release --example frozen_plateau

use nkfb::ensemble::{run_ensemble, validate_against_oracle, SimulationPlan};
use nkfb::operators::{dephasing_coupling, BlochVector, DensityMatrix, HermitianOperator};
use nkfb::oracles::{frozen_average, OracleCurve};
use nkfb::trajectory::{Method, StepConfig};

fn main() -> nkfb::Result<()> {
    let gamma = 1.0;
    let dt = 1e-3;
    let n_steps = 3000; // three dephasing times
    let record_every = 50;
    let n_traj = 1000;

    let s = std::f64::consts::FRAC_1_SQRT_2;
    let rho0 = DensityMatrix::from_bloch(BlochVector::new(s, s, 0.0))?;
    let l = dephasing_coupling(gamma)?;

    for tau in [0.1, 0.3, 0.5] {
        let cfg = StepConfig::from_delay_time(
            HermitianOperator::zero(2),
            l.clone(),
            dt,
            tau,
            true,
        )?;
        let plan = SimulationPlan::new(cfg, Method::Operational, rho0.clone(), n_steps, record_every)?;
        let result = run_ensemble(&plan, n_traj, 42, 4)?;

        let oracle = OracleCurve::tabulate(
            format!("frozen tau={tau}"),
            result.times.clone(),
            |t| frozen_average(&rho0, &l, tau, t),
        )?;
        let report = validate_against_oracle(&result, &oracle, 4.0)?;

        let mean = result.mean_bloch.last().unwrap();
        let sem = result.sem_bloch.last().unwrap();
        let plateau = s * (-2.0 * gamma * tau).exp();
        println!(
            "tau = {tau}: Sx(3/gamma) = {:.5} ± {:.5}  (plateau {:.5})   {report}",
            mean.sx, sem.sx, plateau
        );
    }
    Ok(())
}
