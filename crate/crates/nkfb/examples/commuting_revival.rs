//! Delayed feedback under a drive that commutes with the coupling.
//!
//! With Ĥ = (Ω/2)σ̂z and L̂ = sqrt(γ)σ̂z every kick commutes with the
//! drive, so feedback still cancels all noise older than τ: the
//! transverse amplitude decays for t < τ, then stays frozen at e^{−2γτ}
//! while the drive keeps rotating the state at Ω.
//!
//! Run with: cargo run --release --example commuting_revival

use nkfb::ensemble::{run_ensemble, SimulationPlan};
use nkfb::operators::{dephasing_coupling, rabi_hamiltonian, Axis, BlochVector, DensityMatrix};
use nkfb::trajectory::{Method, StepConfig};

fn main() -> nkfb::Result<()> {
    let omega = 2.0 * std::f64::consts::PI; // T_Omega = 1
    let gamma = 0.5;
    let dt = 1e-3;
    let tau = 0.3; // 0.6 drive periods of delay
    let n_steps = 2000;
    let n_traj = 800;

    let s = std::f64::consts::FRAC_1_SQRT_2;
    let rho0 = DensityMatrix::from_bloch(BlochVector::new(s, s, 0.0))?;
    let cfg = StepConfig::from_delay_time(
        rabi_hamiltonian(omega, Axis::Z),
        dephasing_coupling(gamma)?,
        dt,
        tau,
        true,
    )?;
    let plan = SimulationPlan::new(cfg, Method::Operational, rho0, n_steps, 100)?;
    let result = run_ensemble(&plan, n_traj, 42, 4)?;

    let frozen = (-2.0 * gamma * tau).exp();
    println!("transverse amplitude |S_perp| vs the frozen value e^(-2*gamma*tau) = {frozen:.5}\n");
    println!("{:>5} | {:>9} | {:>9}", "t", "|S_perp|", "frozen?");
    for (t, mean) in result.times.iter().zip(&result.mean_bloch) {
        let amp = mean.transverse();
        let marker = if *t >= tau { "yes" } else { "decaying" };
        println!("{t:>5.2} | {amp:>9.5} | {marker:>9}");
    }
    Ok(())
}
