//! Stabilized fidelity as a function of the feedback delay.
//!
//! Once the ensemble has frozen (t ≥ τ), the overlap between the initial
//! pure state and the stabilized average obeys the closed form
//! F = ½[(1 + Sz(0)²) + (1 − Sz(0)²)·e^{−2γτ}]. The Monte Carlo estimate
//! uses one fidelity sample per trajectory, so its error bar comes from
//! the sample variance, not from an assumed distribution.
//!
//! Run with: cargo run --release --example fidelity_sweep

use nkfb::ensemble::{fidelity_estimate, SimulationPlan};
use nkfb::operators::{dephasing_coupling, BlochVector, DensityMatrix, HermitianOperator};
use nkfb::oracles::steady_fidelity;
use nkfb::trajectory::{Method, StepConfig};

fn main() -> nkfb::Result<()> {
    let gamma = 1.0;
    let dt = 1e-3;
    let n_traj = 800;

    let s = std::f64::consts::FRAC_1_SQRT_2;
    let rho0 = DensityMatrix::from_bloch(BlochVector::new(s, s, 0.0))?;
    let l = dephasing_coupling(gamma)?;

    println!("{:>9} | {:>10} | {:>20}", "gamma*tau", "analytic", "ensemble (± SEM)");
    for k in 1..=8u32 {
        let tau = 0.125 * k as f64;
        let n_steps = ((tau + 1.0) / dt).round() as usize;
        let cfg = StepConfig::from_delay_time(
            HermitianOperator::zero(2),
            l.clone(),
            dt,
            tau,
            true,
        )?;
        let plan =
            SimulationPlan::new(cfg, Method::Operational, rho0.clone(), n_steps, n_steps)?;
        let estimate = fidelity_estimate(&plan, &rho0, n_traj, 42, 4)?;
        let analytic = steady_fidelity(0.0, gamma, tau)?;
        println!(
            "{:>9.3} | {analytic:>10.5} | {:>10.5} ± {:.5}",
            gamma * tau,
            estimate.mean,
            estimate.sem
        );
    }
    Ok(())
}
