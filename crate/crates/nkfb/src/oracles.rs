//! Closed-form and numerically exact reference solutions.
//!
//! These are the curves that conditioned ensembles are validated against:
//!
//! - [`lindblad_propagate`]: ρ(t) = e^{ℒt}ρ₀ through the matrix exponential
//!   of the d²×d² vectorized Liouvillian (general engine; the dephasing
//!   family has the closed form S⊥(t) = S⊥(0)·e^{-2γt} used in tests).
//! - [`frozen_average`]: delayed no-knowledge feedback without a drive
//!   averages to e^{D[L̂]t}ρ₀ until t = τ and then *freezes*: the feedback
//!   replays every kick τ later, cancelling all but a τ-window of noise.
//! - [`commuting_average`]: with [Ĥ, L̂] = 0 the freeze generalizes — decay
//!   stops at t = τ and only the pure drive rotation continues.
//! - [`steady_fidelity`]: overlap between a pure initial state and the
//!   stabilized plateau, F = ½[(1 + Sz²) + (1 - Sz²)e^{-2γτ}].
//! - [`rabi_reference`]: decoherence-free drive rotation about any axis.

use nalgebra::DVector;

use crate::error::{Error, Result};
use crate::operators::{
    c, commutator_norm, identity, sigma_x, sigma_y, sigma_z, unitary_from_generator, BlochVector,
    CMatrix, DensityMatrix, HermitianOperator, COMMUTING_TOL,
};

fn check_time(name: &'static str, t: f64) -> Result<()> {
    if t < 0.0 || !t.is_finite() {
        return Err(Error::InvalidArgument {
            name,
            reason: format!("time must be finite and >= 0, got {t}"),
        });
    }
    Ok(())
}

/// Column-stacked vectorization of the Liouvillian
/// ℒρ = -i[Ĥ,ρ] + D[L̂]ρ, using vec(AXB) = (Bᵀ ⊗ A)·vec(X).
fn liouvillian_matrix(h: &CMatrix, l: &CMatrix) -> CMatrix {
    let d = h.nrows();
    let id = identity(d);
    let ldl = l.adjoint() * l;
    let commutator = (id.kronecker(h) - h.transpose().kronecker(&id)) * c(0.0, -1.0);
    let jump = l.map(|z| z.conj()).kronecker(l);
    let anticommutator = (id.kronecker(&ldl) + ldl.transpose().kronecker(&id)).scale(0.5);
    commutator + jump - anticommutator
}

/// Removes the floating-point fuzz a matrix exponential leaves on an
/// exactly trace-preserving, Hermiticity-preserving map.
fn tidy_state(m: CMatrix) -> Result<DensityMatrix> {
    let h = (&m + m.adjoint()).scale(0.5);
    let tr = h.trace().re;
    DensityMatrix::new(h.unscale(tr))
}

/// Exact Lindblad propagation ρ(t) = e^{ℒt}ρ₀ for one Hermitian-or-not
/// collapse channel L̂ (Hermitian typed here; the engine itself is general).
pub fn lindblad_propagate(
    rho0: &DensityMatrix,
    h: &HermitianOperator,
    l: &HermitianOperator,
    t: f64,
) -> Result<DensityMatrix> {
    check_time("t", t)?;
    if h.dim() != l.dim() || h.dim() != rho0.dim() {
        return Err(Error::InvalidArgument {
            name: "dimensions",
            reason: format!(
                "H ({}x{0}), L ({}x{1}) and rho0 ({}x{2}) must agree",
                h.dim(),
                l.dim(),
                rho0.dim()
            ),
        });
    }
    let d = rho0.dim();
    let generator = liouvillian_matrix(h.matrix(), l.matrix()) * c(t, 0.0);
    let propagator = generator.exp();
    let vec0 = DVector::from_column_slice(rho0.matrix().as_slice());
    let vec_t = propagator * vec0;
    tidy_state(CMatrix::from_column_slice(d, d, vec_t.as_slice()))
}

/// Ensemble average of delayed no-knowledge feedback without a drive:
/// e^{D[L̂]t}ρ₀ for t < τ, frozen at e^{D[L̂]τ}ρ₀ from t = τ on.
pub fn frozen_average(
    rho0: &DensityMatrix,
    l: &HermitianOperator,
    tau: f64,
    t: f64,
) -> Result<DensityMatrix> {
    check_time("tau", tau)?;
    check_time("t", t)?;
    let h0 = HermitianOperator::zero(l.dim());
    lindblad_propagate(rho0, &h0, l, t.min(tau))
}

/// The stabilized plateau of [`frozen_average`]: its value for all t ≥ τ.
pub fn frozen_plateau(rho0: &DensityMatrix, l: &HermitianOperator, tau: f64) -> Result<DensityMatrix> {
    frozen_average(rho0, l, tau, tau)
}

/// Ensemble average of delayed no-knowledge feedback when the drive
/// commutes with the coupling: e^{ℒt}ρ₀ for t < τ, and for t ≥ τ only the
/// pure drive rotation continues from ρ(τ).
pub fn commuting_average(
    rho0: &DensityMatrix,
    h: &HermitianOperator,
    l: &HermitianOperator,
    tau: f64,
    t: f64,
) -> Result<DensityMatrix> {
    check_time("tau", tau)?;
    check_time("t", t)?;
    let norm = commutator_norm(h, l);
    if norm > COMMUTING_TOL {
        return Err(Error::NonCommuting {
            norm,
            tol: COMMUTING_TOL,
        });
    }
    if t < tau {
        lindblad_propagate(rho0, h, l, t)
    } else {
        let at_tau = lindblad_propagate(rho0, h, l, tau)?;
        let u = unitary_from_generator(h, t - tau);
        Ok(u.conjugate(&at_tau))
    }
}

/// Steady-state fidelity between a pure initial state with z-component
/// `sz0` and its stabilized plateau under L̂ = sqrt(γ)σz feedback:
/// F = ½[(1 + sz0²) + (1 - sz0²)·e^{-2γτ}].
pub fn steady_fidelity(sz0: f64, gamma: f64, tau: f64) -> Result<f64> {
    if sz0.is_nan() || sz0.abs() > 1.0 {
        return Err(Error::InvalidArgument {
            name: "sz0",
            reason: format!("|Sz(0)| must be <= 1 for a pure state, got {sz0}"),
        });
    }
    if gamma <= 0.0 || !gamma.is_finite() {
        return Err(Error::InvalidArgument {
            name: "gamma",
            reason: format!("decay rate must be finite and > 0, got {gamma}"),
        });
    }
    check_time("tau", tau)?;
    let sz2 = sz0 * sz0;
    Ok(0.5 * ((1.0 + sz2) + (1.0 - sz2) * (-2.0 * gamma * tau).exp()))
}

/// Decoherence-free reference: ρ(t) = e^{-iĤt}ρ₀e^{iĤt} with
/// Ĥ = (Ω/2)·(axis·σ⃗) for a unit 3-vector axis.
pub fn rabi_reference(
    rho0: &DensityMatrix,
    omega: f64,
    axis: BlochVector,
    t: f64,
) -> Result<DensityMatrix> {
    if (axis.norm() - 1.0).abs() > 1e-9 {
        return Err(Error::InvalidArgument {
            name: "axis",
            reason: format!("rotation axis must be a unit vector, |axis| = {}", axis.norm()),
        });
    }
    if rho0.dim() != 2 {
        return Err(Error::InvalidArgument {
            name: "rho0",
            reason: format!("drive rotation is defined for qubits, got d = {}", rho0.dim()),
        });
    }
    if !omega.is_finite() || !t.is_finite() {
        return Err(Error::InvalidArgument {
            name: "t",
            reason: "omega and t must be finite".into(),
        });
    }
    let m = (sigma_x().scale(axis.sx) + sigma_y().scale(axis.sy) + sigma_z().scale(axis.sz))
        .scale(0.5 * omega);
    let h = HermitianOperator::new(m)?;
    Ok(unitary_from_generator(&h, t).conjugate(rho0))
}

/// A reference curve on a uniform time grid, in Bloch form, ready to be
/// written next to ensemble output for overlay plotting.
#[derive(Debug, Clone)]
pub struct OracleCurve {
    times: Vec<f64>,
    bloch: Vec<BlochVector>,
    label: String,
}

impl OracleCurve {
    /// Validates equal lengths and uniform time spacing.
    pub fn new(times: Vec<f64>, bloch: Vec<BlochVector>, label: impl Into<String>) -> Result<Self> {
        if times.len() != bloch.len() {
            return Err(Error::GridMismatch(format!(
                "{} times vs {} states",
                times.len(),
                bloch.len()
            )));
        }
        if times.is_empty() {
            return Err(Error::GridMismatch("empty curve".into()));
        }
        if times.len() > 1 {
            let dt = times[1] - times[0];
            if dt.is_nan() || dt <= 0.0 {
                return Err(Error::GridMismatch(format!(
                    "times must increase uniformly, first spacing {dt}"
                )));
            }
            for (i, w) in times.windows(2).enumerate() {
                let step = w[1] - w[0];
                if (step - dt).abs() > 1e-9 * dt.max(1.0) {
                    return Err(Error::GridMismatch(format!(
                        "non-uniform time grid at index {i}: spacing {step} vs {dt}"
                    )));
                }
            }
        }
        Ok(Self {
            times,
            bloch,
            label: label.into(),
        })
    }

    /// Tabulates a qubit-state-valued function of time on the given grid.
    pub fn tabulate<F>(label: impl Into<String>, times: Vec<f64>, mut state_at: F) -> Result<Self>
    where
        F: FnMut(f64) -> Result<DensityMatrix>,
    {
        let mut bloch = Vec::with_capacity(times.len());
        for &t in &times {
            bloch.push(state_at(t)?.bloch()?);
        }
        Self::new(times, bloch, label)
    }

    pub fn times(&self) -> &[f64] {
        &self.times
    }

    pub fn bloch(&self) -> &[BlochVector] {
        &self.bloch
    }

    pub fn label(&self) -> &str {
        &self.label
    }

    pub fn len(&self) -> usize {
        self.times.len()
    }

    pub fn is_empty(&self) -> bool {
        self.times.is_empty()
    }
}
