//! Stochastic master equation integrators for homodyne-conditioned states.
//!
//! Two families are covered:
//!
//! **General homodyne unraveling** at detector phase θ and efficiency η,
//! with measurement operator ĉ = L̂e^{iθ}. The record is
//! y(t) = sqrt(η)·Tr[(ĉ + ĉ†)ρ] + ξ(t), and the conditioned state follows
//!
//! - Itô form (integrated with Euler–Maruyama):
//!   dρ = ℒρ·dt + sqrt(η)·ξ·ℋ[ĉ]ρ·dt
//! - Stratonovich form (integrated with Heun):
//!   ∂ρ = ℒρ + sqrt(η)·y·ℋ[ĉ]ρ - (η/2)·𝒜²[ĉ]ρ
//!
//! **Delayed no-knowledge feedback** (θ = π/2, η = 1, Hermitian L̂), where
//! the feedback Hamiltonian re-applies the record from a delay τ ago:
//!
//! - Itô form:          dρ = -i[Ĥ,ρ]dt + 2D[L̂]ρdt - i[L̂,ρ]·(ξ(t-τ) - ξ(t))·dt
//! - Stratonovich form: ∂ρ = -i[Ĥ,ρ]  - i[L̂,ρ]·(ξ(t-τ) - ξ(t))
//!
//! While the delay line is still filling (t < τ) there is no feedback and
//! the correct equations are the no-feedback no-knowledge forms: the Itô
//! drift carries a single D[L̂] and the noise enters as +i[L̂,ρ]·ξ(t); the
//! Stratonovich form is -i[Ĥ - ξ(t)·L̂, ρ]. `xi_delayed: None` selects that
//! regime. Note the delayed equations are *not* valid at τ = 0: taking
//! ξ(t-τ) -> ξ(t) naively would leave spurious drift, while the true
//! zero-delay limit is plain unitary evolution (the discrete map handles
//! this case exactly; see the trajectory module).
//!
//! # State repair
//!
//! Every step ends in a repair stage: Hermitize, renormalize the trace,
//! and fail if any eigenvalue falls below a failure floor. The floor is
//! *scheme-scaled*: a first-order scheme linearizes what is physically a
//! rotation, so a single step with kick angle x ≈ 2·|ξ|·dt·‖L̂‖ (and ξ is
//! itself O(1/sqrt(dt))) inflates the Bloch radius by O(x²), and because
//! the dissipative contraction pulls that excursion back only at rate
//! O(‖L̂‖²·dt) per step, rare large kicks leave the state off-manifold for
//! many subsequent steps. Both effects shrink linearly with dt and average
//! out in ensembles, so the floor admits a run-scale envelope ∝ dt (plus a
//! per-step term for the current kick) on top of the base tolerance
//! [`REPAIR_EIGENVALUE_FLOOR`]; penetrating it signals instability (dt too
//! coarse for the chosen rates) or a bug, and aborts the step.
//!
//! Two things the repair deliberately does **not** do:
//!
//! - **No clipping/projection.** Rescaling overshoot states back onto the
//!   physical manifold looks harmless but systematically removes the
//!   positive half of the radius fluctuation, adding a spurious decay of
//!   the same order as the physical rate — ensemble means would no longer
//!   reproduce the analytic averages. Transient negativity at the
//!   scheme-error scale is retained and averages away.
//! - **No strict positivity on the output.** Returned states are exactly
//!   Hermitian with unit trace, but may sit outside the state space by
//!   O(dt) for one step; they are not re-validated against the strict
//!   construction tolerances of [`DensityMatrix::new`].

use num_complex::Complex64;

use crate::error::{Error, Result};
use crate::operators::{
    c, cis, cmatrix_of_m2, m2_of, min_eigenvalue, CMatrix, DensityMatrix, HermitianOperator,
    PauliDecomposition, M2,
};
use crate::superop::{lindblad_rhs_raw, superop_a2_raw, superop_h_raw};

/// Noise-independent base of the per-step eigenvalue failure floor.
pub const REPAIR_EIGENVALUE_FLOOR: f64 = -1e-8;

/// Run-scale scheme-error envelope: worst-case accumulated eigenvalue
/// excursion of a first-order scheme at step dt for operators of the given
/// norms. Extreme noise kicks (z² up to ~2·ln(samples) over realistic run
/// lengths) inflate eigenvalues by O(‖L̂‖²·dt·z²) and relax back slowly, so
/// the envelope carries a generous constant; it is capped because beyond
/// half the spectrum the state is meaningless no matter the step size.
#[inline]
fn run_envelope(dt: f64, h_norm: f64, l_norm: f64) -> f64 {
    let rate = h_norm + l_norm + l_norm * l_norm;
    (100.0 * dt * rate * rate).min(0.5)
}

/// Extra eigenvalue headroom for an n-step first-order run. The noise terms
/// compound into a mean-zero random walk of log‖Bloch vector‖ whose standard
/// deviation grows like 4‖L̂‖²√(2·dt·t); five of those cover the running
/// maximum of every trajectory in a large ensemble. Scheme-correct runs stay
/// inside this band, while genuinely wrong dynamics (sign errors, unstable
/// parameters) grow exponentially and blow through it within a few steps —
/// hence the cap, which keeps gross instability detectable.
#[inline]
fn run_excursion(dt: f64, l_norm: f64, n_steps: usize) -> f64 {
    let t_run = dt * n_steps as f64;
    (20.0 * l_norm * l_norm * (2.0 * dt * t_run).sqrt()).min(1.5)
}

/// Dimensionless kick angle of one step's noise term.
#[inline]
fn kick_angle(dt: f64, l_norm: f64, noise_mag: f64) -> f64 {
    2.0 * l_norm * noise_mag * dt
}

/// Failure floor for a step with kick angle `kick` under envelope `env`:
/// first-order schemes overshoot eigenvalues by O(kick²) and Heun by
/// O(kick⁴), both covered with headroom by kick²(1 + kick²).
#[inline]
fn failure_floor(env: f64, kick: f64) -> f64 {
    let k2 = kick * kick;
    REPAIR_EIGENVALUE_FLOOR - env - (k2 * (1.0 + k2)).min(0.5)
}

/// Conservative operator norm (max |eigenvalue|) of a Hermitian operator.
fn hermitian_norm(op: &HermitianOperator) -> f64 {
    if op.dim() == 2 {
        let p = PauliDecomposition::of(op);
        p.a0.abs() + p.r
    } else {
        op.matrix()
            .clone()
            .symmetric_eigen()
            .eigenvalues
            .iter()
            .fold(0.0f64, |a, &x| a.max(x.abs()))
    }
}

/// Parameters of a homodyne measurement of the coupling L̂.
#[derive(Debug, Clone)]
pub struct HomodyneConfig {
    h: HermitianOperator,
    l: HermitianOperator,
    theta: f64,
    eta: f64,
    /// Cached ĉ = L̂·e^{iθ}.
    cop: CMatrix,
    /// Cached ĉ + ĉ† for the record expectation.
    c_plus_cdag: CMatrix,
    h_norm: f64,
    l_norm: f64,
}

impl HomodyneConfig {
    /// Local-oscillator phase `theta`, detector efficiency `eta` in [0, 1].
    pub fn new(h: HermitianOperator, l: HermitianOperator, theta: f64, eta: f64) -> Result<Self> {
        if h.dim() != l.dim() {
            return Err(Error::InvalidArgument {
                name: "dimensions",
                reason: format!("H is {}x{0} but L is {}x{1}", h.dim(), l.dim()),
            });
        }
        if !(0.0..=1.0).contains(&eta) || !eta.is_finite() {
            return Err(Error::InvalidArgument {
                name: "eta",
                reason: format!("detector efficiency must lie in [0, 1], got {eta}"),
            });
        }
        let cop = l.matrix() * cis(theta);
        let c_plus_cdag = &cop + cop.adjoint();
        let h_norm = hermitian_norm(&h);
        let l_norm = hermitian_norm(&l);
        Ok(Self {
            h,
            l,
            theta,
            eta,
            cop,
            c_plus_cdag,
            h_norm,
            l_norm,
        })
    }

    /// The no-knowledge point: θ = π/2 at unit efficiency, where the record
    /// expectation Tr[(ĉ + ĉ†)ρ] vanishes for Hermitian L̂.
    pub fn no_knowledge(h: HermitianOperator, l: HermitianOperator) -> Result<Self> {
        Self::new(h, l, std::f64::consts::FRAC_PI_2, 1.0)
    }

    pub fn hamiltonian(&self) -> &HermitianOperator {
        &self.h
    }

    pub fn coupling(&self) -> &HermitianOperator {
        &self.l
    }

    pub fn theta(&self) -> f64 {
        self.theta
    }

    pub fn eta(&self) -> f64 {
        self.eta
    }

    fn check_dim(&self, rho: &DensityMatrix) -> Result<()> {
        if rho.dim() != self.h.dim() {
            return Err(Error::InvalidArgument {
                name: "rho",
                reason: format!(
                    "state is {}x{0} but operators are {}x{1}",
                    rho.dim(),
                    self.h.dim()
                ),
            });
        }
        Ok(())
    }

    fn floor(&self, noise_mag: f64, dt: f64) -> f64 {
        failure_floor(
            run_envelope(dt, self.h_norm, self.l_norm),
            kick_angle(dt, self.l_norm, noise_mag),
        )
    }
}

fn check_dt(dt: f64) -> Result<()> {
    if dt <= 0.0 || !dt.is_finite() {
        return Err(Error::InvalidArgument {
            name: "dt",
            reason: format!("time step must be finite and > 0, got {dt}"),
        });
    }
    Ok(())
}

/// Homodyne record sample y = sqrt(η)·Tr[(ĉ + ĉ†)ρ] + ξ.
pub fn homodyne_record(rho: &DensityMatrix, cfg: &HomodyneConfig, xi: f64) -> Result<f64> {
    cfg.check_dim(rho)?;
    let expectation = (&cfg.c_plus_cdag * rho.matrix()).trace().re;
    Ok(cfg.eta.sqrt() * expectation + xi)
}

/// One Euler–Maruyama step of the Itô homodyne equation.
///
/// The returned state is Hermitian with unit trace but may transiently
/// violate positivity at the scheme-error scale (see the module docs).
pub fn ito_homodyne_step(
    rho: &DensityMatrix,
    cfg: &HomodyneConfig,
    xi: f64,
    dt: f64,
) -> Result<DensityMatrix> {
    cfg.check_dim(rho)?;
    check_dt(dt)?;
    let m = rho.matrix();
    let update = lindblad_rhs_raw(cfg.h.matrix(), &cfg.cop, m)
        + superop_h_raw(&cfg.cop, m).scale(cfg.eta.sqrt() * xi);
    let raw = m + update.scale(dt);
    let repaired = repair_density(raw, cfg.floor(cfg.eta.sqrt() * xi.abs(), dt))?;
    Ok(DensityMatrix::from_matrix_unchecked(repaired))
}

/// One Heun (predictor–corrector) step of the Stratonovich homodyne
/// equation, driven by the record sample `y` held fixed across the step.
pub fn stratonovich_homodyne_step(
    rho: &DensityMatrix,
    cfg: &HomodyneConfig,
    y: f64,
    dt: f64,
) -> Result<DensityMatrix> {
    cfg.check_dim(rho)?;
    check_dt(dt)?;
    let drift = |m: &CMatrix| -> CMatrix {
        lindblad_rhs_raw(cfg.h.matrix(), &cfg.cop, m)
            + superop_h_raw(&cfg.cop, m).scale(cfg.eta.sqrt() * y)
            - superop_a2_raw(&cfg.cop, m).scale(0.5 * cfg.eta)
    };
    let m = rho.matrix();
    let g0 = drift(m);
    let predictor = m + g0.scale(dt);
    let g1 = drift(&predictor);
    let raw = m + (g0 + g1).scale(0.5 * dt);
    let repaired = repair_density(raw, cfg.floor(cfg.eta.sqrt() * y.abs(), dt))?;
    Ok(DensityMatrix::from_matrix_unchecked(repaired))
}

fn check_pair(h: &HermitianOperator, l: &HermitianOperator, rho: &DensityMatrix) -> Result<()> {
    if h.dim() != l.dim() || h.dim() != rho.dim() {
        return Err(Error::InvalidArgument {
            name: "dimensions",
            reason: format!(
                "H ({}x{0}), L ({}x{1}) and rho ({}x{2}) must agree",
                h.dim(),
                l.dim(),
                rho.dim()
            ),
        });
    }
    Ok(())
}

/// One Euler–Maruyama step of the delayed-feedback Itô equation.
///
/// `xi_delayed = Some(ξ(t-τ))` once the delay line has filled; `None`
/// selects the no-feedback (filling) regime described in the module docs.
pub fn delayed_ito_step(
    rho: &DensityMatrix,
    h: &HermitianOperator,
    l: &HermitianOperator,
    xi_now: f64,
    xi_delayed: Option<f64>,
    dt: f64,
) -> Result<DensityMatrix> {
    check_pair(h, l, rho)?;
    check_dt(dt)?;
    if let Some(kernel) = QubitSme::try_new(h, l, dt) {
        let next = kernel.ito_step(m2_of(rho.matrix()), xi_now, xi_delayed)?;
        return Ok(DensityMatrix::from_matrix_unchecked(cmatrix_of_m2(&next)));
    }
    let m = rho.matrix();
    let (hm, lm) = (h.matrix(), l.matrix());
    let comm_h = (hm * m - m * hm) * c(0.0, -1.0);
    let comm_l = lm * m - m * lm;
    let diss = crate::superop::dissipator_raw(lm, m);
    let update = match xi_delayed {
        Some(xd) => comm_h + diss.scale(2.0) + comm_l * c(0.0, xi_now - xd),
        None => comm_h + diss + comm_l * c(0.0, xi_now),
    };
    let noise_mag = xi_now.abs() + xi_delayed.map_or(0.0, f64::abs);
    let l_norm = hermitian_norm(l);
    let floor = failure_floor(
        run_envelope(dt, hermitian_norm(h), l_norm),
        kick_angle(dt, l_norm, noise_mag),
    );
    Ok(DensityMatrix::from_matrix_unchecked(repair_density(
        m + update.scale(dt),
        floor,
    )?))
}

/// One Heun step of the delayed-feedback Stratonovich equation.
pub fn delayed_stratonovich_step(
    rho: &DensityMatrix,
    h: &HermitianOperator,
    l: &HermitianOperator,
    xi_now: f64,
    xi_delayed: Option<f64>,
    dt: f64,
) -> Result<DensityMatrix> {
    check_pair(h, l, rho)?;
    check_dt(dt)?;
    if let Some(kernel) = QubitSme::try_new(h, l, dt) {
        let next = kernel.stratonovich_step(m2_of(rho.matrix()), xi_now, xi_delayed)?;
        return Ok(DensityMatrix::from_matrix_unchecked(cmatrix_of_m2(&next)));
    }
    let (hm, lm) = (h.matrix(), l.matrix());
    let xi_eff = xi_now - xi_delayed.unwrap_or(0.0);
    let drift = |m: &CMatrix| -> CMatrix {
        (hm * m - m * hm) * c(0.0, -1.0) + (lm * m - m * lm) * c(0.0, xi_eff)
    };
    let m = rho.matrix();
    let g0 = drift(m);
    let predictor = m + g0.scale(dt);
    let g1 = drift(&predictor);
    let noise_mag = xi_now.abs() + xi_delayed.map_or(0.0, f64::abs);
    let l_norm = hermitian_norm(l);
    let floor = failure_floor(
        run_envelope(dt, hermitian_norm(h), l_norm),
        kick_angle(dt, l_norm, noise_mag),
    );
    Ok(DensityMatrix::from_matrix_unchecked(repair_density(
        m + (g0 + g1).scale(0.5 * dt),
        floor,
    )?))
}

/// Repair stage shared by all stochastic steps (general dimension):
/// Hermitize, fail below `floor`, renormalize the trace. No clipping.
pub(crate) fn repair_density(m: CMatrix, floor: f64) -> Result<CMatrix> {
    let h = (&m + m.adjoint()).scale(0.5);
    let min_eig = min_eigenvalue(&h);
    if !min_eig.is_finite() {
        return Err(Error::StepFailure(
            "state became non-finite during integration".into(),
        ));
    }
    if min_eig < floor {
        return Err(Error::StepFailure(format!(
            "eigenvalue {min_eig:.3e} below the step failure floor {floor:.3e}; reduce dt"
        )));
    }
    let tr = h.trace().re;
    if tr.is_nan() || tr <= 0.0 {
        return Err(Error::StepFailure(format!(
            "state trace collapsed to {tr:.3e}"
        )));
    }
    Ok(h.unscale(tr))
}

/// Allocation-free qubit kernel for the delayed-feedback equations, used by
/// both the public per-step functions (d = 2) and the ensemble hot loop.
#[derive(Debug, Clone, Copy)]
pub(crate) struct QubitSme {
    h: M2,
    l: M2,
    /// Cached L̂².
    lsq: M2,
    dt: f64,
    h_norm: f64,
    l_norm: f64,
    /// Run-length-aware excursion headroom added to the failure floor;
    /// zero for single-step use.
    headroom: f64,
}

impl QubitSme {
    pub fn try_new(h: &HermitianOperator, l: &HermitianOperator, dt: f64) -> Option<Self> {
        if h.dim() != 2 {
            return None;
        }
        let l2 = m2_of(l.matrix());
        Some(Self {
            h: m2_of(h.matrix()),
            l: l2,
            lsq: l2 * l2,
            dt,
            h_norm: hermitian_norm(h),
            l_norm: hermitian_norm(l),
            headroom: 0.0,
        })
    }

    /// Widens the failure floor by the legitimate compounding excursion of an
    /// `n_steps`-long run (see [`run_excursion`]).
    pub fn with_run_length(mut self, n_steps: usize) -> Self {
        self.headroom = run_excursion(self.dt, self.l_norm, n_steps);
        self
    }

    #[inline]
    fn floor(&self, noise_mag: f64) -> f64 {
        failure_floor(
            run_envelope(self.dt, self.h_norm, self.l_norm) + self.headroom,
            kick_angle(self.dt, self.l_norm, noise_mag),
        )
    }

    #[inline]
    fn minus_i_comm_h(&self, m: &M2) -> M2 {
        (self.h * m - m * self.h) * Complex64::new(0.0, -1.0)
    }

    #[inline]
    fn comm_l(&self, m: &M2) -> M2 {
        self.l * m - m * self.l
    }

    /// D[L̂]m for the cached Hermitian coupling.
    #[inline]
    fn dissipator(&self, m: &M2) -> M2 {
        self.l * m * self.l - (self.lsq * m + m * self.lsq) * Complex64::new(0.5, 0.0)
    }

    #[inline]
    pub fn ito_step(&self, rho: M2, xi_now: f64, xi_delayed: Option<f64>) -> Result<M2> {
        let update = match xi_delayed {
            Some(xd) => {
                self.minus_i_comm_h(&rho)
                    + self.dissipator(&rho) * Complex64::new(2.0, 0.0)
                    + self.comm_l(&rho) * Complex64::new(0.0, xi_now - xd)
            }
            None => {
                self.minus_i_comm_h(&rho)
                    + self.dissipator(&rho)
                    + self.comm_l(&rho) * Complex64::new(0.0, xi_now)
            }
        };
        let noise_mag = xi_now.abs() + xi_delayed.map_or(0.0, f64::abs);
        repair2(
            rho + update * Complex64::new(self.dt, 0.0),
            self.floor(noise_mag),
        )
    }

    #[inline]
    pub fn stratonovich_step(&self, rho: M2, xi_now: f64, xi_delayed: Option<f64>) -> Result<M2> {
        let xi_eff = xi_now - xi_delayed.unwrap_or(0.0);
        let drift = |m: &M2| -> M2 {
            self.minus_i_comm_h(m) + self.comm_l(m) * Complex64::new(0.0, xi_eff)
        };
        let g0 = drift(&rho);
        let predictor = rho + g0 * Complex64::new(self.dt, 0.0);
        let g1 = drift(&predictor);
        let noise_mag = xi_now.abs() + xi_delayed.map_or(0.0, f64::abs);
        repair2(
            rho + (g0 + g1) * Complex64::new(0.5 * self.dt, 0.0),
            self.floor(noise_mag),
        )
    }
}

/// Repair stage on the stack-allocated qubit representation.
#[inline]
pub(crate) fn repair2(m: M2, floor: f64) -> Result<M2> {
    // Hermitize
    let d00 = m[(0, 0)].re;
    let d11 = m[(1, 1)].re;
    let off = (m[(0, 1)] + m[(1, 0)].conj()) * Complex64::new(0.5, 0.0);

    let mid = 0.5 * (d00 + d11);
    let disc = (0.25 * (d00 - d11).powi(2) + off.norm_sqr()).sqrt();
    let min_eig = mid - disc;
    if !min_eig.is_finite() {
        return Err(Error::StepFailure(
            "state became non-finite during integration".into(),
        ));
    }
    if min_eig < floor {
        return Err(Error::StepFailure(format!(
            "eigenvalue {min_eig:.3e} below the step failure floor {floor:.3e}; reduce dt"
        )));
    }
    let tr = d00 + d11;
    if tr.is_nan() || tr <= 0.0 {
        return Err(Error::StepFailure(format!(
            "state trace collapsed to {tr:.3e}"
        )));
    }
    let inv = 1.0 / tr;
    Ok(M2::new(
        Complex64::new(d00 * inv, 0.0),
        off * Complex64::new(inv, 0.0),
        off.conj() * Complex64::new(inv, 0.0),
        Complex64::new(d11 * inv, 0.0),
    ))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::operators::{
        dephasing_coupling, rabi_hamiltonian, Axis, BlochVector, HermitianOperator,
    };
    use approx::assert_relative_eq;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn equator() -> DensityMatrix {
        let s = std::f64::consts::FRAC_1_SQRT_2;
        DensityMatrix::from_bloch(BlochVector::new(s, s, 0.0)).unwrap()
    }

    fn x_state() -> DensityMatrix {
        DensityMatrix::from_bloch(BlochVector::new(1.0, 0.0, 0.0)).unwrap()
    }

    fn random_state(rng: &mut impl Rng) -> DensityMatrix {
        loop {
            let b = BlochVector::new(
                rng.random_range(-1.0..1.0),
                rng.random_range(-1.0..1.0),
                rng.random_range(-1.0..1.0),
            );
            if b.norm_squared() <= 1.0 {
                return DensityMatrix::from_bloch(b).unwrap();
            }
        }
    }

    fn random_hermitian(rng: &mut impl Rng) -> HermitianOperator {
        let m = CMatrix::from_fn(2, 2, |_, _| {
            c(rng.random_range(-2.0..2.0), rng.random_range(-2.0..2.0))
        });
        HermitianOperator::new((&m + m.adjoint()).scale(0.5)).unwrap()
    }

    #[test]
    fn no_knowledge_record_is_pure_noise() {
        let mut rng = ChaCha8Rng::seed_from_u64(31);
        for _ in 0..1000 {
            let cfg = HomodyneConfig::no_knowledge(
                random_hermitian(&mut rng),
                random_hermitian(&mut rng),
            )
            .unwrap();
            let rho = random_state(&mut rng);
            let xi = rng.random_range(-5.0..5.0);
            let y = homodyne_record(&rho, &cfg, xi).unwrap();
            assert!(
                (y - xi).abs() < 1e-12,
                "record leaked information: y - xi = {:.3e}",
                y - xi
            );
        }
    }

    #[test]
    fn informative_record_at_theta_zero() {
        // θ = 0, L = sqrt(γ)σz, ρ = |Sz=+1>: y = sqrt(η)·2·sqrt(γ)·Sz + ξ.
        let gamma: f64 = 0.49;
        let h = HermitianOperator::zero(2);
        let l = dephasing_coupling(gamma).unwrap();
        let rho = DensityMatrix::from_bloch(BlochVector::new(0.0, 0.0, 1.0)).unwrap();

        let cfg = HomodyneConfig::new(h.clone(), l.clone(), 0.0, 1.0).unwrap();
        let y = homodyne_record(&rho, &cfg, 0.0).unwrap();
        assert_relative_eq!(y, 2.0 * gamma.sqrt(), max_relative = 1e-13);

        let cfg_quarter = HomodyneConfig::new(h, l, 0.0, 0.25).unwrap();
        let y = homodyne_record(&rho, &cfg_quarter, 0.0).unwrap();
        assert_relative_eq!(y, gamma.sqrt(), max_relative = 1e-13);
    }

    #[test]
    fn ito_no_knowledge_step_from_equator_matches_hand_expansion() {
        // ρ' = ρ + D[L]ρ·dt + i[L,ρ]·ξ·dt with L = sqrt(γ)σz: on the
        // (1,0,0) state, Sx' = 1 - 2γdt and Sy' = -2·sqrt(γ)·ξ·dt.
        let gamma: f64 = 0.8;
        let dt = 1e-4;
        let xi = 3.0;
        let cfg = HomodyneConfig::no_knowledge(
            HermitianOperator::zero(2),
            dephasing_coupling(gamma).unwrap(),
        )
        .unwrap();
        let next = ito_homodyne_step(&x_state(), &cfg, xi, dt).unwrap();
        let b = next.bloch().unwrap();
        assert_relative_eq!(b.sx, 1.0 - 2.0 * gamma * dt, max_relative = 1e-10);
        assert_relative_eq!(b.sy, -2.0 * gamma.sqrt() * xi * dt, max_relative = 1e-10);
        assert!(b.sz.abs() < 1e-14);
    }

    #[test]
    fn stratonovich_no_knowledge_step_is_second_order_rotation() {
        // At θ=π/2, η=1 the drift collapses to G(ρ) = y·i[L,ρ]; Heun
        // reproduces 1 + G·dt + G²dt²/2 applied to ρ.
        let gamma: f64 = 0.5;
        let dt = 1e-3;
        let y = -1.7;
        let l = dephasing_coupling(gamma).unwrap();
        let cfg = HomodyneConfig::no_knowledge(HermitianOperator::zero(2), l.clone()).unwrap();
        let rho = equator();
        let next = stratonovich_homodyne_step(&rho, &cfg, y, dt).unwrap();

        let g = |m: &CMatrix| (l.matrix() * m - m * l.matrix()) * c(0.0, y);
        let g0 = g(rho.matrix());
        let expected = rho.matrix() + g0.scale(dt) + g(&g0).scale(0.5 * dt * dt);
        let expected = repair_density(expected, -1.0).unwrap();
        let diff = (next.matrix() - expected)
            .iter()
            .map(|z| z.norm())
            .fold(0.0, f64::max);
        assert!(diff < 1e-13);
    }

    #[test]
    fn zero_efficiency_ito_step_is_deterministic_lindblad_euler() {
        let gamma: f64 = 0.6;
        let dt = 1e-3;
        let cfg = HomodyneConfig::new(
            rabi_hamiltonian(2.0, Axis::X),
            dephasing_coupling(gamma).unwrap(),
            0.3,
            0.0,
        )
        .unwrap();
        let rho = equator();
        let a = ito_homodyne_step(&rho, &cfg, 4.2, dt).unwrap();
        let b = ito_homodyne_step(&rho, &cfg, -4.2, dt).unwrap();
        let diff = (a.matrix() - b.matrix())
            .iter()
            .map(|z| z.norm())
            .fold(0.0, f64::max);
        assert!(diff < 1e-15, "noise must not enter at eta = 0");
    }

    #[test]
    fn delayed_ito_drift_doubles_the_dissipator() {
        // ξ_now = ξ_delayed = 0: Sx -> Sx(1 - 4γdt).
        let gamma: f64 = 0.3;
        let dt = 2e-4;
        let h = HermitianOperator::zero(2);
        let l = dephasing_coupling(gamma).unwrap();
        let next = delayed_ito_step(&x_state(), &h, &l, 0.0, Some(0.0), dt).unwrap();
        let b = next.bloch().unwrap();
        assert_relative_eq!(b.sx, 1.0 - 4.0 * gamma * dt, max_relative = 1e-12);
        assert!(b.sy.abs() < 1e-14);
    }

    #[test]
    fn filling_regime_ito_drift_has_single_dissipator() {
        let gamma: f64 = 0.3;
        let dt = 2e-4;
        let h = HermitianOperator::zero(2);
        let l = dephasing_coupling(gamma).unwrap();
        let next = delayed_ito_step(&x_state(), &h, &l, 0.0, None, dt).unwrap();
        let b = next.bloch().unwrap();
        assert_relative_eq!(b.sx, 1.0 - 2.0 * gamma * dt, max_relative = 1e-12);
    }

    #[test]
    fn matched_noise_stratonovich_step_is_identity_without_drive() {
        let l = dephasing_coupling(1.1).unwrap();
        let h = HermitianOperator::zero(2);
        let rho = equator();
        let next = delayed_stratonovich_step(&rho, &h, &l, 2.5, Some(2.5), 1e-3).unwrap();
        let diff = (next.matrix() - rho.matrix())
            .iter()
            .map(|z| z.norm())
            .fold(0.0, f64::max);
        assert!(diff < 1e-15);
    }

    #[test]
    fn matched_noise_stratonovich_step_reduces_to_pure_drive() {
        // ξ_now == ξ_delayed: only -i[H,ρ] remains (to Heun's second order).
        let omega = 2.0;
        let h = rabi_hamiltonian(omega, Axis::X);
        let l = dephasing_coupling(0.7).unwrap();
        let dt = 1e-3;
        let rho = equator();
        let next = delayed_stratonovich_step(&rho, &h, &l, 1.3, Some(1.3), dt).unwrap();

        let g = |m: &CMatrix| (h.matrix() * m - m * h.matrix()) * c(0.0, -1.0);
        let g0 = g(rho.matrix());
        let expected = repair_density(
            rho.matrix() + g0.scale(dt) + g(&g0).scale(0.5 * dt * dt),
            -1.0,
        )
        .unwrap();
        let diff = (next.matrix() - &expected)
            .iter()
            .map(|z| z.norm())
            .fold(0.0, f64::max);
        assert!(diff < 1e-13);
    }

    #[test]
    fn repair_retains_scheme_error_and_rejects_blowups() {
        // Overshoot at the scheme-error scale (|s| slightly above 1) is
        // kept as-is: no clipping, only hermitization + renormalization.
        let eps = 3e-4;
        let over = CMatrix::from_row_slice(
            2,
            2,
            &[
                c(0.5, 0.0),
                c(0.5 + eps, 0.0),
                c(0.5 + eps, 0.0),
                c(0.5, 0.0),
            ],
        );
        let fixed = repair_density(over.clone(), -1e-3).unwrap();
        let diff = (&fixed - &over)
            .iter()
            .map(|z| z.norm())
            .fold(0.0, f64::max);
        assert!(diff < 1e-15, "repair must not distort the state");
        assert!(min_eigenvalue(&fixed) < 0.0, "overshoot is retained");

        // The same state fails under the bare (no-kick, dt -> 0) floor.
        assert!(matches!(
            repair_density(over, REPAIR_EIGENVALUE_FLOOR),
            Err(Error::StepFailure(_))
        ));

        // Gross violations fail even under generous floors.
        let bad = CMatrix::from_row_slice(
            2,
            2,
            &[c(0.5, 0.0), c(1.0, 0.0), c(1.0, 0.0), c(0.5, 0.0)],
        );
        assert!(matches!(
            repair_density(bad, -0.3),
            Err(Error::StepFailure(_))
        ));
    }

    #[test]
    fn repair_floor_admits_typical_euler_maruyama_excursions() {
        // A no-knowledge EM trajectory from a pure state must run for many
        // steps without tripping the failure floor, despite |s| > 1
        // excursions of order γ·dt per step.
        let gamma: f64 = 1.0;
        let dt = 1e-3;
        let h = HermitianOperator::zero(2);
        let l = dephasing_coupling(gamma).unwrap();
        let mut stream = crate::noise::NoiseStream::new(77, 0);
        let mut rho = x_state();
        let mut max_overshoot = 0.0f64;
        for _ in 0..5000 {
            let xi = stream.sample(dt).unwrap();
            rho = delayed_ito_step(&rho, &h, &l, xi, None, dt).unwrap();
            let norm = rho.bloch().unwrap().norm();
            max_overshoot = max_overshoot.max(norm - 1.0);
        }
        // The walk really does leave the sphere (validating that the floor
        // is doing meaningful work)...
        assert!(max_overshoot > 1e-7, "expected measurable scheme error");
        // ...but stays at the scheme-error scale.
        assert!(max_overshoot < 50.0 * gamma * dt);
    }

    #[test]
    fn qubit_kernel_matches_general_path() {
        // The d = 2 kernel and the DMatrix formulas must agree to rounding.
        let mut rng = ChaCha8Rng::seed_from_u64(32);
        for _ in 0..500 {
            let h = random_hermitian(&mut rng);
            let l = random_hermitian(&mut rng);
            let rho = random_state(&mut rng);
            let dt = 1e-4;
            let xi_now = rng.random_range(-50.0..50.0);
            let xi_delayed = if rng.random_bool(0.5) {
                Some(rng.random_range(-50.0..50.0))
            } else {
                None
            };

            let kernel = QubitSme::try_new(&h, &l, dt).unwrap();

            // Itô: general-dimension formula assembled inline
            let m = rho.matrix();
            let comm_h = (h.matrix() * m - m * h.matrix()) * c(0.0, -1.0);
            let comm_l = l.matrix() * m - m * l.matrix();
            let diss = crate::superop::dissipator_raw(l.matrix(), m);
            let update = match xi_delayed {
                Some(xd) => comm_h + diss.scale(2.0) + comm_l * c(0.0, xi_now - xd),
                None => comm_h + diss + comm_l * c(0.0, xi_now),
            };
            let general = repair_density(m + update.scale(dt), -1.0).unwrap();
            let fast = kernel.ito_step(m2_of(m), xi_now, xi_delayed).unwrap();
            let diff = (cmatrix_of_m2(&fast) - &general)
                .iter()
                .map(|z| z.norm())
                .fold(0.0, f64::max);
            assert!(diff < 1e-13, "ito kernel deviates by {diff:.3e}");
        }
    }

    #[test]
    fn step_rejects_mismatched_dimensions_and_bad_dt() {
        let h = HermitianOperator::zero(3);
        let l = dephasing_coupling(1.0).unwrap();
        assert!(HomodyneConfig::new(h, l.clone(), 0.0, 1.0).is_err());

        let cfg = HomodyneConfig::no_knowledge(HermitianOperator::zero(2), l.clone()).unwrap();
        assert!(ito_homodyne_step(&equator(), &cfg, 0.0, 0.0).is_err());
        assert!(stratonovich_homodyne_step(&equator(), &cfg, 0.0, -1.0).is_err());

        assert!(HomodyneConfig::new(
            HermitianOperator::zero(2),
            dephasing_coupling(1.0).unwrap(),
            0.0,
            1.5
        )
        .is_err());
    }

    #[test]
    fn strat_kernel_matches_public_function() {
        let mut rng = ChaCha8Rng::seed_from_u64(33);
        for _ in 0..200 {
            let h = random_hermitian(&mut rng);
            let l = random_hermitian(&mut rng);
            let rho = random_state(&mut rng);
            let dt = 5e-4;
            let xi_now = rng.random_range(-30.0..30.0);
            let xi_delayed = if rng.random_bool(0.5) {
                Some(rng.random_range(-30.0..30.0))
            } else {
                None
            };
            let public = delayed_stratonovich_step(&rho, &h, &l, xi_now, xi_delayed, dt).unwrap();
            let kernel = QubitSme::try_new(&h, &l, dt).unwrap();
            let fast = kernel
                .stratonovich_step(m2_of(rho.matrix()), xi_now, xi_delayed)
                .unwrap();
            let diff = (cmatrix_of_m2(&fast) - public.matrix())
                .iter()
                .map(|z| z.norm())
                .fold(0.0, f64::max);
            assert!(diff < 1e-14);
        }
    }
}
