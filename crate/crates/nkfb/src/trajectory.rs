//! Single-trajectory evolution under delayed measurement feedback.
//!
//! The reference scheme is the *operational* discrete map. Per step of
//! length dt, with noise sample ξ_j and (once the delay line holds κ = τ/dt
//! samples) the delayed sample ξ_{j-κ}:
//!
//! - measurement kick  M̂_j = exp(+i·ξ_j·L̂·dt)
//! - free propagation  Û   = exp(-i·Ĥ·dt)
//! - feedback kick     F̂_j = M̂†_{j-κ} = exp(-i·ξ_{j-κ}·L̂·dt)
//!
//! applied in the fixed order ρ -> F̂ Û M̂ ρ M̂† Û† F̂† (no feedback: drop F̂).
//! Every factor is unitary, so pure states stay pure and the only
//! normalization needed is a floating-point trace cleanup.
//!
//! The same driver can instead integrate the delayed stochastic master
//! equations (see the [SME module](crate::sme)), selected by [`Method`].
//! Those forms are singular at κ = 0, where the operational map remains
//! exact; requesting them with zero delay and feedback enabled is a
//! configuration error.

use crate::error::{Error, Result};
use crate::noise::{DelayBuffer, NoiseStream};
use crate::operators::{
    bloch_of_m2, commutator_norm, m2_of, unitary_from_generator, BlochVector, DensityMatrix,
    HermitianOperator, PauliDecomposition, UnitaryOperator, COMMUTING_TOL, M2,
};
use crate::sme::QubitSme;

/// Integration scheme for a trajectory.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Method {
    /// Discrete unitary kick/propagate/feedback map (exact per step).
    Operational,
    /// Euler–Maruyama on the delayed Itô equation.
    DelayedIto,
    /// Heun on the delayed Stratonovich equation.
    DelayedStratonovich,
}

impl Method {
    pub fn as_str(&self) -> &'static str {
        match self {
            Method::Operational => "operational",
            Method::DelayedIto => "ito",
            Method::DelayedStratonovich => "stratonovich",
        }
    }
}

impl std::str::FromStr for Method {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "operational" => Ok(Method::Operational),
            "ito" => Ok(Method::DelayedIto),
            "stratonovich" => Ok(Method::DelayedStratonovich),
            other => Err(Error::InvalidArgument {
                name: "method",
                reason: format!(
                    "unknown method {other:?}; expected operational | ito | stratonovich"
                ),
            }),
        }
    }
}

impl std::fmt::Display for Method {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.as_str())
    }
}

/// Physical and numerical parameters of one stepping scheme instance.
///
/// Construction pre-computes the step unitary exp(-i·Ĥ·dt), so cloning a
/// `StepConfig` into many trajectories is cheap and loop bodies never
/// re-exponentiate.
#[derive(Debug, Clone)]
pub struct StepConfig {
    h: HermitianOperator,
    l: HermitianOperator,
    dt: f64,
    kappa: usize,
    feedback_enabled: bool,
    u: UnitaryOperator,
}

impl StepConfig {
    /// `kappa` is the delay expressed in steps, τ = kappa·dt.
    pub fn new(
        h: HermitianOperator,
        l: HermitianOperator,
        dt: f64,
        kappa: usize,
        feedback_enabled: bool,
    ) -> Result<Self> {
        if h.dim() != l.dim() {
            return Err(Error::InvalidArgument {
                name: "dimensions",
                reason: format!("H is {}x{0} but L is {}x{1}", h.dim(), l.dim()),
            });
        }
        if dt <= 0.0 || !dt.is_finite() {
            return Err(Error::InvalidArgument {
                name: "dt",
                reason: format!("time step must be finite and > 0, got {dt}"),
            });
        }
        let u = unitary_from_generator(&h, dt);
        Ok(Self {
            h,
            l,
            dt,
            kappa,
            feedback_enabled,
            u,
        })
    }

    /// Builds from a physical delay time τ, which must be an integer
    /// multiple of dt to within a relative tolerance of 1e-9.
    pub fn from_delay_time(
        h: HermitianOperator,
        l: HermitianOperator,
        dt: f64,
        tau: f64,
        feedback_enabled: bool,
    ) -> Result<Self> {
        if tau < 0.0 || !tau.is_finite() {
            return Err(Error::InvalidArgument {
                name: "tau",
                reason: format!("delay must be finite and >= 0, got {tau}"),
            });
        }
        if dt <= 0.0 || !dt.is_finite() {
            return Err(Error::InvalidArgument {
                name: "dt",
                reason: format!("time step must be finite and > 0, got {dt}"),
            });
        }
        let ratio = tau / dt;
        let kappa = ratio.round();
        if (ratio - kappa).abs() > 1e-9 * ratio.max(1.0) {
            return Err(Error::InvalidArgument {
                name: "tau",
                reason: format!(
                    "delay must be an integer number of steps: tau/dt = {ratio} \
                     is not within 1e-9 of an integer"
                ),
            });
        }
        Self::new(h, l, dt, kappa as usize, feedback_enabled)
    }

    pub fn hamiltonian(&self) -> &HermitianOperator {
        &self.h
    }

    pub fn coupling(&self) -> &HermitianOperator {
        &self.l
    }

    pub fn dt(&self) -> f64 {
        self.dt
    }

    /// Delay in steps.
    pub fn kappa(&self) -> usize {
        self.kappa
    }

    /// Delay in time units, τ = kappa·dt.
    pub fn tau(&self) -> f64 {
        self.kappa as f64 * self.dt
    }

    pub fn feedback_enabled(&self) -> bool {
        self.feedback_enabled
    }

    /// The cached per-step free propagator exp(-i·Ĥ·dt).
    pub fn step_unitary(&self) -> &UnitaryOperator {
        &self.u
    }

    pub fn dim(&self) -> usize {
        self.h.dim()
    }
}

/// One operational step without feedback: ρ -> Û M̂ ρ M̂† Û†.
pub fn step_no_feedback(rho: &DensityMatrix, xi: f64, cfg: &StepConfig) -> Result<DensityMatrix> {
    if rho.dim() != cfg.dim() {
        return Err(Error::InvalidArgument {
            name: "rho",
            reason: format!("state is {}x{0}, operators are {}x{1}", rho.dim(), cfg.dim()),
        });
    }
    // M̂ = exp(+i·ξ·dt·L̂)
    let m = unitary_from_generator(&cfg.l, -xi * cfg.dt);
    let a = cfg.u.matrix() * m.matrix();
    let next = &a * rho.matrix() * a.adjoint();
    let tr = next.trace().re;
    Ok(DensityMatrix::from_matrix_unchecked(next.unscale(tr)))
}

/// One operational step with feedback: ρ -> F̂ Û M̂ ρ M̂† Û† F̂†, where the
/// feedback kick inverts the measurement kick recorded κ steps ago.
pub fn step_with_feedback(
    rho: &DensityMatrix,
    xi_now: f64,
    xi_delayed: f64,
    cfg: &StepConfig,
) -> Result<DensityMatrix> {
    if rho.dim() != cfg.dim() {
        return Err(Error::InvalidArgument {
            name: "rho",
            reason: format!("state is {}x{0}, operators are {}x{1}", rho.dim(), cfg.dim()),
        });
    }
    let m = unitary_from_generator(&cfg.l, -xi_now * cfg.dt);
    // F̂ = M̂†_{delayed} = exp(-i·ξ_delayed·dt·L̂)
    let f = unitary_from_generator(&cfg.l, xi_delayed * cfg.dt);
    let b = f.matrix() * cfg.u.matrix() * m.matrix();
    let next = &b * rho.matrix() * b.adjoint();
    let tr = next.trace().re;
    Ok(DensityMatrix::from_matrix_unchecked(next.unscale(tr)))
}

/// Time series recorded along one trajectory.
#[derive(Debug, Clone)]
pub struct TrajectoryRecord {
    /// Recording times, starting at t = 0.
    pub times: Vec<f64>,
    /// Bloch vector at each recording time.
    pub bloch: Vec<BlochVector>,
    /// Purity Tr(ρ²) at each recording time.
    pub purity: Vec<f64>,
    /// Master seed of the noise stream that drove the trajectory.
    pub master_seed: u64,
    /// Stream index of the noise stream that drove the trajectory.
    pub stream_index: u64,
}

impl TrajectoryRecord {
    pub fn len(&self) -> usize {
        self.times.len()
    }

    pub fn is_empty(&self) -> bool {
        self.times.is_empty()
    }

    pub fn final_bloch(&self) -> Option<BlochVector> {
        self.bloch.last().copied()
    }
}

/// Allocation-free operational stepper for qubits: the free propagator is
/// cached as a 2x2 matrix and both kicks come from one cached Pauli
/// decomposition of L̂ (one `sin_cos` per kick).
#[derive(Debug, Clone, Copy)]
pub(crate) struct QubitPropagator {
    u: M2,
    l: PauliDecomposition,
    dt: f64,
}

impl QubitPropagator {
    fn new(cfg: &StepConfig) -> Self {
        debug_assert_eq!(cfg.dim(), 2);
        Self {
            u: m2_of(cfg.u.matrix()),
            l: PauliDecomposition::of(&cfg.l),
            dt: cfg.dt,
        }
    }

    #[inline]
    fn step(&self, rho: M2, xi_now: f64, xi_delayed: Option<f64>) -> M2 {
        // rotation(phi) = exp(+i·phi·L̂): kick at +ξ·dt, feedback at -ξ_d·dt.
        let m = self.l.rotation(xi_now * self.dt);
        let a = match xi_delayed {
            None => self.u * m,
            Some(xd) => self.l.rotation(-xd * self.dt) * (self.u * m),
        };
        let next = a * rho * a.adjoint();
        let tr = next[(0, 0)].re + next[(1, 1)].re;
        next.unscale(tr)
    }
}

/// Per-step state update, dispatched once per trajectory.
pub(crate) enum QubitStepper {
    Operational(QubitPropagator),
    Ito(QubitSme),
    Stratonovich(QubitSme),
}

/// Validates that `method` can run on `cfg` (qubit dimension; delayed SMEs
/// need a nonzero delay when feedback is on) without running anything.
pub(crate) fn check_method(cfg: &StepConfig, method: Method) -> Result<()> {
    QubitStepper::new(cfg, method, 0).map(|_| ())
}

impl QubitStepper {
    pub(crate) fn new(cfg: &StepConfig, method: Method, n_steps: usize) -> Result<Self> {
        if cfg.dim() != 2 {
            return Err(Error::InvalidArgument {
                name: "cfg",
                reason: format!(
                    "trajectory recording works on qubits (d = 2), got d = {}",
                    cfg.dim()
                ),
            });
        }
        if method != Method::Operational && cfg.feedback_enabled && cfg.kappa == 0 {
            return Err(Error::InvalidArgument {
                name: "method",
                reason: format!(
                    "the delayed {method} equation is singular at zero delay; \
                     use the operational method for kappa = 0"
                ),
            });
        }
        let sme = || {
            QubitSme::try_new(&cfg.h, &cfg.l, cfg.dt)
                .expect("d = 2")
                .with_run_length(n_steps)
        };
        Ok(match method {
            Method::Operational => QubitStepper::Operational(QubitPropagator::new(cfg)),
            Method::DelayedIto => QubitStepper::Ito(sme()),
            Method::DelayedStratonovich => QubitStepper::Stratonovich(sme()),
        })
    }

    #[inline]
    pub(crate) fn step(&self, rho: M2, xi_now: f64, xi_delayed: Option<f64>) -> Result<M2> {
        match self {
            QubitStepper::Operational(p) => Ok(p.step(rho, xi_now, xi_delayed)),
            QubitStepper::Ito(k) => k.ito_step(rho, xi_now, xi_delayed),
            QubitStepper::Stratonovich(k) => k.stratonovich_step(rho, xi_now, xi_delayed),
        }
    }
}

/// Shared trajectory driver: pulls noise from `next_noise`, manages the
/// delay line, and hands every recorded (step, state) pair to `on_record`
/// (step 0 is the initial state, then every `record_every`-th step).
pub(crate) fn drive_qubit_trajectory<N, R>(
    cfg: &StepConfig,
    method: Method,
    rho0: &DensityMatrix,
    n_steps: usize,
    record_every: usize,
    mut next_noise: N,
    mut on_record: R,
) -> Result<()>
where
    N: FnMut() -> Result<f64>,
    R: FnMut(usize, &M2),
{
    if record_every == 0 {
        return Err(Error::InvalidArgument {
            name: "record_every",
            reason: "recording stride must be >= 1".into(),
        });
    }
    if rho0.dim() != cfg.dim() {
        return Err(Error::InvalidArgument {
            name: "rho0",
            reason: format!("state is {}x{0}, operators are {}x{1}", rho0.dim(), cfg.dim()),
        });
    }
    let stepper = QubitStepper::new(cfg, method, n_steps)?;
    let mut rho = m2_of(rho0.matrix());
    let mut delay = cfg
        .feedback_enabled
        .then(|| DelayBuffer::new(cfg.kappa));

    on_record(0, &rho);
    for j in 0..n_steps {
        let xi = next_noise()?;
        let xi_delayed = delay.as_mut().and_then(|buf| buf.push_pop(xi));
        rho = stepper.step(rho, xi, xi_delayed)?;
        let k = j + 1;
        if k % record_every == 0 {
            on_record(k, &rho);
        }
    }
    Ok(())
}

fn collect_record<N>(
    cfg: &StepConfig,
    method: Method,
    rho0: &DensityMatrix,
    n_steps: usize,
    record_every: usize,
    next_noise: N,
    seed_info: (u64, u64),
) -> Result<TrajectoryRecord>
where
    N: FnMut() -> Result<f64>,
{
    let n_records = 1 + n_steps / record_every.max(1);
    let mut times = Vec::with_capacity(n_records);
    let mut bloch = Vec::with_capacity(n_records);
    let mut purity = Vec::with_capacity(n_records);
    drive_qubit_trajectory(cfg, method, rho0, n_steps, record_every, next_noise, |k, rho| {
        times.push(k as f64 * cfg.dt);
        bloch.push(bloch_of_m2(rho));
        purity.push((rho * rho).trace().re);
    })?;
    Ok(TrajectoryRecord {
        times,
        bloch,
        purity,
        master_seed: seed_info.0,
        stream_index: seed_info.1,
    })
}

/// Runs one operational trajectory driven by a seeded noise stream,
/// recording the initial state and every `record_every`-th step.
pub fn run_trajectory(
    cfg: &StepConfig,
    rho0: &DensityMatrix,
    stream: &mut NoiseStream,
    n_steps: usize,
    record_every: usize,
) -> Result<TrajectoryRecord> {
    run_trajectory_with_method(cfg, Method::Operational, rho0, stream, n_steps, record_every)
}

/// As [`run_trajectory`] with an explicit integration scheme.
pub fn run_trajectory_with_method(
    cfg: &StepConfig,
    method: Method,
    rho0: &DensityMatrix,
    stream: &mut NoiseStream,
    n_steps: usize,
    record_every: usize,
) -> Result<TrajectoryRecord> {
    let seed_info = stream.seed_info();
    let dt = cfg.dt;
    collect_record(
        cfg,
        method,
        rho0,
        n_steps,
        record_every,
        || stream.sample(dt),
        seed_info,
    )
}

/// Runs one trajectory from a pre-drawn noise sequence (one sample per
/// step). Useful for replaying a trajectory on refined or coarsened grids.
pub fn run_trajectory_with_noises(
    cfg: &StepConfig,
    method: Method,
    rho0: &DensityMatrix,
    noises: &[f64],
    record_every: usize,
) -> Result<TrajectoryRecord> {
    let mut iter = noises.iter();
    collect_record(
        cfg,
        method,
        rho0,
        noises.len(),
        record_every,
        || Ok(*iter.next().expect("one sample per step")),
        (0, 0),
    )
}

/// Compressed n-step propagator for the commuting case [Ĥ, L̂] = 0.
///
/// When the drive and the coupling commute, every kick and every feedback
/// correction can be pulled through the free evolution, and the whole
/// trajectory up to step n collapses to a single unitary
///
/// ```text
/// exp(-i·L̂·dt·S_f) · exp(+i·L̂·dt·S_m) · exp(-i·Ĥ·n·dt)
/// ```
///
/// with S_m = Σ_{k<n} ξ_k (all measurement kicks) and S_f = Σ_{k<n-κ} ξ_k
/// (all feedback kicks delivered so far; empty when feedback is disabled
/// or n ≤ κ). Refuses operators whose commutator norm exceeds the
/// [`COMMUTING_TOL`] gate.
pub fn compressed_commuting_propagator(
    cfg: &StepConfig,
    noises: &[f64],
    n: usize,
) -> Result<UnitaryOperator> {
    let norm = commutator_norm(&cfg.h, &cfg.l);
    if norm > COMMUTING_TOL {
        return Err(Error::NonCommuting {
            norm,
            tol: COMMUTING_TOL,
        });
    }
    if n > noises.len() {
        return Err(Error::InvalidArgument {
            name: "n",
            reason: format!("need {n} noise samples, got {}", noises.len()),
        });
    }
    let sum_measure: f64 = noises[..n].iter().sum();
    let sum_feedback: f64 = if cfg.feedback_enabled && n > cfg.kappa {
        noises[..n - cfg.kappa].iter().sum()
    } else {
        0.0
    };
    // exp(+i·L·dt·S_m) = ufg(L, -dt·S_m); exp(-i·L·dt·S_f) = ufg(L, +dt·S_f)
    let measure = unitary_from_generator(&cfg.l, -cfg.dt * sum_measure);
    let feedback = unitary_from_generator(&cfg.l, cfg.dt * sum_feedback);
    let free = unitary_from_generator(&cfg.h, n as f64 * cfg.dt);
    UnitaryOperator::new(feedback.matrix() * measure.matrix() * free.matrix())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::operators::{
        c, dephasing_coupling, rabi_hamiltonian, Axis, CMatrix,
    };
    use crate::sme::{delayed_ito_step, delayed_stratonovich_step};
    use approx::assert_relative_eq;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn equator(phi: f64) -> DensityMatrix {
        DensityMatrix::from_bloch(BlochVector::new(phi.cos(), phi.sin(), 0.0)).unwrap()
    }

    fn random_hermitian(rng: &mut impl Rng) -> HermitianOperator {
        let m = CMatrix::from_fn(2, 2, |_, _| {
            c(rng.random_range(-2.0..2.0), rng.random_range(-2.0..2.0))
        });
        HermitianOperator::new((&m + m.adjoint()).scale(0.5)).unwrap()
    }

    #[test]
    fn measurement_kick_rotates_azimuth_by_minus_two_xi_dt() {
        // L = sqrt(γ)σz: exp(iξdt·L)·exp(-iξdt·L) conjugation advances the
        // azimuth by -2·sqrt(γ)·ξ·dt; no drive means nothing else moves.
        let gamma: f64 = 0.49;
        let dt = 1e-3;
        let xi = 10.0;
        let cfg = StepConfig::new(
            HermitianOperator::zero(2),
            dephasing_coupling(gamma).unwrap(),
            dt,
            0,
            false,
        )
        .unwrap();
        let phi0 = std::f64::consts::FRAC_PI_4;
        let next = step_no_feedback(&equator(phi0), xi, &cfg).unwrap();
        let b = next.bloch().unwrap();
        assert_relative_eq!(
            b.azimuth(),
            phi0 - 2.0 * gamma.sqrt() * xi * dt,
            max_relative = 1e-12
        );
        assert_relative_eq!(b.transverse(), 1.0, max_relative = 1e-12);
        assert!(b.sz.abs() < 1e-14);
        assert_relative_eq!(next.purity(), 1.0, max_relative = 1e-12);
    }

    #[test]
    fn drive_and_kick_compose_additively_when_commuting() {
        // H = (Ω/2)σz adds +Ω·dt of azimuth on top of the kick's -2·ξ·dt·sqrt(γ).
        let gamma: f64 = 0.49;
        let omega = 3.0;
        let dt = 1e-3;
        let xi = 10.0;
        let cfg = StepConfig::new(
            rabi_hamiltonian(omega, Axis::Z),
            dephasing_coupling(gamma).unwrap(),
            dt,
            0,
            false,
        )
        .unwrap();
        let phi0 = 0.3;
        let next = step_no_feedback(&equator(phi0), xi, &cfg).unwrap();
        let b = next.bloch().unwrap();
        assert_relative_eq!(
            b.azimuth(),
            phi0 - 2.0 * gamma.sqrt() * xi * dt + omega * dt,
            max_relative = 1e-12
        );
        assert!(b.sz.abs() < 1e-14);
    }

    #[test]
    fn feedback_step_matches_independent_matrix_exponentials() {
        // Oracle: build M̂, Û, F̂ with nalgebra's general matrix exponential
        // (Padé, independent of the closed-form rotation) and conjugate.
        let mut rng = ChaCha8Rng::seed_from_u64(41);
        for _ in 0..200 {
            let h = random_hermitian(&mut rng);
            let l = random_hermitian(&mut rng);
            let dt = 0.05;
            let xi_now = rng.random_range(-3.0..3.0);
            let xi_delayed = rng.random_range(-3.0..3.0);
            let rho = equator(rng.random_range(-3.0..3.0));

            let cfg = StepConfig::new(h.clone(), l.clone(), dt, 1, true).unwrap();
            let stepped = step_with_feedback(&rho, xi_now, xi_delayed, &cfg).unwrap();

            let i = c(0.0, 1.0);
            let m_hat = (l.matrix() * (i * xi_now * dt)).exp();
            let u_hat = (h.matrix() * (-i * dt)).exp();
            let f_hat = (l.matrix() * (-i * xi_delayed * dt)).exp();
            let b = &f_hat * &u_hat * &m_hat;
            let expected = &b * rho.matrix() * b.adjoint();
            let expected = expected.unscale(expected.trace().re);

            let diff = (stepped.matrix() - &expected)
                .iter()
                .map(|z| z.norm())
                .fold(0.0, f64::max);
            assert!(diff < 1e-12, "feedback step deviates by {diff:.3e}");
        }
    }

    #[test]
    fn qubit_kernel_matches_public_step_functions() {
        let mut rng = ChaCha8Rng::seed_from_u64(42);
        for _ in 0..500 {
            let h = random_hermitian(&mut rng);
            let l = random_hermitian(&mut rng);
            let cfg = StepConfig::new(h, l, 2e-3, 1, true).unwrap();
            let kernel = QubitPropagator::new(&cfg);
            let rho = equator(rng.random_range(-3.0..3.0));
            let xi_now = rng.random_range(-40.0..40.0);

            let fast = kernel.step(m2_of(rho.matrix()), xi_now, None);
            let slow = step_no_feedback(&rho, xi_now, &cfg).unwrap();
            assert!(
                (crate::operators::cmatrix_of_m2(&fast) - slow.matrix())
                    .iter()
                    .map(|z| z.norm())
                    .fold(0.0, f64::max)
                    < 1e-13
            );

            let xd = rng.random_range(-40.0..40.0);
            let fast = kernel.step(m2_of(rho.matrix()), xi_now, Some(xd));
            let slow = step_with_feedback(&rho, xi_now, xd, &cfg).unwrap();
            assert!(
                (crate::operators::cmatrix_of_m2(&fast) - slow.matrix())
                    .iter()
                    .map(|z| z.norm())
                    .fold(0.0, f64::max)
                    < 1e-13
            );
        }
    }

    #[test]
    fn long_run_preserves_purity_and_stays_on_the_sphere() {
        let cfg = StepConfig::new(
            rabi_hamiltonian(2.0 * std::f64::consts::PI, Axis::X),
            dephasing_coupling(1.0).unwrap(),
            1e-3,
            7,
            true,
        )
        .unwrap();
        let mut stream = NoiseStream::new(7, 0);
        let record = run_trajectory(&cfg, &equator(0.0), &mut stream, 100_000, 1000).unwrap();
        for (p, b) in record.purity.iter().zip(&record.bloch) {
            assert!((p - 1.0).abs() <= 1e-8, "purity drifted to {p}");
            assert!(b.norm_squared() <= 1.0 + 1e-10);
        }
    }

    #[test]
    fn commuting_trajectory_matches_compressed_propagator() {
        let mut rng = ChaCha8Rng::seed_from_u64(43);
        let omega = 2.0 * std::f64::consts::PI;
        let gamma: f64 = 0.5;
        let dt = 1e-2;
        let n = 60;
        for &kappa in &[0usize, 3, 17, 60] {
            for _ in 0..25 {
                let cfg = StepConfig::new(
                    rabi_hamiltonian(omega, Axis::Z),
                    dephasing_coupling(gamma).unwrap(),
                    dt,
                    kappa,
                    true,
                )
                .unwrap();
                let noises: Vec<f64> = (0..n)
                    .map(|_| rng.random_range(-30.0..30.0))
                    .collect();
                let rho0 = equator(rng.random_range(-3.0..3.0));
                let record =
                    run_trajectory_with_noises(&cfg, Method::Operational, &rho0, &noises, n)
                        .unwrap();
                let direct = record.final_bloch().unwrap();

                let u = compressed_commuting_propagator(&cfg, &noises, n).unwrap();
                let compressed = u.conjugate(&rho0).bloch().unwrap();
                assert!(
                    direct.distance(&compressed) < 1e-10,
                    "kappa={kappa}: stepped and compressed endpoints differ by {:.3e}",
                    direct.distance(&compressed)
                );
            }
        }
    }

    #[test]
    fn zero_delay_commuting_feedback_reduces_to_bare_drive() {
        // κ = 0 and [H, L] = 0: F̂ÛM̂ = Û exactly, so the trajectory is the
        // deterministic drive rotation no matter the noise.
        let omega = 2.0 * std::f64::consts::PI;
        let cfg = StepConfig::new(
            rabi_hamiltonian(omega, Axis::Z),
            dephasing_coupling(1.0).unwrap(),
            1e-3,
            0,
            true,
        )
        .unwrap();
        let mut stream = NoiseStream::new(11, 0);
        let phi0 = 0.7;
        let record = run_trajectory(&cfg, &equator(phi0), &mut stream, 200, 1).unwrap();
        for (t, b) in record.times.iter().zip(&record.bloch) {
            let expected = BlochVector::new(
                (phi0 + omega * t).cos(),
                (phi0 + omega * t).sin(),
                0.0,
            );
            assert!(
                b.distance(&expected) < 1e-10,
                "t={t}: expected pure Rabi rotation, off by {:.3e}",
                b.distance(&expected)
            );
        }
    }

    #[test]
    fn disabled_feedback_ignores_kappa() {
        let cfg_a = StepConfig::new(
            rabi_hamiltonian(1.0, Axis::X),
            dephasing_coupling(0.8).unwrap(),
            1e-3,
            5,
            false,
        )
        .unwrap();
        let cfg_b = StepConfig::new(
            rabi_hamiltonian(1.0, Axis::X),
            dephasing_coupling(0.8).unwrap(),
            1e-3,
            0,
            false,
        )
        .unwrap();
        let a = run_trajectory(&cfg_a, &equator(0.0), &mut NoiseStream::new(3, 9), 500, 10)
            .unwrap();
        let b = run_trajectory(&cfg_b, &equator(0.0), &mut NoiseStream::new(3, 9), 500, 10)
            .unwrap();
        for (x, y) in a.bloch.iter().zip(&b.bloch) {
            assert_eq!(x.sx.to_bits(), y.sx.to_bits());
            assert_eq!(x.sy.to_bits(), y.sy.to_bits());
            assert_eq!(x.sz.to_bits(), y.sz.to_bits());
        }
    }

    #[test]
    fn feedback_switches_on_exactly_after_kappa_steps() {
        // With κ = 3 the first three steps are feedback-free, so they must
        // match a feedback-disabled run sample for sample; step 4 diverges.
        let kappa = 3;
        let make = |fb: bool| {
            StepConfig::new(
                rabi_hamiltonian(2.0, Axis::X), // non-commuting with L
                dephasing_coupling(1.0).unwrap(),
                1e-2,
                kappa,
                fb,
            )
            .unwrap()
        };
        let with_fb = run_trajectory(&make(true), &equator(0.2), &mut NoiseStream::new(5, 1), 6, 1)
            .unwrap();
        let without =
            run_trajectory(&make(false), &equator(0.2), &mut NoiseStream::new(5, 1), 6, 1)
                .unwrap();
        // records 0..=kappa (initial + first κ steps) identical
        for k in 0..=kappa {
            assert_eq!(with_fb.bloch[k].sx.to_bits(), without.bloch[k].sx.to_bits());
            assert_eq!(with_fb.bloch[k].sy.to_bits(), without.bloch[k].sy.to_bits());
            assert_eq!(with_fb.bloch[k].sz.to_bits(), without.bloch[k].sz.to_bits());
        }
        // step κ+1 is the first with a feedback kick
        assert!(with_fb.bloch[kappa + 1].distance(&without.bloch[kappa + 1]) > 1e-12);
    }

    #[test]
    fn trajectories_are_deterministic_in_the_stream() {
        let cfg = StepConfig::new(
            rabi_hamiltonian(1.5, Axis::Y),
            dephasing_coupling(0.4).unwrap(),
            1e-3,
            10,
            true,
        )
        .unwrap();
        let run = |seed, index| {
            run_trajectory(&cfg, &equator(1.0), &mut NoiseStream::new(seed, index), 300, 30)
                .unwrap()
        };
        let a = run(99, 4);
        let b = run(99, 4);
        let c = run(99, 5);
        assert_eq!(a.master_seed, 99);
        assert_eq!(a.stream_index, 4);
        for (x, y) in a.bloch.iter().zip(&b.bloch) {
            assert_eq!(x.sx.to_bits(), y.sx.to_bits());
            assert_eq!(x.sy.to_bits(), y.sy.to_bits());
            assert_eq!(x.sz.to_bits(), y.sz.to_bits());
        }
        assert!(a
            .bloch
            .iter()
            .zip(&c.bloch)
            .skip(1)
            .any(|(x, y)| x.distance(y) > 1e-12));
    }

    #[test]
    fn recording_grid_starts_at_zero_with_uniform_stride() {
        let cfg = StepConfig::new(
            HermitianOperator::zero(2),
            dephasing_coupling(1.0).unwrap(),
            0.25,
            0,
            false,
        )
        .unwrap();
        let rho0 = equator(0.4);
        let record =
            run_trajectory(&cfg, &rho0, &mut NoiseStream::new(1, 0), 40, 7).unwrap();
        assert_eq!(record.len(), 6); // t=0 plus steps 7,14,21,28,35
        for (i, t) in record.times.iter().enumerate() {
            assert_relative_eq!(*t, (7 * i) as f64 * 0.25, max_relative = 1e-15);
        }
        assert!(record.bloch[0].distance(&rho0.bloch().unwrap()) < 1e-15);
    }

    #[test]
    fn sme_methods_dispatch_to_their_step_functions() {
        // The driver with Method::DelayedIto must equal a hand-rolled chain
        // of delayed_ito_step calls with the same delay bookkeeping.
        let h = rabi_hamiltonian(1.2, Axis::X);
        let l = dephasing_coupling(0.6).unwrap();
        let kappa = 2;
        let dt = 1e-3;
        let cfg = StepConfig::new(h.clone(), l.clone(), dt, kappa, true).unwrap();
        let noises: Vec<f64> =
            NoiseStream::new(17, 3).sample_many(dt, 8).unwrap();

        for (method, stepper) in [
            (
                Method::DelayedIto,
                delayed_ito_step
                    as fn(
                        &DensityMatrix,
                        &HermitianOperator,
                        &HermitianOperator,
                        f64,
                        Option<f64>,
                        f64,
                    ) -> Result<DensityMatrix>,
            ),
            (Method::DelayedStratonovich, delayed_stratonovich_step),
        ] {
            let record =
                run_trajectory_with_noises(&cfg, method, &equator(0.9), &noises, 1).unwrap();

            let mut rho = equator(0.9);
            let mut manual = vec![rho.bloch().unwrap()];
            for (j, &xi) in noises.iter().enumerate() {
                let xd = if j >= kappa { Some(noises[j - kappa]) } else { None };
                rho = stepper(&rho, &h, &l, xi, xd, dt).unwrap();
                manual.push(rho.bloch().unwrap());
            }
            for (a, b) in record.bloch.iter().zip(&manual) {
                assert!(a.distance(b) < 1e-12, "{method} dispatch mismatch");
            }
        }
    }

    #[test]
    fn delayed_equations_reject_zero_delay_with_feedback() {
        let cfg = StepConfig::new(
            HermitianOperator::zero(2),
            dephasing_coupling(1.0).unwrap(),
            1e-3,
            0,
            true,
        )
        .unwrap();
        for method in [Method::DelayedIto, Method::DelayedStratonovich] {
            let err = run_trajectory_with_method(
                &cfg,
                method,
                &equator(0.0),
                &mut NoiseStream::new(1, 0),
                10,
                1,
            )
            .unwrap_err();
            assert!(matches!(err, Error::InvalidArgument { name: "method", .. }));
        }
        // ...but are fine with feedback disabled (plain unraveling)...
        let cfg_off = StepConfig::new(
            HermitianOperator::zero(2),
            dephasing_coupling(1.0).unwrap(),
            1e-3,
            0,
            false,
        )
        .unwrap();
        assert!(run_trajectory_with_method(
            &cfg_off,
            Method::DelayedIto,
            &equator(0.0),
            &mut NoiseStream::new(1, 0),
            10,
            1
        )
        .is_ok());
        // ...and with a real delay.
        let cfg_delay = StepConfig::new(
            HermitianOperator::zero(2),
            dephasing_coupling(1.0).unwrap(),
            1e-3,
            4,
            true,
        )
        .unwrap();
        assert!(run_trajectory_with_method(
            &cfg_delay,
            Method::DelayedStratonovich,
            &equator(0.0),
            &mut NoiseStream::new(1, 0),
            10,
            1
        )
        .is_ok());
    }

    #[test]
    fn delay_time_must_be_integer_steps() {
        let h = HermitianOperator::zero(2);
        let l = dephasing_coupling(1.0).unwrap();
        let ok = StepConfig::from_delay_time(h.clone(), l.clone(), 0.1, 0.3, true).unwrap();
        assert_eq!(ok.kappa(), 3);
        assert_relative_eq!(ok.tau(), 0.3, max_relative = 1e-12);

        assert!(StepConfig::from_delay_time(h.clone(), l.clone(), 0.1, 0.15, true).is_err());
        assert!(StepConfig::from_delay_time(h.clone(), l.clone(), 0.1, 0.3001, true).is_err());
        assert!(StepConfig::from_delay_time(h.clone(), l.clone(), 0.1, -0.1, true).is_err());
        // tiny float slop is absorbed
        assert_eq!(
            StepConfig::from_delay_time(h, l, 0.1, 0.1 * 3.0f64 + 1e-13, true)
                .unwrap()
                .kappa(),
            3
        );
    }

    #[test]
    fn invalid_configurations_are_rejected() {
        let l = dephasing_coupling(1.0).unwrap();
        assert!(StepConfig::new(HermitianOperator::zero(3), l.clone(), 1e-3, 0, false).is_err());
        assert!(StepConfig::new(HermitianOperator::zero(2), l.clone(), 0.0, 0, false).is_err());
        assert!(StepConfig::new(HermitianOperator::zero(2), l.clone(), -1.0, 0, false).is_err());

        let cfg = StepConfig::new(HermitianOperator::zero(2), l.clone(), 1e-3, 0, false).unwrap();
        assert!(matches!(
            run_trajectory(&cfg, &equator(0.0), &mut NoiseStream::new(1, 0), 10, 0),
            Err(Error::InvalidArgument { name: "record_every", .. })
        ));

        // compressed propagator gates
        let noncomm = StepConfig::new(
            rabi_hamiltonian(1.0, Axis::X),
            dephasing_coupling(1.0).unwrap(),
            1e-3,
            2,
            true,
        )
        .unwrap();
        assert!(matches!(
            compressed_commuting_propagator(&noncomm, &[0.0; 4], 4),
            Err(Error::NonCommuting { .. })
        ));
        let comm = StepConfig::new(
            rabi_hamiltonian(1.0, Axis::Z),
            dephasing_coupling(1.0).unwrap(),
            1e-3,
            2,
            true,
        )
        .unwrap();
        assert!(compressed_commuting_propagator(&comm, &[0.0; 4], 5).is_err());
    }

    #[test]
    fn method_names_round_trip() {
        for m in [
            Method::Operational,
            Method::DelayedIto,
            Method::DelayedStratonovich,
        ] {
            assert_eq!(m.as_str().parse::<Method>().unwrap(), m);
        }
        assert!("euler".parse::<Method>().is_err());
    }
}
