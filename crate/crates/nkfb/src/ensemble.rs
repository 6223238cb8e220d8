//! Parallel Monte Carlo over independent trajectories: averaging, error
//! bars, and reference-curve comparison.
//!
//! Trajectory `i` always draws from noise stream `i`, so the ensemble is a
//! pure function of `(plan, n_traj, master_seed)` no matter how work is
//! scheduled. Reduction sums fixed 64-trajectory blocks sequentially and
//! combines the block partials in a fixed pairwise tree, which makes every
//! output bit independent of the worker count.

use rayon::prelude::*;
use sha2::{Digest, Sha256};

use crate::error::{Error, Result};
use crate::noise::NoiseStream;
use crate::operators::{BlochVector, DensityMatrix};
use crate::oracles::OracleCurve;
use crate::trajectory::{run_trajectory_with_method, Method, StepConfig};

/// Trajectories per reduction block. Block boundaries are part of the
/// result's definition: changing this constant changes low-order bits.
const BLOCK: u64 = 64;

/// Everything needed to run one trajectory of an ensemble: the stepper
/// configuration, the integration scheme, the initial state, and the
/// simulation horizon / recording stride.
#[derive(Debug, Clone)]
pub struct SimulationPlan {
    step: StepConfig,
    method: Method,
    rho0: DensityMatrix,
    n_steps: usize,
    record_every: usize,
}

impl SimulationPlan {
    pub fn new(
        step: StepConfig,
        method: Method,
        rho0: DensityMatrix,
        n_steps: usize,
        record_every: usize,
    ) -> Result<Self> {
        if rho0.dim() != step.dim() {
            return Err(Error::InvalidArgument {
                name: "rho0",
                reason: format!(
                    "state is {}x{0}, operators are {}x{1}",
                    rho0.dim(),
                    step.dim()
                ),
            });
        }
        if n_steps == 0 {
            return Err(Error::InvalidArgument {
                name: "n_steps",
                reason: "simulation horizon must be at least one step".into(),
            });
        }
        if record_every == 0 {
            return Err(Error::InvalidArgument {
                name: "record_every",
                reason: "recording stride must be >= 1".into(),
            });
        }
        // Surface invalid method/feedback/delay combinations at plan time
        // rather than from inside a worker thread.
        crate::trajectory::check_method(&step, method)?;
        Ok(Self {
            step,
            method,
            rho0,
            n_steps,
            record_every,
        })
    }

    pub fn step_config(&self) -> &StepConfig {
        &self.step
    }

    pub fn method(&self) -> Method {
        self.method
    }

    pub fn initial_state(&self) -> &DensityMatrix {
        &self.rho0
    }

    pub fn n_steps(&self) -> usize {
        self.n_steps
    }

    pub fn record_every(&self) -> usize {
        self.record_every
    }

    /// The recording grid: t = k·dt for every recorded step k
    /// (step 0, then every `record_every`-th step).
    pub fn times(&self) -> Vec<f64> {
        (0..=self.n_steps)
            .step_by(self.record_every)
            .map(|k| k as f64 * self.step.dt())
            .collect()
    }

    fn n_recorded(&self) -> usize {
        self.n_steps / self.record_every + 1
    }

    /// Hex digest of every input that determines the ensemble, exact to
    /// the last bit of every float.
    fn digest(&self, n_traj: u64, master_seed: u64) -> String {
        let mut h = Sha256::new();
        h.update(self.method.as_str().as_bytes());
        h.update(self.step.dt().to_bits().to_le_bytes());
        h.update((self.step.kappa() as u64).to_le_bytes());
        h.update([u8::from(self.step.feedback_enabled())]);
        for m in [
            self.step.hamiltonian().matrix(),
            self.step.coupling().matrix(),
            self.rho0.matrix(),
        ] {
            for z in m.iter() {
                h.update(z.re.to_bits().to_le_bytes());
                h.update(z.im.to_bits().to_le_bytes());
            }
        }
        h.update((self.n_steps as u64).to_le_bytes());
        h.update((self.record_every as u64).to_le_bytes());
        h.update(n_traj.to_le_bytes());
        h.update(master_seed.to_le_bytes());
        h.finalize().iter().fold(String::with_capacity(64), |mut s, b| {
            use std::fmt::Write;
            let _ = write!(s, "{b:02x}");
            s
        })
    }
}

/// Ensemble mean and standard error of the Bloch vector on a time grid.
#[derive(Debug, Clone)]
pub struct EnsembleResult {
    /// Recording times, starting at t = 0.
    pub times: Vec<f64>,
    /// Per-time-point ensemble mean Bloch vector.
    pub mean_bloch: Vec<BlochVector>,
    /// Per-time-point, per-component standard error of the mean
    /// (sample standard deviation / sqrt(n); 0 for a single trajectory).
    pub sem_bloch: Vec<BlochVector>,
    /// Number of trajectories averaged.
    pub n_traj: u64,
    /// Digest of the generating configuration and seed.
    pub config_digest: String,
}

impl EnsembleResult {
    pub fn len(&self) -> usize {
        self.times.len()
    }

    pub fn is_empty(&self) -> bool {
        self.times.is_empty()
    }

    /// A contiguous time window of the result (for validating a segment,
    /// e.g. only the pre-feedback or only the plateau region). The digest
    /// still identifies the generating run.
    pub fn slice(&self, lo: usize, hi: usize) -> Result<EnsembleResult> {
        if lo >= hi || hi > self.times.len() {
            return Err(Error::GridMismatch(format!(
                "window {lo}..{hi} out of bounds for {} points",
                self.times.len()
            )));
        }
        Ok(EnsembleResult {
            times: self.times[lo..hi].to_vec(),
            mean_bloch: self.mean_bloch[lo..hi].to_vec(),
            sem_bloch: self.sem_bloch[lo..hi].to_vec(),
            n_traj: self.n_traj,
            config_digest: self.config_digest.clone(),
        })
    }
}

/// Mean ± SEM of a scalar observable evaluated once per trajectory.
#[derive(Debug, Clone, Copy)]
pub struct ScalarEstimate {
    pub mean: f64,
    pub sem: f64,
    pub n_traj: u64,
}

struct Sums {
    sum: Vec<f64>,
    sumsq: Vec<f64>,
}

impl Sums {
    fn zero(width: usize) -> Self {
        Self {
            sum: vec![0.0; width],
            sumsq: vec![0.0; width],
        }
    }

    fn absorb(&mut self, values: &[f64]) {
        for (k, v) in values.iter().enumerate() {
            self.sum[k] += v;
            self.sumsq[k] += v * v;
        }
    }

    fn merge(mut self, other: &Sums) -> Sums {
        for k in 0..self.sum.len() {
            self.sum[k] += other.sum[k];
            self.sumsq[k] += other.sumsq[k];
        }
        self
    }
}

/// Deterministic parallel reduction: trajectories are grouped into fixed
/// blocks of [`BLOCK`], each block is summed sequentially in index order,
/// and block partials are merged in a fixed pairwise tree. The outcome is
/// bitwise-identical for any worker count.
fn block_pairwise_sums<F>(n_traj: u64, workers: usize, width: usize, per_traj: F) -> Result<Sums>
where
    F: Fn(u64) -> Result<Vec<f64>> + Sync,
{
    let n_blocks = n_traj.div_ceil(BLOCK);
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(workers)
        .build()
        .map_err(|e| Error::InvalidArgument {
            name: "workers",
            reason: format!("could not build a {workers}-thread pool: {e}"),
        })?;
    let mut parts: Vec<Sums> = pool.install(|| {
        (0..n_blocks)
            .into_par_iter()
            .map(|b| {
                let mut sums = Sums::zero(width);
                for i in b * BLOCK..((b + 1) * BLOCK).min(n_traj) {
                    let values = per_traj(i).map_err(|e| Error::Trajectory {
                        stream_index: i,
                        source: Box::new(e),
                    })?;
                    debug_assert_eq!(values.len(), width);
                    sums.absorb(&values);
                }
                Ok(sums)
            })
            .collect::<Result<Vec<Sums>>>()
    })?;
    while parts.len() > 1 {
        let mut next = Vec::with_capacity(parts.len().div_ceil(2));
        let mut iter = parts.into_iter();
        while let Some(first) = iter.next() {
            next.push(match iter.next() {
                Some(second) => first.merge(&second),
                None => first,
            });
        }
        parts = next;
    }
    Ok(parts.pop().expect("at least one block"))
}

fn mean_sem(sum: f64, sumsq: f64, n: u64) -> (f64, f64) {
    let nf = n as f64;
    let mean = sum / nf;
    if n < 2 {
        return (mean, 0.0);
    }
    let var = ((sumsq - sum * sum / nf) / (nf - 1.0)).max(0.0);
    (mean, (var / nf).sqrt())
}

fn check_run_args(n_traj: u64, workers: usize) -> Result<()> {
    if n_traj == 0 {
        return Err(Error::InvalidArgument {
            name: "n_traj",
            reason: "ensemble needs at least one trajectory".into(),
        });
    }
    if workers == 0 {
        return Err(Error::InvalidArgument {
            name: "workers",
            reason: "worker count must be >= 1".into(),
        });
    }
    Ok(())
}

/// Runs `n_traj` independent trajectories (trajectory i on noise stream i)
/// and reduces them to per-time-point mean and SEM of the Bloch vector.
pub fn run_ensemble(
    plan: &SimulationPlan,
    n_traj: u64,
    master_seed: u64,
    workers: usize,
) -> Result<EnsembleResult> {
    check_run_args(n_traj, workers)?;
    let n_times = plan.n_recorded();
    let width = 3 * n_times;
    let sums = block_pairwise_sums(n_traj, workers, width, |i| {
        let mut stream = NoiseStream::new(master_seed, i);
        let record = run_trajectory_with_method(
            &plan.step,
            plan.method,
            &plan.rho0,
            &mut stream,
            plan.n_steps,
            plan.record_every,
        )?;
        let mut values = Vec::with_capacity(width);
        for b in &record.bloch {
            values.push(b.sx);
            values.push(b.sy);
            values.push(b.sz);
        }
        Ok(values)
    })?;

    let mut mean_bloch = Vec::with_capacity(n_times);
    let mut sem_bloch = Vec::with_capacity(n_times);
    for t in 0..n_times {
        let mut m = [0.0; 3];
        let mut s = [0.0; 3];
        for c in 0..3 {
            let k = 3 * t + c;
            (m[c], s[c]) = mean_sem(sums.sum[k], sums.sumsq[k], n_traj);
        }
        mean_bloch.push(BlochVector::new(m[0], m[1], m[2]));
        sem_bloch.push(BlochVector::new(s[0], s[1], s[2]));
    }
    Ok(EnsembleResult {
        times: plan.times(),
        mean_bloch,
        sem_bloch,
        n_traj,
        config_digest: plan.digest(n_traj, master_seed),
    })
}

/// Mean ± SEM of the overlap Tr[ρ_ref·ρ_i(t_end)] evaluated at the last
/// recorded point of each trajectory — for a qubit this is the fidelity
/// ½(1 + b_ref·b_i) between `reference` and the conditioned state.
pub fn fidelity_estimate(
    plan: &SimulationPlan,
    reference: &DensityMatrix,
    n_traj: u64,
    master_seed: u64,
    workers: usize,
) -> Result<ScalarEstimate> {
    check_run_args(n_traj, workers)?;
    let b_ref = reference.bloch()?;
    let sums = block_pairwise_sums(n_traj, workers, 1, |i| {
        let mut stream = NoiseStream::new(master_seed, i);
        let record = run_trajectory_with_method(
            &plan.step,
            plan.method,
            &plan.rho0,
            &mut stream,
            plan.n_steps,
            plan.record_every,
        )?;
        let b = record.bloch.last().expect("at least the t=0 record");
        Ok(vec![0.5 * (1.0 + b_ref.sx * b.sx + b_ref.sy * b.sy + b_ref.sz * b.sz)])
    })?;
    let (mean, sem) = mean_sem(sums.sum[0], sums.sumsq[0], n_traj);
    Ok(ScalarEstimate {
        mean,
        sem,
        n_traj,
    })
}

/// Agreement statistics between an ensemble mean and a reference curve.
#[derive(Debug, Clone)]
pub struct ValidationReport {
    /// Sigma multiple a point must fall within to count as agreeing.
    pub k_sigma: f64,
    /// Fraction of (time point, component) pairs within k_sigma·SEM.
    pub fraction_within: f64,
    /// Required fraction for `pass`.
    pub pass_threshold: f64,
    /// Per-component (Sx, Sy, Sz) maximum of |mean − reference| / SEM;
    /// infinite when SEM = 0 and the deviation is not.
    pub max_sigma_deviation: [f64; 3],
    /// Number of time points compared.
    pub n_points: usize,
    pub pass: bool,
}

impl std::fmt::Display for ValidationReport {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(
            f,
            "{}: {:.1}% of {} points within {}·SEM (need {:.1}%); max dev/SEM = [{:.2}, {:.2}, {:.2}]",
            if self.pass { "pass" } else { "FAIL" },
            100.0 * self.fraction_within,
            self.n_points,
            self.k_sigma,
            100.0 * self.pass_threshold,
            self.max_sigma_deviation[0],
            self.max_sigma_deviation[1],
            self.max_sigma_deviation[2],
        )
    }
}

/// Compares an ensemble mean against a reference curve on the same time
/// grid: pass when at least 99% of (point, component) pairs lie within
/// `k_sigma`·SEM (the ~1% allowance matches the expected exceedance rate
/// around k_sigma = 3).
pub fn validate_against_oracle(
    result: &EnsembleResult,
    oracle: &OracleCurve,
    k_sigma: f64,
) -> Result<ValidationReport> {
    validate_with_threshold(result, oracle, k_sigma, 0.99)
}

/// As [`validate_against_oracle`] with a configurable pass fraction
/// (1.0 demands every point inside the band).
pub fn validate_with_threshold(
    result: &EnsembleResult,
    oracle: &OracleCurve,
    k_sigma: f64,
    pass_threshold: f64,
) -> Result<ValidationReport> {
    if k_sigma.is_nan() || k_sigma <= 0.0 {
        return Err(Error::InvalidArgument {
            name: "k_sigma",
            reason: format!("sigma multiple must be > 0, got {k_sigma}"),
        });
    }
    if result.times.len() != oracle.times().len() {
        return Err(Error::GridMismatch(format!(
            "ensemble has {} points, reference {}",
            result.times.len(),
            oracle.times().len()
        )));
    }
    for (k, (&a, &b)) in result.times.iter().zip(oracle.times()).enumerate() {
        if (a - b).abs() > 1e-9 * a.abs().max(1.0) {
            return Err(Error::GridMismatch(format!(
                "time grids differ at index {k}: {a} vs {b}"
            )));
        }
    }

    let mut within = 0usize;
    let mut max_dev = [0.0f64; 3];
    for ((mean, sem), reference) in result
        .mean_bloch
        .iter()
        .zip(&result.sem_bloch)
        .zip(oracle.bloch())
    {
        let devs = [
            (mean.sx - reference.sx).abs(),
            (mean.sy - reference.sy).abs(),
            (mean.sz - reference.sz).abs(),
        ];
        let sems = [sem.sx, sem.sy, sem.sz];
        for c in 0..3 {
            if devs[c] <= k_sigma * sems[c] {
                within += 1;
            }
            let ratio = if devs[c] == 0.0 {
                0.0
            } else if sems[c] == 0.0 {
                f64::INFINITY
            } else {
                devs[c] / sems[c]
            };
            max_dev[c] = max_dev[c].max(ratio);
        }
    }
    let n_points = result.times.len();
    let fraction_within = within as f64 / (3 * n_points) as f64;
    Ok(ValidationReport {
        k_sigma,
        fraction_within,
        pass_threshold,
        max_sigma_deviation: max_dev,
        n_points,
        pass: fraction_within >= pass_threshold,
    })
}
