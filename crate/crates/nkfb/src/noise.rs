//! Measurement-noise streams and the feedback delay line.
//!
//! The measurement record in the no-knowledge configuration is pure noise:
//! each time step consumes one Gaussian sample ξ with zero mean and
//! variance 1/δt (so that ξ·δt is a Wiener increment with variance δt).
//!
//! Streams are counter-based: trajectory `i` of an ensemble draws from
//! `(master_seed, stream_index = i)`, which makes every trajectory
//! reproducible in isolation and independent of scheduling order.

use std::collections::VecDeque;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

use crate::error::{Error, Result};

/// Reproducible Gaussian noise source for one trajectory.
#[derive(Debug, Clone)]
pub struct NoiseStream {
    rng: ChaCha8Rng,
    master_seed: u64,
    stream_index: u64,
}

impl NoiseStream {
    /// Stream `stream_index` of the family identified by `master_seed`.
    ///
    /// Distinct indices give statistically independent sequences; the same
    /// pair always reproduces the same sequence.
    pub fn new(master_seed: u64, stream_index: u64) -> Self {
        let mut rng = ChaCha8Rng::seed_from_u64(master_seed);
        rng.set_stream(stream_index);
        Self {
            rng,
            master_seed,
            stream_index,
        }
    }

    /// One record sample ξ ~ Normal(0, 1/dt).
    #[inline]
    pub fn sample(&mut self, dt: f64) -> Result<f64> {
        if dt <= 0.0 || !dt.is_finite() {
            return Err(Error::InvalidArgument {
                name: "dt",
                reason: format!("time step must be finite and > 0, got {dt}"),
            });
        }
        let z: f64 = self.rng.sample(StandardNormal);
        Ok(z / dt.sqrt())
    }

    /// `n` record samples at step `dt`.
    pub fn sample_many(&mut self, dt: f64, n: usize) -> Result<Vec<f64>> {
        (0..n).map(|_| self.sample(dt)).collect()
    }

    /// The `(master_seed, stream_index)` pair that reproduces this stream.
    pub fn seed_info(&self) -> (u64, u64) {
        (self.master_seed, self.stream_index)
    }
}

/// Fixed-length FIFO holding the noise record for delayed feedback.
///
/// With delay κ = τ/δt steps, pushing the sample for step `j` returns the
/// sample of step `j - κ` once it exists (`None` while the line is still
/// filling). κ = 0 returns each sample immediately: feedback without delay.
#[derive(Debug, Clone)]
pub struct DelayBuffer {
    kappa: usize,
    fifo: VecDeque<f64>,
}

impl DelayBuffer {
    pub fn new(kappa: usize) -> Self {
        Self {
            kappa,
            fifo: VecDeque::with_capacity(kappa + 1),
        }
    }

    /// Number of delay steps κ.
    pub fn delay_steps(&self) -> usize {
        self.kappa
    }

    /// Pushes the newest sample; returns the sample from κ steps ago if the
    /// line has filled.
    #[inline]
    pub fn push_pop(&mut self, xi: f64) -> Option<f64> {
        if self.kappa == 0 {
            return Some(xi);
        }
        self.fifo.push_back(xi);
        if self.fifo.len() > self.kappa {
            self.fifo.pop_front()
        } else {
            None
        }
    }

    /// Empties the line (e.g. before reusing across trajectories).
    pub fn clear(&mut self) {
        self.fifo.clear();
    }
}

/// Merges consecutive groups of `factor` fine-grid samples into one
/// coarse-grid sample over the same physical window.
///
/// The Wiener increment is preserved: with δt_c = factor·δt_f,
/// ξ_c·δt_c = Σ ξ_f·δt_f, i.e. ξ_c is the mean of its group. Runs of the
/// same trajectory at different resolutions therefore see the same
/// underlying record, which is what step-size convergence studies need.
pub fn coarsen_noise(fine: &[f64], factor: usize) -> Result<Vec<f64>> {
    if factor == 0 {
        return Err(Error::InvalidArgument {
            name: "factor",
            reason: "coarsening factor must be >= 1".into(),
        });
    }
    if !fine.len().is_multiple_of(factor) {
        return Err(Error::InvalidArgument {
            name: "fine",
            reason: format!(
                "sample count {} is not a multiple of factor {}",
                fine.len(),
                factor
            ),
        });
    }
    Ok(fine
        .chunks_exact(factor)
        .map(|chunk| chunk.iter().sum::<f64>() / factor as f64)
        .collect())
}

#[cfg(test)]
mod tests {
    use super::*;
    use statrs::distribution::{ContinuousCDF, Normal};

    #[test]
    fn streams_are_reproducible_and_independent() {
        let mut a = NoiseStream::new(7, 3);
        let mut b = NoiseStream::new(7, 3);
        let xs = a.sample_many(1e-3, 64).unwrap();
        let ys = b.sample_many(1e-3, 64).unwrap();
        assert_eq!(xs, ys, "same (seed, stream) must agree bitwise");

        let mut c = NoiseStream::new(7, 4);
        let zs = c.sample_many(1e-3, 64).unwrap();
        assert_ne!(xs, zs, "different stream index must differ");

        let mut d = NoiseStream::new(8, 3);
        let ws = d.sample_many(1e-3, 64).unwrap();
        assert_ne!(xs, ws, "different master seed must differ");
    }

    #[test]
    fn golden_sequence_for_seed_42_stream_0() {
        let golden = include_str!("../tests/golden/noise_seed42_stream0_dt1e-4.txt");
        let expected: Vec<f64> = golden
            .lines()
            .filter(|l| !l.trim().is_empty())
            .map(|l| l.trim().parse().unwrap())
            .collect();
        assert!(!expected.is_empty());
        let mut stream = NoiseStream::new(42, 0);
        let got = stream.sample_many(1e-4, expected.len()).unwrap();
        for (g, e) in got.iter().zip(&expected) {
            assert_eq!(g.to_bits(), e.to_bits(), "got {g:.17e}, expected {e:.17e}");
        }
    }

    #[test]
    fn sample_scale_matches_one_over_sqrt_dt() {
        // dt = 1e-4: std 100, checked via 1e6 samples.
        let mut stream = NoiseStream::new(1, 0);
        let n = 1_000_000usize;
        let mut sum = 0.0f64;
        let mut sumsq = 0.0f64;
        for _ in 0..n {
            let x = stream.sample(1e-4).unwrap();
            sum += x;
            sumsq += x * x;
        }
        let mean = sum / n as f64;
        let std = (sumsq / n as f64 - mean * mean).sqrt();
        assert!(mean.abs() < 0.5, "mean {mean}");
        assert!((99.5..=100.5).contains(&std), "std {std}");
    }

    #[test]
    fn kolmogorov_smirnov_against_target_normal() {
        // D_n < c(α)/sqrt(n) with c(1e-3) = sqrt(ln(2/α)/2) ≈ 1.9495.
        let alpha: f64 = 1e-3;
        let c_alpha = ((2.0 / alpha).ln() / 2.0).sqrt();
        let n = 100_000usize;
        let normal = Normal::new(0.0, 1.0).unwrap();
        for (stream_idx, dt) in [(0u64, 1.0f64), (1, 1e-2), (2, 1e-4)] {
            let mut stream = NoiseStream::new(99, stream_idx);
            let mut xs = stream.sample_many(dt, n).unwrap();
            xs.sort_by(|a, b| a.partial_cmp(b).unwrap());
            let sqrt_dt = dt.sqrt();
            let mut d_stat = 0.0f64;
            for (i, &x) in xs.iter().enumerate() {
                // scale back to unit variance for the reference CDF
                let u = normal.cdf(x * sqrt_dt);
                let lo = i as f64 / n as f64;
                let hi = (i + 1) as f64 / n as f64;
                d_stat = d_stat.max((u - lo).abs()).max((hi - u).abs());
            }
            let threshold = c_alpha / (n as f64).sqrt();
            assert!(
                d_stat < threshold,
                "dt={dt}: D={d_stat:.5} >= {threshold:.5}"
            );
        }
    }

    #[test]
    fn distinct_streams_are_uncorrelated() {
        let n = 100_000usize;
        let mut a = NoiseStream::new(5, 0);
        let mut b = NoiseStream::new(5, 1);
        let xs = a.sample_many(1.0, n).unwrap();
        let ys = b.sample_many(1.0, n).unwrap();
        let dot: f64 = xs.iter().zip(&ys).map(|(x, y)| x * y).sum();
        let nx: f64 = xs.iter().map(|x| x * x).sum::<f64>().sqrt();
        let ny: f64 = ys.iter().map(|y| y * y).sum::<f64>().sqrt();
        let r = dot / (nx * ny);
        assert!(r.abs() < 0.01, "cross-correlation {r}");
    }

    #[test]
    fn non_positive_dt_is_rejected() {
        let mut stream = NoiseStream::new(0, 0);
        assert!(stream.sample(0.0).is_err());
        assert!(stream.sample(-1.0).is_err());
        assert!(stream.sample(f64::NAN).is_err());
    }

    #[test]
    fn zero_delay_buffer_returns_immediately() {
        let mut buf = DelayBuffer::new(0);
        assert_eq!(buf.push_pop(1.25), Some(1.25));
        assert_eq!(buf.push_pop(-0.5), Some(-0.5));
    }

    #[test]
    fn delay_buffer_releases_after_kappa_pushes() {
        let mut buf = DelayBuffer::new(3);
        assert_eq!(buf.push_pop(10.0), None);
        assert_eq!(buf.push_pop(11.0), None);
        assert_eq!(buf.push_pop(12.0), None);
        assert_eq!(buf.push_pop(13.0), Some(10.0));
        assert_eq!(buf.push_pop(14.0), Some(11.0));
    }

    #[test]
    fn delay_buffer_matches_array_shift_reference() {
        // Reference model: plain Vec, delayed sample j - κ read by index.
        let mut rng_stream = NoiseStream::new(1234, 0);
        for case in 0..50 {
            let kappa = (case * 7) % 101;
            let mut buf = DelayBuffer::new(kappa);
            let pushes = rng_stream.sample_many(1.0, 10_000).unwrap();
            for (j, &xi) in pushes.iter().enumerate() {
                let got = buf.push_pop(xi);
                let expected = if kappa == 0 {
                    Some(xi)
                } else if j >= kappa {
                    Some(pushes[j - kappa])
                } else {
                    None
                };
                assert_eq!(got, expected, "kappa={kappa}, push {j}");
            }
        }
    }

    #[test]
    fn coarsening_preserves_wiener_increments() {
        let mut stream = NoiseStream::new(77, 0);
        let dt_fine = 2.5e-4;
        let fine = stream.sample_many(dt_fine, 4096).unwrap();
        for factor in [2usize, 4] {
            let coarse = coarsen_noise(&fine, factor).unwrap();
            assert_eq!(coarse.len(), fine.len() / factor);
            let dt_coarse = dt_fine * factor as f64;
            let w_fine: f64 = fine.iter().map(|x| x * dt_fine).sum();
            let w_coarse: f64 = coarse.iter().map(|x| x * dt_coarse).sum();
            assert!((w_fine - w_coarse).abs() < 1e-10);
            // groupwise too, not just in total
            for (j, chunk) in fine.chunks_exact(factor).enumerate() {
                let inc: f64 = chunk.iter().map(|x| x * dt_fine).sum();
                assert!((coarse[j] * dt_coarse - inc).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn coarsening_rejects_bad_arguments() {
        assert!(coarsen_noise(&[1.0, 2.0, 3.0], 2).is_err());
        assert!(coarsen_noise(&[1.0, 2.0], 0).is_err());
    }
}
