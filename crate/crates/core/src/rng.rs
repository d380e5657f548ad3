//! Seeded, portable randomness for experiments and property checks.
//!
//! All randomness flows through a ChaCha8 stream so that a given seed
//! produces the same draws on every platform. Gaussian variates use the
//! Marsaglia polar transform rather than a library sampler, which pins the
//! exact mapping from uniform bits to normals.

use rand::{RngCore, SeedableRng};
use rand_chacha::ChaCha8Rng;

pub struct ExperimentRng {
    inner: ChaCha8Rng,
    spare_normal: Option<f64>,
}

impl ExperimentRng {
    pub fn seed_from_u64(seed: u64) -> Self {
        ExperimentRng {
            inner: ChaCha8Rng::seed_from_u64(seed),
            spare_normal: None,
        }
    }

    /// Independent stream for sub-experiment `stream` of a master seed
    /// (splitmix-style multiplicative mixing).
    pub fn derive(seed: u64, stream: u64) -> Self {
        let mixed = seed ^ 0x9E37_79B9_7F4A_7C15u64.wrapping_mul(stream.wrapping_add(1));
        Self::seed_from_u64(mixed)
    }

    /// Uniform in [0, 1) with 53 random bits.
    pub fn uniform(&mut self) -> f64 {
        (self.inner.next_u64() >> 11) as f64 * (1.0 / (1u64 << 53) as f64)
    }

    /// Standard normal by the polar method; the second variate of each
    /// accepted pair is cached.
    pub fn standard_normal(&mut self) -> f64 {
        if let Some(z) = self.spare_normal.take() {
            return z;
        }
        loop {
            let u = 2.0 * self.uniform() - 1.0;
            let v = 2.0 * self.uniform() - 1.0;
            let s = u * u + v * v;
            if s > 0.0 && s < 1.0 {
                let m = (-2.0 * s.ln() / s).sqrt();
                self.spare_normal = Some(v * m);
                return u * m;
            }
        }
    }

    pub fn normal_vec(&mut self, n: usize) -> Vec<f64> {
        (0..n).map(|_| self.standard_normal()).collect()
    }
}
