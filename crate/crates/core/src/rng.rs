//! Seeded random streams.
//!
//! Every stream is a xoshiro256++ generator seeded through splitmix64
//! (`Xoshiro256PlusPlus::seed_from_u64`). Independent cells of an experiment
//! (seeds, trials, Monte Carlo shards) obtain their own stream with
//! [`derive_seed`], so results do not depend on scheduling order.
//! Gaussians use the Box–Muller transform.

use rand::{Rng, SeedableRng};
use rand_xoshiro::Xoshiro256PlusPlus;

pub type Stream = Xoshiro256PlusPlus;

const GOLDEN_GAMMA: u64 = 0x9E37_79B9_7F4A_7C15;

/// One step of the splitmix64 output function.
pub fn splitmix64(state: u64) -> u64 {
    let mut z = state.wrapping_add(GOLDEN_GAMMA);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Seed for cell `index` of an experiment rooted at `base`.
///
/// `derive_seed(base, i) = splitmix64(splitmix64(base) ^ splitmix64(i + 1))`.
pub fn derive_seed(base: u64, index: u64) -> u64 {
    splitmix64(splitmix64(base) ^ splitmix64(index.wrapping_add(1)))
}

pub fn stream(seed: u64) -> Stream {
    Xoshiro256PlusPlus::seed_from_u64(seed)
}

/// Uniform on [0, 1) with 53 bits of precision.
#[inline]
pub fn uniform(rng: &mut Stream) -> f64 {
    rng.random::<f64>()
}

/// Uniform on [low, high).
#[inline]
pub fn uniform_range(rng: &mut Stream, low: f64, high: f64) -> f64 {
    low + (high - low) * uniform(rng)
}

/// Standard normal sampler using Box–Muller, caching the second variate.
#[derive(Debug, Clone, Default)]
pub struct Gaussian {
    spare: Option<f64>,
}

impl Gaussian {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn sample(&mut self, rng: &mut Stream) -> f64 {
        if let Some(z) = self.spare.take() {
            return z;
        }
        // 1 - u lies in (0, 1], so the log is finite.
        let u1 = 1.0 - uniform(rng);
        let u2 = uniform(rng);
        let r = (-2.0 * u1.ln()).sqrt();
        let theta = std::f64::consts::TAU * u2;
        self.spare = Some(r * theta.sin());
        r * theta.cos()
    }
}

/// Fisher–Yates shuffle of `0..n`.
pub fn permutation(n: usize, rng: &mut Stream) -> Vec<usize> {
    let mut idx: Vec<usize> = (0..n).collect();
    for i in (1..n).rev() {
        let j = rng.random_range(0..=i);
        idx.swap(i, j);
    }
    idx
}

/// 64-bit FNV-1a.
pub fn fnv1a64(bytes: &[u8]) -> u64 {
    let mut hash: u64 = 0xcbf2_9ce4_8422_2325;
    for &b in bytes {
        hash ^= u64::from(b);
        hash = hash.wrapping_mul(0x0000_0100_0000_01b3);
    }
    hash
}
