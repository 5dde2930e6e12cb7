//! Keyed random streams.
//!
//! Each stream is a ChaCha8 generator seeded from a key, and keys are derived
//! by hashing the run seed together with a lane tag and indices such as
//! `(particle, step)`. Two executions with the same seed therefore consume
//! identical numbers no matter how particles are scheduled across threads.

use rand::distr::weighted::WeightedIndex;
use rand::distr::Distribution;
use rand::{Rng, RngCore, SeedableRng};
use rand_chacha::ChaCha8Rng;

const GOLDEN: u64 = 0x9E37_79B9_7F4A_7C15;

/// Stream lanes keep the per-particle, resampling and selection draws apart.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
#[repr(u64)]
pub enum Lane {
    Particle = 1,
    Resample = 2,
    Select = 3,
    Attempt = 4,
    Tasks = 5,
}

/// SplitMix64 finalizer, used only to derive stream keys.
#[inline]
pub fn mix64(mut z: u64) -> u64 {
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Hash an ordered list of words into a stream key.
pub fn stream_key(parts: &[u64]) -> u64 {
    parts.iter().fold(0x243F_6A88_85A3_08D3u64, |acc, &p| {
        mix64(acc.rotate_left(23) ^ mix64(p.wrapping_add(GOLDEN)))
    })
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct StreamRng(ChaCha8Rng);

impl StreamRng {
    pub fn from_key(key: u64) -> Self {
        Self(ChaCha8Rng::seed_from_u64(key))
    }

    /// Stream for one particle during one engine step.
    pub fn for_particle(seed: u64, particle: usize, step: usize) -> Self {
        Self::from_key(stream_key(&[
            seed,
            Lane::Particle as u64,
            particle as u64,
            step as u64,
        ]))
    }

    pub fn for_lane(seed: u64, lane: Lane, index: u64) -> Self {
        Self::from_key(stream_key(&[seed, lane as u64, index]))
    }

    pub fn next_u64(&mut self) -> u64 {
        self.0.next_u64()
    }

    /// Uniform in `[0, 1)`.
    pub fn next_f64(&mut self) -> f64 {
        self.0.random()
    }

    /// Draw an index with probability proportional to `weights`.
    ///
    /// Returns `None` when no weight is positive.
    pub fn categorical(&mut self, weights: &[f64]) -> Option<usize> {
        let dist =
            WeightedIndex::new(weights.iter().map(|w| if *w > 0.0 { *w } else { 0.0 })).ok()?;
        Some(dist.sample(&mut self.0))
    }

    pub fn below(&mut self, n: usize) -> usize {
        self.0.random_range(0..n)
    }
}
