//! Reproducible Gaussian noise streams.
//!
//! A stream is a ChaCha8 generator keyed by (master_seed, stream_id): the
//! same pair always replays the same sample sequence, distinct stream ids
//! give statistically independent sequences, and the generator's word
//! position serves as the counter. One stream drives one trajectory, so
//! ensembles can run trajectories on any worker layout without sharing
//! generator state.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

use super::PhaseField;
use crate::error::{Error, Result};

/// Seeded, counter-based source of standard-normal samples.
#[derive(Debug, Clone)]
pub struct NoiseStream {
    master_seed: u64,
    stream_id: u64,
    rng: ChaCha8Rng,
}

impl NoiseStream {
    pub fn new(master_seed: u64, stream_id: u64) -> Self {
        let mut rng = ChaCha8Rng::seed_from_u64(master_seed);
        rng.set_stream(stream_id);
        Self {
            master_seed,
            stream_id,
            rng,
        }
    }

    pub fn master_seed(&self) -> u64 {
        self.master_seed
    }

    pub fn stream_id(&self) -> u64 {
        self.stream_id
    }

    /// Words consumed so far; strictly increases as samples are drawn.
    pub fn counter(&self) -> u128 {
        self.rng.get_word_pos()
    }

    /// One standard-normal sample.
    pub fn normal(&mut self) -> f64 {
        self.rng.sample(StandardNormal)
    }

    /// Fills `out` with independent N(0, sigma²) samples in index order.
    pub(crate) fn fill_normal_scaled(&mut self, sigma: f64, out: &mut [f64]) {
        for v in out.iter_mut() {
            let z: f64 = self.rng.sample(StandardNormal);
            *v = sigma * z;
        }
    }

    /// One Poisson(mean) count. A zero mean yields zero without touching
    /// the generator; the mean must be finite and non-negative.
    pub fn poisson(&mut self, mean: f64) -> u64 {
        if mean == 0.0 {
            return 0;
        }
        let dist = rand_distr::Poisson::new(mean).expect("finite positive mean");
        self.rng.sample::<f64, _>(dist) as u64
    }
}

/// Samples an L×L field of i.i.d. Gaussians with mean 0 and the given
/// per-site variance, advancing the stream counter.
///
/// The zero-variance boundary is the caller's job: integrators skip the
/// noise add entirely when the noise strength is zero.
pub fn sample_noise_field(
    stream: &mut NoiseStream,
    side: usize,
    spacing: f64,
    variance: f64,
) -> Result<PhaseField> {
    if !(variance.is_finite() && variance > 0.0) {
        return Err(Error::Parameter(format!(
            "noise variance must be positive and finite, got {variance}"
        )));
    }
    let mut field = PhaseField::flat(side, spacing)?;
    stream.fill_normal_scaled(variance.sqrt(), field.values_mut());
    Ok(field)
}
