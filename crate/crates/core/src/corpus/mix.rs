use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::{LpCovariance, WordCorpus};
use crate::error::{Error, Result};

/// The shared noise process: its AR synthesis filter and Toeplitz covariance.
pub type NoiseModel = LpCovariance;

impl LpCovariance {
    /// Noise by AR synthesis filtering of white Gaussian innovations.
    pub fn sample<R: Rng + ?Sized>(&self, n: usize, rng: &mut R) -> Result<Vec<f64>> {
        self.ar.sample(n, rng)
    }
}

/// Power normalization between corpus and noise. The corpus is multiplied
/// by `gain` so that its average power equals the noise power, which makes
/// the linear SNR equal to the mixing scale θ.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ChannelSpec {
    pub p_ave: f64,
    pub p_noise: f64,
    pub gain: f64,
}

impl ChannelSpec {
    pub fn calibrate(corpus: &WordCorpus, noise: &NoiseModel) -> Result<Self> {
        let p_ave = corpus.average_power();
        let p_noise = noise.variance();
        if !(p_ave > 0.0) || !(p_noise > 0.0) {
            return Err(Error::DegenerateSignal);
        }
        Ok(ChannelSpec {
            p_ave,
            p_noise,
            gain: (p_noise / p_ave).sqrt(),
        })
    }

    pub fn normalize(&self, corpus: &WordCorpus) -> WordCorpus {
        corpus.scaled(self.gain)
    }
}

pub fn theta_from_db(snr_db: f64) -> f64 {
    10f64.powf(snr_db / 10.0)
}

pub fn db_from_theta(theta: f64) -> f64 {
    10.0 * theta.log10()
}

/// `y = √θ·x + w` with `w` drawn from the noise model under `seed`.
pub fn mix(word: &[f64], noise: &NoiseModel, theta: f64, seed: u64) -> Result<Vec<f64>> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    mix_with_rng(word, noise, theta, &mut rng)
}

pub fn mix_with_rng<R: Rng + ?Sized>(
    word: &[f64],
    noise: &NoiseModel,
    theta: f64,
    rng: &mut R,
) -> Result<Vec<f64>> {
    if !(theta >= 0.0) || !theta.is_finite() {
        return Err(Error::invalid(format!(
            "θ must be a finite non-negative number, got {theta}"
        )));
    }
    let mut y = noise.sample(word.len(), rng)?;
    if theta > 0.0 {
        let s = theta.sqrt();
        for (yi, xi) in y.iter_mut().zip(word) {
            *yi += s * xi;
        }
    }
    Ok(y)
}

/// A word placed at a uniformly random offset in `0..=len` inside a noise
/// segment twice its length, scaled by `√θ`. Returns the stimulus and offset.
pub fn embed_in_noise<R: Rng + ?Sized>(
    word: &[f64],
    noise: &NoiseModel,
    theta: f64,
    rng: &mut R,
) -> Result<(Vec<f64>, usize)> {
    if !(theta >= 0.0) || !theta.is_finite() {
        return Err(Error::invalid(format!(
            "θ must be a finite non-negative number, got {theta}"
        )));
    }
    let n = word.len();
    let mut y = noise.sample(2 * n, rng)?;
    let offset = rng.random_range(0..=n);
    let s = theta.sqrt();
    for (yi, xi) in y[offset..offset + n].iter_mut().zip(word) {
        *yi += s * xi;
    }
    Ok((y, offset))
}
