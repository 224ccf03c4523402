//! Word corpora: synthesis, framing, LP covariance estimation, and noisy mixing.

mod frame;
pub mod io;
pub mod lp;
mod mix;
mod model;
mod synth;

pub use frame::{frame, FrameLayout};
pub use mix::{
    db_from_theta, embed_in_noise, mix, mix_with_rng, theta_from_db, ChannelSpec, NoiseModel,
};
pub use model::{GaussianWordModel, ModelConfig, NormalizedCorpus};
pub use synth::{synthesize_corpus, SynthSpec, WordProcess};

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use lp::{toeplitz, ArModel};

/// Default LP order for word and noise models.
pub const DEFAULT_LP_ORDER: usize = 12;
/// Default diagonal jitter, relative to the average diagonal entry.
pub const DEFAULT_RELATIVE_JITTER: f64 = 1e-8;

/// Γ words, each with J realizations of n samples.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct WordCorpus {
    sample_rate: u32,
    labels: Vec<String>,
    words: Vec<Vec<Vec<f64>>>,
}

impl WordCorpus {
    pub fn new(sample_rate: u32, labels: Vec<String>, words: Vec<Vec<Vec<f64>>>) -> Result<Self> {
        if sample_rate == 0 {
            return Err(Error::InvalidCorpus("sample rate must be positive".into()));
        }
        if words.is_empty() {
            return Err(Error::InvalidCorpus("corpus has no words".into()));
        }
        if labels.len() != words.len() {
            return Err(Error::InvalidCorpus(format!(
                "{} labels for {} words",
                labels.len(),
                words.len()
            )));
        }
        let j = words[0].len();
        let n = words[0].first().map_or(0, Vec::len);
        if n == 0 {
            return Err(Error::InvalidCorpus("empty realization".into()));
        }
        for (m, reals) in words.iter().enumerate() {
            if reals.is_empty() || reals.len() != j {
                return Err(Error::InvalidCorpus(format!(
                    "word {m} has {} realizations, expected {j}",
                    reals.len()
                )));
            }
            for (idx, r) in reals.iter().enumerate() {
                if r.len() != n {
                    return Err(Error::InvalidCorpus(format!(
                        "word {m} realization {idx} has {} samples, expected {n}",
                        r.len()
                    )));
                }
                if r.iter().any(|x| !x.is_finite()) {
                    return Err(Error::InvalidCorpus(format!(
                        "word {m} realization {idx} has non-finite samples"
                    )));
                }
            }
        }
        Ok(WordCorpus {
            sample_rate,
            labels,
            words,
        })
    }

    /// Pads with zeros or truncates every realization to `len` samples.
    pub fn from_ragged(
        sample_rate: u32,
        labels: Vec<String>,
        words: Vec<Vec<Vec<f64>>>,
        len: usize,
    ) -> Result<Self> {
        let words = words
            .into_iter()
            .map(|reals| {
                reals
                    .into_iter()
                    .map(|mut r| {
                        r.resize(len, 0.0);
                        r
                    })
                    .collect()
            })
            .collect();
        WordCorpus::new(sample_rate, labels, words)
    }

    pub fn sample_rate(&self) -> u32 {
        self.sample_rate
    }

    pub fn labels(&self) -> &[String] {
        &self.labels
    }

    pub fn word_count(&self) -> usize {
        self.words.len()
    }

    pub fn realization_count(&self) -> usize {
        self.words[0].len()
    }

    pub fn samples_per_realization(&self) -> usize {
        self.words[0][0].len()
    }

    pub fn realizations(&self, word: usize) -> &[Vec<f64>] {
        &self.words[word]
    }

    pub fn realization(&self, word: usize, j: usize) -> &[f64] {
        &self.words[word][j]
    }

    /// Mean per-sample power over every realization.
    pub fn average_power(&self) -> f64 {
        let mut acc = 0.0;
        let mut count = 0usize;
        for r in self.words.iter().flatten() {
            acc += r.iter().map(|x| x * x).sum::<f64>();
            count += r.len();
        }
        acc / count as f64
    }

    pub fn scaled(&self, gain: f64) -> WordCorpus {
        let words = self
            .words
            .iter()
            .map(|reals| {
                reals
                    .iter()
                    .map(|r| r.iter().map(|x| x * gain).collect())
                    .collect()
            })
            .collect();
        WordCorpus {
            sample_rate: self.sample_rate,
            labels: self.labels.clone(),
            words,
        }
    }

    /// Training realizations of `word` with realization `held_out` removed.
    pub fn training_set(&self, word: usize, held_out: usize) -> Vec<&[f64]> {
        self.words[word]
            .iter()
            .enumerate()
            .filter(|(j, _)| *j != held_out)
            .map(|(_, r)| r.as_slice())
            .collect()
    }

    /// FNV-1a digest of the sample data and labels.
    pub fn fingerprint(&self) -> String {
        let mut h: u64 = 0xcbf2_9ce4_8422_2325;
        let mut feed = |bytes: &[u8]| {
            for b in bytes {
                h ^= u64::from(*b);
                h = h.wrapping_mul(0x0000_0100_0000_01b3);
            }
        };
        feed(&self.sample_rate.to_le_bytes());
        for l in &self.labels {
            feed(l.as_bytes());
            feed(&[0]);
        }
        for x in self.words.iter().flatten().flatten() {
            feed(&x.to_le_bytes());
        }
        format!("{h:016x}")
    }
}

/// Diagonal regularization added to estimated covariances.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", tag = "kind", content = "value")]
pub enum Jitter {
    Absolute(f64),
    /// Multiple of `trace/dim`, i.e. of `r(0)` for a Toeplitz matrix.
    Relative(f64),
}

impl Default for Jitter {
    fn default() -> Self {
        Jitter::Relative(DEFAULT_RELATIVE_JITTER)
    }
}

impl Jitter {
    fn amount(&self, r0: f64) -> Result<f64> {
        let eps = match *self {
            Jitter::Absolute(e) => e,
            Jitter::Relative(f) => f * r0,
        };
        if !(eps >= 0.0) || !eps.is_finite() {
            return Err(Error::invalid("regularization must be non-negative"));
        }
        Ok(eps)
    }
}

/// Stationary covariance model: a fitted AR model and its autocovariance
/// sequence out to lag `k·v − 1`, with jitter already on lag 0.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LpCovariance {
    pub ar: ArModel,
    pub acov: Vec<f64>,
    pub jitter: f64,
}

impl LpCovariance {
    pub fn dim(&self) -> usize {
        self.acov.len()
    }

    pub fn matrix(&self) -> DMatrix<f64> {
        toeplitz(&self.acov, self.acov.len())
    }

    /// Process variance without jitter.
    pub fn variance(&self) -> f64 {
        self.acov[0] - self.jitter
    }
}

/// Fits an LP model to the concatenated first `k·v` samples of each
/// realization and returns its Toeplitz autocovariance plus jitter.
pub fn estimate_lp_covariance(
    realizations: &[&[f64]],
    layout: &FrameLayout,
    lp_order: usize,
    jitter: Jitter,
) -> Result<LpCovariance> {
    let d = layout.window_len();
    if realizations.is_empty() {
        return Err(Error::invalid(
            "at least one training realization is required",
        ));
    }
    if lp_order == 0 || lp_order >= d {
        return Err(Error::invalid(format!(
            "LP order must be in 1..{d}, got {lp_order}"
        )));
    }
    let mut joined = Vec::with_capacity(d * realizations.len());
    for r in realizations {
        if r.len() < d {
            return Err(Error::WaveformTooShort {
                len: r.len(),
                needed: d,
            });
        }
        joined.extend_from_slice(&r[..d]);
    }
    let ar = ArModel::fit(&joined, lp_order)?;
    let mut acov = ar.autocovariance(d - 1)?;
    let eps = jitter.amount(acov[0])?;
    acov[0] += eps;
    Ok(LpCovariance {
        ar,
        acov,
        jitter: eps,
    })
}

/// `Σ_{X_m}` from the training realizations of one word.
pub fn estimate_word_covariance(
    realizations: &[&[f64]],
    layout: &FrameLayout,
    lp_order: usize,
    jitter: Jitter,
) -> Result<DMatrix<f64>> {
    estimate_lp_covariance(realizations, layout, lp_order, jitter).map(|c| c.matrix())
}

/// LP model of every realization of every word, the spectral template for the noise.
pub fn estimate_noise_model(
    corpus: &WordCorpus,
    layout: &FrameLayout,
    lp_order: usize,
    jitter: Jitter,
) -> Result<LpCovariance> {
    let all: Vec<&[f64]> = (0..corpus.word_count())
        .flat_map(|m| corpus.realizations(m).iter().map(Vec::as_slice))
        .collect();
    estimate_lp_covariance(&all, layout, lp_order, jitter)
}

/// `Σ_W` estimated over the whole corpus.
pub fn estimate_noise_covariance(
    corpus: &WordCorpus,
    layout: &FrameLayout,
    lp_order: usize,
    jitter: Jitter,
) -> Result<DMatrix<f64>> {
    estimate_noise_model(corpus, layout, lp_order, jitter).map(|c| c.matrix())
}
