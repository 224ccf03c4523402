use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::lp::{is_stable, ArModel};
use super::WordCorpus;
use crate::error::{Error, Result};

/// Generating process of one synthetic word: an AR polynomial and innovation variance.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct WordProcess {
    pub coeffs: Vec<f64>,
    pub innovation_var: f64,
}

impl WordProcess {
    pub fn new(coeffs: Vec<f64>, innovation_var: f64) -> Self {
        WordProcess {
            coeffs,
            innovation_var,
        }
    }

    /// Second-order resonator with pole radius `radius` at angle `omega` rad/sample.
    pub fn resonator(radius: f64, omega: f64, innovation_var: f64) -> Self {
        WordProcess::new(
            vec![2.0 * radius * omega.cos(), -radius * radius],
            innovation_var,
        )
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SynthSpec {
    pub sample_rate: u32,
    pub realizations: usize,
    pub samples: usize,
    pub seed: u64,
    pub words: Vec<WordProcess>,
    #[serde(default)]
    pub labels: Option<Vec<String>>,
}

impl SynthSpec {
    /// Ten AR(2) resonators, fifteen realizations each, 240 samples at 1 kHz.
    pub fn default_corpus(seed: u64) -> Self {
        let gamma = 10;
        let words = (0..gamma)
            .map(|m| {
                let omega = std::f64::consts::PI * (m as f64 + 0.75) / (gamma as f64 + 0.5);
                WordProcess::resonator(0.92, omega, 1.0)
            })
            .collect();
        SynthSpec {
            sample_rate: 1000,
            realizations: 15,
            samples: 240,
            seed,
            words,
            labels: None,
        }
    }
}

/// Draws independent stationary realizations of each word's AR process.
pub fn synthesize_corpus(spec: &SynthSpec) -> Result<WordCorpus> {
    if spec.realizations == 0 || spec.samples == 0 {
        return Err(Error::invalid("realizations and samples must be positive"));
    }
    let mut models = Vec::with_capacity(spec.words.len());
    for (m, w) in spec.words.iter().enumerate() {
        if !is_stable(&w.coeffs) {
            return Err(Error::UnstableAr { word: m });
        }
        models.push(ArModel::new(w.coeffs.clone(), w.innovation_var)?);
    }
    let labels = match &spec.labels {
        Some(l) => l.clone(),
        None => (0..spec.words.len()).map(|m| format!("word{m}")).collect(),
    };
    let mut words = Vec::with_capacity(models.len());
    for (m, model) in models.iter().enumerate() {
        let mut reals = Vec::with_capacity(spec.realizations);
        for j in 0..spec.realizations {
            let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
            rng.set_stream(((m as u64) << 32) | j as u64);
            reals.push(model.sample(spec.samples, &mut rng)?);
        }
        words.push(reals);
    }
    WordCorpus::new(spec.sample_rate, labels, words)
}
