use std::path::Path;

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use super::{
    estimate_lp_covariance, estimate_noise_model, ChannelSpec, FrameLayout, Jitter, LpCovariance,
    NoiseModel, WordCorpus, DEFAULT_LP_ORDER,
};
use crate::error::{Error, Result};
use crate::gaussian::{DependenceMode, NoisyWordCov};

/// Training options shared by every word model.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ModelConfig {
    pub frame_ms: f64,
    pub lp_order: usize,
    pub jitter: Jitter,
    pub mode: DependenceMode,
}

impl Default for ModelConfig {
    fn default() -> Self {
        ModelConfig {
            frame_ms: 20.0,
            lp_order: DEFAULT_LP_ORDER,
            jitter: Jitter::default(),
            mode: DependenceMode::Markov1,
        }
    }
}

impl ModelConfig {
    pub fn layout_for(&self, corpus: &WordCorpus) -> Result<FrameLayout> {
        FrameLayout::for_duration(
            corpus.sample_rate(),
            self.frame_ms,
            corpus.samples_per_realization(),
        )
    }
}

/// Per-word Toeplitz covariances `Σ_{X_m}` and the shared noise `Σ_W`.
///
/// Word models are trained on the power-normalized corpus, so the channel
/// gain must be applied to any raw waveform before it is compared with them.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GaussianWordModel {
    pub sample_rate: u32,
    pub labels: Vec<String>,
    pub layout: FrameLayout,
    pub config: ModelConfig,
    pub channel: ChannelSpec,
    pub noise: NoiseModel,
    pub words: Vec<LpCovariance>,
}

/// A corpus brought to noise power, with the noise model and gain that did it.
#[derive(Debug, Clone)]
pub struct NormalizedCorpus {
    pub corpus: WordCorpus,
    pub noise: NoiseModel,
    pub channel: ChannelSpec,
    pub layout: FrameLayout,
}

impl NormalizedCorpus {
    pub fn new(raw: &WordCorpus, config: &ModelConfig) -> Result<Self> {
        let layout = config.layout_for(raw)?;
        let noise = estimate_noise_model(raw, &layout, config.lp_order, config.jitter)?;
        let channel = ChannelSpec::calibrate(raw, &noise)?;
        Ok(NormalizedCorpus {
            corpus: channel.normalize(raw),
            noise,
            channel,
            layout,
        })
    }

    /// Word models trained on every realization except `held_out`.
    pub fn train(
        &self,
        config: &ModelConfig,
        held_out: Option<usize>,
    ) -> Result<GaussianWordModel> {
        let c = &self.corpus;
        if let Some(j) = held_out {
            if c.realization_count() < 2 {
                return Err(Error::TooFewRealizations);
            }
            if j >= c.realization_count() {
                return Err(Error::invalid(format!("held-out index {j} out of range")));
            }
        }
        let words = (0..c.word_count())
            .map(|m| {
                let reals = match held_out {
                    Some(j) => c.training_set(m, j),
                    None => c.realizations(m).iter().map(Vec::as_slice).collect(),
                };
                estimate_lp_covariance(&reals, &self.layout, config.lp_order, config.jitter)
            })
            .collect::<Result<Vec<_>>>()?;
        Ok(GaussianWordModel {
            sample_rate: c.sample_rate(),
            labels: c.labels().to_vec(),
            layout: self.layout,
            config: *config,
            channel: self.channel,
            noise: self.noise.clone(),
            words,
        })
    }
}

impl GaussianWordModel {
    /// Normalizes `raw` and trains on all of it.
    pub fn train(raw: &WordCorpus, config: &ModelConfig) -> Result<Self> {
        NormalizedCorpus::new(raw, config)?.train(config, None)
    }

    pub fn word_count(&self) -> usize {
        self.words.len()
    }

    pub fn dim(&self) -> usize {
        self.layout.window_len()
    }

    pub fn mode(&self) -> DependenceMode {
        self.config.mode
    }

    pub fn word_cov(&self, m: usize) -> DMatrix<f64> {
        self.words[m].matrix()
    }

    pub fn noise_cov(&self) -> DMatrix<f64> {
        self.noise.matrix()
    }

    /// `Σ_{Y|m} = θΣ_{X_m} + Σ_W`.
    pub fn noisy(&self, m: usize, theta: f64) -> Result<NoisyWordCov> {
        NoisyWordCov::new(&self.word_cov(m), &self.noise_cov(), theta, self.layout)
    }

    pub fn noisy_all(&self, theta: f64) -> Result<Vec<NoisyWordCov>> {
        (0..self.word_count())
            .map(|m| self.noisy(m, theta))
            .collect()
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        let text = serde_json::to_string_pretty(self).map_err(|e| Error::Parse(e.to_string()))?;
        std::fs::write(path, text).map_err(|e| Error::io(path, e))
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        let model: GaussianWordModel = serde_json::from_str(&text)
            .map_err(|e| Error::Parse(format!("{}: {e}", path.display())))?;
        let d = model.layout.window_len();
        if model.words.is_empty() || model.labels.len() != model.words.len() {
            return Err(Error::Parse(
                "model has no words or mismatched labels".into(),
            ));
        }
        for c in model.words.iter().chain(std::iter::once(&model.noise)) {
            if c.dim() != d {
                return Err(Error::DimensionMismatch {
                    expected: d,
                    got: c.dim(),
                });
            }
        }
        Ok(model)
    }
}
