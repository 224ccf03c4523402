//! Experiment configuration, read from TOML.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::corpus::io::{import_corpus, LengthPolicy};
use crate::corpus::{synthesize_corpus, Jitter, ModelConfig, SynthSpec, WordCorpus};
use crate::decoder::{Classifier, DecoderSettings, SnrPrior};
use crate::error::{Error, Result};
use crate::gaussian::DependenceMode;
use crate::infobounds::BetaChoice;
use crate::listening::SessionConfig;

/// Environment variable naming the default config file.
pub const CONFIG_ENV: &str = "INFOLOSS_CONFIG";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct CorpusSection {
    /// Manifest of a WAV corpus; the synthetic corpus is used when absent.
    pub manifest: Option<PathBuf>,
    /// Common realization length on import; shortest file when absent.
    pub length: Option<usize>,
    pub seed: u64,
    pub words: usize,
    pub realizations: usize,
    pub samples: usize,
    pub sample_rate: u32,
}

impl Default for CorpusSection {
    fn default() -> Self {
        let s = SynthSpec::default_corpus(7);
        CorpusSection {
            manifest: None,
            length: None,
            seed: 7,
            words: s.words.len(),
            realizations: s.realizations,
            samples: s.samples,
            sample_rate: s.sample_rate,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ModelSection {
    pub frame_ms: f64,
    pub lp_order: usize,
    /// Diagonal jitter as a fraction of the zero-lag autocovariance.
    pub jitter_relative: f64,
    /// Absolute diagonal jitter; overrides `jitter_relative` when set.
    pub jitter_absolute: Option<f64>,
    pub modes: Vec<DependenceMode>,
}

impl Default for ModelSection {
    fn default() -> Self {
        let m = ModelConfig::default();
        ModelSection {
            frame_ms: m.frame_ms,
            lp_order: m.lp_order,
            jitter_relative: crate::corpus::DEFAULT_RELATIVE_JITTER,
            jitter_absolute: None,
            modes: vec![DependenceMode::IndependentFrames, DependenceMode::Markov1],
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PriorSection {
    pub a: f64,
    pub b: f64,
    pub quadrature_points: usize,
    pub bracket_points: usize,
    /// SNR grid of the discrete classifier, dB.
    pub discrete_db: Vec<f64>,
}

impl Default for PriorSection {
    fn default() -> Self {
        let s = DecoderSettings::default();
        PriorSection {
            a: s.prior_a,
            b: s.prior_b,
            quadrature_points: s.quadrature_points,
            bracket_points: s.bracket_points,
            discrete_db: vec![-20.0, -16.0, -12.0, -8.0, -4.0, 0.0],
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", untagged)]
pub enum BetaSetting {
    Fixed(f64),
    Named(String),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SweepSection {
    pub snr_db: Vec<f64>,
    pub classifiers: Vec<Classifier>,
    pub trials_per_fold: usize,
    /// Number of leave-one-out folds to run; all of them when 0.
    pub folds: usize,
    pub seed: u64,
    /// Window shift step in samples; one frame when 0.
    pub stride: usize,
    /// A number in (0, 1) or `"grid"`.
    pub beta: BetaSetting,
    /// One-sided significance level of the above-chance test.
    pub chance_alpha: f64,
    pub output: PathBuf,
}

impl Default for SweepSection {
    fn default() -> Self {
        SweepSection {
            snr_db: vec![-40.0, -30.0, -20.0, -15.0, -10.0, -5.0, 0.0, 10.0, 20.0],
            classifiers: Classifier::ALL.to_vec(),
            trials_per_fold: 20,
            folds: 0,
            seed: 7,
            stride: 0,
            beta: BetaSetting::Fixed(0.5),
            chance_alpha: 0.05,
            output: PathBuf::from("sweep.csv"),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ServiceSection {
    pub bind: String,
    pub data_dir: PathBuf,
    pub training_repetitions: usize,
    pub test_repetitions: usize,
    pub snr_db: Vec<f64>,
    pub sentence_mode: bool,
    pub words_per_sentence: usize,
    /// Noise RMS of presented stimuli, relative to 16-bit full scale.
    pub noise_rms: f64,
}

impl Default for ServiceSection {
    fn default() -> Self {
        let s = SessionConfig::default();
        ServiceSection {
            bind: "127.0.0.1:8080".into(),
            data_dir: PathBuf::from("sessions"),
            training_repetitions: s.training_repetitions,
            test_repetitions: s.test_repetitions,
            snr_db: s.snr_db,
            sentence_mode: s.sentence_mode,
            words_per_sentence: s.words_per_sentence,
            noise_rms: s.noise_rms,
        }
    }
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct Config {
    pub corpus: CorpusSection,
    pub model: ModelSection,
    pub prior: PriorSection,
    pub sweep: SweepSection,
    pub service: ServiceSection,
}

impl Config {
    pub fn from_toml(text: &str) -> Result<Self> {
        let c: Config = toml::from_str(text).map_err(|e| Error::Parse(e.to_string()))?;
        c.validate()?;
        Ok(c)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Config::from_toml(&text).map_err(|e| match e {
            Error::Parse(m) => Error::Parse(format!("{}: {m}", path.display())),
            other => other,
        })
    }

    /// `path`, else the file named by `INFOLOSS_CONFIG`, else defaults.
    pub fn resolve(path: Option<&Path>) -> Result<Self> {
        match path {
            Some(p) => Config::load(p),
            None => match std::env::var_os(CONFIG_ENV) {
                Some(p) if !p.is_empty() => Config::load(Path::new(&p)),
                _ => Ok(Config::default()),
            },
        }
    }

    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("config serializes")
    }

    /// Overrides one `section.key` with a TOML value, e.g. `sweep.seed=3`
    /// or `prior.discrete_db=[-10, 0]`. Bare strings need no quotes.
    pub fn set(&mut self, assignment: &str) -> Result<()> {
        let (key, value) = assignment.split_once('=').ok_or_else(|| {
            Error::invalid(format!("expected section.key=value, got {assignment:?}"))
        })?;
        let (section, field) = key
            .trim()
            .split_once('.')
            .ok_or_else(|| Error::invalid(format!("expected section.key, got {key:?}")))?;
        let value = value.trim();
        let parsed: toml::Value = match toml::from_str::<toml::Table>(&format!("v = {value}")) {
            Ok(mut t) => t.remove("v").expect("key present"),
            Err(_) => toml::Value::String(value.to_string()),
        };
        let mut doc: toml::Table =
            toml::from_str(&self.to_toml()).map_err(|e| Error::Parse(e.to_string()))?;
        let table = doc
            .entry(section.to_string())
            .or_insert_with(|| toml::Value::Table(toml::Table::new()))
            .as_table_mut()
            .ok_or_else(|| Error::invalid(format!("unknown section {section:?}")))?;
        table.insert(field.to_string(), parsed);
        let text = toml::to_string(&doc).map_err(|e| Error::Parse(e.to_string()))?;
        *self = Config::from_toml(&text)?;
        Ok(())
    }

    pub fn validate(&self) -> Result<()> {
        if self.model.modes.is_empty() {
            return Err(Error::invalid("model.modes is empty"));
        }
        if self.sweep.classifiers.is_empty() {
            return Err(Error::invalid("sweep.classifiers is empty"));
        }
        if self.sweep.snr_db.iter().any(|x| !x.is_finite()) {
            return Err(Error::invalid("sweep.snr_db must be finite"));
        }
        if self.sweep.trials_per_fold == 0 {
            return Err(Error::invalid("sweep.trials_per_fold must be positive"));
        }
        if !(self.sweep.chance_alpha > 0.0 && self.sweep.chance_alpha < 1.0) {
            return Err(Error::invalid("sweep.chance_alpha must lie in (0, 1)"));
        }
        self.beta()?;
        self.decoder_settings()?;
        self.jitter()?;
        self.session_config().validate()?;
        Ok(())
    }

    pub fn beta(&self) -> Result<BetaChoice> {
        match &self.sweep.beta {
            BetaSetting::Fixed(b) if *b > 0.0 && *b < 1.0 => Ok(BetaChoice::Fixed(*b)),
            BetaSetting::Named(s) if s == "grid" => Ok(BetaChoice::standard_grid()),
            other => Err(Error::invalid(format!(
                "sweep.beta must be in (0, 1) or \"grid\", got {other:?}"
            ))),
        }
    }

    pub fn jitter(&self) -> Result<Jitter> {
        match self.model.jitter_absolute {
            Some(a) if a >= 0.0 => Ok(Jitter::Absolute(a)),
            Some(a) => Err(Error::invalid(format!("negative jitter {a}"))),
            None if self.model.jitter_relative >= 0.0 => {
                Ok(Jitter::Relative(self.model.jitter_relative))
            }
            None => Err(Error::invalid("negative jitter")),
        }
    }

    /// Training options for one dependence mode.
    pub fn model_config(&self, mode: DependenceMode) -> Result<ModelConfig> {
        Ok(ModelConfig {
            frame_ms: self.model.frame_ms,
            lp_order: self.model.lp_order,
            jitter: self.jitter()?,
            mode,
        })
    }

    pub fn decoder_settings(&self) -> Result<DecoderSettings> {
        let p = &self.prior;
        let grid: Vec<f64> = p
            .discrete_db
            .iter()
            .map(|db| 10f64.powf(db / 10.0))
            .collect();
        SnrPrior::uniform(p.a, p.b)?;
        SnrPrior::discrete(grid.clone())?;
        Ok(DecoderSettings {
            prior_a: p.a,
            prior_b: p.b,
            quadrature_points: p.quadrature_points,
            bracket_points: p.bracket_points,
            discrete_grid: grid,
        })
    }

    pub fn session_config(&self) -> SessionConfig {
        let s = &self.service;
        SessionConfig {
            training_repetitions: s.training_repetitions,
            test_repetitions: s.test_repetitions,
            snr_db: s.snr_db.clone(),
            sentence_mode: s.sentence_mode,
            words_per_sentence: s.words_per_sentence,
            noise_rms: s.noise_rms,
        }
    }

    pub fn synth_spec(&self) -> Result<SynthSpec> {
        let c = &self.corpus;
        let mut spec = SynthSpec::default_corpus(c.seed);
        if c.words > spec.words.len() {
            return Err(Error::invalid(format!(
                "the synthetic corpus has at most {} words",
                spec.words.len()
            )));
        }
        if c.words == 0 {
            return Err(Error::invalid("corpus.words must be positive"));
        }
        spec.words.truncate(c.words);
        if let Some(l) = spec.labels.as_mut() {
            l.truncate(c.words);
        }
        spec.realizations = c.realizations;
        spec.samples = c.samples;
        spec.sample_rate = c.sample_rate;
        Ok(spec)
    }

    /// The configured corpus: imported from the manifest, or synthesized.
    pub fn load_corpus(&self) -> Result<WordCorpus> {
        match &self.corpus.manifest {
            Some(m) => {
                let policy = match self.corpus.length {
                    Some(n) => LengthPolicy::Fixed(n),
                    None => LengthPolicy::Shortest,
                };
                import_corpus(m, policy)
            }
            None => synthesize_corpus(&self.synth_spec()?),
        }
    }
}
