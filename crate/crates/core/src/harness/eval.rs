use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::corpus::{embed_in_noise, theta_from_db, ModelConfig, NormalizedCorpus, WordCorpus};
use crate::decoder::{Classifier, Decoder, DecoderSettings};
use crate::error::{Error, Result};
use crate::gaussian::DependenceMode;

/// What to run in a leave-one-out evaluation.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalSpec {
    pub snr_db: Vec<f64>,
    pub classifiers: Vec<Classifier>,
    pub mode: DependenceMode,
    /// Trials per word, SNR and fold.
    pub trials_per_fold: usize,
    pub seed: u64,
    /// Window shift step; one frame when 0.
    pub stride: usize,
    /// Folds to run (the first ones); all when 0.
    pub folds: usize,
}

/// Confusion counts of one recognizer at one SNR.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ConditionCounts {
    pub snr_db: f64,
    pub classifier: Classifier,
    pub mode: DependenceMode,
    /// Rows: spoken word; columns: decision.
    pub confusion: Vec<Vec<u64>>,
}

impl ConditionCounts {
    pub fn n_trials(&self) -> u64 {
        self.confusion.iter().flatten().sum()
    }

    pub fn n_correct(&self) -> u64 {
        (0..self.confusion.len())
            .map(|i| self.confusion[i][i])
            .sum()
    }

    pub fn p_c(&self) -> f64 {
        self.n_correct() as f64 / self.n_trials().max(1) as f64
    }
}

/// Seed stream of one trial; independent of the classifier and dependence
/// mode so every recognizer hears the same stimuli.
fn trial_stream(fold: usize, snr: usize, word: usize, trial: usize) -> u64 {
    ((fold as u64) << 48) | ((snr as u64) << 32) | ((word as u64) << 16) | trial as u64
}

/// Leave-one-out recognition: for each fold `j`, word models are trained on
/// every other realization, realization `j` of each word is embedded at a
/// random offset in noise twice its length at each SNR, and every
/// classifier decodes the same stimuli. Counts are pooled over folds.
///
/// The noise model and the power normalization come from the whole corpus.
pub fn leave_one_out_eval(
    corpus: &WordCorpus,
    model: &ModelConfig,
    settings: &DecoderSettings,
    spec: &EvalSpec,
) -> Result<Vec<ConditionCounts>> {
    if corpus.realization_count() < 2 {
        return Err(Error::TooFewRealizations);
    }
    if spec.snr_db.is_empty() {
        return Err(Error::invalid("SNR list is empty"));
    }
    if spec.classifiers.is_empty() {
        return Err(Error::invalid("no classifiers selected"));
    }
    if spec.trials_per_fold == 0 {
        return Err(Error::invalid("trials per fold must be positive"));
    }
    if spec.trials_per_fold >= 1 << 16
        || corpus.word_count() >= 1 << 16
        || spec.snr_db.len() >= 1 << 16
    {
        return Err(Error::invalid(
            "evaluation too large for the trial seeding scheme",
        ));
    }
    let norm = NormalizedCorpus::new(corpus, model)?;
    let g = corpus.word_count();
    let stride = if spec.stride == 0 {
        norm.layout.frame_len()
    } else {
        spec.stride
    };
    let folds = match spec.folds {
        0 => corpus.realization_count(),
        f => f.min(corpus.realization_count()),
    };
    let mut counts: Vec<Vec<ConditionCounts>> = spec
        .snr_db
        .iter()
        .map(|&snr_db| {
            spec.classifiers
                .iter()
                .map(|&classifier| ConditionCounts {
                    snr_db,
                    classifier,
                    mode: spec.mode,
                    confusion: vec![vec![0; g]; g],
                })
                .collect()
        })
        .collect();
    for fold in 0..folds {
        let trained = norm.train(model, Some(fold))?;
        let decoder = Decoder::from_model(&trained, spec.mode, settings.clone())?;
        for (si, &snr_db) in spec.snr_db.iter().enumerate() {
            let theta = theta_from_db(snr_db);
            for m in 0..g {
                let word = norm.corpus.realization(m, fold);
                for t in 0..spec.trials_per_fold {
                    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
                    rng.set_stream(trial_stream(fold, si, m, t));
                    let (stim, _) = embed_in_noise(word, &norm.noise, theta, &mut rng)?;
                    let results =
                        decoder.decode_with_shift_all(&stim, &spec.classifiers, stride)?;
                    for (ci, r) in results.iter().enumerate() {
                        counts[si][ci].confusion[m][r.m_star] += 1;
                    }
                }
            }
        }
    }
    Ok(counts.into_iter().flatten().collect())
}
