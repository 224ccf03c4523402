//! Forced-choice closed-set listening test: session plans, stimulus
//! rendering, response bookkeeping and human recognition rates.
//!
//! The HTTP service is a thin layer over [`SessionRecord`]; the wire types
//! shared with clients live in [`wire`].

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::corpus::io::encode_wav;
use crate::corpus::{embed_in_noise, theta_from_db, NormalizedCorpus};
use crate::error::{Error, Result};
use crate::harness::psychometric::PsychPoint;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Phase {
    Training,
    Test,
}

impl Phase {
    pub fn as_str(&self) -> &'static str {
        match self {
            Phase::Training => "training",
            Phase::Test => "test",
        }
    }
}

impl std::str::FromStr for Phase {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "training" => Ok(Phase::Training),
            "test" => Ok(Phase::Test),
            _ => Err(Error::invalid(format!("unknown phase {s:?}"))),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SessionConfig {
    /// Presentations of each SNR in the training phase.
    pub training_repetitions: usize,
    /// Presentations of each SNR in the test phase.
    pub test_repetitions: usize,
    pub snr_db: Vec<f64>,
    /// Five-slot trials, each slot scored as its own word.
    pub sentence_mode: bool,
    pub words_per_sentence: usize,
    /// Noise RMS of presented stimuli, relative to full scale.
    pub noise_rms: f64,
}

impl Default for SessionConfig {
    fn default() -> Self {
        SessionConfig {
            training_repetitions: 2,
            test_repetitions: 8,
            snr_db: vec![-20.0, -16.0, -12.0, -8.0, -4.0, 0.0],
            sentence_mode: false,
            words_per_sentence: 5,
            noise_rms: 0.05,
        }
    }
}

impl SessionConfig {
    pub fn validate(&self) -> Result<()> {
        if self.snr_db.is_empty() || self.snr_db.iter().any(|x| !x.is_finite()) {
            return Err(Error::invalid(
                "session SNR grid must be non-empty and finite",
            ));
        }
        if self.training_repetitions == 0 || self.test_repetitions == 0 {
            return Err(Error::invalid("repetition counts must be positive"));
        }
        if self.sentence_mode && self.words_per_sentence == 0 {
            return Err(Error::invalid("sentences need at least one word"));
        }
        if !(self.noise_rms > 0.0 && self.noise_rms < 1.0) {
            return Err(Error::invalid("noise_rms must lie in (0, 1)"));
        }
        Ok(())
    }

    pub fn repetitions(&self, phase: Phase) -> usize {
        match phase {
            Phase::Training => self.training_repetitions,
            Phase::Test => self.test_repetitions,
        }
    }

    /// Response slots per trial.
    pub fn slots(&self) -> usize {
        if self.sentence_mode {
            self.words_per_sentence
        } else {
            1
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PlannedTrial {
    /// Spoken word per slot.
    pub words: Vec<usize>,
    /// Realization used for each slot.
    pub realizations: Vec<usize>,
    pub snr_db: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SessionPlan {
    pub phase: Phase,
    pub seed: u64,
    pub trials: Vec<PlannedTrial>,
}

impl SessionPlan {
    /// Every SNR repeated per the phase's count, in seeded random order,
    /// with uniformly drawn words and realizations.
    pub fn generate(
        phase: Phase,
        config: &SessionConfig,
        gamma: usize,
        realizations: usize,
        seed: u64,
    ) -> Result<Self> {
        config.validate()?;
        if gamma < 2 || realizations == 0 {
            return Err(Error::invalid(
                "a session needs at least 2 words with realizations",
            ));
        }
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut snrs: Vec<f64> = config
            .snr_db
            .iter()
            .flat_map(|&s| std::iter::repeat_n(s, config.repetitions(phase)))
            .collect();
        snrs.shuffle(&mut rng);
        let slots = config.slots();
        let trials = snrs
            .into_iter()
            .map(|snr_db| PlannedTrial {
                words: (0..slots).map(|_| rng.random_range(0..gamma)).collect(),
                realizations: (0..slots)
                    .map(|_| rng.random_range(0..realizations))
                    .collect(),
                snr_db,
            })
            .collect();
        Ok(SessionPlan {
            phase,
            seed,
            trials,
        })
    }

    pub fn len(&self) -> usize {
        self.trials.len()
    }

    pub fn is_empty(&self) -> bool {
        self.trials.is_empty()
    }
}

/// Noisy waveform of trial `index` (0-based): each slot's word embedded in
/// its own noise segment, slots concatenated. Deterministic in the plan seed.
pub fn render_trial(
    plan: &SessionPlan,
    index: usize,
    corpus: &NormalizedCorpus,
) -> Result<Vec<f64>> {
    let trial = plan
        .trials
        .get(index)
        .ok_or_else(|| Error::invalid(format!("trial index {index} out of range")))?;
    let mut rng = ChaCha8Rng::seed_from_u64(plan.seed);
    rng.set_stream(index as u64 + 1);
    let theta = theta_from_db(trial.snr_db);
    let c = &corpus.corpus;
    let mut out = Vec::new();
    for (&m, &j) in trial.words.iter().zip(&trial.realizations) {
        if m >= c.word_count() || j >= c.realization_count() {
            return Err(Error::invalid(
                "plan refers to a word or realization outside the corpus",
            ));
        }
        let (y, _) = embed_in_noise(c.realization(m, j), &corpus.noise, theta, &mut rng)?;
        out.extend(y);
    }
    Ok(out)
}

/// Playback gain that puts the noise at `noise_rms` of full scale.
pub fn presentation_gain(corpus: &NormalizedCorpus, config: &SessionConfig) -> f64 {
    config.noise_rms / corpus.noise.variance().sqrt()
}

/// 16-bit WAV bytes of every trial in the plan.
pub fn render_session_audio(
    plan: &SessionPlan,
    corpus: &NormalizedCorpus,
    config: &SessionConfig,
) -> Result<Vec<Vec<u8>>> {
    let gain = presentation_gain(corpus, config);
    (0..plan.len())
        .map(|i| {
            encode_wav(
                corpus.corpus.sample_rate(),
                &render_trial(plan, i, corpus)?,
                gain,
            )
        })
        .collect()
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct RecordedResponse {
    pub choices: Vec<usize>,
    #[serde(default)]
    pub response_ms: Option<u64>,
}

/// Why a protocol request was refused.
#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum ProtocolError {
    #[error("{0}")]
    Validation(String),
    #[error("{0}")]
    Conflict(String),
    #[error("session is complete")]
    Gone,
}

/// Outcome of an accepted response.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Accepted {
    /// 1-based number of the next trial, if any.
    pub next: Option<usize>,
    /// The response had already been recorded with the same choices.
    pub duplicate: bool,
}

/// One subject's session: the plan and the ordered responses so far.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SessionRecord {
    pub session_id: String,
    pub subject_id: String,
    pub gamma: usize,
    pub labels: Vec<String>,
    pub slots: usize,
    pub plan: SessionPlan,
    pub responses: Vec<RecordedResponse>,
}

impl SessionRecord {
    pub fn trial_count(&self) -> usize {
        self.plan.len()
    }

    pub fn is_complete(&self) -> bool {
        self.responses.len() == self.plan.len()
    }

    /// 1-based number of the trial awaiting a response.
    pub fn current_trial(&self) -> Option<usize> {
        (!self.is_complete()).then(|| self.responses.len() + 1)
    }

    /// Trial `n` may be fetched only while it is the current one.
    pub fn check_fetch(&self, n: usize) -> std::result::Result<(), ProtocolError> {
        if n == 0 || n > self.trial_count() {
            return Err(ProtocolError::Validation(format!(
                "trial {n} out of range 1..={}",
                self.trial_count()
            )));
        }
        match self.current_trial() {
            None => Err(ProtocolError::Gone),
            Some(c) if c == n => Ok(()),
            Some(c) => Err(ProtocolError::Conflict(format!(
                "trial {n} is not the current trial ({c})"
            ))),
        }
    }

    /// Validates a response to trial `n` without recording it.
    pub fn check_response(
        &self,
        n: usize,
        response: &RecordedResponse,
    ) -> std::result::Result<Accepted, ProtocolError> {
        if n == 0 || n > self.trial_count() {
            return Err(ProtocolError::Validation(format!(
                "trial {n} out of range 1..={}",
                self.trial_count()
            )));
        }
        if n <= self.responses.len() {
            let prior = &self.responses[n - 1];
            return if prior.choices == response.choices {
                Ok(Accepted {
                    next: (n < self.trial_count()).then_some(n + 1),
                    duplicate: true,
                })
            } else {
                Err(ProtocolError::Conflict(format!(
                    "trial {n} was already answered differently"
                )))
            };
        }
        if n != self.responses.len() + 1 {
            return Err(ProtocolError::Conflict(format!(
                "trial {n} is not the current trial ({})",
                self.responses.len() + 1
            )));
        }
        if response.choices.len() < self.slots {
            return Err(ProtocolError::Validation(
                "forced-choice requires a selection".into(),
            ));
        }
        if response.choices.len() > self.slots {
            return Err(ProtocolError::Validation(format!(
                "expected {} choice(s), got {}",
                self.slots,
                response.choices.len()
            )));
        }
        if let Some(c) = response.choices.iter().find(|&&c| c >= self.gamma) {
            return Err(ProtocolError::Validation(format!(
                "choice {c} is not a candidate (0..{})",
                self.gamma
            )));
        }
        Ok(Accepted {
            next: (n < self.trial_count()).then_some(n + 1),
            duplicate: false,
        })
    }

    /// Records a response after [`check_response`](Self::check_response).
    pub fn respond(
        &mut self,
        n: usize,
        response: RecordedResponse,
    ) -> std::result::Result<Accepted, ProtocolError> {
        let a = self.check_response(n, &response)?;
        if !a.duplicate {
            self.responses.push(response);
        }
        Ok(a)
    }

    pub fn results(&self) -> std::result::Result<SessionResults, ProtocolError> {
        if !self.is_complete() {
            return Err(ProtocolError::Conflict(format!(
                "session incomplete: {} of {} trials answered",
                self.responses.len(),
                self.trial_count()
            )));
        }
        let mut r = SessionResults::empty(self.gamma, self.labels.clone());
        for (t, resp) in self.plan.trials.iter().zip(&self.responses) {
            for (&truth, &choice) in t.words.iter().zip(&resp.choices) {
                r.add(t.snr_db, truth, choice);
            }
        }
        Ok(r)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SnrResult {
    pub snr_db: f64,
    pub n_trials: u64,
    pub n_correct: u64,
    pub p_c: f64,
    /// Rows: spoken word; columns: chosen word.
    pub confusion: Vec<Vec<u64>>,
}

/// Per-SNR recognition counts of one or more sessions, scored per word.
/// This is also the human-data format read by the sweep report.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SessionResults {
    pub gamma: usize,
    pub labels: Vec<String>,
    pub points: Vec<SnrResult>,
}

impl SessionResults {
    pub fn empty(gamma: usize, labels: Vec<String>) -> Self {
        SessionResults {
            gamma,
            labels,
            points: Vec::new(),
        }
    }

    fn add(&mut self, snr_db: f64, truth: usize, choice: usize) {
        let g = self.gamma;
        let i = match self.points.iter().position(|p| p.snr_db == snr_db) {
            Some(i) => i,
            None => {
                self.points.push(SnrResult {
                    snr_db,
                    n_trials: 0,
                    n_correct: 0,
                    p_c: 0.0,
                    confusion: vec![vec![0; g]; g],
                });
                self.points.sort_by(|a, b| a.snr_db.total_cmp(&b.snr_db));
                self.points
                    .iter()
                    .position(|p| p.snr_db == snr_db)
                    .expect("inserted")
            }
        };
        let p = &mut self.points[i];
        p.n_trials += 1;
        p.confusion[truth][choice] += 1;
        if truth == choice {
            p.n_correct += 1;
        }
        p.p_c = p.n_correct as f64 / p.n_trials as f64;
    }

    /// Pools the counts of several sessions over the same vocabulary.
    pub fn pool(sessions: &[SessionResults]) -> Result<SessionResults> {
        let first = sessions
            .first()
            .ok_or_else(|| Error::invalid("no sessions to pool"))?;
        let mut out = SessionResults::empty(first.gamma, first.labels.clone());
        for s in sessions {
            if s.gamma != first.gamma {
                return Err(Error::invalid("sessions use different vocabularies"));
            }
            for p in &s.points {
                if p.confusion.len() != s.gamma || p.confusion.iter().any(|r| r.len() != s.gamma) {
                    return Err(Error::invalid(
                        "confusion matrix does not match the vocabulary",
                    ));
                }
                for (t, row) in p.confusion.iter().enumerate() {
                    for (c, &k) in row.iter().enumerate() {
                        for _ in 0..k {
                            out.add(p.snr_db, t, c);
                        }
                    }
                }
            }
        }
        Ok(out)
    }

    pub fn psych_points(&self) -> Vec<PsychPoint> {
        self.points
            .iter()
            .map(|p| PsychPoint {
                snr_db: p.snr_db,
                p_c: p.p_c,
                n_trials: p.n_trials,
            })
            .collect()
    }
}

/// JSON bodies of the listening-test HTTP protocol.
pub mod wire {
    use serde::{Deserialize, Serialize};

    use super::Phase;

    pub const PROTOCOL_VERSION: u32 = 1;

    #[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
    pub struct CreateSession {
        pub subject_id: String,
        pub phase: String,
        #[serde(default)]
        pub seed: Option<u64>,
    }

    #[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
    pub struct SessionCreated {
        pub session_id: String,
        /// Bearer token required by every request on this session.
        pub token: String,
        pub phase: Phase,
        pub trial_count: usize,
        pub protocol: u32,
    }

    #[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
    pub struct Slot {
        pub category: String,
        pub candidates: Vec<String>,
    }

    /// What a client sees of one trial. Carries no SNR.
    #[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
    pub struct TrialView {
        pub trial: usize,
        pub trial_count: usize,
        pub phase: Phase,
        pub slots: Vec<Slot>,
        pub audio_url: String,
        pub replay_allowed: bool,
    }

    #[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
    pub struct SubmitResponse {
        /// One candidate index per slot.
        pub choices: Vec<usize>,
        #[serde(default)]
        pub response_ms: Option<u64>,
    }

    #[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
    pub struct ResponseAccepted {
        pub accepted: bool,
        pub next: Option<usize>,
        pub complete: bool,
    }

    #[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
    pub struct ErrorBody {
        pub code: String,
        pub message: String,
    }
}
