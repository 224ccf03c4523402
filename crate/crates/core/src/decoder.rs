//! MAP word classifiers for `y = √θ·x_m + w` with unknown θ.
//!
//! Every block term of a word's mode density is simultaneously diagonalized
//! with its noise block: with `Σ_W = L Lᵀ` and `L⁻¹ Σ_X L⁻ᵀ = U Λ Uᵀ`,
//!
//! `ln N(y; 0, θΣ_X + Σ_W) = −½ [r ln 2π + ln|Σ_W| + Σ ln(1 + θλ_i) + Σ u_i² / (1 + θλ_i)]`
//!
//! where `u = Uᵀ L⁻¹ y`. Projections are computed once per stimulus and
//! window position; evaluating a log-likelihood or its θ-derivative is then
//! linear in the block size.

use std::collections::HashMap;

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use crate::corpus::{FrameLayout, GaussianWordModel};
use crate::error::{Error, Result};
use crate::gaussian::{block, DependenceMode, SpdFactor};

const LN_2PI: f64 = 1.837_877_066_409_345_3;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Classifier {
    /// θ integrated out under a uniform prior.
    MapM,
    /// Joint maximization over the word and a continuous θ.
    MapMThetaCont,
    /// Joint maximization over the word and a finite θ grid.
    MapMThetaDisc,
}

impl Classifier {
    pub const ALL: [Classifier; 3] = [
        Classifier::MapM,
        Classifier::MapMThetaCont,
        Classifier::MapMThetaDisc,
    ];

    pub fn as_str(&self) -> &'static str {
        match self {
            Classifier::MapM => "map_m",
            Classifier::MapMThetaCont => "map_m_theta_cont",
            Classifier::MapMThetaDisc => "map_m_theta_disc",
        }
    }
}

impl std::fmt::Display for Classifier {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.as_str())
    }
}

impl std::str::FromStr for Classifier {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Classifier::ALL
            .into_iter()
            .find(|c| c.as_str() == s)
            .ok_or_else(|| Error::invalid(format!("unknown classifier {s:?}")))
    }
}

/// Prior on the SNR scale θ.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SnrPrior {
    UniformContinuous { a: f64, b: f64 },
    Discrete(Vec<f64>),
}

impl SnrPrior {
    pub fn uniform(a: f64, b: f64) -> Result<Self> {
        if !(a > 0.0 && b > a && b.is_finite()) {
            return Err(Error::invalid(format!(
                "uniform prior needs b > a > 0, got [{a}, {b}]"
            )));
        }
        Ok(SnrPrior::UniformContinuous { a, b })
    }

    pub fn discrete(grid: Vec<f64>) -> Result<Self> {
        if grid.is_empty() {
            return Err(Error::invalid("discrete SNR grid is empty"));
        }
        if grid.iter().any(|t| !(*t > 0.0) || !t.is_finite()) {
            return Err(Error::invalid(
                "discrete SNR grid must be strictly positive",
            ));
        }
        if grid.windows(2).any(|p| p[1] <= p[0]) {
            return Err(Error::invalid(
                "discrete SNR grid must be strictly increasing",
            ));
        }
        Ok(SnrPrior::Discrete(grid))
    }
}

/// Numerical settings shared by all classifiers.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DecoderSettings {
    pub prior_a: f64,
    pub prior_b: f64,
    pub quadrature_points: usize,
    pub bracket_points: usize,
    /// θ grid of the discrete classifier.
    pub discrete_grid: Vec<f64>,
}

impl Default for DecoderSettings {
    fn default() -> Self {
        DecoderSettings {
            prior_a: 1e-3,
            prior_b: 10.0,
            quadrature_points: 64,
            bracket_points: 32,
            discrete_grid: [-20.0, -16.0, -12.0, -8.0, -4.0, 0.0]
                .iter()
                .map(|db: &f64| 10f64.powf(db / 10.0))
                .collect(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DecodeResult {
    pub classifier: Classifier,
    pub m_star: usize,
    pub theta_star: Option<f64>,
    /// Index into the discrete grid, for the discrete classifier.
    pub theta_index: Option<usize>,
    /// Window offset in samples.
    pub shift: usize,
    /// Per-word log-likelihood ratios against noise only, in nats,
    /// maximized over shifts.
    pub scores: Vec<f64>,
    /// The chosen word's objective does not depend on θ.
    pub flat_objective: bool,
}

/// Index of the largest value; the lowest index wins ties.
pub fn argmax_lowest(scores: &[f64]) -> usize {
    let mut best = 0;
    for (i, &s) in scores.iter().enumerate().skip(1) {
        if s > scores[best] {
            best = i;
        }
    }
    best
}

fn log_sum_exp(xs: &[f64]) -> f64 {
    let m = xs.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    if !m.is_finite() {
        return m;
    }
    m + xs.iter().map(|x| (x - m).exp()).sum::<f64>().ln()
}

fn log_spaced(a: f64, b: f64, n: usize) -> Vec<f64> {
    let (la, lb) = (a.ln(), b.ln());
    let mut v: Vec<f64> = (0..n)
        .map(|i| (la + (lb - la) * i as f64 / (n - 1) as f64).exp())
        .collect();
    v[0] = a;
    v[n - 1] = b;
    v
}

/// One diagonalized block pair.
#[derive(Debug, Clone)]
struct Factor {
    /// `Uᵀ L⁻¹`, column-major.
    proj: DMatrix<f64>,
    lambda: Vec<f64>,
    /// `r ln 2π + ln|Σ_W block|`.
    base: f64,
}

impl Factor {
    fn new(x: &DMatrix<f64>, w: &DMatrix<f64>) -> Result<Self> {
        let r = x.nrows();
        let lw = SpdFactor::new(w)?;
        let l_inv = lw
            .lower()
            .solve_lower_triangular(&DMatrix::identity(r, r))
            .ok_or(Error::NotSpd { pivot: 0 })?;
        let c = &l_inv * x * l_inv.transpose();
        let c = (&c + c.transpose()) * 0.5;
        let eig = c.symmetric_eigen();
        Ok(Factor {
            proj: eig.eigenvectors.transpose() * l_inv,
            lambda: eig.eigenvalues.iter().map(|l| l.max(0.0)).collect(),
            base: r as f64 * LN_2PI + lw.logdet(),
        })
    }

    fn dim(&self) -> usize {
        self.lambda.len()
    }

    fn squared_projection(&self, seg: &[f64]) -> Vec<f64> {
        let r = self.dim();
        let mut u = vec![0.0; r];
        for (j, &yj) in seg.iter().enumerate() {
            let col = &self.proj.as_slice()[j * r..(j + 1) * r];
            for (ui, pij) in u.iter_mut().zip(col) {
                *ui += pij * yj;
            }
        }
        u.iter().map(|x| x * x).collect()
    }
}

#[derive(Debug, Clone)]
struct Term {
    local: usize,
    coef: f64,
    start: usize,
}

/// Factors used by one word, with their multiplicities.
#[derive(Debug, Clone)]
struct WordPlan {
    factors: Vec<usize>,
    counts: Vec<f64>,
    terms: Vec<Term>,
    flat: bool,
}

/// Stimulus-independent parts of `g(θ)` on a fixed θ grid.
#[derive(Debug, Clone)]
struct ThetaTable {
    thetas: Vec<f64>,
    /// `[word][grid]`
    konst: Vec<Vec<f64>>,
    /// `[factor]`, row-major `grid × r` of `1/(1 + θλ_i)`.
    inv: Vec<Vec<f64>>,
}

/// Per-word sufficient statistics `S_f = Σ_t coef_t · u_t²` for one window.
type WindowStats = Vec<Vec<f64>>;

/// The classifiers over a fixed set of word models.
#[derive(Debug, Clone)]
pub struct Decoder {
    layout: FrameLayout,
    mode: DependenceMode,
    settings: DecoderSettings,
    factors: Vec<Factor>,
    words: Vec<WordPlan>,
    quad: ThetaTable,
    quad_log_weights: Vec<f64>,
    disc: ThetaTable,
    bracket: Vec<f64>,
}

impl Decoder {
    pub fn new(
        sigma_x: &[DMatrix<f64>],
        sigma_w: &DMatrix<f64>,
        layout: FrameLayout,
        mode: DependenceMode,
        settings: DecoderSettings,
    ) -> Result<Self> {
        let d = layout.window_len();
        if sigma_x.is_empty() {
            return Err(Error::invalid("no word models"));
        }
        for m in sigma_x.iter().chain(std::iter::once(sigma_w)) {
            if m.nrows() != d || m.ncols() != d {
                return Err(Error::DimensionMismatch {
                    expected: d,
                    got: m.nrows(),
                });
            }
        }
        SnrPrior::uniform(settings.prior_a, settings.prior_b)?;
        SnrPrior::discrete(settings.discrete_grid.clone())?;
        if settings.quadrature_points < 2 {
            return Err(Error::invalid("θ quadrature needs at least 2 grid points"));
        }
        if settings.bracket_points < 2 {
            return Err(Error::invalid("θ bracketing grid needs at least 2 points"));
        }

        let terms = mode.terms(&layout);
        let mut factors = Vec::new();
        let mut words = Vec::with_capacity(sigma_x.len());
        for x in sigma_x {
            let mut local_blocks: Vec<(DMatrix<f64>, DMatrix<f64>)> = Vec::new();
            let mut plan = WordPlan {
                factors: Vec::new(),
                counts: Vec::new(),
                terms: Vec::new(),
                flat: true,
            };
            for t in &terms {
                let xb = block(x, &t.range, &t.range);
                let wb = block(sigma_w, &t.range, &t.range);
                let local = match local_blocks.iter().position(|(a, b)| *a == xb && *b == wb) {
                    Some(i) => i,
                    None => {
                        let f = Factor::new(&xb, &wb)?;
                        plan.flat &= f.lambda.iter().all(|l| *l == 0.0);
                        factors.push(f);
                        plan.factors.push(factors.len() - 1);
                        plan.counts.push(0.0);
                        local_blocks.push((xb, wb));
                        local_blocks.len() - 1
                    }
                };
                plan.counts[local] += t.coef;
                plan.terms.push(Term {
                    local,
                    coef: t.coef,
                    start: t.range.start,
                });
            }
            words.push(plan);
        }

        let quad_thetas = log_spaced(
            settings.prior_a,
            settings.prior_b,
            settings.quadrature_points,
        );
        let n = quad_thetas.len();
        let ln_range = (settings.prior_b - settings.prior_a).ln();
        let quad_log_weights = (0..n)
            .map(|i| {
                let lo = quad_thetas[i.saturating_sub(1)];
                let hi = quad_thetas[(i + 1).min(n - 1)];
                ((hi - lo) / 2.0).ln() - ln_range
            })
            .collect();
        let bracket = log_spaced(settings.prior_a, settings.prior_b, settings.bracket_points);
        let mut dec = Decoder {
            layout,
            mode,
            factors,
            words,
            quad: ThetaTable {
                thetas: Vec::new(),
                konst: Vec::new(),
                inv: Vec::new(),
            },
            quad_log_weights,
            disc: ThetaTable {
                thetas: Vec::new(),
                konst: Vec::new(),
                inv: Vec::new(),
            },
            bracket,
            settings,
        };
        dec.quad = dec.table(quad_thetas);
        dec.disc = dec.table(dec.settings.discrete_grid.clone());
        Ok(dec)
    }

    /// Decoder over the word and noise covariances of a trained model.
    pub fn from_model(
        model: &GaussianWordModel,
        mode: DependenceMode,
        settings: DecoderSettings,
    ) -> Result<Self> {
        let xs: Vec<DMatrix<f64>> = (0..model.word_count()).map(|m| model.word_cov(m)).collect();
        Decoder::new(&xs, &model.noise_cov(), model.layout, mode, settings)
    }

    pub fn layout(&self) -> &FrameLayout {
        &self.layout
    }

    pub fn mode(&self) -> DependenceMode {
        self.mode
    }

    pub fn settings(&self) -> &DecoderSettings {
        &self.settings
    }

    pub fn word_count(&self) -> usize {
        self.words.len()
    }

    fn table(&self, thetas: Vec<f64>) -> ThetaTable {
        let inv = self
            .factors
            .iter()
            .map(|f| {
                thetas
                    .iter()
                    .flat_map(|&t| f.lambda.iter().map(move |l| 1.0 / (1.0 + t * l)))
                    .collect()
            })
            .collect();
        let konst = (0..self.words.len())
            .map(|m| thetas.iter().map(|&t| self.konst(m, t)).collect())
            .collect();
        ThetaTable { thetas, konst, inv }
    }

    /// `−½ Σ_f C_f (base_f + Σ_i ln(1 + θλ_i))`.
    fn konst(&self, m: usize, theta: f64) -> f64 {
        let plan = &self.words[m];
        plan.factors
            .iter()
            .zip(&plan.counts)
            .map(|(&f, &c)| {
                let f = &self.factors[f];
                let ld: f64 = f.lambda.iter().map(|l| (theta * l).ln_1p()).sum();
                -0.5 * c * (f.base + ld)
            })
            .sum()
    }

    fn g(&self, m: usize, stats: &[Vec<f64>], theta: f64) -> f64 {
        let plan = &self.words[m];
        let mut quad = 0.0;
        for (local, &f) in plan.factors.iter().enumerate() {
            for (s, l) in stats[local].iter().zip(&self.factors[f].lambda) {
                quad += s / (1.0 + theta * l);
            }
        }
        self.konst(m, theta) - 0.5 * quad
    }

    fn dg(&self, m: usize, stats: &[Vec<f64>], theta: f64) -> f64 {
        let plan = &self.words[m];
        let mut acc = 0.0;
        for (local, &f) in plan.factors.iter().enumerate() {
            let c = plan.counts[local];
            for (s, l) in stats[local].iter().zip(&self.factors[f].lambda) {
                let q = 1.0 / (1.0 + theta * l);
                acc += s * l * q * q - c * l * q;
            }
        }
        0.5 * acc
    }

    fn g_table(&self, table: &ThetaTable, m: usize, stats: &[Vec<f64>], gi: usize) -> f64 {
        let plan = &self.words[m];
        let mut quad = 0.0;
        for (local, &f) in plan.factors.iter().enumerate() {
            let r = self.factors[f].dim();
            let inv = &table.inv[f][gi * r..(gi + 1) * r];
            quad += stats[local]
                .iter()
                .zip(inv)
                .map(|(s, q)| s * q)
                .sum::<f64>();
        }
        table.konst[m][gi] - 0.5 * quad
    }

    /// `ln f(y | m, θ)` for a single window under the decoder's mode.
    pub fn score_word_at_theta(&self, window: &[f64], m: usize, theta: f64) -> Result<f64> {
        self.check_window(window)?;
        if m >= self.words.len() {
            return Err(Error::invalid(format!("word index {m} out of range")));
        }
        if !(theta >= 0.0) {
            return Err(Error::invalid(format!("θ must be ≥ 0, got {theta}")));
        }
        let mut cache = HashMap::new();
        let stats = self.window_stats(window, 0, &mut cache);
        Ok(self.g(m, &stats[m], theta))
    }

    fn check_window(&self, window: &[f64]) -> Result<()> {
        if window.len() != self.layout.window_len() {
            return Err(Error::DimensionMismatch {
                expected: self.layout.window_len(),
                got: window.len(),
            });
        }
        Ok(())
    }

    fn window_stats(
        &self,
        stimulus: &[f64],
        offset: usize,
        cache: &mut HashMap<(usize, usize), Vec<f64>>,
    ) -> Vec<WindowStats> {
        self.words
            .iter()
            .map(|plan| {
                let mut stats: WindowStats = plan
                    .factors
                    .iter()
                    .map(|&f| vec![0.0; self.factors[f].dim()])
                    .collect();
                for t in &plan.terms {
                    let f = plan.factors[t.local];
                    let start = offset + t.start;
                    let u2 = cache.entry((f, start)).or_insert_with(|| {
                        let fac = &self.factors[f];
                        fac.squared_projection(&stimulus[start..start + fac.dim()])
                    });
                    for (s, u) in stats[t.local].iter_mut().zip(u2.iter()) {
                        *s += t.coef * u;
                    }
                }
                stats
            })
            .collect()
    }

    /// Integrated score `ln ∫_a^b f(y|m,θ) dθ/(b − a)`.
    fn eval_map_m(&self, m: usize, stats: &[Vec<f64>]) -> f64 {
        let terms: Vec<f64> = (0..self.quad.thetas.len())
            .map(|gi| self.g_table(&self.quad, m, stats, gi) + self.quad_log_weights[gi])
            .collect();
        log_sum_exp(&terms)
    }

    /// `(max_θ g, θ*, flat)` over `[a, b]`.
    fn eval_cont(&self, m: usize, stats: &[Vec<f64>]) -> (f64, f64, bool) {
        let (a, b) = (self.settings.prior_a, self.settings.prior_b);
        if self.words[m].flat {
            return (self.g(m, stats, a), a, true);
        }
        let tol = 1e-6 * (b - a);
        let mut candidates = vec![a, b];
        let ds: Vec<f64> = self.bracket.iter().map(|&t| self.dg(m, stats, t)).collect();
        for i in 0..self.bracket.len() - 1 {
            let (mut lo, mut hi) = (self.bracket[i], self.bracket[i + 1]);
            let (dlo, dhi) = (ds[i], ds[i + 1]);
            if dlo == 0.0 {
                candidates.push(lo);
                continue;
            }
            if dlo.signum() == dhi.signum() || dhi == 0.0 {
                continue;
            }
            while hi - lo > tol {
                let mid = 0.5 * (lo + hi);
                let dm = self.dg(m, stats, mid);
                if dm == 0.0 {
                    lo = mid;
                    hi = mid;
                } else if dm.signum() == dlo.signum() {
                    lo = mid;
                } else {
                    hi = mid;
                }
            }
            candidates.push(0.5 * (lo + hi));
        }
        let mut best = (f64::NEG_INFINITY, a);
        for &t in &candidates {
            let v = self.g(m, stats, t);
            if v > best.0 || (v == best.0 && t < best.1) {
                best = (v, t);
            }
        }
        (best.0, best.1, false)
    }

    /// `g(θ_i)` over the discrete grid.
    fn eval_disc(&self, m: usize, stats: &[Vec<f64>]) -> Vec<f64> {
        (0..self.disc.thetas.len())
            .map(|gi| self.g_table(&self.disc, m, stats, gi))
            .collect()
    }

    /// Decodes a single `k·v` window.
    pub fn decode(&self, window: &[f64], classifier: Classifier) -> Result<DecodeResult> {
        self.check_window(window)?;
        let stride = self.layout.frame_len();
        Ok(self
            .decode_with_shift_all(window, &[classifier], stride)?
            .pop()
            .expect("one classifier"))
    }

    pub fn decode_with_shift(
        &self,
        stimulus: &[f64],
        classifier: Classifier,
        stride: usize,
    ) -> Result<DecodeResult> {
        Ok(self
            .decode_with_shift_all(stimulus, &[classifier], stride)?
            .pop()
            .expect("one classifier"))
    }

    /// Runs several classifiers over the same windows, sharing projections.
    ///
    /// Windows start at `0, stride, 2·stride, …`. Under hypothesis `(m, w)`
    /// the word occupies window `w` and the rest of the stimulus is noise, so
    /// up to a stimulus constant the joint log posterior is the classifier's
    /// window statistic (`ln ∫ f(y^w|m,θ)dθ/(b−a)`, `max_θ ln f(y^w|m,θ)` or
    /// `max_i ln f(y^w|m,θ_i)`) minus the noise-only `ln f(y^w|θ = 0)`.
    /// A word's score is that value maximized over windows; `m*` is the best
    /// word and `shift` the earliest window where `m*` attains its score.
    pub fn decode_with_shift_all(
        &self,
        stimulus: &[f64],
        classifiers: &[Classifier],
        stride: usize,
    ) -> Result<Vec<DecodeResult>> {
        let d = self.layout.window_len();
        if stimulus.len() < d {
            return Err(Error::WaveformTooShort {
                len: stimulus.len(),
                needed: d,
            });
        }
        if stride == 0 {
            return Err(Error::invalid("shift stride must be positive"));
        }
        if stimulus.iter().any(|x| !x.is_finite()) {
            return Err(Error::invalid("stimulus contains non-finite samples"));
        }
        let g = self.words.len();

        #[derive(Clone)]
        struct Best {
            score: f64,
            shift: usize,
            theta: Option<f64>,
            index: Option<usize>,
            flat: bool,
        }
        let empty = Best {
            score: f64::NEG_INFINITY,
            shift: 0,
            theta: None,
            index: None,
            flat: false,
        };
        let mut best = vec![vec![empty; g]; classifiers.len()];
        let mut cache = HashMap::new();
        for offset in (0..=stimulus.len() - d).step_by(stride) {
            let stats = self.window_stats(stimulus, offset, &mut cache);
            // the rest of the stimulus is noise under every (m, w) hypothesis,
            // so windows compare through their likelihood ratio to noise
            let noise = self.g(0, &stats[0], 0.0);
            for (ci, c) in classifiers.iter().enumerate() {
                let cands: Vec<Best> = match c {
                    Classifier::MapM => (0..g)
                        .map(|m| Best {
                            score: self.eval_map_m(m, &stats[m]) - noise,
                            shift: offset,
                            theta: None,
                            index: None,
                            flat: false,
                        })
                        .collect(),
                    Classifier::MapMThetaCont => (0..g)
                        .map(|m| {
                            let (s, t, flat) = self.eval_cont(m, &stats[m]);
                            Best {
                                score: s - noise,
                                shift: offset,
                                theta: Some(t),
                                index: None,
                                flat,
                            }
                        })
                        .collect(),
                    Classifier::MapMThetaDisc => (0..g)
                        .map(|m| {
                            let row = self.eval_disc(m, &stats[m]);
                            let i = argmax_lowest(&row);
                            Best {
                                score: row[i] - noise,
                                shift: offset,
                                theta: Some(self.disc.thetas[i]),
                                index: Some(i),
                                flat: false,
                            }
                        })
                        .collect(),
                };
                for (m, cand) in cands.into_iter().enumerate() {
                    if cand.score > best[ci][m].score {
                        best[ci][m] = cand;
                    }
                }
            }
        }

        let mut out = Vec::with_capacity(classifiers.len());
        for (ci, c) in classifiers.iter().enumerate() {
            let scores: Vec<f64> = best[ci].iter().map(|b| b.score).collect();
            if scores.iter().all(|s| !s.is_finite()) {
                return Err(Error::invalid("no finite score over the θ range"));
            }
            let m_star = argmax_lowest(&scores);
            let b = &best[ci][m_star];
            out.push(DecodeResult {
                classifier: *c,
                m_star,
                theta_star: b.theta,
                theta_index: b.index,
                shift: b.shift,
                scores,
                flat_objective: b.flat,
            });
        }
        Ok(out)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::gaussian::testutil::random_spd;
    use crate::gaussian::{chain_loglik, NoisyWordCov};
    use approx::assert_relative_eq;
    use proptest::prelude::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;
    use rand_distr::StandardNormal;

    fn settings_with_grid(grid: Vec<f64>) -> DecoderSettings {
        DecoderSettings {
            discrete_grid: grid,
            ..DecoderSettings::default()
        }
    }

    fn draw(rng: &mut ChaCha8Rng, cov: &DMatrix<f64>) -> Vec<f64> {
        let f = SpdFactor::new(cov).unwrap();
        let z: Vec<f64> = (0..cov.nrows())
            .map(|_| rng.sample(StandardNormal))
            .collect();
        f.color(&z)
    }

    #[test]
    fn identity_models_at_origin() {
        let layout = FrameLayout::new(2, 3).unwrap();
        let i = DMatrix::identity(6, 6);
        let dec = Decoder::new(
            std::slice::from_ref(&i),
            &i,
            layout,
            DependenceMode::FullHistory,
            DecoderSettings::default(),
        )
        .unwrap();
        let s = dec.score_word_at_theta(&[0.0; 6], 0, 1.0).unwrap();
        assert_relative_eq!(
            s,
            -3.0 * (4.0 * std::f64::consts::PI).ln(),
            max_relative = 1e-12
        );
    }

    #[test]
    fn pencil_score_matches_chain_loglik_in_every_mode() {
        let mut rng = ChaCha8Rng::seed_from_u64(21);
        let layout = FrameLayout::new(3, 4).unwrap();
        let x = random_spd(&mut rng, 12, 0.1);
        let w = random_spd(&mut rng, 12, 0.5);
        let y: Vec<f64> = (0..12).map(|_| rng.sample(StandardNormal)).collect();
        for mode in [
            DependenceMode::IndependentFrames,
            DependenceMode::Markov1,
            DependenceMode::FullHistory,
        ] {
            let dec = Decoder::new(
                std::slice::from_ref(&x),
                &w,
                layout,
                mode,
                DecoderSettings::default(),
            )
            .unwrap();
            for theta in [0.01, 0.7, 5.0] {
                let cov = NoisyWordCov::new(&x, &w, theta, layout).unwrap();
                let direct = chain_loglik(&y, &cov, mode).unwrap();
                let s = dec.score_word_at_theta(&y, 0, theta).unwrap();
                assert_relative_eq!(s, direct, max_relative = 1e-8);
            }
        }
    }

    #[test]
    fn derivative_matches_finite_difference() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let layout = FrameLayout::new(2, 3).unwrap();
        let x = random_spd(&mut rng, 6, 0.1);
        let w = random_spd(&mut rng, 6, 0.5);
        let dec = Decoder::new(
            &[x],
            &w,
            layout,
            DependenceMode::Markov1,
            DecoderSettings::default(),
        )
        .unwrap();
        let y: Vec<f64> = (0..6).map(|_| rng.sample(StandardNormal)).collect();
        let stats = dec.window_stats(&y, 0, &mut HashMap::new());
        for t in [0.05, 0.5, 3.0] {
            let h = 1e-6 * t;
            let fd = (dec.g(0, &stats[0], t + h) - dec.g(0, &stats[0], t - h)) / (2.0 * h);
            assert_relative_eq!(
                dec.dg(0, &stats[0], t),
                fd,
                max_relative = 1e-5,
                epsilon = 1e-8
            );
        }
    }

    #[test]
    fn scores_collapse_as_theta_vanishes() {
        let mut rng = ChaCha8Rng::seed_from_u64(8);
        let layout = FrameLayout::new(2, 2).unwrap();
        let xs: Vec<DMatrix<f64>> = (0..3).map(|_| random_spd(&mut rng, 4, 0.1)).collect();
        let w = random_spd(&mut rng, 4, 0.5);
        let dec = Decoder::new(
            &xs,
            &w,
            layout,
            DependenceMode::Markov1,
            DecoderSettings::default(),
        )
        .unwrap();
        let y = [0.3, -0.2, 1.0, 0.1];
        let s: Vec<f64> = (0..3)
            .map(|m| dec.score_word_at_theta(&y, m, 1e-12).unwrap())
            .collect();
        assert_relative_eq!(s[0], s[1], max_relative = 1e-9);
        assert_relative_eq!(s[1], s[2], max_relative = 1e-9);
    }

    #[test]
    fn identical_models_pick_the_first_word() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let layout = FrameLayout::new(2, 2).unwrap();
        let x = random_spd(&mut rng, 4, 0.1);
        let w = random_spd(&mut rng, 4, 0.5);
        let dec = Decoder::new(
            &[x.clone(), x.clone(), x],
            &w,
            layout,
            DependenceMode::Markov1,
            DecoderSettings::default(),
        )
        .unwrap();
        let y = [0.1, 0.4, -0.3, 0.2];
        for c in Classifier::ALL {
            let r = dec.decode(&y, c).unwrap();
            assert_eq!(r.m_star, 0);
            if c == Classifier::MapMThetaDisc {
                let s = &dec.settings().discrete_grid;
                let g: Vec<f64> = s
                    .iter()
                    .map(|&t| dec.score_word_at_theta(&y, 0, t).unwrap())
                    .collect();
                assert_eq!(r.theta_index, Some(argmax_lowest(&g)));
            }
        }
    }

    #[test]
    fn flat_objective_for_silent_word() {
        let layout = FrameLayout::new(2, 2).unwrap();
        let zero = DMatrix::zeros(4, 4);
        let w = DMatrix::identity(4, 4);
        let dec = Decoder::new(
            &[zero],
            &w,
            layout,
            DependenceMode::Markov1,
            DecoderSettings::default(),
        )
        .unwrap();
        let r = dec
            .decode(&[0.5, 0.1, -0.2, 0.3], Classifier::MapMThetaCont)
            .unwrap();
        assert!(r.flat_objective);
        assert_eq!(r.theta_star, Some(1e-3));
    }

    #[test]
    fn increasing_objective_chooses_the_upper_endpoint() {
        // a huge observation relative to the noise makes g increase over all of [a, b]
        let layout = FrameLayout::new(2, 1).unwrap();
        let x = DMatrix::identity(2, 2);
        let w = DMatrix::identity(2, 2);
        let dec = Decoder::new(
            &[x],
            &w,
            layout,
            DependenceMode::FullHistory,
            DecoderSettings::default(),
        )
        .unwrap();
        let r = dec
            .decode(&[30.0, -30.0], Classifier::MapMThetaCont)
            .unwrap();
        assert_eq!(r.theta_star, Some(10.0));
    }

    #[test]
    fn interior_maximum_is_refined() {
        // scalar: g'(θ) = ½[y²/(1+θ)² − 1/(1+θ)], zero at θ = y² − 1
        let layout = FrameLayout::new(2, 1).unwrap();
        let x = DMatrix::identity(2, 2);
        let w = DMatrix::identity(2, 2);
        let dec = Decoder::new(
            &[x],
            &w,
            layout,
            DependenceMode::FullHistory,
            DecoderSettings::default(),
        )
        .unwrap();
        let y = [2.0f64.sqrt(), 2.0f64.sqrt()];
        let r = dec.decode(&y, Classifier::MapMThetaCont).unwrap();
        assert!((r.theta_star.unwrap() - 1.0).abs() <= 1e-5);
    }

    #[test]
    fn singleton_grid_matches_score_argmax() {
        let mut rng = ChaCha8Rng::seed_from_u64(31);
        let layout = FrameLayout::new(2, 3).unwrap();
        let xs: Vec<DMatrix<f64>> = (0..4).map(|_| random_spd(&mut rng, 6, 0.1)).collect();
        let w = random_spd(&mut rng, 6, 0.5);
        let dec = Decoder::new(
            &xs,
            &w,
            layout,
            DependenceMode::Markov1,
            settings_with_grid(vec![0.4]),
        )
        .unwrap();
        for _ in 0..20 {
            let y: Vec<f64> = (0..6).map(|_| rng.sample(StandardNormal)).collect();
            let s: Vec<f64> = (0..4)
                .map(|m| dec.score_word_at_theta(&y, m, 0.4).unwrap())
                .collect();
            let r = dec.decode(&y, Classifier::MapMThetaDisc).unwrap();
            assert_eq!(r.m_star, argmax_lowest(&s));
            assert_eq!(r.theta_index, Some(0));
        }
    }

    #[test]
    fn zero_shift_reduces_to_the_window_classifier() {
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        let layout = FrameLayout::new(2, 3).unwrap();
        let xs: Vec<DMatrix<f64>> = (0..3).map(|_| random_spd(&mut rng, 6, 0.1)).collect();
        let w = random_spd(&mut rng, 6, 0.5);
        let dec = Decoder::new(
            &xs,
            &w,
            layout,
            DependenceMode::Markov1,
            DecoderSettings::default(),
        )
        .unwrap();
        let y: Vec<f64> = (0..6).map(|_| rng.sample(StandardNormal)).collect();
        for c in Classifier::ALL {
            let a = dec.decode(&y, c).unwrap();
            let b = dec.decode_with_shift(&y, c, 2).unwrap();
            assert_eq!(a, b);
            assert_eq!(b.shift, 0);
        }
        assert!(dec.decode_with_shift(&y[..5], Classifier::MapM, 2).is_err());
    }

    fn ar1_cov(a: f64, d: usize) -> DMatrix<f64> {
        DMatrix::from_fn(d, d, |i, j| a.powi(i.abs_diff(j) as i32) / (1.0 - a * a))
    }

    /// Five AR(2) resonators spread over frequency.
    fn resonator_words(d: usize) -> Vec<DMatrix<f64>> {
        (0..5)
            .map(|m| {
                let omega = std::f64::consts::PI * (m as f64 + 0.5) / 5.0;
                let ar =
                    crate::corpus::lp::ArModel::new(vec![1.8 * omega.cos(), -0.81], 1.0).unwrap();
                let acov = ar.autocovariance(d - 1).unwrap();
                let r0 = acov[0];
                let acov: Vec<f64> = acov.iter().map(|r| r / r0).collect();
                crate::corpus::lp::toeplitz(&acov, d)
            })
            .collect()
    }

    #[test]
    fn map_m_recovers_the_generating_word() {
        let mut rng = ChaCha8Rng::seed_from_u64(12);
        let layout = FrameLayout::new(16, 16).unwrap();
        let d = 256;
        let xs = resonator_words(d);
        let w = DMatrix::identity(d, d);
        let dec = Decoder::new(
            &xs,
            &w,
            layout,
            DependenceMode::Markov1,
            DecoderSettings::default(),
        )
        .unwrap();
        let cov = &xs[3] * 0.5 + &w;
        let mut correct = 0;
        for _ in 0..200 {
            let y = draw(&mut rng, &cov);
            if dec.decode(&y, Classifier::MapM).unwrap().m_star == 3 {
                correct += 1;
            }
        }
        assert!(correct >= 190, "{correct}/200");
    }

    #[test]
    fn continuous_theta_estimate_is_consistent() {
        let mut rng = ChaCha8Rng::seed_from_u64(13);
        let d = 512;
        let layout = FrameLayout::new(32, 16).unwrap();
        let x = ar1_cov(0.8, d);
        let w = DMatrix::identity(d, d);
        let dec = Decoder::new(
            std::slice::from_ref(&x),
            &w,
            layout,
            DependenceMode::Markov1,
            DecoderSettings::default(),
        )
        .unwrap();
        let cov = &x * 0.3 + &w;
        let mut inside = 0;
        for _ in 0..50 {
            let y = draw(&mut rng, &cov);
            let t = dec
                .decode(&y, Classifier::MapMThetaCont)
                .unwrap()
                .theta_star
                .unwrap();
            if (0.2..=0.4).contains(&t) {
                inside += 1;
            }
        }
        assert!(inside >= 45, "{inside}/50");
    }

    #[test]
    fn discrete_classifier_recovers_the_snr_index() {
        let mut rng = ChaCha8Rng::seed_from_u64(14);
        let d = 512;
        let layout = FrameLayout::new(32, 16).unwrap();
        let xs: Vec<DMatrix<f64>> = [0.8, -0.5].iter().map(|&a| ar1_cov(a, d)).collect();
        let w = DMatrix::identity(d, d);
        let dec = Decoder::new(
            &xs,
            &w,
            layout,
            DependenceMode::Markov1,
            DecoderSettings::default(),
        )
        .unwrap();
        let truth = 2;
        let theta = dec.settings().discrete_grid[truth];
        let cov = &xs[0] * theta + &w;
        let mut hits = 0;
        for _ in 0..30 {
            let y = draw(&mut rng, &cov);
            if dec
                .decode(&y, Classifier::MapMThetaDisc)
                .unwrap()
                .theta_index
                == Some(truth)
            {
                hits += 1;
            }
        }
        assert!(hits > 15, "{hits}/30");
    }

    #[test]
    fn shift_search_finds_the_embedded_word() {
        let mut rng = ChaCha8Rng::seed_from_u64(15);
        let k = 8;
        let layout = FrameLayout::new(k, 8).unwrap();
        let d = 64;
        let xs = resonator_words(d);
        let w = DMatrix::identity(d, d);
        let dec = Decoder::new(
            &xs,
            &w,
            layout,
            DependenceMode::Markov1,
            DecoderSettings::default(),
        )
        .unwrap();
        let mut hits = [0; 3];
        for _ in 0..20 {
            let x = draw(&mut rng, &xs[1]);
            let mut stim: Vec<f64> = (0..2 * d).map(|_| rng.sample(StandardNormal)).collect();
            for (i, xi) in x.iter().enumerate() {
                stim[3 * k + i] += 2.0 * xi;
            }
            for (c, h) in Classifier::ALL.iter().zip(hits.iter_mut()) {
                let r = dec.decode_with_shift(&stim, *c, k).unwrap();
                if r.shift == 3 * k && r.m_star == 1 {
                    *h += 1;
                }
            }
        }
        assert!(hits.iter().all(|&h| h > 10), "{hits:?}/20");
    }

    #[test]
    fn invalid_settings_are_rejected() {
        let layout = FrameLayout::new(2, 1).unwrap();
        let i = DMatrix::identity(2, 2);
        let s = DecoderSettings {
            quadrature_points: 1,
            ..Default::default()
        };
        assert!(Decoder::new(
            std::slice::from_ref(&i),
            &i,
            layout,
            DependenceMode::Markov1,
            s
        )
        .is_err());
        assert!(SnrPrior::uniform(1.0, 0.5).is_err());
        assert!(SnrPrior::discrete(vec![0.2, 0.1]).is_err());
        assert!(SnrPrior::discrete(vec![]).is_err());
    }

    proptest! {
        #[test]
        fn argmax_is_shift_invariant(v in proptest::collection::vec(-50.0f64..50.0, 1..12), c in -1e3f64..1e3) {
            let shifted: Vec<f64> = v.iter().map(|x| x + c).collect();
            let a = argmax_lowest(&v);
            let b = argmax_lowest(&shifted);
            // adding a constant can only change the winner through rounding ties
            prop_assert!(a == b || (v[a] - v[b]).abs() < 1e-9 * c.abs().max(1.0));
        }
    }
}
