use std::collections::BTreeMap;
use std::path::Path;

use serde::{Deserialize, Serialize};
use statrs::distribution::{Beta, Binomial, ContinuousCDF, DiscreteCDF};

use super::config::Config;
use super::eval::{leave_one_out_eval, EvalSpec};
use crate::corpus::{theta_from_db, GaussianWordModel, NormalizedCorpus, WordCorpus};
use crate::error::{Error, Result};
use crate::gaussian::DependenceMode;
use crate::infobounds::{
    mi_from_confusion, mi_from_pc, mutual_info_bounds, nats_to_bits, relative_loss_bounds,
    BetaChoice, InfoBounds, LossBounds, LossSource, Priors,
};
use crate::listening::SessionResults;

/// Recognizer label used for listening-test rows.
pub const HUMAN: &str = "human";

pub const CSV_HEADER: [&str; 13] = [
    "snr_db",
    "classifier",
    "mode",
    "p_c",
    "n_trials",
    "i_lower_bits",
    "i_upper_bits",
    "i_mm_uniform_bits",
    "i_mm_empirical_bits",
    "l_lower",
    "l_upper",
    "clamped_low",
    "clamped_high",
];

/// One (SNR, recognizer, dependence mode) condition. Information values are in nats.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepRow {
    pub snr_db: f64,
    /// Classifier name, or `human`.
    pub classifier: String,
    pub mode: DependenceMode,
    pub p_c: f64,
    pub n_trials: u64,
    pub confusion: Vec<Vec<u64>>,
    pub bounds: InfoBounds,
    /// One-sided lower confidence limit of P_c at the chance-test level.
    pub p_c_lower: f64,
    /// P_c is significantly above `1/Γ`.
    pub above_chance: bool,
    /// Uniform-confusion `I(M;M*)` at `p_c_lower`, zero when not above chance.
    pub i_mm_uniform: f64,
    /// Plug-in `I(M;M*)` of the confusion matrix.
    pub i_mm_empirical: f64,
    /// Loss bounds from `i_mm_uniform`.
    pub loss: LossBounds,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepReport {
    pub rows: Vec<SweepRow>,
    pub corpus_fingerprint: String,
    pub config: Config,
}

/// One-sided binomial test of `correct` out of `n` against chance `1/Γ`.
pub fn above_chance(correct: u64, n: u64, gamma: usize, alpha: f64) -> bool {
    if n == 0 || correct == 0 {
        return false;
    }
    let b = Binomial::new(1.0 / gamma as f64, n).expect("valid binomial");
    // P(X ≥ correct)
    b.sf(correct - 1) < alpha
}

/// Clopper-Pearson one-sided lower confidence limit of a binomial rate.
/// It exceeds `1/Γ` exactly when [`above_chance`] holds.
pub fn pc_lower_limit(correct: u64, n: u64, alpha: f64) -> f64 {
    if n == 0 || correct == 0 {
        return 0.0;
    }
    if correct == n {
        return alpha.powf(1.0 / n as f64);
    }
    let b = Beta::new(correct as f64, (n - correct + 1) as f64).expect("valid beta");
    b.inverse_cdf(alpha)
}

/// Expected upward bias of the plug-in MI of `n` independent draws over a
/// `Γ×Γ` table plus three of its standard deviations, in nats.
pub fn plugin_mi_allowance(gamma: usize, n: u64) -> f64 {
    let dof = ((gamma - 1) * (gamma - 1)) as f64;
    let n = n.max(1) as f64;
    (dof + 3.0 * (2.0 * dof).sqrt()) / (2.0 * n)
}

fn row(
    snr_db: f64,
    classifier: String,
    mode: DependenceMode,
    confusion: Vec<Vec<u64>>,
    bounds: InfoBounds,
    alpha: f64,
) -> Result<SweepRow> {
    let gamma = confusion.len();
    let n: u64 = confusion.iter().flatten().sum();
    let correct: u64 = (0..gamma).map(|i| confusion[i][i]).sum();
    if n == 0 {
        return Err(Error::invalid(format!("no trials at {snr_db} dB")));
    }
    let p_c = correct as f64 / n as f64;
    let above = above_chance(correct, n, gamma, alpha);
    let p_c_lower = pc_lower_limit(correct, n, alpha);
    let i_mm_uniform = if above && p_c_lower > 1.0 / gamma as f64 {
        mi_from_pc(p_c_lower, gamma)?
    } else {
        0.0
    };
    let i_mm_empirical = mi_from_confusion(&confusion)?;
    Ok(SweepRow {
        snr_db,
        classifier,
        mode,
        p_c,
        n_trials: n,
        confusion,
        bounds,
        p_c_lower,
        above_chance: above,
        i_mm_uniform,
        i_mm_empirical,
        loss: relative_loss_bounds(&bounds, i_mm_uniform, LossSource::UniformConfusion),
    })
}

/// `I(M;Y)` bounds of a trained model at each SNR, uniform word priors.
pub fn bounds_at(
    model: &GaussianWordModel,
    snr_db: &[f64],
    mode: DependenceMode,
    beta: &BetaChoice,
) -> Result<Vec<InfoBounds>> {
    let priors = Priors::uniform(model.word_count());
    snr_db
        .iter()
        .map(|&s| mutual_info_bounds(&model.noisy_all(theta_from_db(s))?, &priors, beta, mode))
        .collect()
}

/// The full-corpus model the information bounds are computed from.
pub fn bounds_model(corpus: &WordCorpus, config: &Config) -> Result<GaussianWordModel> {
    let mc = config.model_config(config.model.modes[0])?;
    NormalizedCorpus::new(corpus, &mc)?.train(&mc, None)
}

/// Leave-one-out sweep for every configured classifier and dependence mode,
/// with information bounds per SNR and loss bounds per row.
pub fn build_report(corpus: &WordCorpus, config: &Config) -> Result<SweepReport> {
    config.validate()?;
    let sw = &config.sweep;
    if sw.snr_db.is_empty() {
        return Err(Error::invalid("SNR list is empty"));
    }
    let settings = config.decoder_settings()?;
    let beta = config.beta()?;
    let model = bounds_model(corpus, config)?;
    let mut rows = Vec::new();
    for &mode in &config.model.modes {
        let spec = EvalSpec {
            snr_db: sw.snr_db.clone(),
            classifiers: sw.classifiers.clone(),
            mode,
            trials_per_fold: sw.trials_per_fold,
            seed: sw.seed,
            stride: sw.stride,
            folds: sw.folds,
        };
        let counts = leave_one_out_eval(corpus, &config.model_config(mode)?, &settings, &spec)?;
        let bounds = bounds_at(&model, &sw.snr_db, mode, &beta)?;
        for c in counts {
            let si = sw
                .snr_db
                .iter()
                .position(|&s| s == c.snr_db)
                .expect("swept SNR");
            rows.push(row(
                c.snr_db,
                c.classifier.to_string(),
                mode,
                c.confusion,
                bounds[si],
                sw.chance_alpha,
            )?);
        }
    }
    Ok(SweepReport {
        rows,
        corpus_fingerprint: corpus.fingerprint(),
        config: config.clone(),
    })
}

/// Rows for listening-test results, one per SNR and configured mode, using
/// the same bounds model as the machine rows.
pub fn human_rows(
    results: &SessionResults,
    model: &GaussianWordModel,
    config: &Config,
) -> Result<Vec<SweepRow>> {
    if results.gamma != model.word_count() {
        return Err(Error::invalid(format!(
            "human results cover {} words, the model has {}",
            results.gamma,
            model.word_count()
        )));
    }
    let beta = config.beta()?;
    let snrs: Vec<f64> = results.points.iter().map(|p| p.snr_db).collect();
    let mut rows = Vec::new();
    for &mode in &config.model.modes {
        let bounds = bounds_at(model, &snrs, mode, &beta)?;
        for (p, b) in results.points.iter().zip(bounds) {
            rows.push(row(
                p.snr_db,
                HUMAN.into(),
                mode,
                p.confusion.clone(),
                b,
                config.sweep.chance_alpha,
            )?);
        }
    }
    Ok(rows)
}

fn fmt_f(x: f64) -> String {
    // shortest round-trip form; deterministic across runs
    format!("{x}")
}

impl SweepReport {
    pub fn merge_human(&mut self, corpus: &WordCorpus, results: &SessionResults) -> Result<()> {
        let model = bounds_model(corpus, &self.config)?;
        let rows = human_rows(results, &model, &self.config)?;
        self.rows.extend(rows);
        Ok(())
    }

    pub fn to_csv(&self) -> Result<String> {
        let mut w = csv::Writer::from_writer(Vec::new());
        let csv_err = |e: csv::Error| Error::Parse(e.to_string());
        w.write_record(CSV_HEADER).map_err(csv_err)?;
        for r in &self.rows {
            w.write_record([
                fmt_f(r.snr_db),
                r.classifier.clone(),
                r.mode.to_string(),
                fmt_f(r.p_c),
                r.n_trials.to_string(),
                fmt_f(nats_to_bits(r.bounds.i_lower)),
                fmt_f(nats_to_bits(r.bounds.i_upper)),
                fmt_f(nats_to_bits(r.i_mm_uniform)),
                fmt_f(nats_to_bits(r.i_mm_empirical)),
                fmt_f(r.loss.l_lower),
                fmt_f(r.loss.l_upper),
                r.bounds.clamped_low.to_string(),
                r.bounds.clamped_high.to_string(),
            ])
            .map_err(csv_err)?;
        }
        let bytes = w.into_inner().map_err(|e| Error::Parse(e.to_string()))?;
        Ok(String::from_utf8(bytes).expect("csv is utf-8"))
    }

    pub fn write_csv(&self, path: &Path) -> Result<()> {
        std::fs::write(path, self.to_csv()?).map_err(|e| Error::io(path, e))
    }

    /// Rows grouped by (recognizer, mode), each group sorted by SNR.
    pub fn curves(&self) -> BTreeMap<(String, DependenceMode), Vec<&SweepRow>> {
        let mut out: BTreeMap<(String, DependenceMode), Vec<&SweepRow>> = BTreeMap::new();
        for r in &self.rows {
            out.entry((r.classifier.clone(), r.mode))
                .or_default()
                .push(r);
        }
        for v in out.values_mut() {
            v.sort_by(|a, b| a.snr_db.total_cmp(&b.snr_db));
        }
        out
    }

    /// Rows whose plug-in `I(M;M*)` exceeds the `I(M;Y)` upper bound by more
    /// than the plug-in estimator's bias allowance.
    pub fn dpi_violations(&self) -> Vec<&SweepRow> {
        self.rows
            .iter()
            .filter(|r| {
                r.i_mm_empirical
                    > r.bounds.i_upper + plugin_mi_allowance(r.confusion.len(), r.n_trials) + 1e-12
            })
            .collect()
    }

    /// Pairs of rows within a curve, sorted by P_c, where `l_upper` rises
    /// by more than `tol` as P_c increases.
    pub fn loss_monotonicity_violations(&self, tol: f64) -> Vec<(&SweepRow, &SweepRow)> {
        let mut out = Vec::new();
        for rows in self.curves().into_values() {
            let mut sorted = rows.clone();
            sorted.sort_by(|a, b| a.p_c.total_cmp(&b.p_c));
            for i in 0..sorted.len() {
                for j in i + 1..sorted.len() {
                    if sorted[j].p_c > sorted[i].p_c
                        && sorted[j].loss.l_upper > sorted[i].loss.l_upper + tol
                    {
                        out.push((sorted[i], sorted[j]));
                    }
                }
            }
        }
        out
    }

    /// Largest P_c difference between any two classifiers at one SNR and mode.
    pub fn max_classifier_spread(&self) -> f64 {
        let mut by: BTreeMap<(u64, DependenceMode), Vec<f64>> = BTreeMap::new();
        for r in self.rows.iter().filter(|r| r.classifier != HUMAN) {
            by.entry((r.snr_db.to_bits(), r.mode))
                .or_default()
                .push(r.p_c);
        }
        by.values()
            .map(|v| {
                let hi = v.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
                let lo = v.iter().cloned().fold(f64::INFINITY, f64::min);
                hi - lo
            })
            .fold(0.0, f64::max)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn small_config() -> Config {
        let mut c = Config::default();
        c.corpus.words = 4;
        c.corpus.realizations = 3;
        c.sweep.snr_db = vec![-30.0, 0.0, 20.0];
        c.sweep.trials_per_fold = 4;
        c
    }

    #[test]
    fn chance_test() {
        assert!(!above_chance(10, 100, 10, 0.05));
        assert!(!above_chance(14, 100, 10, 0.05));
        assert!(above_chance(20, 100, 10, 0.05));
        // the test and the confidence limit agree at the boundary
        for k in 0..60 {
            assert_eq!(
                above_chance(k, 200, 10, 0.05),
                pc_lower_limit(k, 200, 0.05) > 0.1,
                "k={k}"
            );
        }
        assert!(!above_chance(0, 100, 10, 0.05));
    }

    #[test]
    fn report_shape_and_determinism() {
        let cfg = small_config();
        let corpus = cfg.load_corpus().unwrap();
        let a = build_report(&corpus, &cfg).unwrap();
        assert_eq!(a.rows.len(), 3 * 3 * 2);
        let csv = a.to_csv().unwrap();
        assert_eq!(csv.lines().next().unwrap(), CSV_HEADER.join(","));
        assert_eq!(csv.lines().count(), 19);
        assert_eq!(build_report(&corpus, &cfg).unwrap().to_csv().unwrap(), csv);
        for r in &a.rows {
            assert!(
                0.0 <= r.loss.l_lower && r.loss.l_lower <= r.loss.l_upper && r.loss.l_upper <= 1.0
            );
            let correct: u64 = (0..4).map(|i| r.confusion[i][i]).sum();
            assert_eq!(r.p_c, correct as f64 / r.n_trials as f64);
        }
    }

    #[test]
    fn empty_snr_list_is_an_error() {
        let mut cfg = small_config();
        cfg.sweep.snr_db.clear();
        let corpus = cfg.load_corpus().unwrap();
        assert!(build_report(&corpus, &cfg).is_err());
    }

    #[test]
    fn human_rows_use_the_same_bounds() {
        let cfg = small_config();
        let corpus = cfg.load_corpus().unwrap();
        let model = bounds_model(&corpus, &cfg).unwrap();
        let mut confusion = vec![vec![0; 4]; 4];
        for (i, row) in confusion.iter_mut().enumerate() {
            row[i] = 5;
        }
        let results = SessionResults {
            gamma: 4,
            labels: corpus.labels().to_vec(),
            points: vec![crate::listening::SnrResult {
                snr_db: 0.0,
                n_trials: 20,
                n_correct: 20,
                p_c: 1.0,
                confusion,
            }],
        };
        let rows = human_rows(&results, &model, &cfg).unwrap();
        assert_eq!(rows.len(), 2);
        assert_eq!(rows[0].classifier, HUMAN);
        let lo = 0.05f64.powf(1.0 / 20.0);
        assert!((rows[0].p_c_lower - lo).abs() < 1e-15);
        let expected = 4f64.ln() + lo * lo.ln() + (1.0 - lo) * ((1.0 - lo) / 3.0).ln();
        assert!((rows[0].i_mm_uniform - expected).abs() < 1e-12);
        let b = bounds_at(&model, &[0.0], rows[0].mode, &cfg.beta().unwrap()).unwrap();
        assert_eq!(rows[0].bounds, b[0]);
    }
}
