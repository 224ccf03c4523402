//! Bounds on the mutual information between the spoken word and the noisy
//! waveform, the information carried by a decision, and relative loss.
//!
//! The entropy bounds use pairwise divergences between mixture components:
//! Chernoff-β for the lower bound and KL for the upper bound,
//! `h(Y|M) − Σ_m P(m) ln Σ_m' P(m') e^{−D(m,m')}`.

use nalgebra::DMatrix;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::gaussian::{
    chernoff_mode_density, kl_mode_density_with_cov, DependenceMode, ModeDensity, NoisyWordCov,
    SpdFactor,
};

/// Flags on a clamp fire when the bound reaches its cap to this tolerance.
const CLAMP_TOL: f64 = 1e-12;

pub fn nats_to_bits(x: f64) -> f64 {
    x / std::f64::consts::LN_2
}

/// Word prior `P(m)`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Priors(Vec<f64>);

impl Priors {
    pub fn new(p: Vec<f64>) -> Result<Self> {
        if p.is_empty() {
            return Err(Error::InvalidPriors("no words".into()));
        }
        if p.iter().any(|x| !(*x >= 0.0) || !x.is_finite()) {
            return Err(Error::InvalidPriors(
                "probabilities must be finite and ≥ 0".into(),
            ));
        }
        let total: f64 = p.iter().sum();
        if (total - 1.0).abs() > 1e-12 {
            return Err(Error::InvalidPriors(format!(
                "probabilities sum to {total}"
            )));
        }
        Ok(Priors(p))
    }

    pub fn uniform(n: usize) -> Self {
        Priors(vec![1.0 / n as f64; n])
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.0
    }

    /// `H(M)` in nats.
    pub fn entropy(&self) -> f64 {
        -self
            .0
            .iter()
            .filter(|p| **p > 0.0)
            .map(|p| p * p.ln())
            .sum::<f64>()
    }
}

fn log_sum_exp(xs: impl Iterator<Item = f64>) -> f64 {
    let v: Vec<f64> = xs.collect();
    let m = v.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    if m == f64::NEG_INFINITY {
        return m;
    }
    m + v.iter().map(|x| (x - m).exp()).sum::<f64>().ln()
}

/// `−Σ_m P(m) ln Σ_m' P(m') e^{−D(m,m')}`.
fn pairwise_term(div: &DMatrix<f64>, priors: &[f64]) -> f64 {
    let g = priors.len();
    -(0..g)
        .filter(|&m| priors[m] > 0.0)
        .map(|m| {
            priors[m]
                * log_sum_exp(
                    (0..g)
                        .filter(|&j| priors[j] > 0.0)
                        .map(|j| priors[j].ln() - div[(m, j)]),
                )
        })
        .sum::<f64>()
}

/// Bitwise-equal components have zero divergence; the closed forms would
/// leave round-off of order `d·ε` instead.
fn same_density(a: &ModeDensity, b: &ModeDensity) -> bool {
    a.precision() == b.precision() && a.logdet_cov() == b.logdet_cov()
}

/// Mode densities of the mixture components and their pairwise KL matrix.
struct Components {
    densities: Vec<ModeDensity>,
    kl: DMatrix<f64>,
    h_cond: f64,
}

impl Components {
    fn new(models: &[NoisyWordCov], priors: &Priors, mode: DependenceMode) -> Result<Self> {
        if models.len() != priors.len() {
            return Err(Error::InvalidPriors(format!(
                "{} priors for {} models",
                priors.len(),
                models.len()
            )));
        }
        let layout = models[0].layout();
        if let Some(bad) = models.iter().find(|m| m.layout() != layout) {
            return Err(Error::DimensionMismatch {
                expected: models[0].dim(),
                got: bad.dim(),
            });
        }
        let densities = models
            .iter()
            .map(|m| ModeDensity::new(m, mode))
            .collect::<Result<Vec<_>>>()?;
        let g = models.len();
        let mut kl = DMatrix::zeros(g, g);
        for a in 0..g {
            let cov_a = densities[a].covariance()?;
            for b in 0..g {
                if a != b && !same_density(&densities[a], &densities[b]) {
                    kl[(a, b)] =
                        kl_mode_density_with_cov(&densities[a], &cov_a, &densities[b]).max(0.0);
                }
            }
        }
        let h_cond = densities
            .iter()
            .zip(priors.as_slice())
            .map(|(d, p)| p * d.entropy())
            .sum();
        Ok(Components {
            densities,
            kl,
            h_cond,
        })
    }

    fn chernoff(&self, beta: f64) -> Result<DMatrix<f64>> {
        let g = self.densities.len();
        let mut c = DMatrix::zeros(g, g);
        for a in 0..g {
            for b in 0..g {
                if a != b && !same_density(&self.densities[a], &self.densities[b]) {
                    let v = chernoff_mode_density(&self.densities[a], &self.densities[b], beta)?;
                    c[(a, b)] = v.max(0.0);
                }
            }
        }
        Ok(c)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EntropyBounds {
    /// `h(Y|M)`.
    pub h_cond: f64,
    pub h_lower: f64,
    pub h_upper: f64,
}

/// Lower and upper bounds on the mixture entropy `h(Y)`.
pub fn mixture_entropy_bounds(
    models: &[NoisyWordCov],
    priors: &Priors,
    beta: f64,
    mode: DependenceMode,
) -> Result<EntropyBounds> {
    let comps = Components::new(models, priors, mode)?;
    let p = priors.as_slice();
    Ok(EntropyBounds {
        h_cond: comps.h_cond,
        h_lower: comps.h_cond + pairwise_term(&comps.chernoff(beta)?, p),
        h_upper: comps.h_cond + pairwise_term(&comps.kl, p),
    })
}

/// Which β values the Chernoff lower bound is evaluated at.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum BetaChoice {
    Fixed(f64),
    /// The largest lower bound over the listed values.
    Grid(Vec<f64>),
}

impl Default for BetaChoice {
    fn default() -> Self {
        BetaChoice::Fixed(0.5)
    }
}

impl BetaChoice {
    pub fn standard_grid() -> Self {
        BetaChoice::Grid((1..=9).map(|i| i as f64 / 10.0).collect())
    }

    fn values(&self) -> Result<Vec<f64>> {
        let v = match self {
            BetaChoice::Fixed(b) => vec![*b],
            BetaChoice::Grid(g) => g.clone(),
        };
        if v.is_empty() {
            return Err(Error::invalid("empty β grid"));
        }
        Ok(v)
    }
}

/// Bounds on `I(M;Y)` in nats.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct InfoBounds {
    pub i_lower: f64,
    pub i_upper: f64,
    pub h_cond: f64,
    pub h_mix_lower: f64,
    pub h_mix_upper: f64,
    /// `H(M)`.
    pub h_m: f64,
    pub clamped_low: bool,
    pub clamped_high: bool,
    pub beta: f64,
}

pub fn mutual_info_bounds(
    models: &[NoisyWordCov],
    priors: &Priors,
    beta: &BetaChoice,
    mode: DependenceMode,
) -> Result<InfoBounds> {
    let comps = Components::new(models, priors, mode)?;
    let p = priors.as_slice();
    let h_m = priors.entropy();
    let mut best: Option<(f64, f64)> = None;
    for b in beta.values()? {
        let raw = pairwise_term(&comps.chernoff(b)?, p);
        if best.is_none_or(|(v, _)| raw > v) {
            best = Some((raw, b));
        }
    }
    let (raw_lower, beta_used) = best.expect("non-empty β grid");
    let raw_upper = pairwise_term(&comps.kl, p);
    let tol = CLAMP_TOL * h_m.max(1.0);
    let clamped_low = raw_lower <= tol;
    let clamped_high = raw_upper >= h_m - tol;
    // values within rounding of zero are zero
    let snap = |x: f64| if x <= tol { 0.0 } else { x.min(h_m) };
    let i_upper = snap(raw_upper);
    let i_lower = snap(raw_lower).min(i_upper);
    Ok(InfoBounds {
        i_lower,
        i_upper,
        h_cond: comps.h_cond,
        h_mix_lower: comps.h_cond + raw_lower,
        h_mix_upper: comps.h_cond + raw_upper,
        h_m,
        clamped_low,
        clamped_high,
        beta: beta_used,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct McEstimate {
    pub estimate: f64,
    pub std_error: f64,
}

/// Monte-Carlo `I(M;Y)` for the mixture of mode densities: the mean over
/// joint draws of `ln f(y|m) − ln Σ_m' P(m') f(y|m')`.
pub fn mc_mi_oracle(
    models: &[NoisyWordCov],
    priors: &Priors,
    mode: DependenceMode,
    n_samples: usize,
    seed: u64,
) -> Result<McEstimate> {
    if n_samples < 100 {
        return Err(Error::invalid(format!(
            "Monte-Carlo oracle needs at least 100 samples, got {n_samples}"
        )));
    }
    let comps = Components::new(models, priors, mode)?;
    let samplers = comps
        .densities
        .iter()
        .map(|d| SpdFactor::new(&d.covariance()?))
        .collect::<Result<Vec<_>>>()?;
    let p = priors.as_slice();
    let log_p: Vec<f64> = p.iter().map(|x| x.ln()).collect();
    let dim = comps.densities[0].dim();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let (mut sum, mut sum_sq) = (0.0, 0.0);
    let mut z = vec![0.0; dim];
    for _ in 0..n_samples {
        let u: f64 = rng.random();
        let mut m = p.len() - 1;
        let mut acc = 0.0;
        for (i, pi) in p.iter().enumerate() {
            acc += pi;
            if u < acc {
                m = i;
                break;
            }
        }
        for zi in z.iter_mut() {
            *zi = rng.sample(StandardNormal);
        }
        let y = samplers[m].color(&z);
        let logs: Vec<f64> = comps.densities.iter().map(|d| d.log_density(&y)).collect();
        let mix = log_sum_exp(logs.iter().zip(&log_p).map(|(l, lp)| l + lp));
        let v = logs[m] - mix;
        sum += v;
        sum_sq += v * v;
    }
    let n = n_samples as f64;
    let mean = sum / n;
    let var = ((sum_sq / n - mean * mean) * n / (n - 1.0)).max(0.0);
    Ok(McEstimate {
        estimate: mean,
        std_error: (var / n).sqrt(),
    })
}

fn xlogx(x: f64) -> f64 {
    if x == 0.0 {
        0.0
    } else {
        x * x.ln()
    }
}

/// `I(M;M*)` under the uniform-confusion model: errors spread evenly over
/// the `Γ − 1` wrong words, so
/// `I = ln Γ + P_c ln P_c + (1 − P_c) ln((1 − P_c)/(Γ − 1))`.
pub fn mi_from_pc(p_c: f64, gamma: usize) -> Result<f64> {
    if gamma < 2 {
        return Err(Error::invalid("vocabulary must have at least 2 words"));
    }
    if !(0.0..=1.0).contains(&p_c) {
        return Err(Error::invalid(format!("P_c must lie in [0, 1], got {p_c}")));
    }
    let g = gamma as f64;
    let q = 1.0 - p_c;
    let v = g.ln() + xlogx(p_c) + xlogx(q) - q * (g - 1.0).ln();
    Ok(v.max(0.0))
}

/// Plug-in mutual information of the empirical joint PMF of a confusion
/// matrix (rows: spoken word, columns: decision). Empty rows are words that
/// were never presented.
pub fn mi_from_confusion(confusion: &[Vec<u64>]) -> Result<f64> {
    let g = confusion.len();
    if g == 0 || confusion.iter().any(|r| r.len() != g) {
        return Err(Error::invalid(
            "confusion matrix must be square and non-empty",
        ));
    }
    let rows: Vec<f64> = confusion
        .iter()
        .map(|r| r.iter().sum::<u64>() as f64)
        .collect();
    let total: f64 = rows.iter().sum();
    if total == 0.0 {
        return Err(Error::invalid("confusion matrix has no trials"));
    }
    let cols: Vec<f64> = (0..g)
        .map(|j| confusion.iter().map(|r| r[j]).sum::<u64>() as f64)
        .collect();
    let mut mi = 0.0;
    for (i, row) in confusion.iter().enumerate() {
        for (j, &c) in row.iter().enumerate() {
            if c > 0 {
                let c = c as f64;
                mi += c / total * (c * total / (rows[i] * cols[j])).ln();
            }
        }
    }
    Ok(mi.max(0.0))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum LossSource {
    UniformConfusion,
    EmpiricalConfusion,
}

/// Relative information loss `l = 1 − I(M;M*)/I(M;Y)` bracketed by the MI bounds.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LossBounds {
    pub i_mm: f64,
    pub l_lower: f64,
    pub l_upper: f64,
    pub source: LossSource,
    /// Set when `i_upper = 0`; the loss is then reported as 0.
    pub no_information: bool,
}

pub fn relative_loss_bounds(bounds: &InfoBounds, i_mm: f64, source: LossSource) -> LossBounds {
    let i_mm = if i_mm.is_nan() { 0.0 } else { i_mm.max(0.0) };
    if bounds.i_upper <= 0.0 {
        return LossBounds {
            i_mm,
            l_lower: 0.0,
            l_upper: 0.0,
            source,
            no_information: true,
        };
    }
    let l_upper = (1.0 - i_mm / bounds.i_upper).clamp(0.0, 1.0);
    let l_lower = if i_mm < bounds.i_lower {
        (1.0 - i_mm / bounds.i_lower).clamp(0.0, 1.0)
    } else {
        0.0
    };
    LossBounds {
        i_mm,
        l_lower: l_lower.min(l_upper),
        l_upper,
        source,
        no_information: false,
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::corpus::FrameLayout;
    use crate::gaussian::testutil::random_spd;
    use approx::assert_abs_diff_eq;
    use proptest::prelude::*;
    use rand::Rng;

    fn layout(k: usize, v: usize) -> FrameLayout {
        FrameLayout::new(k, v).unwrap()
    }

    fn random_models(seed: u64, g: usize, k: usize, v: usize) -> Vec<NoisyWordCov> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let w = random_spd(&mut rng, k * v, 0.5);
        (0..g)
            .map(|_| {
                let x = random_spd(&mut rng, k * v, 0.1);
                NoisyWordCov::new(&x, &w, 1.0, layout(k, v)).unwrap()
            })
            .collect()
    }

    #[test]
    fn identical_models_collapse_both_bounds() {
        let m = random_models(1, 1, 2, 2).pop().unwrap();
        let models = vec![m.clone(), m.clone(), m];
        let p = Priors::uniform(3);
        let e = mixture_entropy_bounds(&models, &p, 0.5, DependenceMode::Markov1).unwrap();
        assert_abs_diff_eq!(e.h_lower, e.h_cond, epsilon = 1e-12);
        assert_abs_diff_eq!(e.h_upper, e.h_cond, epsilon = 1e-12);
        let b = mutual_info_bounds(&models, &p, &BetaChoice::default(), DependenceMode::Markov1)
            .unwrap();
        assert_eq!((b.i_lower, b.i_upper), (0.0, 0.0));
        assert!(b.clamped_low);
    }

    #[test]
    fn widely_separated_components_reach_the_prior_entropy() {
        let l = layout(2, 2);
        let a = NoisyWordCov::from_joint(DMatrix::identity(4, 4), l).unwrap();
        let b = NoisyWordCov::from_joint(DMatrix::identity(4, 4) * 1e6, l).unwrap();
        let p = Priors::uniform(2);
        let e = mixture_entropy_bounds(
            &[a.clone(), b.clone()],
            &p,
            0.5,
            DependenceMode::FullHistory,
        )
        .unwrap();
        let target = e.h_cond + 2f64.ln();
        assert!((e.h_lower - target).abs() < 1e-3);
        assert!((e.h_upper - target).abs() < 1e-3);

        let far = NoisyWordCov::from_joint(DMatrix::identity(4, 4) * 1e11, l).unwrap();
        let bounds = mutual_info_bounds(
            &[a, far],
            &p,
            &BetaChoice::default(),
            DependenceMode::FullHistory,
        )
        .unwrap();
        assert_abs_diff_eq!(bounds.i_upper, 2f64.ln(), epsilon = 1e-9);
        assert!(bounds.clamped_high);
    }

    #[test]
    fn entropy_bounds_bracket_monte_carlo_entropy() {
        let models = random_models(5, 3, 2, 2);
        let p = Priors::uniform(3);
        let mode = DependenceMode::FullHistory;
        let e = mixture_entropy_bounds(&models, &p, 0.5, mode).unwrap();
        let dens: Vec<ModeDensity> = models
            .iter()
            .map(|m| ModeDensity::new(m, mode).unwrap())
            .collect();
        let samplers: Vec<SpdFactor> = models
            .iter()
            .map(|m| SpdFactor::new(m.full()).unwrap())
            .collect();
        let mut rng = ChaCha8Rng::seed_from_u64(77);
        let n = 100_000;
        let (mut s, mut s2) = (0.0, 0.0);
        for i in 0..n {
            let m = i % 3;
            let z: Vec<f64> = (0..4).map(|_| rng.sample(StandardNormal)).collect();
            let y = samplers[m].color(&z);
            let v = -log_sum_exp(dens.iter().map(|d| d.log_density(&y) + (1.0f64 / 3.0).ln()));
            s += v;
            s2 += v * v;
        }
        let mean = s / n as f64;
        let se = ((s2 / n as f64 - mean * mean) / n as f64).sqrt();
        assert!(e.h_lower - 3.0 * se <= mean && mean <= e.h_upper + 3.0 * se);
    }

    #[test]
    fn oracle_identical_and_separated() {
        let m = random_models(2, 1, 2, 2).pop().unwrap();
        let p = Priors::uniform(2);
        let r = mc_mi_oracle(&[m.clone(), m], &p, DependenceMode::Markov1, 1000, 3).unwrap();
        assert!(r.estimate.abs() <= 3.0 * r.std_error + 1e-12);

        let l = layout(2, 2);
        let a = NoisyWordCov::from_joint(DMatrix::identity(4, 4), l).unwrap();
        let b = NoisyWordCov::from_joint(DMatrix::identity(4, 4) * 1e8, l).unwrap();
        let r = mc_mi_oracle(&[a, b], &p, DependenceMode::FullHistory, 2000, 3).unwrap();
        assert!((r.estimate - 2f64.ln()).abs() <= 3.0 * r.std_error + 1e-9);
    }

    #[test]
    fn oracle_is_seeded_and_needs_enough_samples() {
        let models = random_models(4, 2, 2, 2);
        let p = Priors::uniform(2);
        let a = mc_mi_oracle(&models, &p, DependenceMode::Markov1, 500, 11).unwrap();
        let b = mc_mi_oracle(&models, &p, DependenceMode::Markov1, 500, 11).unwrap();
        assert_eq!(a, b);
        assert!(mc_mi_oracle(&models, &p, DependenceMode::Markov1, 99, 11).is_err());
    }

    #[test]
    fn priors_must_sum_to_one() {
        assert!(Priors::new(vec![0.5, 0.4]).is_err());
        assert!(Priors::new(vec![0.5, 0.5]).is_ok());
        assert!(Priors::new(vec![1.5, -0.5]).is_err());
    }

    #[test]
    fn pc_map_reference_values() {
        assert_abs_diff_eq!(mi_from_pc(0.1, 10).unwrap(), 0.0, epsilon = 1e-12);
        assert_abs_diff_eq!(mi_from_pc(1.0, 10).unwrap(), 10f64.ln(), epsilon = 1e-12);
        // ln 10 + 0.5 ln 0.5 + 0.5 ln(0.5/9)
        let v = mi_from_pc(0.5, 10).unwrap();
        assert_abs_diff_eq!(v, 0.510_825_623_765_990_7, epsilon = 1e-12);
        assert_abs_diff_eq!(nats_to_bits(v), 0.736_965_594_166_206, epsilon = 1e-9);
        assert!(mi_from_pc(1.1, 10).is_err());
        assert!(mi_from_pc(0.5, 1).is_err());
    }

    #[test]
    fn confusion_mi_reference_values() {
        let id: Vec<Vec<u64>> = (0..4)
            .map(|i| (0..4).map(|j| u64::from(i == j) * 5).collect())
            .collect();
        assert_abs_diff_eq!(mi_from_confusion(&id).unwrap(), 4f64.ln(), epsilon = 1e-12);
        let uni = vec![vec![3u64; 3]; 3];
        assert_abs_diff_eq!(mi_from_confusion(&uni).unwrap(), 0.0, epsilon = 1e-12);
        // joint 0.8/3 on the diagonal, 0.1/3 elsewhere, uniform marginals:
        // 0.8 ln 2.4 + 0.2 ln 0.3
        let c = vec![vec![8, 1, 1], vec![1, 8, 1], vec![1, 1, 8]];
        let expected = 0.8 * 2.4f64.ln() + 0.2 * 0.3f64.ln();
        assert_abs_diff_eq!(mi_from_confusion(&c).unwrap(), expected, epsilon = 1e-12);
        // a word never spoken contributes nothing
        assert_abs_diff_eq!(mi_from_confusion(&[vec![0, 0], vec![1, 1]]).unwrap(), 0.0);
        assert!(mi_from_confusion(&[vec![0, 0], vec![0, 0]]).is_err());
    }

    fn bounds(i_lower: f64, i_upper: f64) -> InfoBounds {
        InfoBounds {
            i_lower,
            i_upper,
            h_cond: 0.0,
            h_mix_lower: 0.0,
            h_mix_upper: 0.0,
            h_m: 10f64.ln(),
            clamped_low: false,
            clamped_high: false,
            beta: 0.5,
        }
    }

    #[test]
    fn loss_reference_values() {
        let s = LossSource::UniformConfusion;
        let l = relative_loss_bounds(&bounds(0.4, 0.4), 0.4, s);
        assert_eq!((l.l_lower, l.l_upper), (0.0, 0.0));
        let l = relative_loss_bounds(&bounds(0.2, 0.6), 0.0, s);
        assert_eq!((l.l_lower, l.l_upper), (1.0, 1.0));
        let l = relative_loss_bounds(&bounds(0.5, 0.6), 0.3, s);
        assert_abs_diff_eq!(l.l_lower, 0.4, epsilon = 1e-15);
        assert_abs_diff_eq!(l.l_upper, 0.5, epsilon = 1e-15);
        let l = relative_loss_bounds(&bounds(0.0, 0.0), 0.0, s);
        assert!(l.no_information);
        assert_eq!((l.l_lower, l.l_upper), (0.0, 0.0));
    }

    proptest! {
        #[test]
        fn pc_map_is_increasing_above_chance(g in 2usize..40, a in 0.0f64..1.0, b in 0.0f64..1.0) {
            let lo = 1.0 / g as f64;
            let (x, y) = (lo + (1.0 - lo) * a.min(b), lo + (1.0 - lo) * a.max(b));
            prop_assume!(y - x > 1e-9);
            prop_assert!(mi_from_pc(x, g).unwrap() < mi_from_pc(y, g).unwrap());
        }

        #[test]
        fn loss_bounds_are_ordered(il in 0.0f64..3.0, extra in 0.0f64..3.0, imm in 0.0f64..6.0) {
            let l = relative_loss_bounds(&bounds(il, il + extra), imm, LossSource::EmpiricalConfusion);
            prop_assert!(0.0 <= l.l_lower && l.l_lower <= l.l_upper && l.l_upper <= 1.0);
        }

        #[test]
        fn mi_bounds_are_ordered(seed in any::<u64>(), g in 2usize..4, theta in 0.01f64..10.0) {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let w = random_spd(&mut rng, 4, 0.5);
            let models: Vec<NoisyWordCov> = (0..g)
                .map(|_| NoisyWordCov::new(&random_spd(&mut rng, 4, 0.1), &w, theta, layout(2, 2)).unwrap())
                .collect();
            let p = Priors::uniform(g);
            for mode in [DependenceMode::IndependentFrames, DependenceMode::Markov1] {
                let b = mutual_info_bounds(&models, &p, &BetaChoice::standard_grid(), mode).unwrap();
                prop_assert!(0.0 <= b.i_lower && b.i_lower <= b.i_upper && b.i_upper <= (g as f64).ln() + 1e-12);
            }
        }
    }
}
