//! Zero-mean Gaussian machinery over framed observations.
//!
//! A noisy word `Y = √θ·X + W` observed in `v` frames of `k` samples has
//! covariance `θ·Σ_X + Σ_W`. The dependence mode decides how frames are
//! chained:
//!
//! * [`DependenceMode::IndependentFrames`]: `f(y) = Π_z f(y_z)`
//! * [`DependenceMode::Markov1`]: `f(y) = f(y_1) Π_z f(y_z | y_{z-1})`
//! * [`DependenceMode::FullHistory`]: `f(y) = Π_z f(y_z | y^{z-1})`, which is
//!   the joint density itself.
//!
//! Every mode density is a signed product of zero-mean Gaussian marginals over
//! contiguous sample blocks ([`BlockTerm`]); the decoder and the divergence
//! code both work from that representation.

mod divergence;
mod spd;

use std::ops::Range;

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

pub use divergence::{
    chain_kl, chernoff_beta, chernoff_joint, expected_kl, expected_kl_terms, kl_joint,
    kl_mode_density, DivergenceTerms,
};
pub(crate) use divergence::{chernoff_mode_density, kl_mode_density_with_cov};
pub use spd::{SpdFactor, MAX_CONDITION};

pub(crate) use spd::{ln_2pi, symmetrize};

use crate::corpus::FrameLayout;
use crate::error::{Error, Result};

/// How successive frames condition on each other.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum DependenceMode {
    IndependentFrames,
    Markov1,
    FullHistory,
}

impl DependenceMode {
    pub fn as_str(&self) -> &'static str {
        match self {
            DependenceMode::IndependentFrames => "independent_frames",
            DependenceMode::Markov1 => "markov1",
            DependenceMode::FullHistory => "full_history",
        }
    }

    /// Sample range of the history that frame `z` (0-based) conditions on.
    pub fn history(&self, layout: &FrameLayout, z: usize) -> Range<usize> {
        let k = layout.frame_len();
        match self {
            DependenceMode::IndependentFrames => 0..0,
            DependenceMode::Markov1 if z == 0 => 0..0,
            DependenceMode::Markov1 => (z - 1) * k..z * k,
            DependenceMode::FullHistory => 0..z * k,
        }
    }

    /// The signed block decomposition of this mode's density.
    pub fn terms(&self, layout: &FrameLayout) -> Vec<BlockTerm> {
        let k = layout.frame_len();
        let v = layout.frame_count();
        match self {
            DependenceMode::FullHistory => vec![BlockTerm::new(1.0, 0..k * v)],
            DependenceMode::IndependentFrames => (0..v)
                .map(|z| BlockTerm::new(1.0, layout.frame_range(z)))
                .collect(),
            DependenceMode::Markov1 if v == 1 => vec![BlockTerm::new(1.0, 0..k)],
            DependenceMode::Markov1 => {
                let mut terms: Vec<BlockTerm> = (1..v)
                    .map(|z| BlockTerm::new(1.0, (z - 1) * k..(z + 1) * k))
                    .collect();
                terms.extend((1..v - 1).map(|z| BlockTerm::new(-1.0, layout.frame_range(z))));
                terms
            }
        }
    }
}

impl std::str::FromStr for DependenceMode {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "independent_frames" | "independent" => Ok(DependenceMode::IndependentFrames),
            "markov1" => Ok(DependenceMode::Markov1),
            "full_history" | "full" => Ok(DependenceMode::FullHistory),
            other => Err(Error::invalid(format!("unknown dependence mode {other:?}"))),
        }
    }
}

impl std::fmt::Display for DependenceMode {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.as_str())
    }
}

/// `coef · ln N(y[range]; 0, Σ[range, range])`.
#[derive(Debug, Clone, PartialEq)]
pub struct BlockTerm {
    pub coef: f64,
    pub range: Range<usize>,
}

impl BlockTerm {
    pub fn new(coef: f64, range: Range<usize>) -> Self {
        BlockTerm { coef, range }
    }
}

pub(crate) fn block(m: &DMatrix<f64>, rows: &Range<usize>, cols: &Range<usize>) -> DMatrix<f64> {
    m.view((rows.start, cols.start), (rows.len(), cols.len()))
        .into_owned()
}

/// Covariance of a noisy word, `Σ_{Y|m} = θ·Σ_{X_m} + Σ_W`, with frame structure.
#[derive(Debug, Clone)]
pub struct NoisyWordCov {
    full: DMatrix<f64>,
    layout: FrameLayout,
    theta: Option<f64>,
}

impl NoisyWordCov {
    pub fn new(
        sigma_x: &DMatrix<f64>,
        sigma_w: &DMatrix<f64>,
        theta: f64,
        layout: FrameLayout,
    ) -> Result<Self> {
        if !(theta >= 0.0) || !theta.is_finite() {
            return Err(Error::invalid(format!("theta must be ≥ 0, got {theta}")));
        }
        let full = sigma_x * theta + sigma_w;
        let mut cov = NoisyWordCov::from_joint(full, layout)?;
        cov.theta = Some(theta);
        Ok(cov)
    }

    /// Wraps an arbitrary SPD joint covariance of dimension `k·v`.
    pub fn from_joint(full: DMatrix<f64>, layout: FrameLayout) -> Result<Self> {
        let d = layout.window_len();
        if full.nrows() != d || full.ncols() != d {
            return Err(Error::DimensionMismatch {
                expected: d,
                got: full.nrows(),
            });
        }
        SpdFactor::new(&full)?;
        Ok(NoisyWordCov {
            full,
            layout,
            theta: None,
        })
    }

    pub fn full(&self) -> &DMatrix<f64> {
        &self.full
    }

    pub fn layout(&self) -> &FrameLayout {
        &self.layout
    }

    pub fn theta(&self) -> Option<f64> {
        self.theta
    }

    pub fn dim(&self) -> usize {
        self.full.nrows()
    }

    /// `Σ_{Y^z|m}`: covariance of the first `z` frames.
    pub fn prefix(&self, z: usize) -> DMatrix<f64> {
        let r = 0..z * self.layout.frame_len();
        block(&self.full, &r, &r)
    }

    /// `Σ_{Y_z|m}` for the 0-based frame `z`.
    pub fn frame_cov(&self, z: usize) -> DMatrix<f64> {
        let r = self.layout.frame_range(z);
        block(&self.full, &r, &r)
    }

    pub fn block(&self, rows: &Range<usize>, cols: &Range<usize>) -> DMatrix<f64> {
        block(&self.full, rows, cols)
    }
}

/// `N(μ, Σ)` for frame `z` given its history: `μ = mean_map · y[history]`.
#[derive(Debug, Clone)]
pub struct CondGaussian {
    pub frame: Range<usize>,
    pub history: Range<usize>,
    pub mean_map: DMatrix<f64>,
    pub cond_cov: DMatrix<f64>,
}

impl CondGaussian {
    pub fn mean(&self, y: &[f64]) -> Vec<f64> {
        let h = &y[self.history.clone()];
        (0..self.mean_map.nrows())
            .map(|i| (0..h.len()).map(|j| self.mean_map[(i, j)] * h[j]).sum())
            .collect()
    }
}

/// Conditional distribution of the 0-based frame `z` given the history the
/// mode prescribes, via the Schur complement of the history block.
pub fn conditional_params(
    model: &NoisyWordCov,
    z: usize,
    mode: DependenceMode,
) -> Result<CondGaussian> {
    let layout = model.layout();
    if z >= layout.frame_count() {
        return Err(Error::invalid(format!(
            "frame {z} out of range (v = {})",
            layout.frame_count()
        )));
    }
    let frame = layout.frame_range(z);
    let history = mode.history(layout, z);
    let sz = model.block(&frame, &frame);
    if history.is_empty() {
        return Ok(CondGaussian {
            frame,
            mean_map: DMatrix::zeros(sz.nrows(), 0),
            history,
            cond_cov: sz,
        });
    }
    let sh = SpdFactor::new(&model.block(&history, &history))?;
    let cross = model.block(&frame, &history);
    // G = C Σ_h⁻¹, so Gᵀ = Σ_h⁻¹ Cᵀ
    let mean_map = sh.solve_mat(&cross.transpose()).transpose();
    let cond_cov = symmetrize(&(&sz - &mean_map * cross.transpose()));
    SpdFactor::new(&cond_cov)?;
    Ok(CondGaussian {
        frame,
        history,
        mean_map,
        cond_cov,
    })
}

/// `Σ_z ln N(y_z; μ_z(history), Σ_z)` under `mode`.
pub fn chain_loglik(y: &[f64], model: &NoisyWordCov, mode: DependenceMode) -> Result<f64> {
    let layout = model.layout();
    if y.len() != layout.window_len() {
        return Err(Error::DimensionMismatch {
            expected: layout.window_len(),
            got: y.len(),
        });
    }
    let mut total = 0.0;
    for z in 0..layout.frame_count() {
        let cond = conditional_params(model, z, mode)?;
        let mu = cond.mean(y);
        let resid: Vec<f64> = y[cond.frame.clone()]
            .iter()
            .zip(&mu)
            .map(|(a, b)| a - b)
            .collect();
        total += SpdFactor::new(&cond.cond_cov)?.log_density(&resid);
    }
    Ok(total)
}

/// The mode density as a single zero-mean Gaussian over all `k·v` samples.
#[derive(Debug, Clone)]
pub struct ModeDensity {
    precision: DMatrix<f64>,
    logdet_cov: f64,
}

impl ModeDensity {
    pub fn new(model: &NoisyWordCov, mode: DependenceMode) -> Result<Self> {
        let d = model.dim();
        if mode == DependenceMode::FullHistory {
            let f = SpdFactor::new(model.full())?;
            return Ok(ModeDensity {
                precision: f.inverse(),
                logdet_cov: f.logdet(),
            });
        }
        let mut precision = DMatrix::zeros(d, d);
        let mut logdet_cov = 0.0;
        for term in mode.terms(model.layout()) {
            let f = SpdFactor::new(&model.block(&term.range, &term.range))?;
            let inv = f.inverse();
            let mut view = precision.view_mut(
                (term.range.start, term.range.start),
                (term.range.len(), term.range.len()),
            );
            view += inv * term.coef;
            logdet_cov += term.coef * f.logdet();
        }
        Ok(ModeDensity {
            precision: symmetrize(&precision),
            logdet_cov,
        })
    }

    pub fn dim(&self) -> usize {
        self.precision.nrows()
    }

    pub fn precision(&self) -> &DMatrix<f64> {
        &self.precision
    }

    /// `ln |Σ|` of the mode density.
    pub fn logdet_cov(&self) -> f64 {
        self.logdet_cov
    }

    /// Differential entropy in nats.
    pub fn entropy(&self) -> f64 {
        0.5 * (self.dim() as f64 * (ln_2pi() + 1.0) + self.logdet_cov)
    }

    pub fn covariance(&self) -> Result<DMatrix<f64>> {
        Ok(SpdFactor::new(&self.precision)?.inverse())
    }

    pub fn log_density(&self, y: &[f64]) -> f64 {
        let d = self.dim();
        let mut quad = 0.0;
        for i in 0..d {
            let row: f64 = y
                .iter()
                .enumerate()
                .map(|(j, yj)| self.precision[(i, j)] * yj)
                .sum();
            quad += y[i] * row;
        }
        -0.5 * (d as f64 * ln_2pi() + self.logdet_cov + quad)
    }
}
