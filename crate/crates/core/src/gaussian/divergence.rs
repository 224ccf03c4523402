//! Closed-form KL and Chernoff-β divergences between zero-mean Gaussians.
//!
//! All values are in nats.

use nalgebra::DMatrix;

use super::{conditional_params, DependenceMode, ModeDensity, NoisyWordCov, SpdFactor};
use crate::error::{Error, Result};

/// Expected conditional KL for one frame, with the `A` intermediate
/// `A = Dᵀ Σ'⁻¹ D`, where `D = G_m − G_m'` is the difference of the two
/// conditional mean maps.
#[derive(Debug, Clone)]
pub struct DivergenceTerms {
    pub a_matrix: DMatrix<f64>,
    pub value: f64,
}

fn check_pair(a: &NoisyWordCov, b: &NoisyWordCov) -> Result<()> {
    if a.layout() != b.layout() {
        return Err(Error::DimensionMismatch {
            expected: a.dim(),
            got: b.dim(),
        });
    }
    Ok(())
}

/// `E_{y^{z-1} ~ m}[ D_KL(f(y_z | y^{z-1}, m) ‖ f(y_z | y^{z-1}, m')) ]` for
/// the 0-based frame `z`, with the history set by `mode`.
pub fn expected_kl_terms(
    a: &NoisyWordCov,
    b: &NoisyWordCov,
    z: usize,
    mode: DependenceMode,
) -> Result<DivergenceTerms> {
    check_pair(a, b)?;
    let ca = conditional_params(a, z, mode)?;
    let cb = conditional_params(b, z, mode)?;
    let fa = SpdFactor::new(&ca.cond_cov)?;
    let fb = SpdFactor::new(&cb.cond_cov)?;
    let k = ca.cond_cov.nrows() as f64;
    let trace_ratio = fb.solve_mat(&ca.cond_cov).trace();
    let mut value = fb.logdet() - fa.logdet() + trace_ratio - k;
    let a_matrix = if ca.history.is_empty() {
        DMatrix::zeros(0, 0)
    } else {
        let d = &ca.mean_map - &cb.mean_map;
        let a_matrix = d.transpose() * fb.solve_mat(&d);
        let hist = a.block(&ca.history, &ca.history);
        value += (a_matrix.transpose() * hist).trace();
        a_matrix
    };
    Ok(DivergenceTerms {
        a_matrix,
        value: 0.5 * value,
    })
}

pub fn expected_kl(
    a: &NoisyWordCov,
    b: &NoisyWordCov,
    z: usize,
    mode: DependenceMode,
) -> Result<f64> {
    expected_kl_terms(a, b, z, mode).map(|t| t.value)
}

/// `Σ_z expected_kl(z)`: the KL divergence between the two mode densities.
pub fn chain_kl(a: &NoisyWordCov, b: &NoisyWordCov, mode: DependenceMode) -> Result<f64> {
    (0..a.layout().frame_count())
        .map(|z| expected_kl(a, b, z, mode))
        .sum()
}

/// `D_KL(N(0, Σa) ‖ N(0, Σb))` evaluated directly on the joint covariances.
pub fn kl_joint(sigma_a: &DMatrix<f64>, sigma_b: &DMatrix<f64>) -> Result<f64> {
    if sigma_a.shape() != sigma_b.shape() {
        return Err(Error::DimensionMismatch {
            expected: sigma_a.nrows(),
            got: sigma_b.nrows(),
        });
    }
    let fa = SpdFactor::new(sigma_a)?;
    let fb = SpdFactor::new(sigma_b)?;
    let d = sigma_a.nrows() as f64;
    Ok(0.5 * (fb.solve_mat(sigma_a).trace() - d + fb.logdet() - fa.logdet()))
}

/// KL between two mode densities, via their precision matrices.
pub fn kl_mode_density(a: &ModeDensity, b: &ModeDensity) -> Result<f64> {
    Ok(kl_mode_density_with_cov(a, &a.covariance()?, b))
}

/// As [`kl_mode_density`] with `a`'s covariance supplied by the caller.
pub(crate) fn kl_mode_density_with_cov(
    a: &ModeDensity,
    cov_a: &DMatrix<f64>,
    b: &ModeDensity,
) -> f64 {
    let d = a.dim() as f64;
    // both matrices are symmetric, so tr(Λb Σa) is the elementwise product sum
    let tr = b.precision().component_mul(cov_a).sum();
    0.5 * (tr - d + b.logdet_cov() - a.logdet_cov())
}

fn check_beta(beta: f64) -> Result<()> {
    if !(0.0..=1.0).contains(&beta) {
        return Err(Error::invalid(format!(
            "beta must lie in [0, 1], got {beta}"
        )));
    }
    Ok(())
}

/// `C_β(N(0, Σa) ‖ N(0, Σb)) = −ln ∫ g^β f^{1−β}` on joint covariances:
/// `½ [ln|(1−β)Σa + βΣb| − (1−β) ln|Σa| − β ln|Σb|]`.
pub fn chernoff_joint(sigma_a: &DMatrix<f64>, sigma_b: &DMatrix<f64>, beta: f64) -> Result<f64> {
    check_beta(beta)?;
    if beta == 0.0 || beta == 1.0 {
        return Ok(0.0);
    }
    let fa = SpdFactor::new(sigma_a)?;
    let fb = SpdFactor::new(sigma_b)?;
    let mixed = sigma_a * (1.0 - beta) + sigma_b * beta;
    let fm = SpdFactor::new(&mixed)?;
    Ok(0.5 * (fm.logdet() - (1.0 - beta) * fa.logdet() - beta * fb.logdet()))
}

/// Chernoff-β divergence between the mode densities of two noisy words.
///
/// With precisions `Λ`, `−ln ∫ g^β f^{1−β} = ½ [β ln|Σa| + (1−β) ln|Σb| +
/// ln|βΛa + (1−β)Λb|]`.
pub fn chernoff_beta(
    a: &NoisyWordCov,
    b: &NoisyWordCov,
    beta: f64,
    mode: DependenceMode,
) -> Result<f64> {
    check_beta(beta)?;
    check_pair(a, b)?;
    if beta == 0.0 || beta == 1.0 {
        return Ok(0.0);
    }
    let da = ModeDensity::new(a, mode)?;
    let db = ModeDensity::new(b, mode)?;
    chernoff_mode_density(&da, &db, beta)
}

pub(crate) fn chernoff_mode_density(a: &ModeDensity, b: &ModeDensity, beta: f64) -> Result<f64> {
    check_beta(beta)?;
    if beta == 0.0 || beta == 1.0 {
        return Ok(0.0);
    }
    let mixed = a.precision() * beta + b.precision() * (1.0 - beta);
    let fm = SpdFactor::new(&mixed)?;
    Ok(0.5 * (beta * a.logdet_cov() + (1.0 - beta) * b.logdet_cov() + fm.logdet()))
}
