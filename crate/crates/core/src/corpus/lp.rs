//! Linear prediction: autocorrelation, Levinson-Durbin, and the
//! autocovariance sequence implied by a fitted AR model.

use nalgebra::{DMatrix, DVector};
use rand::Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Biased autocorrelation `r(τ) = (1/N) Σ_t x_t x_{t+τ}` for `τ = 0..=max_lag`.
pub fn autocorrelation(x: &[f64], max_lag: usize) -> Vec<f64> {
    let n = x.len();
    (0..=max_lag)
        .map(|lag| {
            if lag >= n {
                return 0.0;
            }
            x[..n - lag]
                .iter()
                .zip(&x[lag..])
                .map(|(a, b)| a * b)
                .sum::<f64>()
                / n as f64
        })
        .collect()
}

/// Solves the Toeplitz normal equations for predictor coefficients
/// `x̂_t = Σ_i a_i x_{t-i}`. Returns `(a, prediction error power)`.
pub fn levinson_durbin(r: &[f64], order: usize) -> Result<(Vec<f64>, f64)> {
    if r.len() <= order {
        return Err(Error::invalid("autocorrelation shorter than LP order"));
    }
    let r0 = r[0];
    if !(r0 > 0.0) || !r0.is_finite() {
        return Err(Error::DegenerateSignal);
    }
    let mut a = vec![0.0; order];
    let mut err = r0;
    for i in 0..order {
        let mut acc = r[i + 1];
        for j in 0..i {
            acc -= a[j] * r[i - j];
        }
        let k = acc / err;
        let prev = a.clone();
        a[i] = k;
        for j in 0..i {
            a[j] = prev[j] - k * prev[i - 1 - j];
        }
        err *= 1.0 - k * k;
        if !(err > 1e-12 * r0) {
            return Err(Error::DegenerateSignal);
        }
    }
    Ok((a, err))
}

/// Reflection coefficients by step-down recursion; `None` if a step hits |k| = 1.
pub fn reflection_coefficients(coeffs: &[f64]) -> Option<Vec<f64>> {
    let mut a = coeffs.to_vec();
    let mut ks = vec![0.0; a.len()];
    for m in (0..a.len()).rev() {
        let k = a[m];
        ks[m] = k;
        let denom = 1.0 - k * k;
        if !(denom > 0.0) {
            return None;
        }
        let prev = a.clone();
        for j in 0..m {
            a[j] = (prev[j] + k * prev[m - 1 - j]) / denom;
        }
        a.truncate(m);
    }
    Some(ks)
}

/// True when every root of `1 − Σ a_i z^{-i}` lies strictly inside the unit circle.
pub fn is_stable(coeffs: &[f64]) -> bool {
    if coeffs.iter().any(|c| !c.is_finite()) {
        return false;
    }
    reflection_coefficients(coeffs).is_some_and(|ks| ks.iter().all(|k| k.abs() < 1.0))
}

/// Stationary autoregressive model `x_t = Σ_i a_i x_{t-i} + e_t`, `e_t ~ N(0, σ²)`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ArModel {
    pub coeffs: Vec<f64>,
    pub innovation_var: f64,
}

impl ArModel {
    pub fn new(coeffs: Vec<f64>, innovation_var: f64) -> Result<Self> {
        if !is_stable(&coeffs) {
            return Err(Error::invalid("unstable AR polynomial"));
        }
        if !(innovation_var > 0.0) {
            return Err(Error::invalid("innovation variance must be positive"));
        }
        Ok(ArModel {
            coeffs,
            innovation_var,
        })
    }

    /// Autocorrelation-method fit of order `order`.
    pub fn fit(signal: &[f64], order: usize) -> Result<Self> {
        if signal.is_empty() || signal.iter().all(|&x| x == signal[0]) {
            return Err(Error::DegenerateSignal);
        }
        if signal.iter().any(|x| !x.is_finite()) {
            return Err(Error::invalid("signal contains non-finite samples"));
        }
        let r = autocorrelation(signal, order);
        let (coeffs, err) = levinson_durbin(&r, order)?;
        Ok(ArModel {
            coeffs,
            innovation_var: err,
        })
    }

    pub fn order(&self) -> usize {
        self.coeffs.len()
    }

    /// Theoretical autocovariance `r(0..=max_lag)`: the first `p+1` lags
    /// solve the Yule-Walker system, later lags follow the AR recursion.
    pub fn autocovariance(&self, max_lag: usize) -> Result<Vec<f64>> {
        let p = self.order();
        let a = &self.coeffs;
        let mut m = DMatrix::<f64>::zeros(p + 1, p + 1);
        for tau in 0..=p {
            m[(tau, tau)] += 1.0;
            for i in 1..=p {
                let lag = tau.abs_diff(i);
                m[(tau, lag)] -= a[i - 1];
            }
        }
        let mut rhs = DVector::<f64>::zeros(p + 1);
        rhs[0] = self.innovation_var;
        let head = m.lu().solve(&rhs).ok_or(Error::DegenerateSignal)?;
        let mut r: Vec<f64> = head.iter().copied().collect();
        for tau in p + 1..=max_lag {
            let next = (1..=p).map(|i| a[i - 1] * r[tau - i]).sum();
            r.push(next);
        }
        r.truncate(max_lag + 1);
        if !(r[0] > 0.0) || r.iter().any(|x| !x.is_finite()) {
            return Err(Error::DegenerateSignal);
        }
        Ok(r)
    }

    /// Draws `n` samples of the stationary process. The first `p` samples
    /// come from the exact stationary distribution, so no burn-in is needed.
    pub fn sample<R: Rng + ?Sized>(&self, n: usize, rng: &mut R) -> Result<Vec<f64>> {
        let p = self.order();
        let sd = self.innovation_var.sqrt();
        let mut x = Vec::with_capacity(n.max(p));
        if p > 0 {
            let acov = self.autocovariance(p - 1)?;
            let init = crate::gaussian::SpdFactor::new(&toeplitz(&acov, p))?;
            let z: Vec<f64> = (0..p).map(|_| rng.sample(StandardNormal)).collect();
            x.extend(init.color(&z));
        }
        for t in p..n {
            let e: f64 = rng.sample(StandardNormal);
            let pred: f64 = (1..=p).map(|i| self.coeffs[i - 1] * x[t - i]).sum();
            x.push(pred + sd * e);
        }
        x.truncate(n);
        Ok(x)
    }
}

/// Symmetric Toeplitz matrix with first column `acov[0..d]`.
pub fn toeplitz(acov: &[f64], d: usize) -> DMatrix<f64> {
    assert!(acov.len() >= d, "toeplitz: sequence shorter than dimension");
    DMatrix::from_fn(d, d, |i, j| acov[i.abs_diff(j)])
}
