//! Guess-rate-floored logistic `f(x) = (1 − 1/Γ)/(1 + e^{cx+d}) + 1/Γ`.

use nalgebra::{Matrix2, Vector2};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

const GRAD_TOL: f64 = 1e-6;
const MAX_ITER: usize = 200;

/// One psychometric observation.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PsychPoint {
    pub snr_db: f64,
    pub p_c: f64,
    pub n_trials: u64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PsychometricFit {
    pub c: f64,
    pub d: f64,
    pub gamma: usize,
    pub log_likelihood: f64,
    pub converged: bool,
}

impl PsychometricFit {
    pub fn guess_rate(&self) -> f64 {
        1.0 / self.gamma as f64
    }

    pub fn eval(&self, snr_db: f64) -> f64 {
        logistic(self.c, self.d, self.guess_rate(), snr_db)
    }
}

fn softplus(u: f64) -> f64 {
    if u > 0.0 {
        u + (-u).exp().ln_1p()
    } else {
        u.exp().ln_1p()
    }
}

fn sigmoid_neg(u: f64) -> f64 {
    // 1 / (1 + e^u)
    if u > 0.0 {
        let e = (-u).exp();
        e / (1.0 + e)
    } else {
        1.0 / (1.0 + u.exp())
    }
}

pub fn logistic(c: f64, d: f64, guess: f64, x: f64) -> f64 {
    guess + (1.0 - guess) * sigmoid_neg(c * x + d)
}

struct Data {
    x: Vec<f64>,
    s: Vec<f64>,
    n: Vec<f64>,
    g: f64,
}

impl Data {
    fn loglik(&self, c: f64, d: f64) -> f64 {
        let g = self.g;
        let mut ll = 0.0;
        for i in 0..self.x.len() {
            let u = c * self.x[i] + d;
            let f = logistic(c, d, g, self.x[i]);
            let ln_q = (1.0 - g).ln() + u - softplus(u);
            if self.s[i] > 0.0 {
                ll += self.s[i] * f.ln();
            }
            if self.n[i] > self.s[i] {
                ll += (self.n[i] - self.s[i]) * ln_q;
            }
        }
        ll
    }

    fn grad_hess(&self, c: f64, d: f64) -> (Vector2<f64>, Matrix2<f64>) {
        let g = self.g;
        let mut grad = Vector2::zeros();
        let mut hess = Matrix2::zeros();
        for i in 0..self.x.len() {
            let x = self.x[i];
            let u = c * x + d;
            let sig = sigmoid_neg(u);
            let f = g + (1.0 - g) * sig;
            let q = (1.0 - g) * (1.0 - sig);
            let (s, f_n) = (self.s[i], self.n[i] - self.s[i]);
            let dl_df = s / f - f_n / q;
            let d2l_df2 = -s / (f * f) - f_n / (q * q);
            let df_du = -(1.0 - g) * sig * (1.0 - sig);
            let d2f_du2 = -(1.0 - g) * sig * (1.0 - sig) * (1.0 - 2.0 * sig);
            let dl_du = dl_df * df_du;
            let d2l_du2 = d2l_df2 * df_du * df_du + dl_df * d2f_du2;
            let j = Vector2::new(x, 1.0);
            grad += j * dl_du;
            hess += j * j.transpose() * d2l_du2;
        }
        (grad, hess)
    }
}

/// Maximum-likelihood fit of `c, d` to binomial counts: a coarse grid
/// followed by damped Newton iterations.
pub fn fit_psychometric(points: &[PsychPoint], gamma: usize) -> Result<PsychometricFit> {
    if gamma < 2 {
        return Err(Error::invalid("vocabulary must have at least 2 words"));
    }
    for p in points {
        if !(0.0..=1.0).contains(&p.p_c) || p.n_trials == 0 || !p.snr_db.is_finite() {
            return Err(Error::invalid(format!("invalid psychometric point {p:?}")));
        }
    }
    let mut xs: Vec<f64> = points.iter().map(|p| p.snr_db).collect();
    xs.sort_by(f64::total_cmp);
    xs.dedup();
    if xs.len() < 2 {
        return Err(Error::invalid(
            "psychometric fit needs at least 2 distinct SNRs",
        ));
    }
    let g = 1.0 / gamma as f64;
    let eps = 1e-12;
    if points
        .iter()
        .all(|p| p.p_c <= g + eps || p.p_c >= 1.0 - eps)
    {
        return Err(Error::IllConditionedFit);
    }
    let data = Data {
        x: points.iter().map(|p| p.snr_db).collect(),
        s: points.iter().map(|p| p.p_c * p.n_trials as f64).collect(),
        n: points.iter().map(|p| p.n_trials as f64).collect(),
        g,
    };

    let (lo, hi) = (xs[0], xs[xs.len() - 1]);
    let span = (hi - lo).max(1.0);
    let mut best = (f64::NEG_INFINITY, 0.0, 0.0);
    for ci in 0..40 {
        // slopes from 0.01 to 10 per dB, both signs
        let mag = 0.01 * 1000f64.powf(ci as f64 / 39.0);
        for sign in [-1.0, 1.0] {
            let c = sign * mag;
            for xi in 0..=60 {
                let x0 = lo - span + 3.0 * span * xi as f64 / 60.0;
                let d = -c * x0;
                let ll = data.loglik(c, d);
                if ll > best.0 {
                    best = (ll, c, d);
                }
            }
        }
    }

    let (mut ll, mut c, mut d) = best;
    let mut mu = 1e-3;
    let mut converged = false;
    for _ in 0..MAX_ITER {
        let (grad, hess) = data.grad_hess(c, d);
        if grad.norm() <= GRAD_TOL {
            converged = true;
            break;
        }
        let mut stepped = false;
        for _ in 0..60 {
            let a = -hess + Matrix2::identity() * mu;
            let Some(step) = a.cholesky().map(|ch| ch.solve(&grad)) else {
                mu *= 10.0;
                continue;
            };
            let (nc, nd) = (c + step[0], d + step[1]);
            let nll = data.loglik(nc, nd);
            if nll.is_finite() && nll >= ll {
                (c, d, ll) = (nc, nd, nll);
                mu = (mu / 10.0).max(1e-12);
                stepped = true;
                break;
            }
            mu *= 10.0;
        }
        if !stepped {
            converged = data.grad_hess(c, d).0.norm() <= GRAD_TOL;
            break;
        }
        if c.abs() > 1e3 || d.abs() > 1e5 {
            return Err(Error::IllConditionedFit);
        }
    }
    Ok(PsychometricFit {
        c,
        d,
        gamma,
        log_likelihood: ll,
        converged,
    })
}

/// The SNR at which the fitted recognition rate is 50%.
pub fn srt(fit: &PsychometricFit) -> Result<f64> {
    let g = fit.guess_rate();
    if g >= 0.5 {
        return Err(Error::invalid(format!(
            "no 50% point: guess rate 1/{} is at least 0.5",
            fit.gamma
        )));
    }
    if !fit.converged {
        return Err(Error::invalid("psychometric fit did not converge"));
    }
    if fit.c == 0.0 {
        return Err(Error::invalid(
            "flat psychometric function has no 50% point",
        ));
    }
    Ok((((1.0 - g) / (0.5 - g) - 1.0).ln() - fit.d) / fit.c)
}

/// `srt(human) − srt(machine)` in dB; positive when the machine needs less SNR.
pub fn srt_gap(machine: &PsychometricFit, human: &PsychometricFit) -> Result<f64> {
    Ok(srt(human)? - srt(machine)?)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn fit_of(c: f64, d: f64, gamma: usize) -> PsychometricFit {
        PsychometricFit {
            c,
            d,
            gamma,
            log_likelihood: 0.0,
            converged: true,
        }
    }

    #[test]
    fn recovers_generating_parameters() {
        let (c0, d0) = (-0.8, -4.0);
        let pts: Vec<PsychPoint> = [-15.0, -12.0, -9.0, -6.0, -3.0, 0.0, 3.0]
            .iter()
            .map(|&x| PsychPoint {
                snr_db: x,
                p_c: logistic(c0, d0, 0.1, x),
                n_trials: 10_000,
            })
            .collect();
        let f = fit_psychometric(&pts, 10).unwrap();
        assert!(f.converged);
        assert!(((f.c - c0) / c0).abs() < 1e-6, "{f:?}");
        assert!(((f.d - d0) / d0).abs() < 1e-6, "{f:?}");
    }

    #[test]
    fn chance_everywhere_is_ill_conditioned() {
        let pts: Vec<PsychPoint> = (0..6)
            .map(|i| PsychPoint {
                snr_db: -20.0 + 4.0 * i as f64,
                p_c: 0.1,
                n_trials: 80,
            })
            .collect();
        let e = fit_psychometric(&pts, 10).unwrap_err();
        assert_eq!(e.to_string(), "ill-conditioned fit");
    }

    #[test]
    fn ceiling_everywhere_is_ill_conditioned() {
        let pts = [
            PsychPoint {
                snr_db: 0.0,
                p_c: 1.0,
                n_trials: 8,
            },
            PsychPoint {
                snr_db: 5.0,
                p_c: 1.0,
                n_trials: 8,
            },
        ];
        assert!(matches!(
            fit_psychometric(&pts, 10),
            Err(Error::IllConditionedFit)
        ));
    }

    #[test]
    fn one_snr_is_rejected() {
        let pts = [PsychPoint {
            snr_db: 0.0,
            p_c: 0.5,
            n_trials: 8,
        }; 3];
        assert!(fit_psychometric(&pts, 10).is_err());
    }

    #[test]
    fn asymptotes() {
        let f = fit_of(-0.8, -4.0, 10);
        assert!((f.eval(1e4) - 1.0).abs() < 1e-12);
        assert!((f.eval(-1e4) - 0.1).abs() < 1e-12);
    }

    #[test]
    fn srt_hand_values() {
        // (1 − g)/(0.5 − g) − 1 = 1.25 for Γ = 10
        assert!((srt(&fit_of(-1.0, 0.0, 10)).unwrap() + 1.25f64.ln()).abs() < 1e-12);
        let f = fit_of(-1.0, 0.0, 10);
        let shifted = fit_of(-1.0, 1.0, 10);
        assert!((srt(&shifted).unwrap() - srt(&f).unwrap() - 1.0).abs() < 1e-12);
        let f = fit_of(-0.5, -3.0, 4);
        let x = srt(&f).unwrap();
        assert!((f.eval(x) - 0.5).abs() < 1e-12);
        assert!(srt(&fit_of(-1.0, 0.0, 2)).is_err());
    }

    #[test]
    fn gap_translation() {
        let m = fit_of(-0.7, -2.0, 10);
        let h = fit_of(-0.7, -2.0 - 8.0 * m.c, 10);
        assert_eq!(srt_gap(&m, &m).unwrap(), 0.0);
        assert!((srt_gap(&m, &h).unwrap() - 8.0).abs() < 1e-12);
        let bad = PsychometricFit {
            converged: false,
            ..m
        };
        assert!(srt_gap(&bad, &h).is_err());
    }
}
