use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};

/// Solves on factors whose condition estimate exceeds this are refused.
pub const MAX_CONDITION: f64 = 1e12;

const LN_2PI: f64 = 1.837_877_066_409_345_3;

/// Cholesky factor `Σ = L Lᵀ` of a symmetric positive definite matrix.
///
/// Construction fails with [`Error::NotSpd`] naming the first pivot that is
/// not strictly positive, and with [`Error::IllConditioned`] when the cheap
/// condition estimate `(max Lᵢᵢ / min Lᵢᵢ)²` exceeds [`MAX_CONDITION`].
#[derive(Debug, Clone)]
pub struct SpdFactor {
    lower: DMatrix<f64>,
    logdet: f64,
    condition: f64,
}

impl SpdFactor {
    pub fn new(matrix: &DMatrix<f64>) -> Result<Self> {
        let lower = cholesky_lower(matrix)?;
        let n = lower.nrows();
        let logdet = 2.0 * (0..n).map(|i| lower[(i, i)].ln()).sum::<f64>();
        let (lo, hi) = (0..n).fold((f64::INFINITY, 0.0f64), |(lo, hi), i| {
            let d = lower[(i, i)];
            (lo.min(d), hi.max(d))
        });
        let condition = if n == 0 { 1.0 } else { (hi / lo).powi(2) };
        if condition > MAX_CONDITION {
            return Err(Error::IllConditioned {
                estimate: condition,
            });
        }
        Ok(SpdFactor {
            lower,
            logdet,
            condition,
        })
    }

    pub fn dim(&self) -> usize {
        self.lower.nrows()
    }

    /// `ln |Σ|`.
    pub fn logdet(&self) -> f64 {
        self.logdet
    }

    pub fn condition_estimate(&self) -> f64 {
        self.condition
    }

    pub fn lower(&self) -> &DMatrix<f64> {
        &self.lower
    }

    /// `L⁻¹ y` by forward substitution.
    pub fn whiten(&self, y: &[f64]) -> Vec<f64> {
        let n = self.dim();
        assert_eq!(y.len(), n, "whiten: dimension mismatch");
        let l = &self.lower;
        let mut out = vec![0.0; n];
        for i in 0..n {
            let mut s = y[i];
            for j in 0..i {
                s -= l[(i, j)] * out[j];
            }
            out[i] = s / l[(i, i)];
        }
        out
    }

    /// `Lᵀ⁻¹ u` by back substitution.
    fn unwhiten_t(&self, u: &mut [f64]) {
        let n = self.dim();
        let l = &self.lower;
        for i in (0..n).rev() {
            let mut s = u[i];
            for j in i + 1..n {
                s -= l[(j, i)] * u[j];
            }
            u[i] = s / l[(i, i)];
        }
    }

    pub fn solve_vec(&self, b: &[f64]) -> Vec<f64> {
        let mut u = self.whiten(b);
        self.unwhiten_t(&mut u);
        u
    }

    /// `Σ⁻¹ B` column by column.
    pub fn solve_mat(&self, b: &DMatrix<f64>) -> DMatrix<f64> {
        assert_eq!(b.nrows(), self.dim(), "solve_mat: dimension mismatch");
        let mut out = DMatrix::zeros(b.nrows(), b.ncols());
        for c in 0..b.ncols() {
            let col: Vec<f64> = b.column(c).iter().copied().collect();
            let x = self.solve_vec(&col);
            out.set_column(c, &DVector::from_vec(x));
        }
        out
    }

    pub fn inverse(&self) -> DMatrix<f64> {
        let inv = self.solve_mat(&DMatrix::identity(self.dim(), self.dim()));
        symmetrize(&inv)
    }

    /// `yᵀ Σ⁻¹ y`.
    pub fn quad_form(&self, y: &[f64]) -> f64 {
        self.whiten(y).iter().map(|u| u * u).sum()
    }

    /// `ln N(y; 0, Σ)`.
    pub fn log_density(&self, y: &[f64]) -> f64 {
        -0.5 * (self.dim() as f64 * LN_2PI + self.logdet + self.quad_form(y))
    }

    /// `L z`, mapping a standard normal draw to `N(0, Σ)`.
    pub fn color(&self, z: &[f64]) -> Vec<f64> {
        let n = self.dim();
        let l = &self.lower;
        (0..n)
            .map(|i| (0..=i).map(|j| l[(i, j)] * z[j]).sum())
            .collect()
    }
}

pub(crate) fn ln_2pi() -> f64 {
    LN_2PI
}

fn cholesky_lower(a: &DMatrix<f64>) -> Result<DMatrix<f64>> {
    let n = a.nrows();
    if a.ncols() != n {
        return Err(Error::DimensionMismatch {
            expected: n,
            got: a.ncols(),
        });
    }
    let scale = a
        .iter()
        .fold(0.0f64, |m, x| m.max(x.abs()))
        .max(f64::MIN_POSITIVE);
    for i in 0..n {
        for j in 0..i {
            if (a[(i, j)] - a[(j, i)]).abs() > 1e-9 * scale {
                return Err(Error::invalid(format!(
                    "matrix is not symmetric at ({i}, {j})"
                )));
            }
        }
    }
    let mut l = DMatrix::<f64>::zeros(n, n);
    for j in 0..n {
        let mut d = a[(j, j)];
        for k in 0..j {
            d -= l[(j, k)] * l[(j, k)];
        }
        if !(d > 0.0) || !d.is_finite() {
            return Err(Error::NotSpd { pivot: j });
        }
        let d = d.sqrt();
        l[(j, j)] = d;
        for i in j + 1..n {
            let mut s = a[(i, j)];
            for k in 0..j {
                s -= l[(i, k)] * l[(j, k)];
            }
            l[(i, j)] = s / d;
        }
    }
    Ok(l)
}

pub(crate) fn symmetrize(m: &DMatrix<f64>) -> DMatrix<f64> {
    (m + m.transpose()) * 0.5
}
