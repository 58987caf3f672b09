//! Weighted least squares through an SVD pseudo-inverse.

use nalgebra::{DMatrix, DVector};

use super::{check_fit_input, Matrix};
use crate::error::{Error, Result};

/// Factorization of a weighted design, reusable across response vectors.
///
/// Columns are standardized before factoring; rank-deficient designs get the
/// minimum-norm solution in standardized coordinates.
#[derive(Debug, Clone)]
pub struct WlsSolver {
    active: Vec<usize>,
    sqrt_w: Vec<f64>,
    mean: Vec<f64>,
    scale: Vec<f64>,
    pinv: DMatrix<f64>,
    rank: usize,
    n: usize,
}

#[derive(Debug, Clone, PartialEq)]
pub struct WlsFit {
    /// Intercept followed by one slope per column.
    pub coefficients: Vec<f64>,
    /// `y - fitted` for every training row, including zero-weight rows.
    pub residuals: Vec<f64>,
    pub rank: usize,
}

impl WlsFit {
    pub fn predict(&self, x: &[f64]) -> f64 {
        self.coefficients[0]
            + self.coefficients[1..]
                .iter()
                .zip(x)
                .map(|(b, v)| b * v)
                .sum::<f64>()
    }
}

impl WlsSolver {
    pub fn new(x: &Matrix, w: &[f64]) -> Result<Self> {
        check_fit_input(x, x.rows(), Some(w))?;
        let active: Vec<usize> = (0..x.rows()).filter(|&i| w[i] > 0.0).collect();
        let d = x.cols();
        let wsum: f64 = active.iter().map(|&i| w[i]).sum();
        let mut mean = vec![0.0; d];
        for &i in &active {
            for (m, v) in mean.iter_mut().zip(x.row(i)) {
                *m += w[i] * v;
            }
        }
        mean.iter_mut().for_each(|m| *m /= wsum);
        let mut scale = vec![0.0; d];
        for &i in &active {
            for ((s, v), m) in scale.iter_mut().zip(x.row(i)).zip(&mean) {
                *s += w[i] * (v - m).powi(2);
            }
        }
        for s in scale.iter_mut() {
            *s = (*s / wsum).sqrt();
            if !(*s > 1e-300) {
                *s = 0.0;
            }
        }
        let sqrt_w: Vec<f64> = active.iter().map(|&i| w[i].sqrt()).collect();
        let a = DMatrix::from_fn(active.len(), d + 1, |r, c| {
            let i = active[r];
            if c == 0 {
                sqrt_w[r]
            } else if scale[c - 1] == 0.0 {
                0.0
            } else {
                sqrt_w[r] * (x.get(i, c - 1) - mean[c - 1]) / scale[c - 1]
            }
        });
        let svd = a.svd(true, true);
        let smax = svd.singular_values.max();
        let tol = smax * (active.len().max(d + 1) as f64) * f64::EPSILON;
        let rank = svd.singular_values.iter().filter(|&&s| s > tol).count();
        let pinv = svd
            .pseudo_inverse(tol)
            .map_err(|e| Error::Training(format!("pseudo-inverse failed: {e}")))?;
        Ok(Self {
            active,
            sqrt_w,
            mean,
            scale,
            pinv,
            rank,
            n: x.rows(),
        })
    }

    pub fn rank(&self) -> usize {
        self.rank
    }

    /// Number of coefficients, intercept included.
    pub fn n_coefficients(&self) -> usize {
        self.mean.len() + 1
    }

    pub fn fit(&self, x: &Matrix, y: &[f64]) -> WlsFit {
        assert_eq!(y.len(), self.n);
        let rhs = DVector::from_iterator(
            self.active.len(),
            self.active.iter().zip(&self.sqrt_w).map(|(&i, sw)| sw * y[i]),
        );
        let beta = &self.pinv * rhs;
        let d = self.mean.len();
        let mut coefficients = vec![0.0; d + 1];
        let mut intercept = beta[0];
        for j in 0..d {
            if self.scale[j] > 0.0 {
                let slope = beta[j + 1] / self.scale[j];
                coefficients[j + 1] = slope;
                intercept -= slope * self.mean[j];
            }
        }
        coefficients[0] = intercept;
        let mut fit = WlsFit {
            coefficients,
            residuals: Vec::new(),
            rank: self.rank,
        };
        fit.residuals = (0..self.n).map(|i| y[i] - fit.predict(x.row(i))).collect();
        fit
    }
}

/// Minimizes `sum_m w_m (y_m - b0 - x_m . b)^2`.
pub fn wls_fit(x: &Matrix, y: &[f64], w: &[f64]) -> Result<WlsFit> {
    check_fit_input(x, y.len(), Some(w))?;
    Ok(WlsSolver::new(x, w)?.fit(x, y))
}
