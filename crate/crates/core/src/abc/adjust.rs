//! Regression adjustment:
//! `psi* = m(s_obs) + sigma(s_obs) / sigma(s) * (psi - m(s))`.

use super::calibrate::Calibration;
use super::result::ParamPosterior;
use super::support::support_filter;
use crate::mlkit::{Forest, Matrix, NeuralFit};
use crate::rng::{self, stream};

const NONLINEAR_TAG: u64 = 1;
const FOREST_TAG: u64 = 2;

impl Calibration<'_> {
    /// Local linear heteroscedastic: weighted least squares for the mean and
    /// for `log r^2`. Zero residuals make the second fit non-finite, which
    /// is reported as a failure rather than patched.
    pub fn loclh(&self) -> Vec<ParamPosterior> {
        let solver = match self.wls() {
            Ok(s) => s,
            Err(e) => return self.all_failed(&e),
        };
        let warning = (solver.rank() < solver.n_coefficients())
            .then(|| format!("rank-deficient design (rank {}), minimum-norm fit", solver.rank()));
        (0..self.psi_acc.cols())
            .map(|i| {
                let y = self.psi_acc.column(i);
                let mean = solver.fit(&self.x_acc, &y);
                let m_obs = mean.predict(&self.obs);
                let log_r2: Vec<f64> = mean.residuals.iter().map(|r| (r * r).ln()).collect();
                let var = solver.fit(&self.x_acc, &log_r2);
                // Variances are exponentiated before the square root and the
                // ratio is not taken in log space: extrapolated variance fits
                // overflow here and are reported as failures.
                let sd_obs = var.predict(&self.obs).exp().sqrt();
                let adjusted = mean.residuals.iter().zip(&log_r2).zip(&var.residuals).map(|((r, lr), vr)| {
                    let sd = (lr - vr).exp().sqrt();
                    m_obs + sd_obs / sd * r
                });
                self.posterior_from_adjusted(i, adjusted, &self.w_acc).with_warning(warning.clone())
            })
            .collect()
    }

    pub fn locnlh(&self) -> Vec<ParamPosterior> {
        let seed = rng::derive_seed(self.seed, &[stream::NN, NONLINEAR_TAG]);
        match nonlinear_adjust(&self.x_acc, &self.psi_acc, &self.w_acc, &self.obs, &self.cal.config().nn, seed) {
            Ok(adj) => (0..adj.cols())
                .map(|i| self.posterior_from_adjusted(i, adj.column(i).into_iter(), &self.w_acc))
                .collect(),
            Err(e) => self.all_failed(&e),
        }
    }

    /// Nonlinear adjustment, then refit on the rows whose adjusted values lie
    /// inside the estimated support of the stage-one cloud.
    pub fn anlh(&self) -> Vec<ParamPosterior> {
        let cfg = self.cal.config();
        let seed = rng::derive_seed(self.seed, &[stream::NN, NONLINEAR_TAG]);
        let stage1 = match nonlinear_adjust(&self.x_acc, &self.psi_acc, &self.w_acc, &self.obs, &cfg.nn, seed) {
            Ok(a) => a,
            Err(e) => return self.all_failed(&e),
        };
        let keep = support_filter(&stage1, &cfg.support);
        let rows: Vec<usize> = (0..keep.len()).filter(|&r| keep[r]).collect();
        let emit = |adj: &Matrix, w: &[f64], warning: Option<String>| -> Vec<ParamPosterior> {
            (0..adj.cols())
                .map(|i| self.posterior_from_adjusted(i, adj.column(i).into_iter(), w).with_warning(warning.clone()))
                .collect()
        };
        if rows.len() < cfg.support.min_retained {
            let why = format!("support filter kept {} rows, using stage one", rows.len());
            return emit(&stage1, &self.w_acc, Some(why));
        }
        let x = self.x_acc.select_rows(&rows);
        let psi = self.psi_acc.select_rows(&rows);
        let w: Vec<f64> = rows.iter().map(|&r| self.w_acc[r]).collect();
        match nonlinear_adjust(&x, &psi, &w, &self.obs, &cfg.nn, seed) {
            Ok(adj) => emit(&adj, &w, None),
            Err(e) => self.all_failed(&e),
        }
    }

    /// Forest mean regression with out-of-bag residuals, homoscedastic.
    pub fn rfa(&self) -> Vec<ParamPosterior> {
        let cfg = self.cal.config();
        let b = self.binned();
        (0..self.psi_acc.cols())
            .map(|i| {
                let y = self.psi_acc.column(i);
                let seed = rng::derive_seed(self.seed, &[stream::FOREST, FOREST_TAG, i as u64]);
                let forest = match Forest::fit_binned(b, &y, None, &cfg.forest, seed) {
                    Ok(f) => f,
                    Err(e) => return ParamPosterior::failure(&self.names()[i], &e.to_string()),
                };
                let m_obs = forest.predict_mean(&self.obs);
                let oob = forest.oob_predictions();
                let adjusted = (0..y.len()).map(|r| {
                    let m = if oob[r].is_finite() {
                        oob[r]
                    } else {
                        forest.predict_mean(self.x_acc.row(r))
                    };
                    m_obs + (y[r] - m)
                });
                self.posterior_from_adjusted(i, adjusted, &self.w_acc)
            })
            .collect()
    }
}

/// Neural mean and log-variance networks, returning adjusted values for every
/// row. Residual variances are floored relative to their mean; a parameter
/// with identically zero residuals keeps a spread ratio of one.
fn nonlinear_adjust(
    x: &Matrix,
    psi: &Matrix,
    w: &[f64],
    obs: &[f64],
    nn: &crate::mlkit::NnParams,
    seed: u64,
) -> std::result::Result<Matrix, String> {
    let mean_net = NeuralFit::fit(x, psi, w, nn, seed).map_err(|e| e.to_string())?;
    let fitted = mean_net.predict_rows(x);
    let m_obs = mean_net.predict(obs);
    let (n, p) = (psi.rows(), psi.cols());
    let wsum: f64 = w.iter().sum();
    let mut resid = Matrix::zeros(n, p);
    for r in 0..n {
        for k in 0..p {
            resid.row_mut(r)[k] = psi.get(r, k) - fitted.get(r, k);
        }
    }
    let mean_sq: Vec<f64> = (0..p)
        .map(|k| (0..n).map(|r| w[r] * resid.get(r, k).powi(2)).sum::<f64>() / wsum)
        .collect();
    let mut log_r2 = Matrix::zeros(n, p);
    for r in 0..n {
        for k in 0..p {
            let floor = 1e-12 * mean_sq[k];
            log_r2.row_mut(r)[k] = if mean_sq[k] > 0.0 {
                resid.get(r, k).powi(2).max(floor).ln()
            } else {
                0.0
            };
        }
    }
    let var_net = NeuralFit::fit(x, &log_r2, w, nn, rng::derive_seed(seed, &[1])).map_err(|e| e.to_string())?;
    let ls_fit = var_net.predict_rows(x);
    let ls_obs = var_net.predict(obs);
    let mut out = Matrix::zeros(n, p);
    for r in 0..n {
        for k in 0..p {
            let ratio = if mean_sq[k] > 0.0 {
                (0.5 * (ls_obs[k] - ls_fit.get(r, k))).exp()
            } else {
                1.0
            };
            out.row_mut(r)[k] = m_obs[k] + ratio * resid.get(r, k);
        }
    }
    Ok(out)
}
