//! Direct posterior-quantile regression.

use rayon::prelude::*;

use super::calibrate::Calibration;
use super::result::{ParamPosterior, PROBS};
use super::WeightedForestMode;
use crate::mlkit::{BoostedModel, Forest, Loss};
use crate::rng::{self, stream};

const WEIGHTED_TAG: u64 = 3;
const FULL_TAG: u64 = 4;
const POINT_TAG: u64 = 5;

impl Calibration<'_> {
    /// Quantile forests on the accepted rows.
    pub fn wqrf(&self) -> Vec<ParamPosterior> {
        let cfg = self.cal.config();
        let b = self.binned();
        let weights = match cfg.wqrf_mode {
            WeightedForestMode::Bootstrap => Some(self.w_acc.as_slice()),
            WeightedForestMode::Subset => None,
        };
        (0..self.psi_acc.cols())
            .map(|i| {
                let y: Vec<f64> = self.accepted.iter().map(|&r| self.cal.table().params.get(r, i)).collect();
                let seed = rng::derive_seed(self.seed, &[stream::FOREST, WEIGHTED_TAG, i as u64]);
                match Forest::fit_binned(b, &y, weights, &cfg.forest, seed) {
                    Ok(f) => self.forest_posterior(i, &f),
                    Err(e) => ParamPosterior::failure(&self.names()[i], &e.to_string()),
                }
            })
            .collect()
    }

    /// Quantile forests on the whole table, fitted once per calibrator.
    pub fn uwqrf(&self) -> Vec<ParamPosterior> {
        let cal = self.cal;
        let forests = cal.full_forests.get_or_init(|| {
            let table = cal.table();
            let b = crate::mlkit::BinnedFeatures::new(cal.scaled());
            (0..table.n_params())
                .map(|i| {
                    let seed = rng::derive_seed(cal.seed, &[stream::FOREST, FULL_TAG, i as u64]);
                    Forest::fit_binned(&b, &table.params.column(i), None, &cal.config().forest, seed)
                })
                .collect::<crate::Result<Vec<_>>>()
                .map_err(|e| e.to_string())
        });
        match forests {
            Ok(fs) => fs.iter().enumerate().map(|(i, f)| self.forest_posterior(i, f)).collect(),
            Err(e) => self.all_failed(e),
        }
    }

    fn forest_posterior(&self, i: usize, f: &Forest) -> ParamPosterior {
        let q = f.predict_quantiles(&self.obs, &PROBS);
        ParamPosterior::from_quantiles(&self.names()[i], [q[0], q[1], q[2]], f.predict_mean(&self.obs))
    }

    /// Pinball boosting for the three quantiles plus an L1 or L2 point fit.
    pub fn qgbm(&self, l2: bool) -> Vec<ParamPosterior> {
        let cfg = self.cal.config();
        let b = self.binned();
        let p = self.psi_acc.cols();
        let raw: Vec<Vec<f64>> = (0..p)
            .map(|i| self.accepted.iter().map(|&r| self.cal.table().params.get(r, i)).collect())
            .collect();
        let quantile_fits = self.pinball.get_or_init(|| {
            (0..p * 3)
                .into_par_iter()
                .map(|job| {
                    let (i, k) = (job / 3, job % 3);
                    let seed = rng::derive_seed(self.seed, &[stream::GBM, i as u64, k as u64]);
                    BoostedModel::fit_binned(b, &raw[i], Some(&self.w_acc), Loss::Pinball { alpha: PROBS[k] }, &cfg.gbm, seed)
                        .map_err(|e| e.to_string())
                })
                .collect::<Vec<_>>()
                .chunks(3)
                .map(|c| match c {
                    [Ok(a), Ok(m), Ok(z)] => Ok([a.clone(), m.clone(), z.clone()]),
                    _ => Err(c.iter().find_map(|r| r.as_ref().err().cloned()).unwrap_or_default()),
                })
                .collect()
        });
        let loss = if l2 { Loss::L2 } else { Loss::L1 };
        (0..p)
            .map(|i| {
                let name = &self.names()[i];
                let models = match &quantile_fits[i] {
                    Ok(m) => m,
                    Err(e) => return ParamPosterior::failure(name, e),
                };
                let seed = rng::derive_seed(self.seed, &[stream::GBM, i as u64, POINT_TAG]);
                let point = match BoostedModel::fit_binned(b, &raw[i], Some(&self.w_acc), loss, &cfg.gbm, seed) {
                    Ok(m) => m.predict(&self.obs),
                    Err(e) => return ParamPosterior::failure(name, &e.to_string()),
                };
                let q = [models[0].predict(&self.obs), models[1].predict(&self.obs), models[2].predict(&self.obs)];
                ParamPosterior::from_quantiles(name, q, point)
            })
            .collect()
    }
}
