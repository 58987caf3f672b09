use std::sync::OnceLock;

use rayon::prelude::*;

use super::result::{ParamPosterior, PosteriorResult};
use super::table::ReferenceTable;
use super::{Method, MethodConfig, Transform};
use crate::error::{Error, Result};
use crate::mlkit::{BinnedFeatures, BoostedModel, Forest, Matrix, WlsSolver};
use crate::sumstats::{kernel_weights, KernelWeights, Scaler};

/// A reference table prepared for repeated calibrations: statistics are
/// scaled once and table-wide models are fitted on first use.
pub struct Calibrator {
    table: ReferenceTable,
    config: MethodConfig,
    scaler: Scaler,
    scaled: Matrix,
    transforms: Vec<Transform>,
    pub(super) full_forests: OnceLock<std::result::Result<Vec<Forest>, String>>,
    pub(super) seed: u64,
}

impl Calibrator {
    pub fn new(table: ReferenceTable, config: MethodConfig, seed: u64) -> Result<Self> {
        table.validate()?;
        config.validate()?;
        let rows: Vec<Vec<f64>> = table.stats.iter_rows().map(<[f64]>::to_vec).collect();
        let scaler = Scaler::fit(&rows)?;
        let scaled = Matrix::from_rows(&rows.iter().map(|r| scaler.scale(r)).collect::<Vec<_>>());
        let transforms = vec![Transform::Identity; table.n_params()];
        Ok(Self {
            table,
            config,
            scaler,
            scaled,
            transforms,
            full_forests: OnceLock::new(),
            seed,
        })
    }

    /// Per-parameter transforms used when `config.transform` is set.
    pub fn with_transforms(mut self, transforms: Vec<Transform>) -> Result<Self> {
        if transforms.len() != self.table.n_params() {
            return Err(Error::Config("one transform per parameter is required".into()));
        }
        self.transforms = transforms;
        Ok(self)
    }

    pub fn table(&self) -> &ReferenceTable {
        &self.table
    }

    pub fn config(&self) -> &MethodConfig {
        &self.config
    }

    pub fn scaler(&self) -> &Scaler {
        &self.scaler
    }

    pub(super) fn scaled(&self) -> &Matrix {
        &self.scaled
    }

    pub(super) fn transform(&self, i: usize) -> Transform {
        if self.config.transform {
            self.transforms[i]
        } else {
            Transform::Identity
        }
    }

    /// Kernel neighbourhood of an observed (raw) summary vector. `seed`
    /// drives the stochastic learners of this calibration.
    pub fn prepare(&self, observed: &[f64], epsilon: f64, seed: u64) -> Result<Calibration<'_>> {
        if observed.len() != self.table.n_stats() {
            return Err(Error::Input(format!(
                "observed vector has {} statistics, table has {}",
                observed.len(),
                self.table.n_stats()
            )));
        }
        if observed.iter().any(|v| !v.is_finite()) {
            return Err(Error::Input("observed statistics must be finite".into()));
        }
        let obs = self.scaler.scale(observed);
        let stats = &self.table.stats;
        let dist: Vec<f64> = (0..stats.rows())
            .into_par_iter()
            .map(|i| self.scaler.distance(stats.row(i), observed))
            .collect();
        let kernel = kernel_weights(&dist, epsilon)?;
        let accepted = kernel.support();
        let w_acc: Vec<f64> = accepted.iter().map(|&i| kernel.weights[i]).collect();
        let x_acc = self.scaled.select_rows(&accepted);
        let p = self.table.n_params();
        let mut psi_acc = Matrix::zeros(accepted.len(), p);
        for (r, &i) in accepted.iter().enumerate() {
            for k in 0..p {
                psi_acc.row_mut(r)[k] = self.transform(k).forward(self.table.params.get(i, k));
            }
        }
        Ok(Calibration {
            cal: self,
            obs,
            epsilon,
            seed,
            kernel,
            accepted,
            x_acc,
            w_acc,
            psi_acc,
            binned: OnceLock::new(),
            wls: OnceLock::new(),
            pinball: OnceLock::new(),
        })
    }

    pub fn run(&self, method: Method, observed: &[f64], epsilon: f64) -> Result<PosteriorResult> {
        Ok(self.prepare(observed, epsilon, self.seed)?.run(method))
    }
}

/// One observed vector against one table at one acceptance fraction.
pub struct Calibration<'a> {
    pub(super) cal: &'a Calibrator,
    /// Scaled observed statistics.
    pub(super) obs: Vec<f64>,
    pub epsilon: f64,
    pub(super) seed: u64,
    pub kernel: KernelWeights,
    /// Table rows with positive kernel weight.
    pub accepted: Vec<usize>,
    pub(super) x_acc: Matrix,
    pub(super) w_acc: Vec<f64>,
    /// Accepted parameters on the adjustment scale.
    pub(super) psi_acc: Matrix,
    pub(super) binned: OnceLock<BinnedFeatures>,
    pub(super) wls: OnceLock<std::result::Result<WlsSolver, String>>,
    #[allow(clippy::type_complexity)]
    pub(super) pinball: OnceLock<Vec<std::result::Result<[BoostedModel; 3], String>>>,
}

impl Calibration<'_> {
    pub fn names(&self) -> &[String] {
        &self.cal.table.param_names
    }

    pub(super) fn binned(&self) -> &BinnedFeatures {
        self.binned.get_or_init(|| BinnedFeatures::new(&self.x_acc))
    }

    pub(super) fn wls(&self) -> std::result::Result<&WlsSolver, String> {
        self.wls
            .get_or_init(|| WlsSolver::new(&self.x_acc, &self.w_acc).map_err(|e| e.to_string()))
            .as_ref()
            .map_err(Clone::clone)
    }

    pub(super) fn all_failed(&self, why: &str) -> Vec<ParamPosterior> {
        self.names().iter().map(|n| ParamPosterior::failure(n, why)).collect()
    }

    /// Posterior from adjusted samples on the transformed scale.
    pub(super) fn posterior_from_adjusted(&self, i: usize, values: impl Iterator<Item = f64>, weights: &[f64]) -> ParamPosterior {
        let t = self.cal.transform(i);
        let v: Vec<f64> = values.map(|z| t.inverse(z)).collect();
        ParamPosterior::from_samples(&self.names()[i], v, weights)
    }

    pub fn rejection(&self) -> Vec<ParamPosterior> {
        let table = &self.cal.table;
        (0..table.n_params())
            .map(|k| {
                let v = self.accepted.iter().map(|&i| table.params.get(i, k)).collect();
                ParamPosterior::from_samples(&table.param_names[k], v, &self.w_acc)
            })
            .collect()
    }

    /// Runs one method; numerical trouble is reported through per-parameter
    /// failure flags, never as an error.
    pub fn run(&self, method: Method) -> PosteriorResult {
        let params = match method {
            Method::Rejection => self.rejection(),
            Method::LocLh => self.loclh(),
            Method::LocNlh => self.locnlh(),
            Method::Anlh => self.anlh(),
            Method::Rfa => self.rfa(),
            Method::WqRf => self.wqrf(),
            Method::UwqRf => self.uwqrf(),
            Method::QGbmL1 => self.qgbm(false),
            Method::QGbmL2 => self.qgbm(true),
        };
        PosteriorResult {
            method: method.label(self.epsilon),
            params,
        }
    }
}

/// One-shot calibration: scales the table, weights it and runs `method`.
pub fn run_method(
    method: Method,
    table: &ReferenceTable,
    observed: &[f64],
    epsilon: f64,
    config: &MethodConfig,
    seed: u64,
) -> Result<PosteriorResult> {
    Calibrator::new(table.clone(), config.clone(), seed)?.run(method, observed, epsilon)
}
