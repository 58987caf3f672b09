//! Run configuration loaded from TOML.

use std::path::{Path, PathBuf};

use bombus_core::abc::{Method, MethodConfig};
use bombus_core::landscape::CategoryRegistry;
use bombus_core::model::BeeModelConfig;
use bombus_core::obsmodel::PriorSpec;
use bombus_core::study::StudyConfig;
use serde::{Deserialize, Serialize};

use crate::CliError;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SimulateConfig {
    /// Reference-table rows.
    pub rows: usize,
}

impl Default for SimulateConfig {
    fn default() -> Self {
        Self { rows: 10_000 }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct CalibrateConfig {
    /// Observed dataset (`site,year,period,habitat,count` CSV).
    pub observed: Option<PathBuf>,
    pub epsilons: Vec<f64>,
    pub methods: Vec<Method>,
}

impl Default for CalibrateConfig {
    fn default() -> Self {
        Self {
            observed: None,
            epsilons: vec![0.05],
            methods: Method::ALL.to_vec(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct PredictConfig {
    /// Posterior CSV written by `calibrate`.
    pub result: Option<PathBuf>,
    /// Observed dataset for Bayesian p-values.
    pub observed: Option<PathBuf>,
    pub draws: usize,
}

impl Default for PredictConfig {
    fn default() -> Self {
        Self {
            result: None,
            observed: None,
            draws: 200,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct RunConfig {
    pub seed: u64,
    /// Worker threads; 0 uses every core. Never affects outputs.
    pub workers: usize,
    pub output: PathBuf,
    pub model: BeeModelConfig,
    pub simulate: SimulateConfig,
    pub calibrate: CalibrateConfig,
    pub study: StudyConfig,
    pub methods: MethodConfig,
    pub predict: PredictConfig,
}

impl Default for RunConfig {
    fn default() -> Self {
        Self {
            seed: 1,
            workers: 0,
            output: PathBuf::from("run"),
            model: BeeModelConfig::default(),
            simulate: SimulateConfig::default(),
            calibrate: CalibrateConfig::default(),
            study: StudyConfig::default(),
            methods: MethodConfig::default(),
            predict: PredictConfig::default(),
        }
    }
}

fn rebase(base: &Path, p: &mut PathBuf) {
    if p.is_relative() {
        *p = base.join(&*p);
    }
}

impl RunConfig {
    pub fn parse(text: &str) -> Result<Self, CliError> {
        toml::from_str(text).map_err(|e| CliError::Config(e.to_string()))
    }

    /// Loads a config; relative paths are taken from the file's directory.
    pub fn load(path: &Path) -> Result<Self, CliError> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| CliError::Config(format!("cannot read {}: {e}", path.display())))?;
        let mut cfg = Self::parse(&text).map_err(|e| match e {
            CliError::Config(m) => CliError::Config(format!("{}: {m}", path.display())),
            other => other,
        })?;
        let base = path.parent().unwrap_or(Path::new("."));
        rebase(base, &mut cfg.output);
        for p in &mut cfg.model.raster_files {
            rebase(base, p);
        }
        for p in [&mut cfg.calibrate.observed, &mut cfg.predict.result, &mut cfg.predict.observed]
            .into_iter()
            .flatten()
        {
            rebase(base, p);
        }
        Ok(cfg)
    }

    /// Checks everything that can be checked without building the model.
    pub fn validate(&self) -> Result<(), CliError> {
        let bad = |e: bombus_core::Error| CliError::Config(e.to_string());
        self.methods.validate().map_err(bad)?;
        self.model.design.validate().map_err(bad)?;
        if self.simulate.rows == 0 {
            return Err(CliError::Config("simulate.rows must be positive".into()));
        }
        self.study.validate(self.simulate.rows).map_err(bad)?;
        if self.calibrate.methods.is_empty() {
            return Err(CliError::Config("calibrate.methods is empty".into()));
        }
        if let Some(e) = self.calibrate.epsilons.iter().find(|e| !(**e > 0.0 && **e <= 1.0)) {
            return Err(CliError::Config(format!("calibrate.epsilons: {e} is outside (0, 1]")));
        }
        Ok(())
    }

    /// Fills the optional model sections with the values actually used, so
    /// the written snapshot is complete.
    pub fn resolved(&self, periods: usize) -> Self {
        let mut out = self.clone();
        out.model
            .categories
            .get_or_insert_with(CategoryRegistry::default_agricultural);
        out.model.prior.get_or_insert_with(|| PriorSpec::standard(periods));
        out
    }

    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("run config serializes")
    }
}
