//! ABC calibration over a reference table.
//!
//! Every method starts from the same kernel-weighted neighbourhood of the
//! observed summary vector and differs in how it turns it into a posterior:
//! plain rejection, regression adjustment (local linear, neural, adaptive
//! neural, random forest) or direct quantile regression (forests, boosting).

mod adjust;
mod calibrate;
mod quantile;
pub mod result;
pub mod support;
pub mod table;

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::mlkit::{ForestParams, GbmParams, NnParams};

pub use calibrate::{run_method, Calibration, Calibrator};
pub use result::{ParamPosterior, PosteriorResult, WeightedSamples, PROBS};
pub use support::SupportParams;
pub use table::ReferenceTable;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(try_from = "String", into = "String")]
pub enum Method {
    Rejection,
    LocLh,
    LocNlh,
    Anlh,
    Rfa,
    WqRf,
    UwqRf,
    QGbmL1,
    QGbmL2,
}

impl Method {
    pub const ALL: [Method; 9] = [
        Method::Rejection,
        Method::LocLh,
        Method::LocNlh,
        Method::Anlh,
        Method::Rfa,
        Method::WqRf,
        Method::UwqRf,
        Method::QGbmL1,
        Method::QGbmL2,
    ];

    pub fn tag(self) -> &'static str {
        match self {
            Method::Rejection => "rej",
            Method::LocLh => "loclh",
            Method::LocNlh => "locnlh",
            Method::Anlh => "anlh",
            Method::Rfa => "rfa",
            Method::WqRf => "wqrf",
            Method::UwqRf => "uwqrf",
            Method::QGbmL1 => "qgbm_l1",
            Method::QGbmL2 => "qgbm_l2",
        }
    }

    /// Whether the method depends on the acceptance fraction.
    pub fn uses_epsilon(self) -> bool {
        self != Method::UwqRf
    }

    /// Label including the acceptance fraction, e.g. `rej(5%)`.
    pub fn label(self, epsilon: f64) -> String {
        if self.uses_epsilon() {
            format!("{}({}%)", self.tag(), (epsilon * 1e8).round() / 1e6)
        } else {
            self.tag().to_string()
        }
    }
}

impl fmt::Display for Method {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.tag())
    }
}

impl FromStr for Method {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Method::ALL
            .into_iter()
            .find(|m| m.tag() == s)
            .ok_or_else(|| Error::Config(format!("unknown method {s:?}")))
    }
}

impl TryFrom<String> for Method {
    type Error = Error;

    fn try_from(s: String) -> Result<Self> {
        s.parse()
    }
}

impl From<Method> for String {
    fn from(m: Method) -> Self {
        m.tag().into()
    }
}

/// How kernel weights enter the weighted quantile forest.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum WeightedForestMode {
    /// Accepted rows, bootstrap drawn with the kernel weights.
    Bootstrap,
    /// Accepted rows, uniform bootstrap.
    Subset,
}

/// Invertible map applied to a parameter before regression adjustment.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", tag = "kind")]
pub enum Transform {
    Identity,
    Log,
    Logit { low: f64, high: f64 },
}

impl Transform {
    pub fn forward(self, x: f64) -> f64 {
        match self {
            Transform::Identity => x,
            Transform::Log => x.ln(),
            Transform::Logit { low, high } => {
                let u = (x - low) / (high - low);
                (u / (1.0 - u)).ln()
            }
        }
    }

    pub fn inverse(self, z: f64) -> f64 {
        match self {
            Transform::Identity => z,
            Transform::Log => z.exp(),
            Transform::Logit { low, high } => low + (high - low) / (1.0 + (-z).exp()),
        }
    }

    /// Natural transform for a support interval.
    pub fn for_support(low: f64, high: f64) -> Self {
        match (low.is_finite(), high.is_finite()) {
            (true, true) => Transform::Logit { low, high },
            (true, false) if low == 0.0 => Transform::Log,
            _ => Transform::Identity,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct MethodConfig {
    pub forest: ForestParams,
    pub gbm: GbmParams,
    pub nn: NnParams,
    pub support: SupportParams,
    pub wqrf_mode: WeightedForestMode,
    /// Adjust parameters on transformed scales (log for positive, logit for
    /// bounded). Off by default.
    pub transform: bool,
}

impl Default for MethodConfig {
    fn default() -> Self {
        Self {
            forest: ForestParams::default(),
            gbm: GbmParams::default(),
            nn: NnParams::default(),
            support: SupportParams::default(),
            wqrf_mode: WeightedForestMode::Bootstrap,
            transform: false,
        }
    }
}

impl MethodConfig {
    pub fn validate(&self) -> Result<()> {
        self.gbm.validate()?;
        self.support.validate()?;
        if self.forest.trees == 0 || self.forest.min_leaf == 0 {
            return Err(Error::Config("forest needs trees >= 1 and min_leaf >= 1".into()));
        }
        if self.nn.hidden == 0 || self.nn.epochs == 0 || !(self.nn.learning_rate > 0.0) {
            return Err(Error::Config("network needs hidden >= 1, epochs >= 1 and a positive rate".into()));
        }
        Ok(())
    }
}
