use std::fmt::Write as _;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::stats;

pub const PROBS: [f64; 3] = [0.025, 0.5, 0.975];

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct WeightedSamples {
    pub values: Vec<f64>,
    /// Sum to one.
    pub weights: Vec<f64>,
}

/// Posterior summary of one parameter.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ParamPosterior {
    pub name: String,
    /// 2.5%, 50% and 97.5% quantiles.
    pub quantiles: [f64; 3],
    /// Posterior mean or the method's point estimate; NaN when undefined.
    pub mean: f64,
    pub samples: Option<WeightedSamples>,
    pub failed: bool,
    /// Set when the output is usable but a repair or fallback was applied.
    pub warning: Option<String>,
}

impl ParamPosterior {
    pub fn from_samples(name: &str, values: Vec<f64>, weights: &[f64]) -> Self {
        let total: f64 = weights.iter().sum();
        let weights: Vec<f64> = weights.iter().map(|w| w / total).collect();
        let finite = values.iter().all(|v| v.is_finite()) && total > 0.0 && total.is_finite();
        if !finite {
            return Self::failure(name, "non-finite posterior samples");
        }
        let q = stats::weighted_quantiles(&values, &weights, &PROBS);
        let mean = stats::weighted_mean(&values, &weights);
        Self {
            name: name.into(),
            quantiles: [q[0], q[1], q[2]],
            mean,
            samples: Some(WeightedSamples { values, weights }),
            failed: false,
            warning: None,
        }
    }

    /// Sorts a crossing triplet and notes the repair.
    pub fn from_quantiles(name: &str, q: [f64; 3], point: f64) -> Self {
        if q.iter().chain([&point]).any(|v| !v.is_finite()) {
            return Self::failure(name, "non-finite quantile estimate");
        }
        let mut sorted = q;
        sorted.sort_by(f64::total_cmp);
        let warning = (sorted != q).then(|| "quantile crossing repaired by sorting".to_string());
        Self {
            name: name.into(),
            quantiles: sorted,
            mean: point,
            samples: None,
            failed: false,
            warning,
        }
    }

    pub fn failure(name: &str, why: &str) -> Self {
        Self {
            name: name.into(),
            quantiles: [f64::NAN; 3],
            mean: f64::NAN,
            samples: None,
            failed: true,
            warning: Some(why.into()),
        }
    }

    pub fn with_warning(mut self, why: Option<String>) -> Self {
        if why.is_some() && self.warning.is_none() {
            self.warning = why;
        }
        self
    }

    pub fn median(&self) -> f64 {
        self.quantiles[1]
    }

    pub fn covers(&self, truth: f64) -> bool {
        self.quantiles[0] <= truth && truth <= self.quantiles[2]
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PosteriorResult {
    pub method: String,
    pub params: Vec<ParamPosterior>,
}

const RESULT_HEADER: &str = "parameter,method,q025,q50,q975,mean,failed";

impl PosteriorResult {
    pub fn any_failed(&self) -> bool {
        self.params.iter().any(|p| p.failed)
    }

    pub fn get(&self, name: &str) -> Option<&ParamPosterior> {
        self.params.iter().find(|p| p.name == name)
    }

    pub fn to_csv(&self) -> String {
        let mut out = String::from(RESULT_HEADER);
        out.push('\n');
        for p in &self.params {
            let [a, b, c] = p.quantiles;
            writeln!(
                out,
                "{},{},{a:?},{b:?},{c:?},{:?},{}",
                p.name, self.method, p.mean, u8::from(p.failed)
            )
            .unwrap();
        }
        out
    }

    /// Parses the CSV written by [`PosteriorResult::to_csv`]; samples are not
    /// stored there, so loaded results are quantile-only.
    pub fn from_csv(text: &str) -> Result<Self> {
        let mut lines = text.lines();
        if lines.next().map(str::trim) != Some(RESULT_HEADER) {
            return Err(Error::Input("posterior CSV has an unexpected header".into()));
        }
        let mut method = None;
        let mut params = Vec::new();
        for (no, line) in lines.enumerate() {
            if line.trim().is_empty() {
                continue;
            }
            let f: Vec<&str> = line.split(',').collect();
            let bad = || Error::Input(format!("posterior CSV line {}: malformed", no + 2));
            if f.len() != 7 {
                return Err(bad());
            }
            let num = |s: &str| s.parse::<f64>().map_err(|_| bad());
            method.get_or_insert_with(|| f[1].to_string());
            params.push(ParamPosterior {
                name: f[0].into(),
                quantiles: [num(f[2])?, num(f[3])?, num(f[4])?],
                mean: num(f[5])?,
                samples: None,
                failed: f[6] == "1",
                warning: None,
            });
        }
        Ok(Self {
            method: method.unwrap_or_default(),
            params,
        })
    }
}
