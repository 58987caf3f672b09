//! Priors, survey designs and the Poisson–lognormal observation model.
//!
//! A visit of site `i` in year `j` and period `k` yields a count
//! `y ~ Poisson(c_i * lambda)` with
//! `log lambda = log nu_i + beta_1 + beta_k [k >= 2] + eps`, `eps ~ N(0, sigma2)`.

mod design;
pub mod oracle;
mod prior;

use std::fs;
use std::path::Path;

use rand::Rng;
use rand_distr::{Distribution, Poisson, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::cpf::CpfParams;
use crate::error::{Error, Result};
use crate::landscape::CategoryId;
use crate::rng::{self, stream};

pub use design::{DesignStudy, SurveyDesign, SurveySite, SyntheticDesignConfig, Visit};
pub use prior::{sample_prior, PriorLaw, PriorSpec};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ObsParams {
    /// `beta_1` is the period-1 baseline; `beta_k` (k >= 2) are offsets.
    pub beta: Vec<f64>,
    pub sigma2: f64,
}

impl ObsParams {
    /// Log-intensity shift of period `k` (1-based).
    pub fn period_effect(&self, k: usize) -> f64 {
        if k >= 2 {
            self.beta[0] + self.beta[k - 1]
        } else {
            self.beta[0]
        }
    }
}

/// Full parameter vector `(tau0, f0, a, b, beta_1..beta_K, sigma2)`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ParamVector {
    pub theta: CpfParams,
    pub omega: ObsParams,
}

impl ParamVector {
    pub fn periods(&self) -> usize {
        self.omega.beta.len()
    }

    pub fn dim(&self) -> usize {
        4 + self.periods() + 1
    }

    pub fn names(periods: usize) -> Vec<String> {
        let mut names: Vec<String> = ["tau0", "f0", "a", "b"].map(String::from).to_vec();
        names.extend((1..=periods).map(|k| format!("beta{k}")));
        names.push("sigma2".into());
        names
    }

    pub fn to_vec(&self) -> Vec<f64> {
        let t = &self.theta;
        let mut v = vec![t.tau0, t.f0, t.a, t.b];
        v.extend_from_slice(&self.omega.beta);
        v.push(self.omega.sigma2);
        v
    }

    /// Inverse of [`ParamVector::to_vec`]; the period count is implied by the
    /// length.
    pub fn from_slice(v: &[f64]) -> Result<Self> {
        if v.len() < 6 {
            return Err(Error::Input(format!("parameter vector too short: {}", v.len())));
        }
        let psi = Self {
            theta: CpfParams {
                tau0: v[0],
                f0: v[1],
                a: v[2],
                b: v[3],
            },
            omega: ObsParams {
                beta: v[4..v.len() - 1].to_vec(),
                sigma2: v[v.len() - 1],
            },
        };
        Ok(psi)
    }

    pub fn validate(&self) -> Result<()> {
        self.theta.validate()?;
        if !(self.omega.sigma2 > 0.0 && self.omega.sigma2.is_finite()) {
            return Err(Error::Input(format!("sigma2 must be positive, got {}", self.omega.sigma2)));
        }
        if self.omega.beta.is_empty() || self.omega.beta.iter().any(|b| !b.is_finite()) {
            return Err(Error::Input("beta must be finite and non-empty".into()));
        }
        Ok(())
    }
}

/// One observed count.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct Record {
    pub site: usize,
    pub year: i32,
    pub period: usize,
    pub habitat: CategoryId,
    pub count: u64,
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct Dataset {
    pub records: Vec<Record>,
}

const DATASET_HEADER: &str = "site,year,period,habitat,count";

impl Dataset {
    pub fn validate(&self) -> Result<()> {
        let mut keys = std::collections::HashSet::new();
        for r in &self.records {
            if !keys.insert((r.site, r.year, r.period)) {
                return Err(Error::Input(format!(
                    "duplicate record for site {} year {} period {}",
                    r.site, r.year, r.period
                )));
            }
        }
        Ok(())
    }

    pub fn to_csv(&self) -> String {
        let mut out = String::from(DATASET_HEADER);
        out.push('\n');
        for r in &self.records {
            out.push_str(&format!(
                "{},{},{},{},{}\n",
                r.site, r.year, r.period, r.habitat, r.count
            ));
        }
        out
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        fs::write(path, self.to_csv())?;
        Ok(())
    }

    pub fn parse(path: &Path, text: &str) -> Result<Self> {
        let mut lines = text.lines().enumerate();
        match lines.next() {
            Some((_, h)) if h.trim() == DATASET_HEADER => {}
            _ => return Err(Error::parse(path, 1, format!("expected header {DATASET_HEADER:?}"))),
        }
        let mut records = Vec::new();
        for (no, line) in lines {
            if line.trim().is_empty() {
                continue;
            }
            let f: Vec<&str> = line.split(',').map(str::trim).collect();
            if f.len() != 5 {
                return Err(Error::parse(path, no + 1, "expected 5 fields"));
            }
            let bad = |what: &str| Error::parse(path, no + 1, format!("bad {what}"));
            records.push(Record {
                site: f[0].parse().map_err(|_| bad("site"))?,
                year: f[1].parse().map_err(|_| bad("year"))?,
                period: f[2].parse().map_err(|_| bad("period"))?,
                habitat: f[3].parse().map_err(|_| bad("habitat"))?,
                count: f[4].parse().map_err(|_| bad("count"))?,
            });
        }
        let ds = Self { records };
        ds.validate()?;
        Ok(ds)
    }

    pub fn load(path: &Path) -> Result<Self> {
        Self::parse(path, &fs::read_to_string(path)?)
    }
}

/// Expected counts above this are saturated before the Poisson draw.
pub const MAX_POISSON_MEAN: f64 = 1e15;

/// Draws one count. A zero intensity yields zero bees.
pub fn sample_count(
    exposure: f64,
    nu: f64,
    log_shift: f64,
    sigma2: f64,
    rng: &mut impl Rng,
) -> u64 {
    if nu <= 0.0 {
        return 0;
    }
    let eps: f64 = rng.sample(StandardNormal);
    let log_mean = exposure.ln() + nu.ln() + log_shift + sigma2.sqrt() * eps;
    let mean = log_mean.exp().min(MAX_POISSON_MEAN);
    if !(mean > 0.0) {
        return 0;
    }
    Poisson::new(mean)
        .expect("mean is positive and bounded")
        .sample(rng) as u64
}

/// Simulates one count per design visit. `intensities[v]` is the site
/// intensity for `design.visits[v]`. Each visit draws from its own stream
/// keyed by `(site, year, period)`, so visit order never matters.
pub fn simulate_dataset(
    psi: &ParamVector,
    design: &SurveyDesign,
    intensities: &[f64],
    seed: u64,
) -> Dataset {
    assert_eq!(intensities.len(), design.visits.len());
    let records = design
        .visits
        .iter()
        .zip(intensities)
        .map(|(v, &nu)| {
            let site = &design.sites[v.site];
            let mut rng = rng::rng_for(
                seed,
                &[stream::DATA, v.site as u64, v.year as u64, v.period as u64],
            );
            Record {
                site: v.site,
                year: v.year,
                period: v.period,
                habitat: site.habitat,
                count: sample_count(
                    site.exposure,
                    nu,
                    psi.omega.period_effect(v.period),
                    psi.omega.sigma2,
                    &mut rng,
                ),
            }
        })
        .collect();
    Dataset { records }
}
