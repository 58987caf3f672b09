use rand::Rng;
use rand_distr::{Distribution, Gamma, StandardNormal};
use serde::{Deserialize, Serialize};
use statrs::function::gamma::gamma_ur;

use super::{ObsParams, ParamVector};
use crate::cpf::CpfParams;
use crate::error::{Error, Result};
use crate::rng::{self, stream};
use crate::stats::normal_cdf;

/// Marginal prior law of one parameter.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", tag = "law", deny_unknown_fields)]
pub enum PriorLaw {
    /// `exp(N(meanlog, sdlog^2))`, optionally truncated to `(0, upper]`.
    LogNormal {
        meanlog: f64,
        sdlog: f64,
        #[serde(default)]
        upper: Option<f64>,
    },
    Uniform {
        low: f64,
        high: f64,
    },
    /// Parameterized by variance, as in `N(0, 100)`.
    Normal {
        mean: f64,
        variance: f64,
    },
    InverseGamma {
        shape: f64,
        scale: f64,
    },
}

impl PriorLaw {
    pub fn validate(&self) -> Result<()> {
        let ok = match *self {
            PriorLaw::LogNormal { sdlog, upper, .. } => {
                sdlog > 0.0 && upper.is_none_or(|u| u > 0.0)
            }
            PriorLaw::Uniform { low, high } => low < high,
            PriorLaw::Normal { variance, .. } => variance > 0.0,
            PriorLaw::InverseGamma { shape, scale } => shape > 0.0 && scale > 0.0,
        };
        if ok {
            Ok(())
        } else {
            Err(Error::Config(format!("invalid prior {self:?}")))
        }
    }

    pub fn sample(&self, rng: &mut impl Rng) -> f64 {
        match *self {
            PriorLaw::LogNormal {
                meanlog,
                sdlog,
                upper,
            } => loop {
                let z: f64 = rng.sample(StandardNormal);
                let x = (meanlog + sdlog * z).exp();
                if upper.is_none_or(|u| x <= u) {
                    break x;
                }
            },
            PriorLaw::Uniform { low, high } => low + (high - low) * rng.random::<f64>(),
            PriorLaw::Normal { mean, variance } => {
                let z: f64 = rng.sample(StandardNormal);
                mean + variance.sqrt() * z
            }
            PriorLaw::InverseGamma { shape, scale } => {
                let g = Gamma::new(shape, 1.0).expect("validated shape").sample(rng);
                scale / g
            }
        }
    }

    pub fn cdf(&self, x: f64) -> f64 {
        match *self {
            PriorLaw::LogNormal {
                meanlog,
                sdlog,
                upper,
            } => {
                if x <= 0.0 {
                    return 0.0;
                }
                let f = |v: f64| normal_cdf((v.ln() - meanlog) / sdlog);
                match upper {
                    Some(u) if x >= u => 1.0,
                    Some(u) => f(x) / f(u),
                    None => f(x),
                }
            }
            PriorLaw::Uniform { low, high } => ((x - low) / (high - low)).clamp(0.0, 1.0),
            PriorLaw::Normal { mean, variance } => normal_cdf((x - mean) / variance.sqrt()),
            PriorLaw::InverseGamma { shape, scale } => {
                if x <= 0.0 {
                    0.0
                } else {
                    gamma_ur(shape, scale / x)
                }
            }
        }
    }

    /// Closed support interval.
    pub fn support(&self) -> (f64, f64) {
        match *self {
            PriorLaw::LogNormal { upper, .. } => (0.0, upper.unwrap_or(f64::INFINITY)),
            PriorLaw::Uniform { low, high } => (low, high),
            PriorLaw::Normal { .. } => (f64::NEG_INFINITY, f64::INFINITY),
            PriorLaw::InverseGamma { .. } => (0.0, f64::INFINITY),
        }
    }
}

/// Independent priors over `(tau0, f0, a, b, beta_1..beta_K, sigma2)`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PriorSpec {
    pub periods: usize,
    pub tau0: PriorLaw,
    pub f0: PriorLaw,
    pub a: PriorLaw,
    pub b: PriorLaw,
    pub beta: PriorLaw,
    pub sigma2: PriorLaw,
}

impl PriorSpec {
    pub fn standard(periods: usize) -> Self {
        Self {
            periods,
            tau0: PriorLaw::LogNormal {
                meanlog: 1000f64.ln(),
                sdlog: 1.0,
                upper: Some(1000.0),
            },
            f0: PriorLaw::LogNormal {
                meanlog: 0.1f64.ln(),
                sdlog: 1.0,
                upper: None,
            },
            a: PriorLaw::Uniform {
                low: 100.0,
                high: 1000.0,
            },
            b: PriorLaw::Uniform {
                low: 100.0,
                high: 1000.0,
            },
            beta: PriorLaw::Normal {
                mean: 0.0,
                variance: 100.0,
            },
            sigma2: PriorLaw::InverseGamma {
                shape: 1.0,
                scale: 1.0,
            },
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.periods == 0 {
            return Err(Error::Config("prior needs at least one period".into()));
        }
        for law in self.marginals() {
            law.validate()?;
        }
        Ok(())
    }

    pub fn dim(&self) -> usize {
        4 + self.periods + 1
    }

    /// Marginal law of each coordinate, in parameter-vector order.
    pub fn marginals(&self) -> Vec<PriorLaw> {
        let mut v = vec![self.tau0, self.f0, self.a, self.b];
        v.extend(std::iter::repeat_n(self.beta, self.periods));
        v.push(self.sigma2);
        v
    }

    pub fn sample_with(&self, rng: &mut impl Rng) -> ParamVector {
        let theta = CpfParams {
            tau0: self.tau0.sample(rng),
            f0: self.f0.sample(rng),
            a: self.a.sample(rng),
            b: self.b.sample(rng),
        };
        let beta = (0..self.periods).map(|_| self.beta.sample(rng)).collect();
        let sigma2 = self.sigma2.sample(rng);
        ParamVector {
            theta,
            omega: ObsParams { beta, sigma2 },
        }
    }
}

pub fn sample_prior(prior: &PriorSpec, seed: u64) -> ParamVector {
    prior.sample_with(&mut rng::rng_for(seed, &[stream::PRIOR]))
}
