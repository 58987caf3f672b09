//! Posterior-predictive ensembles and Bayesian p-values.

use std::collections::HashMap;

use rand::distr::{weighted::WeightedIndex, Distribution};
use rayon::prelude::*;

use super::gln::GlnDist;
use crate::abc::result::PROBS;
use crate::abc::PosteriorResult;
use crate::error::{Error, Result};
use crate::model::BeeModel;
use crate::obsmodel::{Dataset, ParamVector};
use crate::rng::{self, stream, SimRng};

/// Redraws allowed per parameter when a reconstructed marginal leaves the
/// prior support.
const MAX_REDRAWS: usize = 1000;

enum Marginal {
    Point(f64),
    Gln(GlnDist),
}

/// Draws parameter vectors from a posterior.
///
/// Sample-based results whose parameters share one weighted sample are drawn
/// jointly by index. Otherwise each parameter is drawn independently from a
/// distribution fitted to its quantile triplet, which drops any correlation
/// between parameters.
pub struct PosteriorSampler {
    joint: Option<(Vec<Vec<f64>>, WeightedIndex<f64>)>,
    marginals: Vec<Marginal>,
    support: Vec<(f64, f64)>,
}

impl PosteriorSampler {
    /// `support` bounds each parameter; draws outside are redrawn.
    pub fn new(result: &PosteriorResult, support: &[(f64, f64)]) -> Result<Self> {
        if support.len() != result.params.len() {
            return Err(Error::Input("one support interval per parameter is required".into()));
        }
        if let Some(p) = result.params.iter().find(|p| p.failed) {
            return Err(Error::Input(format!("{}: parameter {} failed", result.method, p.name)));
        }
        let samples: Option<Vec<_>> = result.params.iter().map(|p| p.samples.as_ref()).collect();
        if let Some(s) = samples {
            let first = &s[0];
            let aligned = s
                .iter()
                .all(|x| x.weights == first.weights && x.values.len() == first.values.len());
            if aligned {
                // Zeroing rows outside the support is equivalent to redrawing.
                let weights: Vec<f64> = (0..first.values.len())
                    .map(|i| {
                        let inside = s.iter().zip(support).all(|(x, &(lo, hi))| (lo..=hi).contains(&x.values[i]));
                        if inside {
                            first.weights[i]
                        } else {
                            0.0
                        }
                    })
                    .collect();
                let index = WeightedIndex::new(&weights).map_err(|e| {
                    Error::Input(format!("{}: no posterior sample inside the support ({e})", result.method))
                })?;
                let cols = s.iter().map(|x| x.values.clone()).collect();
                return Ok(Self {
                    joint: Some((cols, index)),
                    marginals: Vec::new(),
                    support: support.to_vec(),
                });
            }
        }
        let marginals = result
            .params
            .iter()
            .map(|p| {
                let [lo, med, hi] = p.quantiles;
                if lo == hi {
                    Ok(Marginal::Point(med))
                } else {
                    GlnDist::fit(lo, med, hi, PROBS[0])
                        .map(Marginal::Gln)
                        .map_err(|e| Error::Input(format!("{}: {}: {e}", result.method, p.name)))
                }
            })
            .collect::<Result<_>>()?;
        Ok(Self {
            joint: None,
            marginals,
            support: support.to_vec(),
        })
    }

    pub fn draw(&self, rng: &mut SimRng) -> Result<Vec<f64>> {
        if let Some((cols, index)) = &self.joint {
            let i = index.sample(rng);
            return Ok(cols.iter().map(|c| c[i]).collect());
        }
        self.marginals
            .iter()
            .zip(&self.support)
            .enumerate()
            .map(|(k, (m, &(lo, hi)))| match m {
                Marginal::Point(v) => Ok(*v),
                Marginal::Gln(g) => (0..MAX_REDRAWS)
                    .map(|_| g.sample(rng))
                    .find(|v| (lo..=hi).contains(v))
                    .ok_or_else(|| Error::Input(format!("parameter {k}: reconstructed marginal misses the support"))),
            })
            .collect()
    }
}

/// `n_draws` parameter vectors, each simulated once under the model.
pub fn posterior_predictive(
    model: &BeeModel,
    result: &PosteriorResult,
    n_draws: usize,
    seed: u64,
) -> Result<Vec<Dataset>> {
    let support: Vec<(f64, f64)> = model.prior.marginals().iter().map(|l| l.support()).collect();
    let sampler = PosteriorSampler::new(result, &support)?;
    (0..n_draws)
        .into_par_iter()
        .map(|d| {
            let mut g = rng::rng_for(seed, &[stream::PREDICT, d as u64]);
            let psi = ParamVector::from_slice(&sampler.draw(&mut g)?)?;
            model.simulate_dataset(&psi, rng::derive_seed(seed, &[stream::DATA, d as u64]))
        })
        .collect()
}

/// Per observed record, the fraction of ensemble members predicting a
/// smaller count plus half the fraction predicting an equal one.
pub fn bayes_pvalues(ensemble: &[Dataset], observed: &Dataset) -> Result<Vec<f64>> {
    if ensemble.is_empty() {
        return Err(Error::Input("the predictive ensemble is empty".into()));
    }
    let lookup: Vec<HashMap<(usize, i32, usize), u64>> = ensemble
        .iter()
        .map(|d| d.records.iter().map(|r| ((r.site, r.year, r.period), r.count)).collect())
        .collect();
    observed
        .records
        .iter()
        .map(|r| {
            let key = (r.site, r.year, r.period);
            let (mut below, mut tied) = (0usize, 0usize);
            for d in &lookup {
                let y = *d.get(&key).ok_or_else(|| {
                    Error::Input(format!("visit site {} year {} period {} missing from the ensemble", r.site, r.year, r.period))
                })?;
                match y.cmp(&r.count) {
                    std::cmp::Ordering::Less => below += 1,
                    std::cmp::Ordering::Equal => tied += 1,
                    std::cmp::Ordering::Greater => {}
                }
            }
            Ok((below as f64 + 0.5 * tied as f64) / lookup.len() as f64)
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::abc::ParamPosterior;
    use crate::obsmodel::Record;

    fn data(counts: &[u64]) -> Dataset {
        Dataset {
            records: counts
                .iter()
                .enumerate()
                .map(|(i, &c)| Record {
                    site: i,
                    year: 2011,
                    period: 1,
                    habitat: 1,
                    count: c,
                })
                .collect(),
        }
    }

    #[test]
    fn pvalue_tie_and_extreme_rules() {
        let obs = data(&[3, 10]);
        let p = bayes_pvalues(&[obs.clone(), obs.clone()], &obs).unwrap();
        assert_eq!(p, vec![0.5, 0.5]);
        let p = bayes_pvalues(&[data(&[1, 2]), data(&[2, 9])], &obs).unwrap();
        assert_eq!(p, vec![1.0, 1.0]);
        let p = bayes_pvalues(&[data(&[3, 11]), data(&[1, 12])], &obs).unwrap();
        assert_eq!(p, vec![0.75, 0.0]);
        assert!(bayes_pvalues(&[], &obs).is_err());
        assert!(bayes_pvalues(&[data(&[1])], &obs).is_err());
    }

    #[test]
    fn joint_samples_keep_rows_together() {
        let w = [0.2, 0.3, 0.5];
        let result = PosteriorResult {
            method: "rej(5%)".into(),
            params: vec![
                ParamPosterior::from_samples("a", vec![1.0, 2.0, 3.0], &w),
                ParamPosterior::from_samples("b", vec![10.0, 20.0, 30.0], &w),
            ],
        };
        let s = PosteriorSampler::new(&result, &[(f64::NEG_INFINITY, f64::INFINITY); 2]).unwrap();
        let mut g = rng::rng_for(1, &[]);
        for _ in 0..100 {
            let v = s.draw(&mut g).unwrap();
            assert_eq!(v[1], 10.0 * v[0]);
        }
    }

    #[test]
    fn joint_rows_outside_support_are_never_drawn() {
        let w = [0.4, 0.3, 0.3];
        let result = PosteriorResult {
            method: "rfa(5%)".into(),
            params: vec![
                ParamPosterior::from_samples("a", vec![1.0, 2.0, 3.0], &w),
                ParamPosterior::from_samples("s2", vec![-0.5, 0.2, 0.7], &w),
            ],
        };
        let support = [(0.0, 10.0), (0.0, f64::INFINITY)];
        let s = PosteriorSampler::new(&result, &support).unwrap();
        let mut g = rng::rng_for(3, &[]);
        for _ in 0..500 {
            assert!(s.draw(&mut g).unwrap()[1] > 0.0);
        }
        assert!(PosteriorSampler::new(&result, &[(5.0, 10.0), (0.0, 1.0)]).is_err());
    }

    #[test]
    fn quantile_results_respect_support() {
        let result = PosteriorResult {
            method: "uwqrf".into(),
            params: vec![
                ParamPosterior::from_quantiles("a", [0.1, 1.0, 5.0], 1.0),
                ParamPosterior::from_quantiles("b", [2.0, 2.0, 2.0], 2.0),
            ],
        };
        let s = PosteriorSampler::new(&result, &[(0.0, f64::INFINITY), (0.0, 10.0)]).unwrap();
        let mut g = rng::rng_for(2, &[]);
        for _ in 0..1000 {
            let v = s.draw(&mut g).unwrap();
            assert!(v[0] > 0.0);
            assert_eq!(v[1], 2.0);
        }
        let mut bad = result.clone();
        bad.params[0] = ParamPosterior::from_quantiles("a", [1.0, 1.0, 5.0], 1.0);
        assert!(PosteriorSampler::new(&bad, &[(0.0, 9.0); 2]).is_err());
        bad.params[0] = ParamPosterior::failure("a", "x");
        assert!(PosteriorSampler::new(&bad, &[(0.0, 9.0); 2]).is_err());
    }
}
