//! Gradient boosting with L2, L1 and pinball losses.

use rand::seq::index;
use serde::{Deserialize, Serialize};

use super::binning::BinnedFeatures;
use super::tree::{grow, GrowParams, Sample, Tree};
use super::{check_fit_input, Matrix};
use crate::error::{Error, Result};
use crate::rng::{self, stream};
use crate::stats;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Loss {
    L2,
    L1,
    Pinball { alpha: f64 },
}

impl Loss {
    pub fn value(&self, y: f64, f: f64) -> f64 {
        let r = y - f;
        match *self {
            Loss::L2 => r * r,
            Loss::L1 => r.abs(),
            Loss::Pinball { alpha } => {
                if r >= 0.0 {
                    alpha * r
                } else {
                    (alpha - 1.0) * r
                }
            }
        }
    }

    /// Negative gradient in `f`. At `y == f` the pinball subgradient is taken
    /// at the midpoint `alpha - 1/2`, which makes pinball(1/2) exactly half
    /// of L1.
    pub fn negative_gradient(&self, y: f64, f: f64) -> f64 {
        match *self {
            Loss::L2 => y - f,
            Loss::L1 => {
                if y > f {
                    1.0
                } else if y < f {
                    -1.0
                } else {
                    0.0
                }
            }
            Loss::Pinball { alpha } => {
                if y > f {
                    alpha
                } else if y < f {
                    alpha - 1.0
                } else {
                    alpha - 0.5
                }
            }
        }
    }

    /// Weighted minimizer of the loss over a constant shift of `values`.
    fn optimum(&self, values: &[f64], weights: &[f64]) -> f64 {
        match *self {
            Loss::L2 => stats::weighted_mean(values, weights),
            Loss::L1 => stats::weighted_quantile(values, weights, 0.5),
            Loss::Pinball { alpha } => stats::weighted_quantile(values, weights, alpha),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct GbmParams {
    pub stages: usize,
    pub depth: usize,
    pub learning_rate: f64,
    pub min_leaf: usize,
    /// Fraction of rows drawn without replacement per stage.
    pub subsample: f64,
    /// Features tried per split; `None` means all.
    pub mtry: Option<usize>,
}

impl Default for GbmParams {
    fn default() -> Self {
        Self {
            stages: 500,
            depth: 3,
            learning_rate: 0.05,
            min_leaf: 5,
            subsample: 1.0,
            mtry: None,
        }
    }
}

impl GbmParams {
    pub fn validate(&self) -> Result<()> {
        if self.stages == 0 || self.depth == 0 {
            return Err(Error::Config("boosting needs at least one stage of depth >= 1".into()));
        }
        if !(self.learning_rate > 0.0 && self.learning_rate <= 1.0) {
            return Err(Error::Config("learning_rate must lie in (0, 1]".into()));
        }
        if !(self.subsample > 0.0 && self.subsample <= 1.0) {
            return Err(Error::Config("subsample must lie in (0, 1]".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq)]
struct Stage {
    tree: Tree,
    values: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct BoostedModel {
    pub loss: Loss,
    pub base: f64,
    pub learning_rate: f64,
    stages: Vec<Stage>,
    /// Weighted mean training loss after the base score and each stage.
    pub train_loss: Vec<f64>,
}

impl BoostedModel {
    pub fn fit(
        x: &Matrix,
        y: &[f64],
        w: Option<&[f64]>,
        loss: Loss,
        params: &GbmParams,
        seed: u64,
    ) -> Result<Self> {
        check_fit_input(x, y.len(), w)?;
        Self::fit_binned(&BinnedFeatures::new(x), y, w, loss, params, seed)
    }

    pub fn fit_binned(
        b: &BinnedFeatures,
        y: &[f64],
        w: Option<&[f64]>,
        loss: Loss,
        params: &GbmParams,
        seed: u64,
    ) -> Result<Self> {
        params.validate()?;
        if let Loss::Pinball { alpha } = loss {
            if !(alpha > 0.0 && alpha < 1.0) {
                return Err(Error::Config(format!("pinball alpha must lie in (0, 1), got {alpha}")));
            }
        }
        let n = b.n_rows();
        let d = b.n_features();
        let w: Vec<f64> = w.map_or_else(|| vec![1.0; n], <[f64]>::to_vec);
        let active: Vec<usize> = (0..n).filter(|&i| w[i] > 0.0).collect();
        let wsum: f64 = active.iter().map(|&i| w[i]).sum();
        let ya: Vec<f64> = active.iter().map(|&i| y[i]).collect();
        let wa: Vec<f64> = active.iter().map(|&i| w[i]).collect();
        let base = loss.optimum(&ya, &wa);
        let mut f = vec![base; n];
        let mean_loss = |f: &[f64]| active.iter().map(|&i| w[i] * loss.value(y[i], f[i])).sum::<f64>() / wsum;
        let mut train_loss = vec![mean_loss(&f)];
        let grow_params = GrowParams {
            max_depth: params.depth,
            min_leaf: params.min_leaf.max(1) as u32,
            mtry: params.mtry.unwrap_or(d).clamp(1, d.max(1)),
        };
        let mut g = rng::rng_for(seed, &[stream::GBM]);
        let mut grad = vec![0.0; n];
        let mut stages = Vec::with_capacity(params.stages);
        let take = ((params.subsample * active.len() as f64).round() as usize).clamp(1, active.len());
        let mut scratch_r = Vec::new();
        let mut scratch_w = Vec::new();
        for _ in 0..params.stages {
            for &i in &active {
                grad[i] = loss.negative_gradient(y[i], f[i]);
            }
            let rows: Vec<usize> = if take < active.len() {
                let mut r: Vec<usize> = index::sample(&mut g, active.len(), take)
                    .into_iter()
                    .map(|k| active[k])
                    .collect();
                r.sort_unstable();
                r
            } else {
                active.clone()
            };
            let mut samples: Vec<Sample> = rows
                .iter()
                .map(|&i| Sample {
                    idx: i as u32,
                    count: 1,
                    weight: w[i],
                })
                .collect();
            let (tree, spans) = grow(b, &grad, &mut samples, &grow_params, &mut g);
            let mut values = vec![0.0; tree.n_leaves];
            for (leaf, &(s, e)) in spans.iter().enumerate() {
                scratch_r.clear();
                scratch_w.clear();
                for smp in &samples[s..e] {
                    let i = smp.idx as usize;
                    scratch_r.push(y[i] - f[i]);
                    scratch_w.push(w[i]);
                }
                values[leaf] = if scratch_r.is_empty() {
                    0.0
                } else {
                    loss.optimum(&scratch_r, &scratch_w)
                };
            }
            if values.iter().any(|v| !v.is_finite()) {
                return Err(Error::Training("non-finite leaf value in boosting".into()));
            }
            for &i in &active {
                f[i] += params.learning_rate * values[tree.leaf_binned(b, i)];
            }
            train_loss.push(mean_loss(&f));
            stages.push(Stage { tree, values });
        }
        if !train_loss.last().is_some_and(|l| l.is_finite()) {
            return Err(Error::Training("boosting loss diverged".into()));
        }
        Ok(Self {
            loss,
            base,
            learning_rate: params.learning_rate,
            stages,
            train_loss,
        })
    }

    pub fn n_stages(&self) -> usize {
        self.stages.len()
    }

    pub fn predict(&self, x: &[f64]) -> f64 {
        self.base
            + self
                .stages
                .iter()
                .map(|s| self.learning_rate * s.values[s.tree.leaf(x)])
                .sum::<f64>()
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::Rng;
    use rand_distr::{Distribution, Exp};

    fn no_signal(n: usize, seed: u64) -> (Matrix, Vec<f64>) {
        let mut g = rng::rng_for(seed, &[]);
        let rows: Vec<[f64; 3]> = (0..n).map(|_| [g.random(), g.random(), g.random()]).collect();
        let e = Exp::new(1.0).unwrap();
        let y = (0..n).map(|_| e.sample(&mut g)).collect();
        (Matrix::from_rows(&rows), y)
    }

    #[test]
    fn single_stage_l2_is_best_stump() {
        let x = Matrix::from_rows(&[[1.0], [2.0], [3.0], [4.0], [5.0]]);
        let y = [1.0, 1.2, 5.0, 5.5, 6.0];
        let p = GbmParams {
            stages: 1,
            depth: 1,
            learning_rate: 1.0,
            min_leaf: 1,
            ..Default::default()
        };
        let m = BoostedModel::fit(&x, &y, None, Loss::L2, &p, 0).unwrap();
        // Exhaustive stump search as the oracle.
        let mut best = (f64::INFINITY, 0.0, 0.0, 0.0);
        for cut in 1..5 {
            let (l, r) = y.split_at(cut);
            let ml = l.iter().sum::<f64>() / l.len() as f64;
            let mr = r.iter().sum::<f64>() / r.len() as f64;
            let sse: f64 = l.iter().map(|v| (v - ml).powi(2)).sum::<f64>() + r.iter().map(|v| (v - mr).powi(2)).sum::<f64>();
            if sse < best.0 {
                best = (sse, cut as f64 + 0.5, ml, mr);
            }
        }
        for i in 0..5 {
            let xi = x.get(i, 0);
            let want = if xi <= best.1 { best.2 } else { best.3 };
            assert!((m.predict(&[xi]) - want).abs() < 1e-12);
        }
    }

    #[test]
    fn pinball_half_matches_l1() {
        let (x, y) = no_signal(400, 3);
        let p = GbmParams {
            stages: 30,
            ..Default::default()
        };
        let a = BoostedModel::fit(&x, &y, None, Loss::L1, &p, 7).unwrap();
        let b = BoostedModel::fit(&x, &y, None, Loss::Pinball { alpha: 0.5 }, &p, 7).unwrap();
        assert_eq!(a.stages, b.stages);
        assert_eq!(a.base, b.base);
    }

    #[test]
    fn pinball_converges_to_empirical_quantile() {
        let (x, y) = no_signal(5000, 4);
        let alpha = 0.9;
        let p = GbmParams {
            stages: 100,
            ..Default::default()
        };
        let m = BoostedModel::fit(&x, &y, None, Loss::Pinball { alpha }, &p, 1).unwrap();
        let mut sorted = y.clone();
        stats::sort_floats(&mut sorted);
        let q = stats::quantile_sorted(&sorted, alpha);
        let mut g = rng::rng_for(5, &[]);
        let preds: Vec<f64> = (0..200).map(|_| m.predict(&[g.random(), g.random(), g.random()])).collect();
        let mean = preds.iter().sum::<f64>() / preds.len() as f64;
        assert!((mean - q).abs() < 0.02 * q, "{mean} vs {q}");
    }

    #[test]
    fn training_loss_never_increases() {
        let mut g = rng::rng_for(6, &[]);
        let rows: Vec<[f64; 2]> = (0..500).map(|_| [g.random(), g.random()]).collect();
        let y: Vec<f64> = rows.iter().map(|r| (6.0 * r[0]).sin() + r[1] + 0.3 * g.random::<f64>()).collect();
        let x = Matrix::from_rows(&rows);
        for loss in [Loss::L2, Loss::L1, Loss::Pinball { alpha: 0.2 }, Loss::Pinball { alpha: 0.975 }] {
            let m = BoostedModel::fit(&x, &y, None, loss, &GbmParams { stages: 100, ..Default::default() }, 2).unwrap();
            for s in m.train_loss.windows(2) {
                assert!(s[1] <= s[0] + 1e-9, "{loss:?}: {} > {}", s[1], s[0]);
            }
        }
    }

    #[test]
    fn rejects_bad_params() {
        let (x, y) = no_signal(20, 1);
        let zero = GbmParams { stages: 0, ..Default::default() };
        assert!(BoostedModel::fit(&x, &y, None, Loss::L2, &zero, 0).is_err());
        let eta = GbmParams { learning_rate: 1.5, ..Default::default() };
        assert!(BoostedModel::fit(&x, &y, None, Loss::L2, &eta, 0).is_err());
        assert!(BoostedModel::fit(&x, &y, None, Loss::Pinball { alpha: 1.0 }, &GbmParams::default(), 0).is_err());
    }
}
