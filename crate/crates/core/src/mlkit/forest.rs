//! Random forests with Meinshausen quantile prediction.
//!
//! Every training row is dropped down every tree after growth, so a query's
//! weight on row `k` is the average over trees of `c_k / C_leaf` for the
//! leaf it shares with `k`, where `c` are the case weights.

use rand::distr::weighted::WeightedIndex;
use rand::distr::Distribution;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::binning::BinnedFeatures;
use super::tree::{grow, GrowParams, Sample, Tree};
use super::{check_fit_input, Matrix};
use crate::error::Result;
use crate::rng::{self, stream};
use crate::stats;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ForestParams {
    pub trees: usize,
    /// Features tried per split; `None` means `ceil(D / 3)`.
    pub mtry: Option<usize>,
    /// Minimum in-bag observations per leaf.
    pub min_leaf: usize,
    pub bootstrap: bool,
}

impl Default for ForestParams {
    fn default() -> Self {
        Self {
            trees: 500,
            mtry: None,
            min_leaf: 5,
            bootstrap: true,
        }
    }
}

#[derive(Debug, Clone)]
struct FittedTree {
    tree: Tree,
    leaf_start: Vec<u32>,
    members: Vec<u32>,
    leaf_weight: Vec<f64>,
    leaf_wy: Vec<f64>,
    inbag: Vec<bool>,
}

impl FittedTree {
    fn members(&self, leaf: usize) -> &[u32] {
        &self.members[self.leaf_start[leaf] as usize..self.leaf_start[leaf + 1] as usize]
    }
}

#[derive(Debug, Clone)]
pub struct Forest {
    trees: Vec<FittedTree>,
    y: Vec<f64>,
    case_weights: Vec<f64>,
}

impl Forest {
    pub fn fit(
        x: &Matrix,
        y: &[f64],
        case_weights: Option<&[f64]>,
        params: &ForestParams,
        seed: u64,
    ) -> Result<Self> {
        check_fit_input(x, y.len(), case_weights)?;
        Self::fit_binned(&BinnedFeatures::new(x), y, case_weights, params, seed)
    }

    /// Bootstrap draws follow the case weights when given.
    pub fn fit_binned(
        b: &BinnedFeatures,
        y: &[f64],
        case_weights: Option<&[f64]>,
        params: &ForestParams,
        seed: u64,
    ) -> Result<Self> {
        let n = b.n_rows();
        let d = b.n_features();
        let cw: Vec<f64> = case_weights.map_or_else(|| vec![1.0; n], <[f64]>::to_vec);
        let sampler = WeightedIndex::new(&cw).map_err(|e| crate::Error::Input(format!("case weights: {e}")))?;
        let grow_params = GrowParams {
            max_depth: usize::MAX,
            min_leaf: params.min_leaf.max(1) as u32,
            mtry: params.mtry.unwrap_or(d.div_ceil(3)).clamp(1, d.max(1)),
        };
        let trees = (0..params.trees.max(1))
            .into_par_iter()
            .map(|t| {
                let mut g = rng::rng_for(seed, &[stream::FOREST, t as u64]);
                let mut counts = vec![0u32; n];
                if params.bootstrap {
                    let draws = cw.iter().filter(|&&w| w > 0.0).count();
                    for _ in 0..draws {
                        counts[sampler.sample(&mut g)] += 1;
                    }
                } else {
                    for (c, &w) in counts.iter_mut().zip(&cw) {
                        *c = u32::from(w > 0.0);
                    }
                }
                let mut samples: Vec<Sample> = (0..n)
                    .filter(|&i| counts[i] > 0)
                    .map(|i| Sample {
                        idx: i as u32,
                        count: counts[i],
                        weight: if params.bootstrap { counts[i] as f64 } else { cw[i] },
                    })
                    .collect();
                let (tree, _) = grow(b, y, &mut samples, &grow_params, &mut g);
                finish_tree(tree, b, y, &cw, counts.iter().map(|&c| c > 0).collect())
            })
            .collect();
        Ok(Self {
            trees,
            y: y.to_vec(),
            case_weights: cw,
        })
    }

    pub fn n_trees(&self) -> usize {
        self.trees.len()
    }

    /// Per-row weights for a query, summing to one (all zero if no tree has a
    /// positively weighted leaf at `x0`).
    pub fn weights(&self, x0: &[f64]) -> Vec<f64> {
        let mut w = vec![0.0; self.y.len()];
        let mut used = 0usize;
        for t in &self.trees {
            let leaf = t.tree.leaf(x0);
            let total = t.leaf_weight[leaf];
            if !(total > 0.0) {
                continue;
            }
            used += 1;
            for &k in t.members(leaf) {
                w[k as usize] += self.case_weights[k as usize] / total;
            }
        }
        if used > 0 {
            w.iter_mut().for_each(|v| *v /= used as f64);
        }
        w
    }

    pub fn predict_mean(&self, x0: &[f64]) -> f64 {
        let mut sum = 0.0;
        let mut used = 0usize;
        for t in &self.trees {
            let leaf = t.tree.leaf(x0);
            if t.leaf_weight[leaf] > 0.0 {
                sum += t.leaf_wy[leaf] / t.leaf_weight[leaf];
                used += 1;
            }
        }
        if used == 0 {
            f64::NAN
        } else {
            sum / used as f64
        }
    }

    /// Weighted empirical quantiles of the training targets; non-decreasing
    /// in `probs` when `probs` is sorted.
    pub fn predict_quantiles(&self, x0: &[f64], probs: &[f64]) -> Vec<f64> {
        stats::weighted_quantiles(&self.y, &self.weights(x0), probs)
    }

    /// Out-of-bag mean predictions: for row `i`, only trees that did not draw
    /// it contribute, and `i` is left out of its own leaf. `NaN` where no such
    /// tree exists.
    pub fn oob_predictions(&self) -> Vec<f64> {
        let n = self.y.len();
        let mut sum = vec![0.0; n];
        let mut used = vec![0u32; n];
        for t in &self.trees {
            for leaf in 0..t.tree.n_leaves {
                for &k in t.members(leaf) {
                    let k = k as usize;
                    if t.inbag[k] {
                        continue;
                    }
                    let ck = self.case_weights[k];
                    let rest = t.leaf_weight[leaf] - ck;
                    if rest > 1e-300 {
                        sum[k] += (t.leaf_wy[leaf] - ck * self.y[k]) / rest;
                        used[k] += 1;
                    }
                }
            }
        }
        sum.iter()
            .zip(&used)
            .map(|(&s, &u)| if u == 0 { f64::NAN } else { s / u as f64 })
            .collect()
    }
}

fn finish_tree(tree: Tree, b: &BinnedFeatures, y: &[f64], cw: &[f64], inbag: Vec<bool>) -> FittedTree {
    let n = b.n_rows();
    let leaf_of: Vec<usize> = (0..n).map(|i| tree.leaf_binned(b, i)).collect();
    let mut leaf_start = vec![0u32; tree.n_leaves + 1];
    for &l in &leaf_of {
        leaf_start[l + 1] += 1;
    }
    for l in 0..tree.n_leaves {
        leaf_start[l + 1] += leaf_start[l];
    }
    let mut fill = leaf_start.clone();
    let mut members = vec![0u32; n];
    let mut leaf_weight = vec![0.0; tree.n_leaves];
    let mut leaf_wy = vec![0.0; tree.n_leaves];
    for (i, &l) in leaf_of.iter().enumerate() {
        members[fill[l] as usize] = i as u32;
        fill[l] += 1;
        leaf_weight[l] += cw[i];
        leaf_wy[l] += cw[i] * y[i];
    }
    FittedTree {
        tree,
        leaf_start,
        members,
        leaf_weight,
        leaf_wy,
        inbag,
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::Rng;

    fn noisy(n: usize, seed: u64, extra_noise_feature: bool) -> (Matrix, Vec<f64>) {
        let mut g = rng::rng_for(seed, &[]);
        let mut extra = rng::rng_for(seed, &[1]);
        let mut rows = Vec::new();
        let mut y = Vec::new();
        for _ in 0..n {
            let a: f64 = g.random();
            let b: f64 = g.random();
            let mut r = vec![a, b];
            if extra_noise_feature {
                r.push(extra.random());
            }
            y.push(if a < 0.5 { 1.0 } else { 3.0 } + b + 0.1 * (g.random::<f64>() - 0.5));
            rows.push(r);
        }
        (Matrix::from_rows(&rows), y)
    }

    #[test]
    fn single_leaf_forest_gives_weighted_mean() {
        let (x, y) = noisy(100, 1, false);
        let w: Vec<f64> = (0..100).map(|i| 1.0 + (i % 7) as f64).collect();
        let p = ForestParams {
            trees: 20,
            min_leaf: 100,
            ..Default::default()
        };
        let f = Forest::fit(&x, &y, Some(&w), &p, 3).unwrap();
        let want = stats::weighted_mean(&y, &w);
        assert!((f.predict_mean(&[0.2, 0.7]) - want).abs() < 1e-12);
        let q = f.predict_quantiles(&[0.2, 0.7], &[0.025, 0.5, 0.975]);
        let raw = stats::weighted_quantiles(&y, &w, &[0.025, 0.5, 0.975]);
        for (a, b) in q.iter().zip(&raw) {
            assert!((a - b).abs() < 1e-12);
        }
    }

    #[test]
    fn fully_grown_tree_interpolates() {
        let (x, y) = noisy(150, 2, false);
        let p = ForestParams {
            trees: 1,
            mtry: Some(2),
            min_leaf: 1,
            bootstrap: false,
        };
        let f = Forest::fit(&x, &y, None, &p, 0).unwrap();
        for i in 0..x.rows() {
            assert!((f.predict_mean(x.row(i)) - y[i]).abs() < 1e-12);
        }
    }

    #[test]
    fn weights_sum_to_one_and_quantiles_sorted() {
        let (x, y) = noisy(300, 4, false);
        let f = Forest::fit(&x, &y, None, &ForestParams { trees: 50, ..Default::default() }, 9).unwrap();
        for q in [[0.1, 0.1], [0.9, 0.5], [0.4, 0.99]] {
            let w = f.weights(&q);
            assert!((w.iter().sum::<f64>() - 1.0).abs() < 1e-12);
            let qs = f.predict_quantiles(&q, &[0.025, 0.5, 0.975]);
            assert!(qs[0] <= qs[1] && qs[1] <= qs[2]);
        }
    }

    #[test]
    fn conditional_median_of_step_function() {
        let (x, y) = noisy(4000, 5, false);
        let f = Forest::fit(&x, &y, None, &ForestParams { trees: 100, ..Default::default() }, 1).unwrap();
        for (a, b) in [(0.25, 0.5), (0.75, 0.5), (0.1, 0.2)] {
            let truth = if a < 0.5 { 1.0 } else { 3.0 } + b;
            let m = f.predict_quantiles(&[a, b], &[0.5])[0];
            assert!((m - truth).abs() < 0.1, "{m} vs {truth}");
        }
    }

    #[test]
    fn robust_to_noise_feature() {
        let (x, y) = noisy(2000, 6, false);
        let (xn, yn) = noisy(2000, 6, true);
        assert_eq!(y, yn);
        let p = ForestParams {
            trees: 100,
            mtry: Some(2),
            ..Default::default()
        };
        let f = Forest::fit(&x, &y, None, &p, 2).unwrap();
        let fnz = Forest::fit(&xn, &yn, None, &p, 2).unwrap();
        let mut diff = 0.0;
        let mut g = rng::rng_for(77, &[]);
        let m = 200;
        for _ in 0..m {
            let (a, b, c): (f64, f64, f64) = (g.random(), g.random(), g.random());
            diff += (f.predict_mean(&[a, b]) - fnz.predict_mean(&[a, b, c])).abs();
        }
        assert!(diff / (m as f64) < 0.1, "{}", diff / m as f64);
    }

    #[test]
    fn oob_predictions_exclude_self() {
        let (x, y) = noisy(500, 8, false);
        let f = Forest::fit(&x, &y, None, &ForestParams { trees: 100, ..Default::default() }, 4).unwrap();
        let oob = f.oob_predictions();
        assert!(oob.iter().all(|v| v.is_finite()));
        let mse: f64 = oob.iter().zip(&y).map(|(p, t)| (p - t).powi(2)).sum::<f64>() / 500.0;
        // Signal variance is about 1.1; OOB error should be far below it.
        assert!(mse < 0.1, "{mse}");
    }

    #[test]
    fn deterministic_given_seed() {
        let (x, y) = noisy(300, 3, false);
        let p = ForestParams { trees: 30, ..Default::default() };
        let a = Forest::fit(&x, &y, None, &p, 5).unwrap();
        let b = Forest::fit(&x, &y, None, &p, 5).unwrap();
        assert_eq!(a.weights(&[0.3, 0.3]), b.weights(&[0.3, 0.3]));
        assert_eq!(a.oob_predictions(), b.oob_predictions());
    }
}
