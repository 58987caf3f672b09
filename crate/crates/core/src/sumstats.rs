//! Summary statistics, robust scaling and Epanechnikov kernel weights.
//!
//! Counts are grouped twice: by location (landscape) x year x period, pooling
//! habitats, and by habitat x year x period, pooling locations. Each group
//! contributes its interquartile range and its number of zeros.

use std::collections::{BTreeSet, HashMap};

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::error::{Error, Result};
use crate::landscape::CategoryId;
use crate::obsmodel::{Dataset, SurveyDesign};
use crate::stats;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SummarySpec {
    site_location: Vec<usize>,
    site_habitat: Vec<CategoryId>,
    location_groups: Vec<(usize, i32, usize)>,
    habitat_groups: Vec<(CategoryId, i32, usize)>,
}

impl SummarySpec {
    pub fn from_design(design: &SurveyDesign) -> Self {
        let mut loc = BTreeSet::new();
        let mut hab = BTreeSet::new();
        for v in &design.visits {
            let s = &design.sites[v.site];
            loc.insert((s.landscape, v.year, v.period));
            hab.insert((s.habitat, v.year, v.period));
        }
        Self {
            site_location: design.sites.iter().map(|s| s.landscape).collect(),
            site_habitat: design.sites.iter().map(|s| s.habitat).collect(),
            location_groups: loc.into_iter().collect(),
            habitat_groups: hab.into_iter().collect(),
        }
    }

    pub fn n_groups(&self) -> usize {
        self.location_groups.len() + self.habitat_groups.len()
    }

    pub fn dim(&self) -> usize {
        2 * self.n_groups()
    }

    pub fn names(&self) -> Vec<String> {
        let mut out = Vec::with_capacity(self.dim());
        for (l, y, k) in &self.location_groups {
            out.push(format!("iqr_loc{l}_y{y}_p{k}"));
            out.push(format!("zeros_loc{l}_y{y}_p{k}"));
        }
        for (h, y, k) in &self.habitat_groups {
            out.push(format!("iqr_hab{h}_y{y}_p{k}"));
            out.push(format!("zeros_hab{h}_y{y}_p{k}"));
        }
        out
    }

    /// Content hash identifying the statistic layout.
    pub fn id(&self) -> String {
        let bytes = serde_json::to_vec(self).expect("spec serializes");
        let digest = Sha256::digest(&bytes);
        digest[..8].iter().map(|b| format!("{b:02x}")).collect()
    }

    fn group_lookup(&self) -> (HashMap<(usize, i32, usize), usize>, HashMap<(CategoryId, i32, usize), usize>) {
        let off = self.location_groups.len();
        (
            self.location_groups.iter().enumerate().map(|(g, k)| (*k, g)).collect(),
            self.habitat_groups.iter().enumerate().map(|(g, k)| (*k, off + g)).collect(),
        )
    }
}

/// Summary vector of a dataset. Records outside the spec's sites or groups
/// are ignored; empty groups yield `(0, 0)`.
pub fn summarize(data: &Dataset, spec: &SummarySpec) -> Vec<f64> {
    let (loc, hab) = spec.group_lookup();
    let mut groups: Vec<Vec<f64>> = vec![Vec::new(); spec.n_groups()];
    for r in &data.records {
        let Some(&l) = spec.site_location.get(r.site) else {
            continue;
        };
        let h = spec.site_habitat[r.site];
        let y = r.count as f64;
        if let Some(&g) = loc.get(&(l, r.year, r.period)) {
            groups[g].push(y);
        }
        if let Some(&g) = hab.get(&(h, r.year, r.period)) {
            groups[g].push(y);
        }
    }
    let mut out = Vec::with_capacity(spec.dim());
    for mut g in groups {
        let zeros = g.iter().filter(|&&y| y == 0.0).count() as f64;
        out.push(stats::iqr(&mut g));
        out.push(zeros);
    }
    out
}

/// Coordinates whose spread falls below this are treated as constant.
pub const SPREAD_FLOOR: f64 = 1e-9;

/// Per-coordinate robust center and spread.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Scaler {
    pub center: Vec<f64>,
    pub spread: Vec<f64>,
}

impl Scaler {
    /// Median and unnormalized MAD of each column. Where the MAD is zero but
    /// the column is not constant (common for zero counts), the mean absolute
    /// deviation from the median is used instead.
    pub fn fit(rows: &[Vec<f64>]) -> Result<Self> {
        let Some(first) = rows.first() else {
            return Err(Error::Input("cannot scale an empty table".into()));
        };
        let dim = first.len();
        let (center, spread) = (0..dim)
            .into_par_iter()
            .map(|k| {
                let col: Vec<f64> = rows.iter().map(|r| r[k]).collect();
                let (med, mad) = stats::median_mad(&col);
                let spread = if mad > SPREAD_FLOOR {
                    mad
                } else {
                    col.iter().map(|x| (x - med).abs()).sum::<f64>() / col.len() as f64
                };
                (med, spread.max(SPREAD_FLOOR))
            })
            .unzip();
        Ok(Self { center, spread })
    }

    pub fn scale(&self, x: &[f64]) -> Vec<f64> {
        x.iter()
            .zip(self.center.iter().zip(&self.spread))
            .map(|(v, (c, s))| (v - c) / s)
            .collect()
    }

    pub fn distance(&self, a: &[f64], b: &[f64]) -> f64 {
        a.iter()
            .zip(b)
            .zip(&self.spread)
            .map(|((x, y), s)| ((x - y) / s).powi(2))
            .sum::<f64>()
            .sqrt()
    }

    pub fn distances(&self, rows: &[Vec<f64>], observed: &[f64]) -> Vec<f64> {
        rows.par_iter().map(|r| self.distance(r, observed)).collect()
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct KernelWeights {
    /// Normalized to sum to one.
    pub weights: Vec<f64>,
    pub bandwidth: f64,
    pub epsilon: f64,
}

impl KernelWeights {
    /// Indices with positive weight, in increasing index order.
    pub fn support(&self) -> Vec<usize> {
        (0..self.weights.len()).filter(|&i| self.weights[i] > 0.0).collect()
    }
}

/// `ceil(epsilon * m)`, robust to representation error such as
/// `0.025 * 10000 = 250.00000000000003`.
pub fn acceptance_count(epsilon: f64, m: usize) -> usize {
    let k = (epsilon * m as f64 * (1.0 - 1e-12)).ceil() as usize;
    k.clamp(1, m)
}

/// Epanechnikov weights `1 - (d/h)^2` on `d < h`, where `h` is the
/// `ceil(epsilon M)`-th smallest distance. If no distance is strictly below
/// `h`, the weights are uniform over `d <= h`.
pub fn kernel_weights(distances: &[f64], epsilon: f64) -> Result<KernelWeights> {
    if !(epsilon > 0.0 && epsilon <= 1.0) {
        return Err(Error::Input(format!("epsilon must lie in (0, 1], got {epsilon}")));
    }
    if distances.is_empty() {
        return Err(Error::Input("no distances".into()));
    }
    if distances.iter().any(|d| d.is_nan()) {
        return Err(Error::Input("NaN distance".into()));
    }
    let k = acceptance_count(epsilon, distances.len());
    let mut scratch = distances.to_vec();
    let (_, &mut h, _) = scratch.select_nth_unstable_by(k - 1, f64::total_cmp);
    let mut weights: Vec<f64> = distances
        .iter()
        .map(|&d| if d < h { 1.0 - (d / h).powi(2) } else { 0.0 })
        .collect();
    let mut total: f64 = weights.iter().sum();
    if !(total > 0.0) {
        for (w, &d) in weights.iter_mut().zip(distances) {
            *w = if d <= h { 1.0 } else { 0.0 };
        }
        total = weights.iter().sum();
    }
    weights.iter_mut().for_each(|w| *w /= total);
    Ok(KernelWeights {
        weights,
        bandwidth: h,
        epsilon,
    })
}
