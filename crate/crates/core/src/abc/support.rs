//! One-class support estimate for adjusted posterior clouds.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::mlkit::Matrix;
use crate::stats;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SupportParams {
    /// Neighbour rank defining each point's radius.
    pub k: usize,
    /// Points whose radius exceeds this quantile of all radii are dropped.
    pub rho: f64,
    /// Below this many survivors the filter is abandoned.
    pub min_retained: usize,
}

impl Default for SupportParams {
    fn default() -> Self {
        Self {
            k: 10,
            rho: 0.9,
            min_retained: 50,
        }
    }
}

impl SupportParams {
    pub fn validate(&self) -> Result<()> {
        if self.k == 0 || !(self.rho > 0.0 && self.rho <= 1.0) {
            return Err(Error::Config("support filter needs k >= 1 and rho in (0, 1]".into()));
        }
        Ok(())
    }
}

/// Keeps points whose distance to their `k`-th nearest neighbour, in
/// per-column standardized coordinates, is at most the `rho`-quantile of
/// all such distances. Rows with non-finite entries are dropped.
pub fn support_filter(cloud: &Matrix, params: &SupportParams) -> Vec<bool> {
    let n = cloud.rows();
    let finite: Vec<bool> = cloud.iter_rows().map(|r| r.iter().all(|v| v.is_finite())).collect();
    let idx: Vec<usize> = (0..n).filter(|&i| finite[i]).collect();
    let mut keep = vec![false; n];
    if idx.len() < 2 {
        for &i in &idx {
            keep[i] = true;
        }
        return keep;
    }
    let d = cloud.cols();
    let mut mean = vec![0.0; d];
    let mut sd = vec![0.0; d];
    for &i in &idx {
        for (m, v) in mean.iter_mut().zip(cloud.row(i)) {
            *m += v / idx.len() as f64;
        }
    }
    for &i in &idx {
        for ((s, v), m) in sd.iter_mut().zip(cloud.row(i)).zip(&mean) {
            *s += (v - m).powi(2) / idx.len() as f64;
        }
    }
    let sd: Vec<f64> = sd.into_iter().map(|s| if s > 0.0 { s.sqrt() } else { 1.0 }).collect();
    let z: Vec<Vec<f64>> = idx
        .iter()
        .map(|&i| cloud.row(i).iter().zip(&mean).zip(&sd).map(|((v, m), s)| (v - m) / s).collect())
        .collect();
    let k = params.k.min(idx.len() - 1);
    let mut dist = Vec::with_capacity(idx.len());
    let radii: Vec<f64> = z
        .iter()
        .enumerate()
        .map(|(a, za)| {
            dist.clear();
            for (b, zb) in z.iter().enumerate() {
                if a != b {
                    dist.push(za.iter().zip(zb).map(|(x, y)| (x - y).powi(2)).sum::<f64>());
                }
            }
            let (_, r, _) = dist.select_nth_unstable_by(k - 1, f64::total_cmp);
            r.sqrt()
        })
        .collect();
    let mut sorted = radii.clone();
    stats::sort_floats(&mut sorted);
    let cut = stats::quantile_sorted(&sorted, params.rho);
    for (&i, &r) in idx.iter().zip(&radii) {
        keep[i] = r <= cut;
    }
    keep
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng;
    use rand::Rng;

    #[test]
    fn gross_outliers_are_removed() {
        let mut g = rng::rng_for(1, &[]);
        let mut rows: Vec<[f64; 2]> = (0..380).map(|_| [g.random::<f64>(), g.random::<f64>()]).collect();
        for k in 0..20 {
            let a = k as f64;
            rows.push([40.0 + 15.0 * a, -30.0 - 11.0 * a]);
        }
        let cloud = Matrix::from_rows(&rows);
        let keep = support_filter(&cloud, &SupportParams::default());
        for (i, r) in rows.iter().enumerate() {
            if keep[i] {
                assert!((0.0..=1.0).contains(&r[0]) && (0.0..=1.0).contains(&r[1]), "kept {r:?}");
            }
        }
        assert!(keep.iter().filter(|&&k| k).count() >= 300);
    }

    #[test]
    fn rho_one_keeps_everything_finite() {
        let cloud = Matrix::from_rows(&[[0.0], [1.0], [5.0], [f64::NAN], [2.0]]);
        let keep = support_filter(&cloud, &SupportParams { k: 1, rho: 1.0, min_retained: 1 });
        assert_eq!(keep, vec![true, true, true, false, true]);
    }
}
