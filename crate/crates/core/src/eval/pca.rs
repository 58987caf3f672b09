//! Principal components of the reference-table statistics.

use nalgebra::DMatrix;

use crate::error::{Error, Result};
use crate::mlkit::Matrix;

#[derive(Debug, Clone, PartialEq)]
pub struct PcaProjection {
    /// Leading unit-norm component vectors, one per row.
    pub components: Matrix,
    /// Fraction of total variance per component, all components.
    pub explained: Vec<f64>,
    pub table: Matrix,
    pub predicted: Matrix,
    pub observed: Vec<f64>,
}

/// Standardizes with the table's column means and standard deviations,
/// extracts components by SVD and projects the table, the predictions and
/// the observation on the first `axes` of them.
pub fn pca_check(table: &Matrix, predicted: &Matrix, observed: &[f64], axes: usize) -> Result<PcaProjection> {
    let (n, d) = (table.rows(), table.cols());
    if n < 2 {
        return Err(Error::Input("PCA needs at least two table rows".into()));
    }
    if predicted.cols() != d && predicted.rows() > 0 || observed.len() != d {
        return Err(Error::Input("statistic dimensions differ".into()));
    }
    let mean: Vec<f64> = (0..d).map(|j| (0..n).map(|i| table.get(i, j)).sum::<f64>() / n as f64).collect();
    let sd: Vec<f64> = (0..d)
        .map(|j| {
            let v = (0..n).map(|i| (table.get(i, j) - mean[j]).powi(2)).sum::<f64>() / (n - 1) as f64;
            if v > 0.0 { v.sqrt() } else { 1.0 }
        })
        .collect();
    let z = |x: &[f64]| -> Vec<f64> { x.iter().enumerate().map(|(j, v)| (v - mean[j]) / sd[j]).collect() };
    let zt = DMatrix::from_fn(n, d, |i, j| (table.get(i, j) - mean[j]) / sd[j]);
    let svd = zt.svd(false, true);
    let vt = svd.v_t.ok_or_else(|| Error::Training("SVD did not converge".into()))?;
    let mut order: Vec<usize> = (0..svd.singular_values.len()).collect();
    order.sort_by(|&a, &b| svd.singular_values[b].total_cmp(&svd.singular_values[a]));
    let total: f64 = svd.singular_values.iter().map(|s| s * s).sum();
    let explained = order
        .iter()
        .map(|&k| if total > 0.0 { svd.singular_values[k].powi(2) / total } else { 0.0 })
        .collect();
    let axes = axes.min(order.len());
    let mut components = Matrix::zeros(axes, d);
    for (a, &k) in order.iter().take(axes).enumerate() {
        let row: Vec<f64> = (0..d).map(|j| vt[(k, j)]).collect();
        // Fix the sign so the largest loading is positive.
        let big = row.iter().copied().fold(0.0f64, |m, v| if v.abs() > m.abs() { v } else { m });
        let s = if big < 0.0 { -1.0 } else { 1.0 };
        for (dst, v) in components.row_mut(a).iter_mut().zip(row) {
            *dst = s * v;
        }
    }
    let project = |x: &[f64]| -> Vec<f64> {
        let zx = z(x);
        (0..axes)
            .map(|a| components.row(a).iter().zip(&zx).map(|(c, v)| c * v).sum())
            .collect()
    };
    let proj_all = |m: &Matrix| -> Matrix {
        let mut out = Matrix::zeros(m.rows(), axes);
        for i in 0..m.rows() {
            out.row_mut(i).copy_from_slice(&project(m.row(i)));
        }
        out
    };
    Ok(PcaProjection {
        table: proj_all(table),
        predicted: proj_all(predicted),
        observed: project(observed),
        explained,
        components,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::rng_for;
    use rand::Rng;

    fn cloud(n: usize, seed: u64) -> Matrix {
        let mut g = rng_for(seed, &[]);
        let rows: Vec<Vec<f64>> = (0..n)
            .map(|_| {
                let a: f64 = g.random_range(-1.0..1.0);
                let b: f64 = g.random_range(-1.0..1.0);
                vec![a, 2.0 * a + 0.1 * b, b, 5.0 + a - b, g.random_range(0.0..3.0)]
            })
            .collect();
        Matrix::from_rows(&rows)
    }

    #[test]
    fn components_orthonormal_and_sorted() {
        let t = cloud(300, 1);
        let p = pca_check(&t, &Matrix::zeros(0, 5), t.row(7), 3).unwrap();
        for a in 0..3 {
            for b in 0..3 {
                let dot: f64 = p.components.row(a).iter().zip(p.components.row(b)).map(|(x, y)| x * y).sum();
                let want = if a == b { 1.0 } else { 0.0 };
                assert!((dot - want).abs() < 1e-10);
            }
        }
        assert!(p.explained.windows(2).all(|w| w[0] >= w[1]));
        assert!((p.explained.iter().sum::<f64>() - 1.0).abs() < 1e-12);
    }

    #[test]
    fn table_member_projects_inside_range() {
        let t = cloud(200, 2);
        let p = pca_check(&t, &t, t.row(11), 3).unwrap();
        let axis: Vec<f64> = (0..t.rows()).map(|i| p.table.get(i, 0)).collect();
        let lo = axis.iter().copied().fold(f64::INFINITY, f64::min);
        let hi = axis.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        assert!(p.observed[0] >= lo && p.observed[0] <= hi);
        assert_eq!(p.observed[0], p.table.get(11, 0));
        assert_eq!(p.predicted, p.table);
    }

    #[test]
    fn needs_two_rows() {
        let t = Matrix::from_rows(&[vec![1.0, 2.0]]);
        assert!(pca_check(&t, &t, &[1.0, 2.0], 2).is_err());
    }
}
