use super::Matrix;

/// Largest number of bins per feature.
pub const MAX_BINS: usize = 256;

/// Features quantized to at most 256 bins per column.
///
/// Cut points are midpoints between consecutive distinct training values and
/// `bin(x)` counts the cuts strictly below `x`, so `bin(x) <= b` exactly when
/// `x <= cuts[b]`. Trees grown on bins therefore route raw inputs with plain
/// threshold comparisons.
#[derive(Debug, Clone)]
pub struct BinnedFeatures {
    n: usize,
    bins: Vec<u8>,
    cuts: Vec<Vec<f64>>,
}

impl BinnedFeatures {
    pub fn new(x: &Matrix) -> Self {
        let (n, d) = (x.rows(), x.cols());
        let mut bins = vec![0u8; n * d];
        let mut cuts = Vec::with_capacity(d);
        for j in 0..d {
            let mut col = x.column(j);
            col.sort_by(f64::total_cmp);
            let c = cut_points(&col);
            for i in 0..n {
                bins[j * n + i] = c.partition_point(|&t| t < x.get(i, j)) as u8;
            }
            cuts.push(c);
        }
        Self { n, bins, cuts }
    }

    pub fn n_rows(&self) -> usize {
        self.n
    }

    pub fn n_features(&self) -> usize {
        self.cuts.len()
    }

    pub(crate) fn column(&self, j: usize) -> &[u8] {
        &self.bins[j * self.n..(j + 1) * self.n]
    }

    pub(crate) fn n_bins(&self, j: usize) -> usize {
        self.cuts[j].len() + 1
    }

    pub(crate) fn threshold(&self, j: usize, bin: u8) -> f64 {
        self.cuts[j][bin as usize]
    }
}

/// Up to `MAX_BINS - 1` cuts placed at roughly equal-frequency boundaries.
fn cut_points(sorted: &[f64]) -> Vec<f64> {
    let n = sorted.len();
    let mut distinct: Vec<(f64, usize)> = Vec::new();
    for &v in sorted {
        match distinct.last_mut() {
            Some((last, c)) if *last == v => *c += 1,
            _ => distinct.push((v, 1)),
        }
    }
    if distinct.len() <= MAX_BINS {
        return distinct.windows(2).map(|w| 0.5 * (w[0].0 + w[1].0)).collect();
    }
    let mut cuts = Vec::with_capacity(MAX_BINS - 1);
    let mut seen = 0usize;
    let mut target = 1usize;
    for w in distinct.windows(2) {
        seen += w[0].1;
        if seen * MAX_BINS >= target * n {
            cuts.push(0.5 * (w[0].0 + w[1].0));
            target = seen * MAX_BINS / n + 1;
            if cuts.len() == MAX_BINS - 1 {
                break;
            }
        }
    }
    cuts
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn few_distinct_values_get_own_bins() {
        let x = Matrix::from_rows(&[[3.0], [1.0], [2.0], [1.0]]);
        let b = BinnedFeatures::new(&x);
        assert_eq!(b.column(0), &[2, 0, 1, 0]);
        assert_eq!(b.threshold(0, 0), 1.5);
        assert_eq!(b.n_bins(0), 3);
    }

    #[test]
    fn many_values_are_capped() {
        let rows: Vec<[f64; 1]> = (0..10_000).map(|i| [(i * 7919 % 10_000) as f64]).collect();
        let x = Matrix::from_rows(&rows);
        let b = BinnedFeatures::new(&x);
        assert!(b.n_bins(0) <= MAX_BINS);
        assert!(b.n_bins(0) > 200);
        for i in 0..x.rows() {
            let v = x.get(i, 0);
            let bin = b.column(0)[i];
            if (bin as usize) < b.n_bins(0) - 1 {
                assert!(v <= b.threshold(0, bin));
            }
            if bin > 0 {
                assert!(v > b.threshold(0, bin - 1));
            }
        }
    }
}
