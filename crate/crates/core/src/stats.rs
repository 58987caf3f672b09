//! Small descriptive-statistics helpers shared by the summary, learning and
//! evaluation code.

use statrs::distribution::{ContinuousCDF, Normal};

/// Sample quantile by linear interpolation between order statistics
/// (`h = (n-1)p`). `sorted` must be ascending and non-empty.
pub fn quantile_sorted(sorted: &[f64], p: f64) -> f64 {
    debug_assert!(!sorted.is_empty());
    let h = (sorted.len() - 1) as f64 * p.clamp(0.0, 1.0);
    let lo = h.floor() as usize;
    let hi = h.ceil() as usize;
    sorted[lo] + (h - lo as f64) * (sorted[hi] - sorted[lo])
}

pub fn sort_floats(values: &mut [f64]) {
    values.sort_unstable_by(f64::total_cmp);
}

/// Interquartile range; zero for an empty slice.
pub fn iqr(values: &mut [f64]) -> f64 {
    if values.is_empty() {
        return 0.0;
    }
    sort_floats(values);
    quantile_sorted(values, 0.75) - quantile_sorted(values, 0.25)
}

pub fn median(values: &mut [f64]) -> f64 {
    sort_floats(values);
    quantile_sorted(values, 0.5)
}

/// Median and (unnormalized) median absolute deviation.
pub fn median_mad(values: &[f64]) -> (f64, f64) {
    let mut v = values.to_vec();
    let med = median(&mut v);
    for x in v.iter_mut() {
        *x = (*x - med).abs();
    }
    (med, median(&mut v))
}

pub fn weighted_mean(values: &[f64], weights: &[f64]) -> f64 {
    let (mut sw, mut swx) = (0.0, 0.0);
    for (&x, &w) in values.iter().zip(weights) {
        if w > 0.0 {
            sw += w;
            swx += w * x;
        }
    }
    swx / sw
}

/// Weighted quantiles by inverse of the weighted empirical CDF: for each
/// `p` the smallest value whose cumulative weight reaches `p * total`.
/// Zero-weight points are ignored. Returns NaN for every `p` when no point
/// carries weight.
pub fn weighted_quantiles(values: &[f64], weights: &[f64], probs: &[f64]) -> Vec<f64> {
    let mut idx: Vec<usize> = (0..values.len()).filter(|&i| weights[i] > 0.0).collect();
    if idx.is_empty() {
        return vec![f64::NAN; probs.len()];
    }
    idx.sort_unstable_by(|&a, &b| values[a].total_cmp(&values[b]));
    weighted_quantiles_presorted(&idx, values, weights, probs)
}

/// As [`weighted_quantiles`], with `order` listing indices in ascending
/// value order (zero-weight entries allowed).
pub fn weighted_quantiles_presorted(
    order: &[usize],
    values: &[f64],
    weights: &[f64],
    probs: &[f64],
) -> Vec<f64> {
    let total: f64 = order.iter().map(|&i| weights[i].max(0.0)).sum();
    if total <= 0.0 || !total.is_finite() {
        return vec![f64::NAN; probs.len()];
    }
    probs
        .iter()
        .map(|&p| {
            let target = p.clamp(0.0, 1.0) * total * (1.0 - 1e-12);
            let mut cum = 0.0;
            let mut last = f64::NAN;
            for &i in order {
                let w = weights[i];
                if w <= 0.0 {
                    continue;
                }
                cum += w;
                last = values[i];
                if cum >= target {
                    return values[i];
                }
            }
            last
        })
        .collect()
}

pub fn weighted_quantile(values: &[f64], weights: &[f64], p: f64) -> f64 {
    weighted_quantiles(values, weights, &[p])[0]
}

/// Two-sample Kolmogorov–Smirnov distance between a weighted sample and an
/// unweighted one.
pub fn ks_distance_weighted(a: &[f64], a_weights: &[f64], b: &[f64]) -> f64 {
    let mut ia: Vec<usize> = (0..a.len()).filter(|&i| a_weights[i] > 0.0).collect();
    ia.sort_unstable_by(|&x, &y| a[x].total_cmp(&a[y]));
    let wa: f64 = ia.iter().map(|&i| a_weights[i]).sum();
    let mut sb = b.to_vec();
    sort_floats(&mut sb);
    let nb = sb.len() as f64;

    let (mut i, mut j) = (0usize, 0usize);
    let (mut fa, mut fb) = (0.0f64, 0.0f64);
    let mut d = 0.0f64;
    while i < ia.len() || j < sb.len() {
        let xa = ia.get(i).map_or(f64::INFINITY, |&k| a[k]);
        let xb = sb.get(j).copied().unwrap_or(f64::INFINITY);
        let x = xa.min(xb);
        while i < ia.len() && a[ia[i]] == x {
            fa += a_weights[ia[i]] / wa;
            i += 1;
        }
        while j < sb.len() && sb[j] == x {
            fb += 1.0 / nb;
            j += 1;
        }
        d = d.max((fa - fb).abs());
    }
    d
}

/// One-sample KS distance of `sample` against a continuous CDF.
pub fn ks_distance_cdf(sample: &[f64], cdf: impl Fn(f64) -> f64) -> f64 {
    let mut s = sample.to_vec();
    sort_floats(&mut s);
    let n = s.len() as f64;
    s.iter().enumerate().fold(0.0f64, |d, (i, &x)| {
        let f = cdf(x);
        d.max((f - i as f64 / n).abs()).max(((i + 1) as f64 / n - f).abs())
    })
}

/// Asymptotic Kolmogorov p-value `P(K > sqrt(n) * d)`.
pub fn kolmogorov_pvalue(d: f64, n: f64) -> f64 {
    let t = (n.sqrt() + 0.12 + 0.11 / n.sqrt()) * d;
    if t < 0.2 {
        return 1.0;
    }
    let mut sum = 0.0;
    for k in 1..=100 {
        let k = k as f64;
        let term = 2.0 * (-1f64).powf(k - 1.0) * (-2.0 * k * k * t * t).exp();
        sum += term;
        if term.abs() < 1e-16 {
            break;
        }
    }
    sum.clamp(0.0, 1.0)
}

/// Standard normal quantile.
pub fn normal_quantile(p: f64) -> f64 {
    Normal::standard().inverse_cdf(p)
}

pub fn normal_cdf(x: f64) -> f64 {
    Normal::standard().cdf(x)
}
