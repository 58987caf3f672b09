//! Generalized lognormal distributions fitted to a quantile triplet.

use rand::Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::stats::normal_quantile;

/// Triplets with `|ln r| < SYMMETRY_TOL` get the normal branch.
pub const SYMMETRY_TOL: f64 = 1e-6;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum GlnShape {
    Normal,
    LognormalRight,
    LognormalLeft,
}

/// `X = c * Y + d` with `Y` standard normal (normal branch) or
/// `Y ~ LogNormal(mu, sigma)` and `c = ±1`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GlnDist {
    pub shape: GlnShape,
    pub d: f64,
    pub c: f64,
    pub mu: f64,
    pub sigma: f64,
    /// Median, kept so quantiles avoid the cancellation in `d + e^mu`
    /// when the skew is slight.
    median: f64,
}

impl GlnDist {
    /// Fits the distribution whose `alpha`, 0.5 and `1 - alpha` quantiles
    /// are the given triplet.
    pub fn fit(q_low: f64, q_med: f64, q_high: f64, alpha: f64) -> Result<Self> {
        if !(q_low < q_med && q_med < q_high) || ![q_low, q_med, q_high].iter().all(|v| v.is_finite()) {
            return Err(Error::Input(format!(
                "quantiles must be finite and strictly increasing, got ({q_low}, {q_med}, {q_high})"
            )));
        }
        if !(alpha > 0.0 && alpha < 0.5) {
            return Err(Error::Input(format!("alpha must lie in (0, 0.5), got {alpha}")));
        }
        let z = normal_quantile(1.0 - alpha);
        let r = (q_high - q_med) / (q_med - q_low);
        let lr = r.ln();
        if lr.abs() < SYMMETRY_TOL {
            return Ok(Self {
                shape: GlnShape::Normal,
                d: q_med,
                c: (q_high - q_low) / (2.0 * z),
                mu: 0.0,
                sigma: 1.0,
                median: q_med,
            });
        }
        let sigma = lr.abs() / z;
        // e^{sz} - e^{-sz} = 2 sinh(sz)
        let scale = (q_high - q_low) / (2.0 * (sigma * z).sinh());
        let (shape, c, d) = if lr > 0.0 {
            (GlnShape::LognormalRight, 1.0, q_med - scale)
        } else {
            (GlnShape::LognormalLeft, -1.0, q_med + scale)
        };
        Ok(Self {
            shape,
            d,
            c,
            mu: scale.ln(),
            sigma,
            median: q_med,
        })
    }

    /// Value at standard-normal score `z`.
    fn at_score(&self, z: f64) -> f64 {
        match self.shape {
            GlnShape::Normal => self.d + self.c * z,
            // d + c * e^{mu + sigma z} = median + c * e^mu * (e^{sigma z} - 1)
            _ => self.median + self.c * self.mu.exp() * (self.c * self.sigma * z).exp_m1(),
        }
    }

    pub fn quantile(&self, p: f64) -> f64 {
        self.at_score(normal_quantile(p))
    }

    pub fn sample<R: Rng + ?Sized>(&self, rng: &mut R) -> f64 {
        self.at_score(rng.sample(StandardNormal))
    }

    pub fn median(&self) -> f64 {
        self.median
    }
}

/// Shorthand for [`GlnDist::fit`].
pub fn fit_gln(q_low: f64, q_med: f64, q_high: f64, alpha: f64) -> Result<GlnDist> {
    GlnDist::fit(q_low, q_med, q_high, alpha)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::rng_for;

    #[test]
    fn symmetric_triplet_is_standard_normal() {
        let z = normal_quantile(0.975);
        let g = fit_gln(-z, 0.0, z, 0.025).unwrap();
        assert_eq!(g.shape, GlnShape::Normal);
        assert!((g.c - 1.0).abs() < 1e-15 && g.d == 0.0);
    }

    #[test]
    fn exact_lognormal_recovered() {
        let z = normal_quantile(0.975);
        let g = fit_gln((-z).exp(), 1.0, z.exp(), 0.025).unwrap();
        assert_eq!(g.shape, GlnShape::LognormalRight);
        assert!(g.mu.abs() < 1e-12 && (g.sigma - 1.0).abs() < 1e-12 && g.d.abs() < 1e-12);
        for (p, want) in [(0.025, (-z).exp()), (0.5, 1.0), (0.975, z.exp())] {
            assert!((g.quantile(p) - want).abs() < 1e-9);
        }
    }

    #[test]
    fn left_skew_reflects() {
        let z = normal_quantile(0.975);
        let g = fit_gln(-z.exp(), -1.0, -(-z).exp(), 0.025).unwrap();
        assert_eq!(g.shape, GlnShape::LognormalLeft);
        assert!((g.sigma - 1.0).abs() < 1e-12);
        assert!((g.quantile(0.975) + (-z).exp()).abs() < 1e-9);
    }

    #[test]
    fn slight_skew_is_stable() {
        let g = fit_gln(-1.0, 0.0, 1.0 + 2e-6, 0.025).unwrap();
        assert_eq!(g.shape, GlnShape::LognormalRight);
        for (p, want) in [(0.025, -1.0), (0.5, 0.0), (0.975, 1.0 + 2e-6)] {
            assert!((g.quantile(p) - want).abs() < 1e-12, "{p}");
        }
    }

    #[test]
    fn rejects_bad_triplets() {
        assert!(fit_gln(1.0, 1.0, 2.0, 0.025).is_err());
        assert!(fit_gln(2.0, 1.0, 3.0, 0.025).is_err());
        assert!(fit_gln(0.0, 1.0, f64::NAN, 0.025).is_err());
    }

    #[test]
    fn samples_follow_quantiles() {
        let g = fit_gln(1.0, 2.0, 5.0, 0.025).unwrap();
        let mut rng = rng_for(4, &[]);
        let mut s: Vec<f64> = (0..200_000).map(|_| g.sample(&mut rng)).collect();
        crate::stats::sort_floats(&mut s);
        assert!((crate::stats::quantile_sorted(&s, 0.5) - 2.0).abs() < 0.02);
        assert!((crate::stats::quantile_sorted(&s, 0.975) - 5.0).abs() < 0.1);
    }
}
