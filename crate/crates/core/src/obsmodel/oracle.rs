//! Poisson–lognormal marginal likelihood by adaptive quadrature.
//!
//! Used only to test the simulator; inference never evaluates it.

use statrs::function::gamma::ln_gamma;

use crate::error::{Error, Result};

const XGK: [f64; 8] = [
    0.991_455_371_120_812_6,
    0.949_107_912_342_758_5,
    0.864_864_423_359_769_1,
    0.741_531_185_599_394_4,
    0.586_087_235_467_691_1,
    0.405_845_151_377_397_2,
    0.207_784_955_007_898_5,
    0.0,
];
const WGK: [f64; 8] = [
    0.022_935_322_010_529_22,
    0.063_092_092_629_978_55,
    0.104_790_010_322_250_2,
    0.140_653_259_715_525_9,
    0.169_004_726_639_267_9,
    0.190_350_578_064_785_4,
    0.204_432_940_075_298_9,
    0.209_482_141_084_727_8,
];
const WG: [f64; 4] = [
    0.129_484_966_168_869_7,
    0.279_705_391_489_276_7,
    0.381_830_050_505_118_9,
    0.417_959_183_673_469_4,
];

/// Kronrod estimate and Kronrod-minus-Gauss error on `[a, b]`.
fn gk15(f: &impl Fn(f64) -> f64, a: f64, b: f64) -> (f64, f64) {
    let c = 0.5 * (a + b);
    let h = 0.5 * (b - a);
    let fc = f(c);
    let mut k = WGK[7] * fc;
    let mut g = WG[3] * fc;
    for j in 0..7 {
        let dx = h * XGK[j];
        let s = f(c - dx) + f(c + dx);
        k += WGK[j] * s;
        if j % 2 == 1 {
            g += WG[j / 2] * s;
        }
    }
    (k * h, ((k - g) * h).abs())
}

/// Globally adaptive quadrature: bisect the interval with the largest error
/// until the total error is below `rel_tol` of the estimate.
pub fn integrate(f: impl Fn(f64) -> f64, a: f64, b: f64, rel_tol: f64) -> Result<f64> {
    const MAX_INTERVALS: usize = 5000;
    let (v, e) = gk15(&f, a, b);
    let mut parts = vec![(a, b, v, e)];
    loop {
        let total: f64 = parts.iter().map(|p| p.2).sum();
        let err: f64 = parts.iter().map(|p| p.3).sum();
        if err <= rel_tol * total.abs() || err < 1e-300 {
            return Ok(total);
        }
        if parts.len() >= MAX_INTERVALS || !total.is_finite() {
            return Err(Error::Oracle(format!(
                "estimate {total}, error {err} after {} intervals",
                parts.len()
            )));
        }
        let worst = parts
            .iter()
            .enumerate()
            .max_by(|x, y| x.1 .3.total_cmp(&y.1 .3))
            .map(|(i, _)| i)
            .unwrap();
        let (lo, hi, _, _) = parts.swap_remove(worst);
        let mid = 0.5 * (lo + hi);
        let (v1, e1) = gk15(&f, lo, mid);
        let (v2, e2) = gk15(&f, mid, hi);
        parts.push((lo, mid, v1, e1));
        parts.push((mid, hi, v2, e2));
    }
}

/// `log p(y)` where `y ~ Poisson(c * lambda)` and
/// `log lambda ~ N(log nu + beta_eff, sigma2)`.
///
/// Integrates over `t = (log lambda - m) / sigma` around the mode of the
/// log-concave integrand, rescaled by its peak to avoid underflow.
pub fn loglik_oracle(y: u64, c: f64, nu: f64, beta_eff: f64, sigma2: f64) -> Result<f64> {
    if !(c > 0.0 && nu > 0.0 && sigma2 > 0.0) {
        return Err(Error::Input(format!(
            "oracle needs c, nu, sigma2 > 0 (got {c}, {nu}, {sigma2})"
        )));
    }
    let yf = y as f64;
    let sigma = sigma2.sqrt();
    let mu = c.ln() + nu.ln() + beta_eff;
    let log_f = |t: f64| {
        let eta = mu + sigma * t;
        yf * eta - eta.exp() - 0.5 * t * t
    };
    // d/dt log f = y sigma - sigma e^eta - t, strictly decreasing.
    let mut t = 0.0;
    for _ in 0..200 {
        let e = (mu + sigma * t).exp();
        let g = yf * sigma - sigma * e - t;
        let h = -sigma2 * e - 1.0;
        let mut step = g / h;
        if !step.is_finite() {
            step = if g > 0.0 { -1.0 } else { 1.0 };
        }
        let step = step.clamp(-5.0, 5.0);
        t -= step;
        if step.abs() < 1e-12 * (1.0 + t.abs()) {
            break;
        }
    }
    let peak = log_f(t);
    // Curvature of log f is at most -1, so the integrand is below
    // exp(-(x - t)^2 / 2) of its peak: 40 units captures everything.
    let integral = integrate(|x| (log_f(x) - peak).exp(), t - 40.0, t + 40.0, 1e-10)?;
    Ok(peak + integral.ln() - ln_gamma(yf + 1.0) - 0.5 * (2.0 * std::f64::consts::PI).ln())
}

#[cfg(test)]
mod tests {
    use super::*;

    fn poisson_logpmf(y: u64, mu: f64) -> f64 {
        y as f64 * mu.ln() - mu - ln_gamma(y as f64 + 1.0)
    }

    #[test]
    fn quadrature_on_known_integrals() {
        let v = integrate(|x: f64| (-x * x / 2.0).exp(), -40.0, 40.0, 1e-13).unwrap();
        assert!((v - (2.0 * std::f64::consts::PI).sqrt()).abs() < 1e-12);
        let v = integrate(|x: f64| x.sin(), 0.0, std::f64::consts::PI, 1e-13).unwrap();
        assert!((v - 2.0).abs() < 1e-12);
    }

    #[test]
    fn degenerate_noise_limit() {
        for &(y, c, nu, b) in &[(0, 2.0, 0.5, 0.0), (3, 10.0, 0.4, 0.2), (40, 150.0, 0.2, 0.3)] {
            let got = loglik_oracle(y, c, nu, b, 1e-6).unwrap();
            let want = poisson_logpmf(y, c * nu * f64::exp(b));
            assert!((got - want).abs() < 1e-4, "{y}: {got} vs {want}");
        }
    }

    #[test]
    fn normalizes_and_matches_mean() {
        for &(c, nu, b, s2) in &[(1.0, 2.0, 0.0, 0.5), (10.0, 0.3, -0.5, 1.0), (3.0, 1.0, 0.2, 0.1)] {
            let mut total = 0.0;
            let mut mean = 0.0;
            for y in 0..4000u64 {
                let p = loglik_oracle(y, c, nu, b, s2).unwrap().exp();
                total += p;
                mean += y as f64 * p;
                if y > 50 && p < 1e-18 {
                    break;
                }
            }
            let want = c * nu * f64::exp(b + s2 / 2.0);
            assert!((total - 1.0).abs() < 1e-6, "total {total}");
            assert!((mean - want).abs() < 1e-6 * want.max(1.0), "mean {mean} vs {want}");
        }
    }

    #[test]
    fn rejects_bad_inputs() {
        assert!(loglik_oracle(1, 0.0, 1.0, 0.0, 1.0).is_err());
        assert!(loglik_oracle(1, 1.0, 0.0, 0.0, 1.0).is_err());
        assert!(loglik_oracle(1, 1.0, 1.0, 0.0, 0.0).is_err());
    }
}
