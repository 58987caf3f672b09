use bombus_core::abc::{Calibrator, Method, MethodConfig, ReferenceTable};
use bombus_core::mlkit::Matrix;
use bombus_core::model::{generate_table, NormalToy, Simulator};
use bombus_core::rng::rng_for;
use bombus_core::stats;
use proptest::prelude::*;
use rand::Rng;
use rand_distr::StandardNormal;

fn table_from(params: Vec<Vec<f64>>, stats: Vec<Vec<f64>>) -> ReferenceTable {
    let p = params[0].len();
    let d = stats[0].len();
    ReferenceTable {
        param_names: (0..p).map(|i| format!("p{i}")).collect(),
        stat_names: (0..d).map(|i| format!("s{i}")).collect(),
        rows: (0..params.len()).collect(),
        params: Matrix::from_rows(&params),
        stats: Matrix::from_rows(&stats),
        base_seed: 0,
        spec_id: "test".into(),
    }
}

/// `psi = 2 + 3 s0 - s1 + noise * e` with uniform statistics.
fn affine_table(m: usize, noise: f64, seed: u64) -> ReferenceTable {
    let mut g = rng_for(seed, &[]);
    let mut params = Vec::new();
    let mut stats = Vec::new();
    for _ in 0..m {
        let s: Vec<f64> = (0..2).map(|_| g.random_range(0.0..1.0)).collect();
        let e: f64 = g.sample(StandardNormal);
        params.push(vec![2.0 + 3.0 * s[0] - s[1] + noise * e]);
        stats.push(s);
    }
    table_from(params, stats)
}

fn quick_config() -> MethodConfig {
    let mut c = MethodConfig::default();
    c.forest.trees = 100;
    c.gbm.stages = 100;
    c.gbm.learning_rate = 0.1;
    c
}

fn weighted_sd(values: &[f64], weights: &[f64]) -> f64 {
    let m = stats::weighted_mean(values, weights);
    let v: f64 = values.iter().zip(weights).map(|(x, w)| w * (x - m).powi(2)).sum();
    v.sqrt()
}

#[test]
fn observed_row_dominates_at_tiny_epsilon() {
    let mut g = rng_for(1, &[]);
    let stats: Vec<Vec<f64>> = (0..2000).map(|_| (0..3).map(|_| g.random_range(0.0..1.0)).collect()).collect();
    let params: Vec<Vec<f64>> = (0..2000).map(|i| vec![i as f64]).collect();
    let table = table_from(params, stats.clone());
    let cal = Calibrator::new(table, quick_config(), 0).unwrap();
    let prep = cal.prepare(&stats[17], 3.0 / 2000.0, 0).unwrap();
    let best = (0..2000).max_by(|&a, &b| prep.kernel.weights[a].total_cmp(&prep.kernel.weights[b])).unwrap();
    assert_eq!(best, 17);
    assert!(prep.kernel.weights[17] >= 0.5);
    assert_eq!(prep.run(Method::Rejection).params[0].median(), 17.0);
}

fn toy_observations(toy: &NormalToy, n: usize) -> Vec<f64> {
    (0..n)
        .map(|i| {
            let seed = 1_000_000 + i as u64;
            toy.simulate(&toy.sample_prior(seed), seed).unwrap()[0]
        })
        .collect()
}

/// The table grows as epsilon shrinks so that every run keeps about 1000
/// rows; the remaining error is then dominated by the kernel bias.
#[test]
fn toy_rejection_error_shrinks_with_epsilon() {
    let toy = NormalToy::default();
    let obs = toy_observations(&toy, 40);
    let errors: Vec<f64> = [0.2, 0.05, 0.01]
        .iter()
        .map(|&eps| {
            let m = (1000.0 / eps) as usize;
            let cal = Calibrator::new(generate_table(&toy, m, 5).unwrap(), quick_config(), 0).unwrap();
            obs.iter()
                .map(|&y| {
                    let r = cal.run(Method::Rejection, &[y], eps).unwrap();
                    (r.params[0].mean - toy.posterior(y).0).abs()
                })
                .sum::<f64>()
                / obs.len() as f64
        })
        .collect();
    assert!(errors[0] > errors[1] && errors[1] > errors[2], "{errors:?}");
}

#[test]
fn epsilon_one_returns_the_prior() {
    let toy = NormalToy::default();
    let table = generate_table(&toy, 20_000, 6).unwrap();
    let fresh: Vec<f64> = (0..20_000).map(|i| toy.sample_prior(50_000 + i)[0]).collect();
    let cal = Calibrator::new(table, quick_config(), 0).unwrap();
    let r = cal.run(Method::Rejection, &[0.7], 1.0).unwrap();
    let s = r.params[0].samples.as_ref().unwrap();
    assert!(stats::ks_distance_weighted(&s.values, &s.weights, &fresh) < 0.05);
}

#[test]
fn loclh_affine_oracle() {
    let table = affine_table(3000, 0.1, 2);
    let cal = Calibrator::new(table, quick_config(), 0).unwrap();
    let r = cal.run(Method::LocLh, &[0.5, 0.5], 0.1).unwrap();
    let p = &r.params[0];
    assert!(!p.failed);
    assert!((p.median() - 3.0).abs() < 0.02, "{}", p.median());
    let s = p.samples.as_ref().unwrap();
    let sd = weighted_sd(&s.values, &s.weights);
    assert!((sd - 0.1).abs() < 0.03, "{sd}");
}

#[test]
fn loclh_rank_deficient_design_warns() {
    let mut g = rng_for(3, &[]);
    let stats: Vec<Vec<f64>> = (0..400).map(|_| (0..30).map(|_| g.random_range(0.0..1.0)).collect()).collect();
    let params: Vec<Vec<f64>> = stats.iter().map(|s| vec![s[0] + 0.1 * g.sample::<f64, _>(StandardNormal)]).collect();
    let table = table_from(params, stats.clone());
    let cal = Calibrator::new(table, quick_config(), 0).unwrap();
    let r = cal.run(Method::LocLh, &stats[0], 0.05).unwrap();
    let p = &r.params[0];
    assert!(!p.failed);
    assert!(p.warning.as_deref().unwrap_or("").contains("rank-deficient"));
}

#[test]
fn nonlinear_methods_follow_linear_truth() {
    let table = affine_table(3000, 0.1, 4);
    let cal = Calibrator::new(table, quick_config(), 0).unwrap();
    let prep = cal.prepare(&[0.5, 0.5], 0.1, 9).unwrap();
    let lin = prep.run(Method::LocLh).params[0].median();
    let nl = prep.run(Method::LocNlh);
    assert!((nl.params[0].median() - lin).abs() < 0.05, "{} vs {lin}", nl.params[0].median());
    let rf = prep.run(Method::Rfa).params[0].median();
    assert!((rf - lin).abs() < 0.1, "{rf} vs {lin}");
    let q = nl.params[0].quantiles;
    let iqr_proxy = {
        let s = nl.params[0].samples.as_ref().unwrap();
        let v = stats::weighted_quantiles(&s.values, &s.weights, &[0.25, 0.75]);
        v[1] - v[0]
    };
    let an = prep.run(Method::Anlh).params[0].median();
    assert!((an - q[1]).abs() <= iqr_proxy, "{an} vs {}", q[1]);
}

#[test]
fn locnlh_tracks_heteroscedastic_spread() {
    let mut g = rng_for(7, &[]);
    let sigma = |s: f64| 0.1 * (1.0 + s);
    let mut params = Vec::new();
    let mut stats = Vec::new();
    for _ in 0..6000 {
        let s: f64 = g.random_range(0.0..1.0);
        params.push(vec![s + sigma(s) * g.sample::<f64, _>(StandardNormal)]);
        stats.push(vec![s]);
    }
    let cal = Calibrator::new(table_from(params, stats), quick_config(), 0).unwrap();
    let r = cal.run(Method::LocNlh, &[0.9], 0.5).unwrap();
    let s = r.params[0].samples.as_ref().unwrap();
    let sd = weighted_sd(&s.values, &s.weights);
    let want = sigma(0.9);
    assert!((sd / want - 1.0).abs() < 0.2, "sd {sd} want {want}");
}

#[test]
fn constant_parameter_stays_constant() {
    let mut g = rng_for(8, &[]);
    let stats: Vec<Vec<f64>> = (0..1000).map(|_| vec![g.random_range(0.0..1.0), g.random_range(0.0..1.0)]).collect();
    let params = vec![vec![4.5]; 1000];
    let cal = Calibrator::new(table_from(params, stats), quick_config(), 0).unwrap();
    for m in [Method::LocNlh, Method::Rfa, Method::Rejection] {
        let r = cal.run(m, &[0.3, 0.3], 0.2).unwrap();
        let p = &r.params[0];
        assert!(!p.failed, "{m}");
        let s = p.samples.as_ref().unwrap();
        assert!(s.values.iter().all(|v| (v - 4.5).abs() < 1e-9), "{m}");
    }
}

#[test]
fn anlh_without_filtering_equals_locnlh() {
    let table = affine_table(2000, 0.2, 10);
    let mut cfg = quick_config();
    cfg.support.rho = 1.0;
    let cal = Calibrator::new(table, cfg, 0).unwrap();
    let prep = cal.prepare(&[0.4, 0.6], 0.1, 3).unwrap();
    assert_eq!(prep.run(Method::Anlh).params, prep.run(Method::LocNlh).params);
}

#[test]
fn quantile_forests_track_a_deterministic_map() {
    let mut g = rng_for(11, &[]);
    let mut params = Vec::new();
    let mut stats = Vec::new();
    for _ in 0..4000 {
        let s = [g.random_range(0.0..1.0f64), g.random_range(0.0..1.0)];
        params.push(vec![(3.0 * s[0]).sin()]);
        stats.push(s.to_vec());
    }
    let cal = Calibrator::new(table_from(params, stats), quick_config(), 0).unwrap();
    let want = (3.0f64 * 0.6).sin();
    for m in [Method::UwqRf, Method::WqRf] {
        let r = cal.run(m, &[0.6, 0.5], 0.1).unwrap();
        let q = r.params[0].quantiles;
        assert!((q[1] - want).abs() < 0.03, "{m}: {} vs {want}", q[1]);
        assert!(q[0] <= q[1] && q[1] <= q[2]);
    }
}

#[test]
fn qgbm_without_signal_returns_empirical_quantiles() {
    let mut g = rng_for(12, &[]);
    let stats: Vec<Vec<f64>> = (0..10_000).map(|_| vec![g.random_range(0.0..1.0), g.random_range(0.0..1.0)]).collect();
    let params: Vec<Vec<f64>> = (0..10_000).map(|_| vec![g.sample(StandardNormal)]).collect();
    let mut cfg = quick_config();
    cfg.gbm.min_leaf = 50;
    let cal = Calibrator::new(table_from(params, stats), cfg, 0).unwrap();
    let prep = cal.prepare(&[0.5, 0.5], 0.3, 1).unwrap();
    let rej = prep.run(Method::Rejection);
    let s = rej.params[0].samples.as_ref().unwrap();
    let empirical = stats::weighted_quantiles(&s.values, &s.weights, &[0.025, 0.5, 0.975]);
    let l1 = prep.run(Method::QGbmL1);
    let l2 = prep.run(Method::QGbmL2);
    for k in 0..3 {
        assert!((l1.params[0].quantiles[k] - empirical[k]).abs() < 0.25, "{k}: {:?} vs {empirical:?}", l1.params[0].quantiles);
    }
    assert_eq!(l1.params[0].quantiles, l2.params[0].quantiles);
    assert!((l1.params[0].mean - l2.params[0].mean).abs() < 0.15);
}

#[test]
fn every_method_is_deterministic_and_sorted() {
    let table = affine_table(1500, 0.3, 13);
    let run = || {
        let cal = Calibrator::new(table.clone(), quick_config(), 21).unwrap();
        let prep = cal.prepare(&[0.2, 0.7], 0.1, 5).unwrap();
        Method::ALL.iter().map(|&m| prep.run(m)).collect::<Vec<_>>()
    };
    let a = run();
    assert_eq!(a, run());
    for r in &a {
        for p in &r.params {
            assert!(p.failed || (p.quantiles[0] <= p.quantiles[1] && p.quantiles[1] <= p.quantiles[2]), "{}", r.method);
        }
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(16))]

    #[test]
    fn emitted_quantiles_are_ordered(seed in 0u64..1000, eps in 0.05f64..0.5, obs in prop::collection::vec(0.0f64..1.0, 2)) {
        let mut g = rng_for(seed, &[]);
        let stats: Vec<Vec<f64>> = (0..300).map(|_| vec![g.random_range(0.0..1.0), g.random_range(0.0..1.0)]).collect();
        let params: Vec<Vec<f64>> = stats.iter().map(|s| vec![s[0] * s[1] + g.random_range(0.0..0.5), g.random_range(-1.0..1.0)]).collect();
        let mut cfg = quick_config();
        cfg.forest.trees = 20;
        cfg.gbm.stages = 20;
        cfg.nn.epochs = 100;
        let cal = Calibrator::new(table_from(params, stats), cfg, seed).unwrap();
        let prep = cal.prepare(&obs, eps, seed).unwrap();
        for m in Method::ALL {
            for p in prep.run(m).params {
                prop_assert!(p.failed || (p.quantiles[0] <= p.quantiles[1] && p.quantiles[1] <= p.quantiles[2]));
            }
        }
    }
}
