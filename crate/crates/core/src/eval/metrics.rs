//! Simulation-study metrics and the report built from them.

use std::collections::BTreeMap;
use std::fmt::Write as _;

use serde::{Deserialize, Serialize};

use crate::abc::ParamPosterior;
use crate::error::{Error, Result};
use crate::stats;

/// RAE plots are truncated at this value.
pub const RAE_TRUNCATION: f64 = 2.0;

/// Relative absolute error; `None` when `truth` is zero.
pub fn rae(estimate: f64, truth: f64) -> Option<f64> {
    (truth != 0.0).then(|| (estimate - truth).abs() / truth.abs())
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Coverage {
    /// Proportion of non-failed datasets whose interval holds the truth.
    pub coverage: f64,
    pub used: usize,
    pub failed: usize,
}

/// Empirical coverage of the 2.5%–97.5% intervals over non-failed results.
pub fn coverage(results: &[&ParamPosterior], truths: &[f64]) -> Result<Coverage> {
    if results.len() != truths.len() {
        return Err(Error::Input("one truth per result is required".into()));
    }
    let failed = results.iter().filter(|r| r.failed).count();
    let used = results.len() - failed;
    if used == 0 {
        return Err(Error::Input("coverage needs at least one non-failed interval".into()));
    }
    let hit = results
        .iter()
        .zip(truths)
        .filter(|(r, &t)| !r.failed && r.covers(t))
        .count();
    Ok(Coverage {
        coverage: hit as f64 / used as f64,
        used,
        failed,
    })
}

/// Ascending ranks starting at 1; ties share the mean of their ranks and
/// NaN sorts last.
pub fn tied_ranks(values: &[f64]) -> Vec<f64> {
    let key = |v: f64| if v.is_nan() { f64::INFINITY } else { v };
    let mut order: Vec<usize> = (0..values.len()).collect();
    order.sort_by(|&a, &b| key(values[a]).total_cmp(&key(values[b])));
    let mut ranks = vec![0.0; values.len()];
    let mut i = 0;
    while i < order.len() {
        let mut j = i;
        while j + 1 < order.len() && key(values[order[j + 1]]) == key(values[order[i]]) {
            j += 1;
        }
        let r = (i + j) as f64 / 2.0 + 1.0;
        for &k in &order[i..=j] {
            ranks[k] = r;
        }
        i = j + 1;
    }
    ranks
}

/// `scores[m][p]` is method `m`'s score on parameter `p`, lower is better.
/// Returns each method's rank averaged over parameters.
pub fn average_ranks(scores: &[Vec<f64>]) -> Vec<f64> {
    let n_params = scores.first().map_or(0, Vec::len);
    let mut total = vec![0.0; scores.len()];
    for p in 0..n_params {
        let col: Vec<f64> = scores.iter().map(|s| s[p]).collect();
        for (t, r) in total.iter_mut().zip(tied_ranks(&col)) {
            *t += r;
        }
    }
    total.iter().map(|t| t / n_params.max(1) as f64).collect()
}

/// One (dataset, method, parameter) outcome.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StudyRecord {
    /// Table row used as the pseudo-observation.
    pub dataset: usize,
    pub method: String,
    pub parameter: String,
    pub truth: f64,
    pub quantiles: [f64; 3],
    pub mean: f64,
    pub failed: bool,
    pub warning: bool,
}

impl StudyRecord {
    pub fn new(dataset: usize, method: &str, post: &ParamPosterior, truth: f64) -> Self {
        Self {
            dataset,
            method: method.into(),
            parameter: post.name.clone(),
            truth,
            quantiles: post.quantiles,
            mean: post.mean,
            failed: post.failed,
            warning: post.warning.is_some(),
        }
    }

    /// RAE of the posterior median, or `None` when failed or undefined.
    pub fn rae(&self) -> Option<f64> {
        if self.failed {
            None
        } else {
            rae(self.quantiles[1], self.truth)
        }
    }
}

/// Per (method, parameter) aggregates.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MethodSummary {
    pub method: String,
    pub parameter: String,
    pub datasets: usize,
    pub median_rae: f64,
    pub mean_rae: f64,
    /// NaN when every dataset failed.
    pub coverage: f64,
    pub failure: f64,
    pub rae_undefined: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SimStudyReport {
    pub methods: Vec<String>,
    pub parameters: Vec<String>,
    pub records: Vec<StudyRecord>,
    pub summaries: Vec<MethodSummary>,
    /// Per method, the rank of its median RAE averaged over parameters.
    pub average_rank: Vec<f64>,
    /// Per method, failure proportion averaged over parameters.
    pub average_failure: Vec<f64>,
}

fn fmt(v: f64) -> String {
    format!("{v}")
}

impl SimStudyReport {
    /// Aggregates records; method and parameter order is taken as given.
    pub fn from_records(methods: Vec<String>, parameters: Vec<String>, records: Vec<StudyRecord>) -> Self {
        let mut groups: BTreeMap<(usize, usize), Vec<&StudyRecord>> = BTreeMap::new();
        for r in &records {
            let m = methods.iter().position(|x| *x == r.method);
            let p = parameters.iter().position(|x| *x == r.parameter);
            if let (Some(m), Some(p)) = (m, p) {
                groups.entry((m, p)).or_default().push(r);
            }
        }
        let mut summaries = Vec::new();
        let mut rae_scores = vec![vec![f64::NAN; parameters.len()]; methods.len()];
        let mut failures = vec![vec![0.0; parameters.len()]; methods.len()];
        for (m, method) in methods.iter().enumerate() {
            for (p, parameter) in parameters.iter().enumerate() {
                let group = groups.get(&(m, p)).map(Vec::as_slice).unwrap_or(&[]);
                let failed = group.iter().filter(|r| r.failed).count();
                let used: Vec<&&StudyRecord> = group.iter().filter(|r| !r.failed).collect();
                let mut raes: Vec<f64> = used.iter().filter_map(|r| r.rae()).collect();
                let rae_undefined = used.len() - raes.len();
                let (median_rae, mean_rae) = if raes.is_empty() {
                    (f64::NAN, f64::NAN)
                } else {
                    let mean = raes.iter().sum::<f64>() / raes.len() as f64;
                    (stats::median(&mut raes), mean)
                };
                let cov = if used.is_empty() {
                    f64::NAN
                } else {
                    used.iter().filter(|r| r.quantiles[0] <= r.truth && r.truth <= r.quantiles[2]).count() as f64
                        / used.len() as f64
                };
                let failure = if group.is_empty() {
                    f64::NAN
                } else {
                    failed as f64 / group.len() as f64
                };
                rae_scores[m][p] = median_rae;
                failures[m][p] = failure;
                summaries.push(MethodSummary {
                    method: method.clone(),
                    parameter: parameter.clone(),
                    datasets: group.len(),
                    median_rae,
                    mean_rae,
                    coverage: cov,
                    failure,
                    rae_undefined,
                });
            }
        }
        let average_rank = average_ranks(&rae_scores);
        let average_failure = failures
            .iter()
            .map(|f| f.iter().sum::<f64>() / f.len().max(1) as f64)
            .collect();
        Self {
            methods,
            parameters,
            records,
            summaries,
            average_rank,
            average_failure,
        }
    }

    pub fn summary(&self, method: &str, parameter: &str) -> Option<&MethodSummary> {
        self.summaries
            .iter()
            .find(|s| s.method == method && s.parameter == parameter)
    }

    /// Coverage per parameter, average failure and average rank per method.
    pub fn table_csv(&self) -> String {
        let mut out = String::from("method");
        for p in &self.parameters {
            write!(out, ",coverage_{p}").unwrap();
        }
        out.push_str(",average_failure,average_rank\n");
        for (m, method) in self.methods.iter().enumerate() {
            out.push_str(method);
            for p in &self.parameters {
                let c = self.summary(method, p).map_or(f64::NAN, |s| s.coverage);
                write!(out, ",{}", fmt(c)).unwrap();
            }
            writeln!(out, ",{},{}", fmt(self.average_failure[m]), fmt(self.average_rank[m])).unwrap();
        }
        out
    }

    pub fn summary_csv(&self) -> String {
        let mut out = String::from("method,parameter,datasets,median_rae,mean_rae,coverage,failure,rae_undefined\n");
        for s in &self.summaries {
            writeln!(
                out,
                "{},{},{},{},{},{},{},{}",
                s.method,
                s.parameter,
                s.datasets,
                fmt(s.median_rae),
                fmt(s.mean_rae),
                fmt(s.coverage),
                fmt(s.failure),
                s.rae_undefined
            )
            .unwrap();
        }
        out
    }

    /// Long format, one line per (dataset, method, parameter).
    pub fn records_csv(&self) -> String {
        let mut out =
            String::from("dataset,method,parameter,truth,q025,q50,q975,mean,rae,rae_truncated,covered,failed,warning\n");
        for r in &self.records {
            let rae = r.rae();
            let covered = !r.failed && r.quantiles[0] <= r.truth && r.truth <= r.quantiles[2];
            writeln!(
                out,
                "{},{},{},{},{},{},{},{},{},{},{},{},{}",
                r.dataset,
                r.method,
                r.parameter,
                fmt(r.truth),
                fmt(r.quantiles[0]),
                fmt(r.quantiles[1]),
                fmt(r.quantiles[2]),
                fmt(r.mean),
                rae.map_or("NA".into(), fmt),
                rae.map_or("NA".into(), |v| fmt(v.min(RAE_TRUNCATION))),
                u8::from(covered),
                u8::from(r.failed),
                u8::from(r.warning)
            )
            .unwrap();
        }
        out
    }
}
