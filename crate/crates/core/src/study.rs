//! Simulation study: calibrate table rows as pseudo-observations and score
//! every method against the known truth.

use rand::seq::index;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::abc::{Calibrator, Method, MethodConfig, ReferenceTable};
use crate::error::{Error, Result};
use crate::eval::{SimStudyReport, StudyRecord};
use crate::rng::{self, stream};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct StudyConfig {
    /// Table rows used as pseudo-observed datasets.
    pub n_ref: usize,
    pub epsilons: Vec<f64>,
    pub methods: Vec<Method>,
}

impl Default for StudyConfig {
    fn default() -> Self {
        Self {
            n_ref: 50,
            epsilons: vec![0.05],
            methods: Method::ALL.to_vec(),
        }
    }
}

impl StudyConfig {
    pub fn validate(&self, table_rows: usize) -> Result<()> {
        if self.n_ref == 0 || self.n_ref >= table_rows {
            return Err(Error::Config(format!(
                "n_ref must lie in [1, {}), got {}",
                table_rows, self.n_ref
            )));
        }
        if self.methods.is_empty() {
            return Err(Error::Config("no methods selected".into()));
        }
        if self.methods.iter().any(|m| m.uses_epsilon()) && self.epsilons.is_empty() {
            return Err(Error::Config("kernel methods need at least one epsilon".into()));
        }
        if let Some(e) = self.epsilons.iter().find(|e| !(**e > 0.0 && **e <= 1.0)) {
            return Err(Error::Config(format!("epsilon must lie in (0, 1], got {e}")));
        }
        Ok(())
    }

    /// Method labels in report order.
    pub fn labels(&self) -> Vec<String> {
        let mut out = Vec::new();
        for &m in &self.methods {
            if m.uses_epsilon() {
                out.extend(self.epsilons.iter().map(|&e| m.label(e)));
            } else {
                out.push(m.label(0.0));
            }
        }
        out
    }
}

/// Positions of the pseudo-observed rows, sorted.
pub fn reference_rows(table_len: usize, n_ref: usize, seed: u64) -> Vec<usize> {
    let mut g = rng::rng_for(seed, &[stream::SIMSTUDY]);
    let mut v = index::sample(&mut g, table_len, n_ref).into_vec();
    v.sort_unstable();
    v
}

/// Runs the study. All reference rows are removed from the table before
/// calibrating, so no dataset is calibrated against itself. Output does not
/// depend on the number of worker threads.
pub fn run_simstudy(
    table: &ReferenceTable,
    study: &StudyConfig,
    config: &MethodConfig,
    seed: u64,
    progress: impl Fn(usize) + Sync,
) -> Result<SimStudyReport> {
    table.validate()?;
    study.validate(table.len())?;
    let refs = reference_rows(table.len(), study.n_ref, seed);
    let remaining = table.without_rows(&refs);
    let cal = Calibrator::new(remaining, config.clone(), rng::derive_seed(seed, &[stream::SIMSTUDY, 1]))?;
    let done = std::sync::atomic::AtomicUsize::new(0);
    let per_ref: Vec<Vec<StudyRecord>> = refs
        .par_iter()
        .map(|&pos| -> Result<Vec<StudyRecord>> {
            let dataset = table.rows[pos];
            let observed = table.stats.row(pos);
            let truth = table.params.row(pos);
            let ds_seed = rng::derive_seed(seed, &[stream::SIMSTUDY, 2, dataset as u64]);
            let mut out = Vec::new();
            let mut push = |res: crate::abc::PosteriorResult| {
                for (k, p) in res.params.iter().enumerate() {
                    out.push(StudyRecord::new(dataset, &res.method, p, truth[k]));
                }
            };
            let mut by_method: Vec<(usize, crate::abc::PosteriorResult)> = Vec::new();
            for (ei, &eps) in study.epsilons.iter().enumerate() {
                let prep = cal.prepare(observed, eps, rng::derive_seed(ds_seed, &[ei as u64]))?;
                for (mi, &m) in study.methods.iter().enumerate() {
                    if m.uses_epsilon() {
                        by_method.push((mi * study.epsilons.len() + ei, prep.run(m)));
                    }
                }
            }
            if study.methods.iter().any(|m| !m.uses_epsilon()) {
                let eps = study.epsilons.first().copied().unwrap_or(1.0);
                let prep = cal.prepare(observed, eps, ds_seed)?;
                for (mi, &m) in study.methods.iter().enumerate() {
                    if !m.uses_epsilon() {
                        by_method.push((mi * study.epsilons.len().max(1), prep.run(m)));
                    }
                }
            }
            by_method.sort_by_key(|(k, _)| *k);
            for (_, r) in by_method {
                push(r);
            }
            progress(done.fetch_add(1, std::sync::atomic::Ordering::Relaxed) + 1);
            Ok(out)
        })
        .collect::<Result<_>>()?;
    let records = per_ref.into_iter().flatten().collect();
    Ok(SimStudyReport::from_records(study.labels(), table.param_names.clone(), records))
}
