//! Subcommand implementations. Every command writes a snapshot of the
//! resolved configuration and a manifest next to its outputs.

use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};

use bombus_core::abc::{Calibrator, PosteriorResult, ReferenceTable, Transform};
use bombus_core::eval::{bayes_pvalues, pca_check, posterior_predictive};
use bombus_core::mlkit::Matrix;
use bombus_core::model::{generate_table_file, BeeModel, Simulator};
use bombus_core::obsmodel::{Dataset, ParamVector};
use bombus_core::rng::{self, stream};
use bombus_core::study::run_simstudy;
use serde::Serialize;
use sha2::{Digest, Sha256};

use crate::{CliError, Outcome, RunConfig};

const TABLE_FILE: &str = "table.csv";
const POSTERIOR_FILE: &str = "posterior.csv";

#[derive(Serialize)]
struct Manifest<'a> {
    command: &'a str,
    version: &'a str,
    seed: u64,
    model_seed: u64,
    spec_id: String,
    config_sha256: String,
    inputs: Vec<String>,
}

fn runtime(msg: impl Into<String>) -> CliError {
    CliError::Runtime(msg.into())
}

fn write(path: &Path, text: &str) -> Result<(), CliError> {
    if let Some(dir) = path.parent() {
        fs::create_dir_all(dir)?;
    }
    fs::write(path, text).map_err(|e| runtime(format!("cannot write {}: {e}", path.display())))
}

fn build_model(cfg: &RunConfig) -> Result<BeeModel, CliError> {
    Ok(BeeModel::build(cfg.model.clone())?)
}

fn stamp(cfg: &RunConfig, model: &BeeModel, command: &str, inputs: &[&Path]) -> Result<(), CliError> {
    let snapshot = cfg.resolved(model.periods()).to_toml();
    let digest = Sha256::digest(snapshot.as_bytes());
    let manifest = Manifest {
        command,
        version: env!("CARGO_PKG_VERSION"),
        seed: cfg.seed,
        model_seed: cfg.model.seed,
        spec_id: model.spec_id(),
        config_sha256: digest.iter().map(|b| format!("{b:02x}")).collect(),
        inputs: inputs.iter().map(|p| p.display().to_string()).collect(),
    };
    write(&cfg.output.join(format!("{command}.config.toml")), &snapshot)?;
    write(
        &cfg.output.join(format!("{command}.manifest.json")),
        &(serde_json::to_string_pretty(&manifest).expect("manifest serializes") + "\n"),
    )
}

fn load_table(cfg: &RunConfig, model: &BeeModel, path: Option<PathBuf>) -> Result<(ReferenceTable, PathBuf), CliError> {
    let path = path.unwrap_or_else(|| cfg.output.join(TABLE_FILE));
    if !path.exists() {
        return Err(runtime(format!("no reference table at {}; run `simulate` first", path.display())));
    }
    let table = ReferenceTable::load(&path)?;
    if table.spec_id != model.spec_id() || table.param_names != model.param_names() {
        return Err(runtime(format!(
            "{} was simulated for a different design or prior layout",
            path.display()
        )));
    }
    Ok((table, path))
}

fn load_observed(model: &BeeModel, path: &Path) -> Result<Dataset, CliError> {
    let data = Dataset::load(path)?;
    let visits: std::collections::HashSet<(usize, i32, usize)> =
        model.design.visits.iter().map(|v| (v.site, v.year, v.period)).collect();
    if let Some(r) = data.records.iter().find(|r| !visits.contains(&(r.site, r.year, r.period))) {
        return Err(runtime(format!(
            "{}: site {} year {} period {} is not a visit of the configured design",
            path.display(),
            r.site,
            r.year,
            r.period
        )));
    }
    Ok(data)
}

/// File-name form of a method label, e.g. `rej(2.5%)` -> `rej_2.5pct`.
pub fn label_slug(label: &str) -> String {
    label.replace('(', "_").replace("%)", "pct").replace(')', "")
}

pub fn simulate(cfg: &RunConfig, resume: bool) -> Result<Outcome, CliError> {
    let model = build_model(cfg)?;
    fs::create_dir_all(&cfg.output)?;
    let path = cfg.output.join(TABLE_FILE);
    let m = cfg.simulate.rows;
    let step = (m / 20).max(1);
    generate_table_file(&model, m, cfg.seed, &path, resume, |done, total| {
        if done % step < bombus_core::model::WRITE_CHUNK || done == total {
            eprintln!("simulated {done}/{total}");
        }
    })?;
    stamp(cfg, &model, "simulate", &[])?;
    Ok(Outcome::Complete)
}

fn calibrator(cfg: &RunConfig, model: &BeeModel, table: ReferenceTable, seed: u64) -> Result<Calibrator, CliError> {
    let transforms = model
        .prior
        .marginals()
        .iter()
        .map(|l| {
            let (lo, hi) = l.support();
            Transform::for_support(lo, hi)
        })
        .collect();
    Ok(Calibrator::new(table, cfg.methods.clone(), seed)?.with_transforms(transforms)?)
}

pub fn calibrate(cfg: &RunConfig, observed: Option<PathBuf>, table: Option<PathBuf>) -> Result<Outcome, CliError> {
    let model = build_model(cfg)?;
    let obs_path = observed
        .or_else(|| cfg.calibrate.observed.clone())
        .ok_or_else(|| CliError::Config("no observed dataset given (--observed or calibrate.observed)".into()))?;
    let data = load_observed(&model, &obs_path)?;
    let stats = model.summarize(&data);
    let (table, table_path) = load_table(cfg, &model, table)?;
    let cal = calibrator(cfg, &model, table, rng::derive_seed(cfg.seed, &[stream::PREDICT, 1]))?;

    let mut results: Vec<PosteriorResult> = Vec::new();
    let mut done_full = false;
    for (ei, &eps) in cfg.calibrate.epsilons.iter().enumerate() {
        let prep = cal.prepare(&stats, eps, rng::derive_seed(cfg.seed, &[stream::PREDICT, 2, ei as u64]))?;
        for &m in &cfg.calibrate.methods {
            if !m.uses_epsilon() {
                if done_full {
                    continue;
                }
                done_full = true;
            }
            results.push(prep.run(m));
        }
    }
    let dir = cfg.output.join("posterior");
    let mut combined = String::new();
    for r in &results {
        let csv = r.to_csv();
        write(&dir.join(format!("{}.csv", label_slug(&r.method))), &csv)?;
        if combined.is_empty() {
            combined.push_str(&csv);
        } else {
            combined.extend(csv.lines().skip(1).map(|l| format!("{l}\n")));
        }
        for p in r.params.iter().filter(|p| p.warning.is_some()) {
            eprintln!("{} {}: {}", r.method, p.name, p.warning.as_deref().unwrap_or(""));
        }
    }
    write(&cfg.output.join(POSTERIOR_FILE), &combined)?;
    let mut stat_csv = String::from("statistic,value\n");
    for (n, v) in model.stat_names().iter().zip(&stats) {
        writeln!(stat_csv, "{n},{v:?}").unwrap();
    }
    write(&cfg.output.join("observed_stats.csv"), &stat_csv)?;
    stamp(cfg, &model, "calibrate", &[&obs_path, &table_path])?;
    Ok(if results.iter().any(PosteriorResult::any_failed) {
        Outcome::Partial
    } else {
        Outcome::Complete
    })
}

pub fn simstudy(cfg: &RunConfig, table: Option<PathBuf>) -> Result<Outcome, CliError> {
    let model = build_model(cfg)?;
    let (table, table_path) = load_table(cfg, &model, table)?;
    let n = cfg.study.n_ref;
    let report = run_simstudy(&table, &cfg.study, &cfg.methods, cfg.seed, |d| {
        eprintln!("calibrated {d}/{n} reference datasets");
    })?;
    let dir = cfg.output.join("simstudy");
    write(&dir.join("table3.csv"), &report.table_csv())?;
    write(&dir.join("summary.csv"), &report.summary_csv())?;
    write(&dir.join("records.csv"), &report.records_csv())?;
    stamp(cfg, &model, "simstudy", &[&table_path])?;
    Ok(if report.records.iter().any(|r| r.failed) {
        Outcome::Partial
    } else {
        Outcome::Complete
    })
}

fn dataset_rows(out: &mut String, draw: usize, d: &Dataset) {
    for r in &d.records {
        writeln!(out, "{draw},{},{},{},{},{}", r.site, r.year, r.period, r.habitat, r.count).unwrap();
    }
}

pub fn predict(cfg: &RunConfig, result: Option<PathBuf>, observed: Option<PathBuf>) -> Result<Outcome, CliError> {
    let model = build_model(cfg)?;
    let res_path = result
        .or_else(|| cfg.predict.result.clone())
        .ok_or_else(|| CliError::Config("no posterior given (--result or predict.result)".into()))?;
    let text = fs::read_to_string(&res_path).map_err(|e| runtime(format!("{}: {e}", res_path.display())))?;
    let posterior = PosteriorResult::from_csv(&text)?;
    if posterior.params.iter().map(|p| p.name.clone()).collect::<Vec<_>>() != model.param_names() {
        return Err(runtime(format!("{} does not hold one posterior of this model", res_path.display())));
    }
    let obs_path = observed.or_else(|| cfg.predict.observed.clone());
    let dir = cfg.output.join("predict");
    fs::create_dir_all(&dir)?;
    let mut inputs = vec![res_path.clone()];
    if posterior.any_failed() {
        eprintln!("{}: failed parameters, no prediction possible", posterior.method);
        stamp(cfg, &model, "predict", &[&res_path])?;
        return Ok(Outcome::Partial);
    }

    // Maps at the posterior medians.
    let medians: Vec<f64> = posterior.params.iter().map(|p| p.median()).collect();
    let psi = ParamVector::from_slice(&medians)?;
    psi.validate()?;
    for ((l, year, period), field) in model.visitation_fields(&psi.theta) {
        field.save_nu(&dir.join(format!("nu_L{l:02}_y{year}_p{period}.grid")))?;
    }

    let seed = rng::derive_seed(cfg.seed, &[stream::PREDICT, 3]);
    let ensemble = match posterior_predictive(&model, &posterior, cfg.predict.draws, seed) {
        Ok(e) => e,
        Err(e) => {
            eprintln!("{}: predictive sampling failed: {e}", posterior.method);
            stamp(cfg, &model, "predict", &[&res_path])?;
            return Ok(Outcome::Partial);
        }
    };
    let mut csv = String::from("draw,site,year,period,habitat,count\n");
    for (i, d) in ensemble.iter().enumerate() {
        dataset_rows(&mut csv, i, d);
    }
    write(&dir.join("predictive.csv"), &csv)?;

    if let Some(p) = &obs_path {
        let data = load_observed(&model, p)?;
        inputs.push(p.clone());
        if !ensemble.is_empty() {
            let pv = bayes_pvalues(&ensemble, &data)?;
            let mut out = String::from("site,year,period,habitat,count,pvalue\n");
            for (r, v) in data.records.iter().zip(&pv) {
                writeln!(out, "{},{},{},{},{},{v}", r.site, r.year, r.period, r.habitat, r.count).unwrap();
            }
            write(&dir.join("pvalues.csv"), &out)?;
        }
        let table_path = cfg.output.join(TABLE_FILE);
        if table_path.exists() && !ensemble.is_empty() {
            let (table, _) = load_table(cfg, &model, Some(table_path.clone()))?;
            let predicted: Vec<Vec<f64>> = ensemble.iter().map(|d| model.summarize(d)).collect();
            let proj = pca_check(&table.stats, &Matrix::from_rows(&predicted), &model.summarize(&data), 3)?;
            let mut out = String::from("set,index,pc1,pc2,pc3\n");
            let mut rows = |name: &str, m: &Matrix| {
                for i in 0..m.rows() {
                    let v = m.row(i);
                    let get = |k: usize| v.get(k).copied().unwrap_or(f64::NAN);
                    writeln!(out, "{name},{i},{},{},{}", get(0), get(1), get(2)).unwrap();
                }
            };
            rows("table", &proj.table);
            rows("predicted", &proj.predicted);
            rows("observed", &Matrix::from_rows(std::slice::from_ref(&proj.observed)));
            write(&dir.join("pca.csv"), &out)?;
            let mut ev = String::from("component,explained\n");
            for (k, e) in proj.explained.iter().enumerate() {
                writeln!(ev, "{},{e}", k + 1).unwrap();
            }
            write(&dir.join("pca_explained.csv"), &ev)?;
            inputs.push(table_path);
        }
    }
    let refs: Vec<&Path> = inputs.iter().map(PathBuf::as_path).collect();
    stamp(cfg, &model, "predict", &refs)?;
    Ok(Outcome::Complete)
}

fn csv_to_markdown(text: &str) -> String {
    let mut out = String::new();
    for (i, line) in text.lines().enumerate() {
        let cells: Vec<&str> = line.split(',').collect();
        writeln!(out, "| {} |", cells.join(" | ")).unwrap();
        if i == 0 {
            writeln!(out, "|{}", " --- |".repeat(cells.len())).unwrap();
        }
    }
    out
}

pub fn report(cfg: &RunConfig, dir: Option<PathBuf>) -> Result<Outcome, CliError> {
    let dir = dir.unwrap_or_else(|| cfg.output.clone());
    if !dir.is_dir() {
        return Err(runtime(format!("{} is not a run directory", dir.display())));
    }
    let mut md = format!("# Run report: {}\n\n", dir.display());
    let mut manifests: Vec<PathBuf> = fs::read_dir(&dir)?
        .filter_map(|e| e.ok().map(|e| e.path()))
        .filter(|p| p.to_string_lossy().ends_with(".manifest.json"))
        .collect();
    manifests.sort();
    md.push_str("## Commands\n\n");
    for m in &manifests {
        let v: serde_json::Value = serde_json::from_str(&fs::read_to_string(m)?)
            .map_err(|e| runtime(format!("{}: {e}", m.display())))?;
        writeln!(
            md,
            "- `{}`: seed {}, statistic layout {}, config sha256 {}",
            v["command"].as_str().unwrap_or("?"),
            v["seed"],
            v["spec_id"].as_str().unwrap_or("?"),
            v["config_sha256"].as_str().unwrap_or("?")
        )
        .unwrap();
    }
    let sections = [
        ("simstudy/table3.csv", "Simulation study"),
        ("simstudy/summary.csv", "Per-parameter summary"),
        (POSTERIOR_FILE, "Posterior summaries"),
    ];
    for (file, title) in sections {
        let p = dir.join(file);
        if p.exists() {
            writeln!(md, "\n## {title}\n").unwrap();
            md.push_str(&csv_to_markdown(&fs::read_to_string(&p)?));
        }
    }
    let pv = dir.join("predict/pvalues.csv");
    if pv.exists() {
        let text = fs::read_to_string(&pv)?;
        let vals: Vec<f64> = text
            .lines()
            .skip(1)
            .filter_map(|l| l.rsplit(',').next()?.parse().ok())
            .collect();
        let extreme = vals.iter().filter(|&&p| !(0.025..=0.975).contains(&p)).count();
        writeln!(
            md,
            "\n## Predictive check\n\n{} records, {} with Bayesian p-value outside [0.025, 0.975].",
            vals.len(),
            extreme
        )
        .unwrap();
    }
    let out = dir.join("report.md");
    write(&out, &md)?;
    println!("{}", out.display());
    Ok(Outcome::Complete)
}
