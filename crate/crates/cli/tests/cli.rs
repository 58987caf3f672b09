use std::fs;
use std::path::{Path, PathBuf};
use std::process::Command;

use bombus_cli::RunConfig;
use bombus_core::model::BeeModel;
use bombus_core::obsmodel::ParamVector;

const SMALL: &str = r#"
seed = 5
[model.landscape]
width = 20
height = 20
parcels = 12
[[model.design.studies]]
name = "step"
landscapes = 1
years = [2011]
periods = [1, 2]
duration = 15.0
area = 150.0
[[model.design.studies]]
name = "cost"
landscapes = 1
years = [2012]
periods = [1, 2, 3]
duration = 10.0
area = 200.0
[simulate]
rows = 150
[study]
n_ref = 3
[methods.forest]
trees = 30
[methods.gbm]
stages = 20
[methods.nn]
epochs = 100
"#;

fn bombus(dir: &Path, args: &[&str]) -> i32 {
    let out = Command::new(env!("CARGO_BIN_EXE_bombus"))
        .current_dir(dir)
        .args(args)
        .output()
        .expect("binary runs");
    out.status.code().expect("exit code")
}

fn setup(extra: &str) -> (tempfile::TempDir, PathBuf) {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("run.toml");
    fs::write(&cfg, format!("{SMALL}\n{extra}")).unwrap();
    (dir, cfg)
}

fn small_model() -> BeeModel {
    BeeModel::build(RunConfig::parse(SMALL).unwrap().model).unwrap()
}

#[test]
fn simulate_is_reproducible_and_resumable() {
    let (dir, cfg) = setup("");
    let c = cfg.to_str().unwrap();
    assert_eq!(bombus(dir.path(), &["simulate", "--config", c]), 0);
    let table = dir.path().join("run/table.csv");
    let first = fs::read(&table).unwrap();
    assert_eq!(bombus(dir.path(), &["simulate", "--config", c, "--workers", "2"]), 0);
    assert_eq!(fs::read(&table).unwrap(), first);

    // Drop rows 50..99 (file lines 52..=101) and resume.
    let text = String::from_utf8(first.clone()).unwrap();
    let kept: String = text
        .lines()
        .enumerate()
        .filter(|(i, _)| !(51..=100).contains(i))
        .map(|(_, l)| format!("{l}\n"))
        .collect();
    fs::write(&table, kept).unwrap();
    assert_eq!(bombus(dir.path(), &["simulate", "--config", c, "--resume"]), 0);
    assert_eq!(fs::read(&table).unwrap(), first);

    assert!(dir.path().join("run/simulate.manifest.json").exists());
    let snap = fs::read_to_string(dir.path().join("run/simulate.config.toml")).unwrap();
    let parsed = RunConfig::parse(&snap).unwrap();
    assert!(parsed.model.prior.is_some());
}

#[test]
fn seed_flag_changes_the_table() {
    let (dir, cfg) = setup("");
    let c = cfg.to_str().unwrap();
    assert_eq!(bombus(dir.path(), &["simulate", "--config", c]), 0);
    let a = fs::read(dir.path().join("run/table.csv")).unwrap();
    assert_eq!(bombus(dir.path(), &["simulate", "--config", c, "--seed", "77"]), 0);
    assert_ne!(fs::read(dir.path().join("run/table.csv")).unwrap(), a);
}

#[test]
fn exit_codes() {
    let (dir, cfg) = setup("bogus_key = 1\n");
    assert_eq!(bombus(dir.path(), &["simulate", "--config", cfg.to_str().unwrap()]), 1);
    assert_eq!(bombus(dir.path(), &["simulate", "--config", "missing.toml"]), 1);
    assert_eq!(bombus(dir.path(), &["frobnicate"]), 1);
    let (dir, cfg) = setup("");
    // No table yet.
    assert_eq!(bombus(dir.path(), &["simstudy", "--config", cfg.to_str().unwrap()]), 2);
}

#[test]
fn calibrate_predict_report_pipeline() {
    let (dir, cfg) = setup("");
    let c = cfg.to_str().unwrap();
    assert_eq!(bombus(dir.path(), &["simulate", "--config", c]), 0);

    let model = small_model();
    let psi = ParamVector::from_slice(&[600.0, 0.1, 400.0, 300.0, 1.0, 0.5, 1.5, 0.5]).unwrap();
    let data = model.simulate_dataset(&psi, 99).unwrap();
    let obs = dir.path().join("observed.csv");
    data.save(&obs).unwrap();
    let o = obs.to_str().unwrap();

    let code = bombus(dir.path(), &["calibrate", "--config", c, "--observed", o]);
    assert!(code == 0 || code == 3, "calibrate exit {code}");
    let run = dir.path().join("run");
    let combined = fs::read_to_string(run.join("posterior.csv")).unwrap();
    // Nine methods times eight parameters plus the header.
    assert_eq!(combined.lines().count(), 1 + 9 * 8);
    let rfa = run.join("posterior/rfa_5pct.csv");
    assert!(rfa.exists());

    let code = bombus(dir.path(), &["predict", "--config", c, "--result", rfa.to_str().unwrap(), "--observed", o]);
    assert_eq!(code, 0);
    let pred = run.join("predict");
    for f in ["predictive.csv", "pvalues.csv", "pca.csv", "pca_explained.csv", "nu_L00_y2011_p1.grid"] {
        assert!(pred.join(f).exists(), "{f}");
    }
    let pv = fs::read_to_string(pred.join("pvalues.csv")).unwrap();
    assert_eq!(pv.lines().count(), 1 + data.records.len());

    // Small studies may legitimately flag failed posteriors.
    let code = bombus(dir.path(), &["simstudy", "--config", c]);
    assert!(code == 0 || code == 3, "simstudy exit {code}");
    assert_eq!(bombus(dir.path(), &["report", "--config", c]), 0);
    let md = fs::read_to_string(run.join("report.md")).unwrap();
    assert!(md.contains("Simulation study") && md.contains("Posterior summaries"));
}

#[test]
fn failed_posterior_gives_partial_exit() {
    let (dir, cfg) = setup("");
    let names = ParamVector::names(3);
    let mut csv = String::from("parameter,method,q025,q50,q975,mean,failed\n");
    for (i, n) in names.iter().enumerate() {
        if i == 0 {
            csv.push_str(&format!("{n},loclh(5%),NaN,NaN,NaN,NaN,1\n"));
        } else {
            csv.push_str(&format!("{n},loclh(5%),1.0,2.0,3.0,2.0,0\n"));
        }
    }
    let res = dir.path().join("failed.csv");
    fs::write(&res, csv).unwrap();
    let code = bombus(dir.path(), &["predict", "--config", cfg.to_str().unwrap(), "--result", res.to_str().unwrap()]);
    assert_eq!(code, 3);
}
