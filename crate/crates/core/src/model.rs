//! Simulators and reference-table generation.

use std::fs;
use std::path::Path;

use rand::Rng;
use rand_distr::StandardNormal;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::abc::table::{self, row_seed, ReferenceTable, TableMeta, TableWriter};
use crate::cpf::{intensities_at, visitation_field_with, CpfParams, OffsetTable, VisitationField};
use crate::error::{Error, Result};
use crate::landscape::{
    generate_attribute_maps, load_raster, synthetic_landscape, AttributeMap, CategoryId, CategoryRegistry,
    LandscapeRaster, SyntheticLandscape, SyntheticLandscapeConfig,
};
use crate::mlkit::Matrix;
use crate::obsmodel::{simulate_dataset, Dataset, ParamVector, PriorSpec, SurveyDesign, SyntheticDesignConfig};
use crate::rng::{self, stream};
use crate::sumstats::{summarize, SummarySpec};

/// A prior plus a stochastic map from parameters to summary statistics.
pub trait Simulator: Sync {
    fn name(&self) -> &str;
    fn param_names(&self) -> Vec<String>;
    fn stat_names(&self) -> Vec<String>;
    /// Identifies the statistic layout.
    fn spec_id(&self) -> String;
    fn sample_prior(&self, seed: u64) -> Vec<f64>;
    fn simulate(&self, params: &[f64], seed: u64) -> Result<Vec<f64>>;
}

/// Parameters and statistics of table row `row`.
pub fn simulate_row(sim: &dyn Simulator, base_seed: u64, row: usize) -> Result<(Vec<f64>, Vec<f64>)> {
    let seed = row_seed(base_seed, row);
    let params = sim.sample_prior(seed);
    let stats = sim.simulate(&params, seed)?;
    Ok((params, stats))
}

fn simulate_rows(sim: &dyn Simulator, base_seed: u64, rows: &[usize]) -> Result<Vec<(Vec<f64>, Vec<f64>)>> {
    rows.par_iter().map(|&r| simulate_row(sim, base_seed, r)).collect()
}

/// In-memory table of `m` rows. Row `r` depends only on `(base_seed, r)`.
pub fn generate_table(sim: &dyn Simulator, m: usize, base_seed: u64) -> Result<ReferenceTable> {
    let rows: Vec<usize> = (0..m).collect();
    let out = simulate_rows(sim, base_seed, &rows)?;
    let (params, stats): (Vec<_>, Vec<_>) = out.into_iter().unzip();
    let table = ReferenceTable {
        param_names: sim.param_names(),
        stat_names: sim.stat_names(),
        params: Matrix::from_rows(&params),
        stats: Matrix::from_rows(&stats),
        rows,
        base_seed,
        spec_id: sim.spec_id(),
    };
    table.validate()?;
    Ok(table)
}

fn meta_for(sim: &dyn Simulator, m: usize, base_seed: u64) -> TableMeta {
    TableMeta {
        format: table::TABLE_FORMAT,
        simulator: sim.name().into(),
        spec_id: sim.spec_id(),
        base_seed,
        rows: m,
        param_names: sim.param_names(),
        stat_names: sim.stat_names(),
    }
}

/// Rows generated per flush when writing a table file.
pub const WRITE_CHUNK: usize = 256;

/// Writes an `m`-row table to `path`. With `resume`, rows already present
/// with valid checksums are kept and only the missing ones are simulated;
/// the file is then rewritten in row order, byte-identical to a fresh run.
pub fn generate_table_file(
    sim: &dyn Simulator,
    m: usize,
    base_seed: u64,
    path: &Path,
    resume: bool,
    mut progress: impl FnMut(usize, usize),
) -> Result<ReferenceTable> {
    let meta = meta_for(sim, m, base_seed);
    let mut have = std::collections::BTreeMap::new();
    let mut writer = if resume && path.exists() {
        let old = table::load_meta(path)?;
        if old.param_names != meta.param_names
            || old.stat_names != meta.stat_names
            || old.spec_id != meta.spec_id
            || old.base_seed != meta.base_seed
        {
            return Err(Error::Config(format!(
                "{} was generated with a different configuration; refusing to resume",
                path.display()
            )));
        }
        have = table::scan_rows(path, &old)?.rows;
        have.retain(|&r, _| r < m);
        // Start from a clean file holding only the valid rows.
        let mut w = TableWriter::create(path, &meta)?;
        for (r, (p, s)) in &have {
            w.append(*r, p, s)?;
        }
        w.flush()?;
        w
    } else {
        TableWriter::create(path, &meta)?
    };
    let missing: Vec<usize> = (0..m).filter(|r| !have.contains_key(r)).collect();
    let resumed = !have.is_empty();
    let mut done = m - missing.len();
    for chunk in missing.chunks(WRITE_CHUNK) {
        let out = simulate_rows(sim, base_seed, chunk)?;
        for (&r, (p, s)) in chunk.iter().zip(&out) {
            writer.append(r, p, s)?;
        }
        writer.flush()?;
        for (&r, row) in chunk.iter().zip(out) {
            have.insert(r, row);
        }
        done += chunk.len();
        progress(done, m);
    }
    writer.finish()?;
    let (params, stats): (Vec<_>, Vec<_>) = have.into_values().unzip();
    let table = ReferenceTable {
        param_names: meta.param_names.clone(),
        stat_names: meta.stat_names.clone(),
        params: Matrix::from_rows(&params),
        stats: Matrix::from_rows(&stats),
        rows: (0..m).collect(),
        base_seed,
        spec_id: meta.spec_id.clone(),
    };
    if resumed {
        let tmp = path.with_extension("csv.tmp");
        table.save(&tmp, sim.name())?;
        fs::rename(&tmp, path)?;
        fs::rename(table::sidecar_path(&tmp), table::sidecar_path(path))?;
    }
    table.validate()?;
    Ok(table)
}

// ---------------------------------------------------------------------------

/// `theta ~ N(mu0, tau^2)`, `y_1..y_n ~ N(theta, sigma^2)`, summarized by
/// the sample mean. The posterior is normal in closed form.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct NormalToy {
    pub prior_mean: f64,
    pub prior_sd: f64,
    pub noise_sd: f64,
    pub n_obs: usize,
}

impl Default for NormalToy {
    fn default() -> Self {
        Self {
            prior_mean: 0.0,
            prior_sd: 1.0,
            noise_sd: 1.0,
            n_obs: 10,
        }
    }
}

impl NormalToy {
    /// Posterior mean and standard deviation given the observed mean.
    pub fn posterior(&self, ybar: f64) -> (f64, f64) {
        let prec = 1.0 / self.prior_sd.powi(2) + self.n_obs as f64 / self.noise_sd.powi(2);
        let mean = (self.prior_mean / self.prior_sd.powi(2) + self.n_obs as f64 * ybar / self.noise_sd.powi(2)) / prec;
        (mean, prec.recip().sqrt())
    }
}

impl Simulator for NormalToy {
    fn name(&self) -> &str {
        "normal-toy"
    }

    fn param_names(&self) -> Vec<String> {
        vec!["theta".into()]
    }

    fn stat_names(&self) -> Vec<String> {
        vec!["ybar".into()]
    }

    fn spec_id(&self) -> String {
        format!("normal-toy-n{}", self.n_obs)
    }

    fn sample_prior(&self, seed: u64) -> Vec<f64> {
        let z: f64 = rng::rng_for(seed, &[stream::PRIOR]).sample(StandardNormal);
        vec![self.prior_mean + self.prior_sd * z]
    }

    fn simulate(&self, params: &[f64], seed: u64) -> Result<Vec<f64>> {
        let mut g = rng::rng_for(seed, &[stream::DATA]);
        let sum: f64 = (0..self.n_obs)
            .map(|_| params[0] + self.noise_sd * g.sample::<f64, _>(StandardNormal))
            .sum();
        Ok(vec![sum / self.n_obs as f64])
    }
}

// ---------------------------------------------------------------------------

/// Landscapes, survey design and priors of the bumble-bee model.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct BeeModelConfig {
    pub landscape: SyntheticLandscapeConfig,
    /// Rasters to survey instead of synthetic landscapes.
    pub raster_files: Vec<std::path::PathBuf>,
    pub design: SyntheticDesignConfig,
    pub categories: Option<CategoryRegistry>,
    pub prior: Option<PriorSpec>,
    /// Seed for landscapes and floral attributes; these stay fixed across
    /// simulations.
    pub seed: u64,
}

impl Default for BeeModelConfig {
    fn default() -> Self {
        Self {
            landscape: SyntheticLandscapeConfig::default(),
            raster_files: Vec::new(),
            design: SyntheticDesignConfig::default(),
            categories: None,
            prior: None,
            seed: 2023,
        }
    }
}

/// The cell of each habitat category nearest the raster center.
pub fn anchors_near_center(raster: &LandscapeRaster, habitats: &[CategoryId]) -> Result<Vec<(CategoryId, usize)>> {
    let grid = raster.grid();
    let (cx, cy) = (grid.width as f64 * grid.resolution / 2.0, grid.height as f64 * grid.resolution / 2.0);
    habitats
        .iter()
        .map(|&h| {
            (0..raster.n_cells())
                .filter(|&i| raster.landuse[i] == h)
                .min_by(|&a, &b| {
                    let da = grid.centroid(a);
                    let db = grid.centroid(b);
                    let ka = (da.0 - cx).powi(2) + (da.1 - cy).powi(2);
                    let kb = (db.0 - cx).powi(2) + (db.1 - cy).powi(2);
                    ka.total_cmp(&kb).then(a.cmp(&b))
                })
                .map(|c| (h, c))
                .ok_or_else(|| Error::Config(format!("raster {} has no cell of habitat {h}", raster.id)))
        })
        .collect()
}

struct FieldSlot {
    landscape: usize,
    map: AttributeMap,
    targets: Vec<usize>,
}

pub struct BeeModel {
    pub config: BeeModelConfig,
    pub landscapes: Vec<SyntheticLandscape>,
    pub registry: CategoryRegistry,
    pub design: SurveyDesign,
    pub prior: PriorSpec,
    pub spec: SummarySpec,
    slots: Vec<FieldSlot>,
    /// Per visit: field slot and positions of its transect cells in the
    /// slot's target list.
    visit_cells: Vec<(usize, Vec<usize>)>,
    tables: Vec<OffsetTable>,
}

impl BeeModel {
    pub fn build(config: BeeModelConfig) -> Result<Self> {
        let registry = config.categories.clone().unwrap_or_else(CategoryRegistry::default_agricultural);
        registry.validate()?;
        let habitats = &config.design.habitats;
        let n = config.design.n_landscapes();
        let landscapes: Vec<SyntheticLandscape> = if config.raster_files.is_empty() {
            (0..n)
                .map(|l| {
                    let seed = rng::derive_seed(config.seed, &[stream::LANDSCAPE, l as u64]);
                    synthetic_landscape(&format!("L{l:02}"), &config.landscape, habitats, seed)
                })
                .collect::<Result<_>>()?
        } else {
            if config.raster_files.len() < n {
                return Err(Error::Config(format!("design needs {n} rasters, {} given", config.raster_files.len())));
            }
            config.raster_files[..n]
                .iter()
                .map(|p| {
                    let raster = load_raster(p)?;
                    let anchors = anchors_near_center(&raster, habitats)?;
                    Ok(SyntheticLandscape { raster, anchors })
                })
                .collect::<Result<_>>()?
        };
        let design = config.design.build(&landscapes)?;
        let prior = config.prior.clone().unwrap_or_else(|| PriorSpec::standard(design.periods));
        prior.validate()?;
        if prior.periods != design.periods {
            return Err(Error::Config(format!(
                "prior has {} periods but the design uses {}",
                prior.periods, design.periods
            )));
        }
        let spec = SummarySpec::from_design(&design);

        let keys = design.field_keys();
        let mut slots = Vec::with_capacity(keys.len());
        for &(l, year, period) in &keys {
            let seed = rng::derive_seed(config.seed, &[stream::ATTRIBUTES, l as u64]);
            let map = generate_attribute_maps(&landscapes[l].raster, &registry, period, year, seed)?;
            slots.push(FieldSlot {
                landscape: l,
                map,
                targets: Vec::new(),
            });
        }
        let mut visit_cells = Vec::with_capacity(design.visits.len());
        for v in &design.visits {
            let site = &design.sites[v.site];
            let k = keys.iter().position(|&k| k == (site.landscape, v.year, v.period)).expect("key listed");
            let slot = &mut slots[k];
            let pos = site
                .patches
                .iter()
                .map(|&c| match slot.targets.iter().position(|&t| t == c) {
                    Some(p) => p,
                    None => {
                        slot.targets.push(c);
                        slot.targets.len() - 1
                    }
                })
                .collect();
            visit_cells.push((k, pos));
        }
        let radius = match prior.tau0.support().1 {
            r if r.is_finite() => r,
            _ => 2000.0,
        };
        let tables = landscapes.iter().map(|l| OffsetTable::new(l.raster.grid(), radius)).collect();
        Ok(Self {
            config,
            landscapes,
            registry,
            design,
            prior,
            spec,
            slots,
            visit_cells,
            tables,
        })
    }

    pub fn periods(&self) -> usize {
        self.design.periods
    }

    /// Mean intensity over each visit's transect.
    pub fn intensities(&self, theta: &CpfParams) -> Vec<f64> {
        let per_slot: Vec<Vec<f64>> = self
            .slots
            .iter()
            .map(|s| intensities_at(&s.map, theta, Some(&self.tables[s.landscape]), &s.targets))
            .collect();
        self.visit_cells
            .iter()
            .map(|(k, pos)| pos.iter().map(|&p| per_slot[*k][p]).sum::<f64>() / pos.len() as f64)
            .collect()
    }

    pub fn simulate_dataset(&self, psi: &ParamVector, seed: u64) -> Result<Dataset> {
        psi.validate()?;
        if psi.periods() != self.periods() {
            return Err(Error::Input(format!("expected {} period effects, got {}", self.periods(), psi.periods())));
        }
        Ok(simulate_dataset(psi, &self.design, &self.intensities(&psi.theta), seed))
    }

    pub fn summarize(&self, data: &Dataset) -> Vec<f64> {
        summarize(data, &self.spec)
    }

    /// Full visitation fields for every surveyed (landscape, year, period).
    pub fn visitation_fields(&self, theta: &CpfParams) -> Vec<((usize, i32, usize), VisitationField)> {
        self.slots
            .iter()
            .map(|s| {
                let key = (s.landscape, s.map.year, s.map.period);
                (key, visitation_field_with(&s.map, theta, Some(&self.tables[s.landscape])))
            })
            .collect()
    }
}

impl Simulator for BeeModel {
    fn name(&self) -> &str {
        "bee-cpf"
    }

    fn param_names(&self) -> Vec<String> {
        ParamVector::names(self.periods())
    }

    fn stat_names(&self) -> Vec<String> {
        self.spec.names()
    }

    fn spec_id(&self) -> String {
        self.spec.id()
    }

    fn sample_prior(&self, seed: u64) -> Vec<f64> {
        crate::obsmodel::sample_prior(&self.prior, seed).to_vec()
    }

    fn simulate(&self, params: &[f64], seed: u64) -> Result<Vec<f64>> {
        let psi = ParamVector::from_slice(params)?;
        Ok(self.summarize(&self.simulate_dataset(&psi, seed)?))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn small() -> BeeModel {
        let mut cfg = BeeModelConfig::default();
        cfg.landscape.width = 20;
        cfg.landscape.height = 20;
        cfg.design = SyntheticDesignConfig::scaled(1, 1, vec![2011], vec![2012]);
        BeeModel::build(cfg).unwrap()
    }

    #[test]
    fn bee_model_shapes() {
        let m = small();
        assert_eq!(m.param_names().len(), 4 + 3 + 1);
        assert_eq!(m.stat_names().len(), m.spec.dim());
        let p = m.sample_prior(1);
        let s = m.simulate(&p, 1).unwrap();
        assert_eq!(s.len(), m.spec.dim());
        assert_eq!(s, m.simulate(&p, 1).unwrap());
    }

    #[test]
    fn site_intensities_match_full_fields() {
        let m = small();
        let theta = CpfParams::new(800.0, 0.05, 300.0, 400.0).unwrap();
        let nu = m.intensities(&theta);
        let fields = m.visitation_fields(&theta);
        for (v, visit) in m.design.visits.iter().enumerate() {
            let site = &m.design.sites[visit.site];
            let (_, f) = fields
                .iter()
                .find(|(k, _)| *k == (site.landscape, visit.year, visit.period))
                .unwrap();
            let want = f.mean_over(&site.patches);
            assert!((nu[v] - want).abs() <= 1e-9 * want.abs().max(1.0), "{} vs {want}", nu[v]);
        }
    }

    #[test]
    fn toy_posterior_formula() {
        let t = NormalToy::default();
        let (m, s) = t.posterior(1.0);
        assert!((m - 10.0 / 11.0).abs() < 1e-12);
        assert!((s - (1.0f64 / 11.0).sqrt()).abs() < 1e-12);
    }

    #[test]
    fn table_file_resume_reproduces_rows() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("t.csv");
        let toy = NormalToy::default();
        let full = generate_table_file(&toy, 300, 9, &path, false, |_, _| {}).unwrap();
        let original = fs::read(&path).unwrap();
        // Drop rows 50..99 and corrupt another.
        let text = String::from_utf8(original.clone()).unwrap();
        let kept: Vec<&str> = text
            .lines()
            .enumerate()
            .filter(|(i, _)| !(51..=100).contains(i))
            .map(|(_, l)| l)
            .collect();
        let mut damaged = kept.join("\n") + "\n";
        damaged = damaged.replacen("\n200,", "\n200,9", 1);
        fs::write(&path, damaged).unwrap();
        let resumed = generate_table_file(&toy, 300, 9, &path, true, |_, _| {}).unwrap();
        assert_eq!(resumed, full);
        assert_eq!(fs::read(&path).unwrap(), original);
        assert_eq!(ReferenceTable::load(&path).unwrap(), full);
    }

    #[test]
    fn table_is_independent_of_thread_count() {
        let toy = NormalToy::default();
        let a = generate_table(&toy, 500, 3).unwrap();
        let pool = rayon::ThreadPoolBuilder::new().num_threads(3).build().unwrap();
        let b = pool.install(|| generate_table(&toy, 500, 3).unwrap());
        assert_eq!(a, b);
    }
}
