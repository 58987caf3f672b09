//! Rasterized land-use maps, per-category floral/nesting profiles and the
//! frozen attribute maps drawn from them.

use std::fmt::Display;
use std::fs;
use std::path::Path;

use rand::Rng;
use rand_distr::{Beta, Distribution};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::rng::{self, stream};

pub type CategoryId = u16;

/// Grid of land-use category ids, stored row-major.
#[derive(Debug, Clone, PartialEq)]
pub struct LandscapeRaster {
    pub id: String,
    pub width: usize,
    pub height: usize,
    /// Meters per cell side.
    pub resolution: f64,
    pub landuse: Vec<CategoryId>,
}

impl LandscapeRaster {
    pub fn new(
        id: impl Into<String>,
        width: usize,
        height: usize,
        resolution: f64,
        landuse: Vec<CategoryId>,
    ) -> Result<Self> {
        if width == 0 || height == 0 {
            return Err(Error::Input("raster must have at least one cell".into()));
        }
        if !(resolution > 0.0 && resolution.is_finite()) {
            return Err(Error::Input(format!("invalid resolution {resolution}")));
        }
        if landuse.len() != width * height {
            return Err(Error::Input(format!(
                "raster has {} cells, expected {}x{}",
                landuse.len(),
                width,
                height
            )));
        }
        Ok(Self {
            id: id.into(),
            width,
            height,
            resolution,
            landuse,
        })
    }

    pub fn n_cells(&self) -> usize {
        self.width * self.height
    }

    pub fn grid(&self) -> Grid {
        Grid {
            width: self.width,
            height: self.height,
            resolution: self.resolution,
        }
    }
}

/// Raster geometry without content.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Grid {
    pub width: usize,
    pub height: usize,
    pub resolution: f64,
}

impl Grid {
    pub fn n_cells(&self) -> usize {
        self.width * self.height
    }

    /// Centroid of cell `idx` in meters, `(x, y)` with x along a row.
    pub fn centroid(&self, idx: usize) -> (f64, f64) {
        let (r, c) = (idx / self.width, idx % self.width);
        (
            (c as f64 + 0.5) * self.resolution,
            (r as f64 + 0.5) * self.resolution,
        )
    }

    /// Euclidean distance between the centroids of cells `i` and `j`.
    pub fn distance(&self, i: usize, j: usize) -> f64 {
        let dr = (i / self.width) as i64 - (j / self.width) as i64;
        let dc = (i % self.width) as i64 - (j % self.width) as i64;
        offset_distance(dr, dc, self.resolution)
    }
}

/// Distance in meters spanned by a cell offset. Shared by every distance
/// computation so that pruned and exhaustive scans agree bit for bit.
#[inline]
pub fn offset_distance(dr: i64, dc: i64, resolution: f64) -> f64 {
    resolution * ((dr * dr + dc * dc) as f64).sqrt()
}

/// One raster cell seen as a foraging/nesting patch.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Patch {
    pub id: usize,
    pub row: usize,
    pub col: usize,
    pub x: f64,
    pub y: f64,
}

/// Patches in row-major order, one per cell.
pub fn patch_index(raster: &LandscapeRaster) -> Vec<Patch> {
    let grid = raster.grid();
    (0..raster.n_cells())
        .map(|id| {
            let (x, y) = grid.centroid(id);
            Patch {
                id,
                row: id / raster.width,
                col: id % raster.width,
                x,
                y,
            }
        })
        .collect()
}

// ---------------------------------------------------------------------------
// ASCII grid IO

struct GridHeader {
    width: usize,
    height: usize,
    resolution: f64,
}

fn parse_grid<T: std::str::FromStr>(path: &Path, text: &str) -> Result<(GridHeader, Vec<T>)> {
    let mut lines = text
        .lines()
        .enumerate()
        .filter(|(_, l)| !l.trim().is_empty());
    let (mut width, mut height, mut resolution) = (None, None, None);
    for _ in 0..3 {
        let (no, line) = lines
            .next()
            .ok_or_else(|| Error::parse(path, 0, "truncated header"))?;
        let mut it = line.split_whitespace();
        let key = it.next().unwrap_or_default();
        let value = it
            .next()
            .ok_or_else(|| Error::parse(path, no + 1, "header line without value"))?;
        let bad = || Error::parse(path, no + 1, format!("bad value for {key}"));
        match key {
            "width" => width = Some(value.parse::<usize>().map_err(|_| bad())?),
            "height" => height = Some(value.parse::<usize>().map_err(|_| bad())?),
            "resolution" => resolution = Some(value.parse::<f64>().map_err(|_| bad())?),
            other => {
                return Err(Error::parse(
                    path,
                    no + 1,
                    format!("unexpected header key {other:?}"),
                ))
            }
        }
    }
    let header = match (width, height, resolution) {
        (Some(width), Some(height), Some(resolution)) => GridHeader {
            width,
            height,
            resolution,
        },
        _ => return Err(Error::parse(path, 0, "header needs width, height, resolution")),
    };
    let mut cells = Vec::with_capacity(header.width * header.height);
    let mut rows = 0;
    for (no, line) in lines {
        let before = cells.len();
        for tok in line.split_whitespace() {
            let v = tok
                .parse::<T>()
                .map_err(|_| Error::parse(path, no + 1, format!("bad cell value {tok:?}")))?;
            cells.push(v);
        }
        if cells.len() - before != header.width {
            return Err(Error::parse(
                path,
                no + 1,
                format!("row has {} values, expected {}", cells.len() - before, header.width),
            ));
        }
        rows += 1;
    }
    if rows != header.height {
        return Err(Error::parse(
            path,
            0,
            format!("found {rows} rows, expected {}", header.height),
        ));
    }
    Ok((header, cells))
}

fn format_grid<T: Display>(grid: Grid, cells: &[T]) -> String {
    let mut out = format!(
        "width {}\nheight {}\nresolution {:?}\n",
        grid.width, grid.height, grid.resolution
    );
    for row in cells.chunks(grid.width) {
        let line: Vec<String> = row.iter().map(|v| v.to_string()).collect();
        out.push_str(&line.join(" "));
        out.push('\n');
    }
    out
}

pub fn parse_raster(id: &str, path: &Path, text: &str) -> Result<LandscapeRaster> {
    let (h, cells) = parse_grid::<CategoryId>(path, text)?;
    LandscapeRaster::new(id, h.width, h.height, h.resolution, cells)
}

/// Reads an ASCII-grid raster; the landscape id is the file stem.
pub fn load_raster(path: &Path) -> Result<LandscapeRaster> {
    let text = fs::read_to_string(path)?;
    let id = path
        .file_stem()
        .map(|s| s.to_string_lossy().into_owned())
        .unwrap_or_default();
    parse_raster(&id, path, &text)
}

pub fn save_raster(raster: &LandscapeRaster, path: &Path) -> Result<()> {
    fs::write(path, format_grid(raster.grid(), &raster.landuse))?;
    Ok(())
}

/// Writes a real-valued grid in the raster format. Values use the shortest
/// representation that parses back to the same `f64`.
pub fn save_real_grid(grid: Grid, values: &[f64], path: &Path) -> Result<()> {
    let shown: Vec<RoundTrip> = values.iter().map(|&v| RoundTrip(v)).collect();
    fs::write(path, format_grid(grid, &shown))?;
    Ok(())
}

pub fn load_real_grid(path: &Path) -> Result<(Grid, Vec<f64>)> {
    let text = fs::read_to_string(path)?;
    let (h, cells) = parse_grid::<f64>(path, &text)?;
    Ok((
        Grid {
            width: h.width,
            height: h.height,
            resolution: h.resolution,
        },
        cells,
    ))
}

struct RoundTrip(f64);

impl Display for RoundTrip {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(f, "{:?}", self.0)
    }
}

// ---------------------------------------------------------------------------
// Category profiles and attribute maps

/// Per-period distribution of a category's floral value.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", deny_unknown_fields)]
pub enum FloralLaw {
    Beta { alpha: f64, beta: f64 },
    Point { value: f64 },
}

impl FloralLaw {
    fn validate(&self) -> Result<()> {
        match *self {
            FloralLaw::Beta { alpha, beta } if !(alpha > 0.0 && beta > 0.0) => Err(Error::Config(
                format!("beta law needs positive shapes, got ({alpha}, {beta})"),
            )),
            FloralLaw::Point { value } if !(0.0..=1.0).contains(&value) => {
                Err(Error::Config(format!("floral point mass {value} outside [0,1]")))
            }
            _ => Ok(()),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CategoryProfile {
    pub id: CategoryId,
    pub name: String,
    /// One law per period, period 1 first.
    pub floral: Vec<FloralLaw>,
    /// Probability that a cell of this category holds a nest (`q = 1`).
    pub nesting: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(transparent)]
pub struct CategoryRegistry {
    pub profiles: Vec<CategoryProfile>,
}

impl CategoryRegistry {
    pub fn new(profiles: Vec<CategoryProfile>) -> Result<Self> {
        let reg = Self { profiles };
        reg.validate()?;
        Ok(reg)
    }

    pub fn validate(&self) -> Result<()> {
        let mut seen = std::collections::HashSet::new();
        for p in &self.profiles {
            if !seen.insert(p.id) {
                return Err(Error::Config(format!("duplicate category id {}", p.id)));
            }
            if !(0.0..=1.0).contains(&p.nesting) {
                return Err(Error::Config(format!(
                    "category {}: nesting probability {} outside [0,1]",
                    p.name, p.nesting
                )));
            }
            if p.floral.is_empty() {
                return Err(Error::Config(format!("category {}: no floral laws", p.name)));
            }
            for law in &p.floral {
                law.validate()?;
            }
        }
        Ok(())
    }

    pub fn get(&self, id: CategoryId) -> Option<&CategoryProfile> {
        self.profiles.iter().find(|p| p.id == id)
    }

    pub fn by_name(&self, name: &str) -> Option<&CategoryProfile> {
        self.profiles.iter().find(|p| p.name == name)
    }

    /// A small agricultural landscape palette with three seasonal periods.
    pub fn default_agricultural() -> Self {
        let b = |alpha, beta| FloralLaw::Beta { alpha, beta };
        let profile = |id, name: &str, floral: Vec<FloralLaw>, nesting| CategoryProfile {
            id,
            name: name.into(),
            floral,
            nesting,
        };
        Self {
            profiles: vec![
                profile(0, "crop", vec![b(6.0, 2.0), b(1.0, 6.0), b(1.0, 12.0)], 0.0),
                profile(1, "grassland", vec![b(2.0, 3.0), b(4.0, 2.0), b(3.0, 3.0)], 1.0),
                profile(2, "edge", vec![b(2.0, 2.0), b(3.0, 2.0), b(2.0, 3.0)], 1.0),
                profile(3, "ley", vec![b(1.0, 4.0), b(4.0, 2.0), b(3.0, 2.0)], 0.0),
                profile(4, "forest", vec![b(2.0, 5.0), b(1.0, 6.0), b(1.0, 8.0)], 1.0),
                profile(5, "urban", vec![b(1.0, 4.0), b(1.0, 3.0), b(1.0, 4.0)], 0.0),
                profile(6, "water", vec![FloralLaw::Point { value: 0.0 }; 3], 0.0),
            ],
        }
    }
}

/// Frozen floral (`f_j`) and nesting (`q_i`) values for one landscape,
/// year and period.
#[derive(Debug, Clone, PartialEq)]
pub struct AttributeMap {
    pub grid: Grid,
    pub period: usize,
    pub year: i32,
    pub floral: Vec<f64>,
    pub nesting: Vec<f64>,
}

/// Draws a floral and a nesting value for every cell from its category's
/// profile. `period` is 1-based. The result is a pure function of the
/// arguments.
pub fn generate_attribute_maps(
    raster: &LandscapeRaster,
    registry: &CategoryRegistry,
    period: usize,
    year: i32,
    seed: u64,
) -> Result<AttributeMap> {
    if period == 0 {
        return Err(Error::Config("periods are numbered from 1".into()));
    }
    let mut samplers: Vec<Option<(Sampler, f64)>> = Vec::new();
    for &cat in &raster.landuse {
        let slot = cat as usize;
        if slot >= samplers.len() {
            samplers.resize_with(slot + 1, || None);
        }
        if samplers[slot].is_none() {
            let profile = registry.get(cat).ok_or_else(|| {
                Error::Config(format!("raster {}: no profile for category {cat}", raster.id))
            })?;
            let law = profile.floral.get(period - 1).ok_or_else(|| {
                Error::Config(format!(
                    "category {} has no floral law for period {period}",
                    profile.name
                ))
            })?;
            samplers[slot] = Some((Sampler::new(law)?, profile.nesting));
        }
    }

    let mut rng = rng::rng_for(seed, &[stream::ATTRIBUTES, year as u64, period as u64]);
    let mut floral = Vec::with_capacity(raster.n_cells());
    let mut nesting = Vec::with_capacity(raster.n_cells());
    for &cat in &raster.landuse {
        let (sampler, p_nest) = samplers[cat as usize].as_ref().expect("checked above");
        floral.push(sampler.draw(&mut rng));
        let nest = if *p_nest >= 1.0 {
            1.0
        } else if *p_nest <= 0.0 {
            0.0
        } else if rng.random::<f64>() < *p_nest {
            1.0
        } else {
            0.0
        };
        nesting.push(nest);
    }
    Ok(AttributeMap {
        grid: raster.grid(),
        period,
        year,
        floral,
        nesting,
    })
}

enum Sampler {
    Beta(Beta<f64>),
    Point(f64),
}

impl Sampler {
    fn new(law: &FloralLaw) -> Result<Self> {
        law.validate()?;
        Ok(match *law {
            FloralLaw::Beta { alpha, beta } => Sampler::Beta(
                Beta::new(alpha, beta).map_err(|e| Error::Config(format!("beta law: {e}")))?,
            ),
            FloralLaw::Point { value } => Sampler::Point(value),
        })
    }

    fn draw(&self, rng: &mut impl Rng) -> f64 {
        match self {
            Sampler::Beta(d) => d.sample(rng),
            Sampler::Point(v) => *v,
        }
    }
}

// ---------------------------------------------------------------------------
// Synthetic landscapes

/// Settings for Voronoi-tessellated synthetic land-use maps.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SyntheticLandscapeConfig {
    pub width: usize,
    pub height: usize,
    pub resolution: f64,
    /// Number of land-use parcels.
    pub parcels: usize,
    /// Relative frequency of each category among parcels.
    pub category_weights: Vec<(CategoryId, f64)>,
}

impl Default for SyntheticLandscapeConfig {
    fn default() -> Self {
        Self {
            width: 60,
            height: 60,
            resolution: 100.0,
            parcels: 60,
            category_weights: vec![
                (0, 0.35),
                (1, 0.15),
                (2, 0.10),
                (3, 0.15),
                (4, 0.12),
                (5, 0.08),
                (6, 0.05),
            ],
        }
    }
}

/// A generated landscape and, for each requested anchor category, the cell
/// guaranteed to hold it (near the map center).
#[derive(Debug, Clone)]
pub struct SyntheticLandscape {
    pub raster: LandscapeRaster,
    pub anchors: Vec<(CategoryId, usize)>,
}

pub fn synthetic_landscape(
    id: &str,
    cfg: &SyntheticLandscapeConfig,
    anchors: &[CategoryId],
    seed: u64,
) -> Result<SyntheticLandscape> {
    if cfg.width == 0 || cfg.height == 0 {
        return Err(Error::Config("synthetic landscape needs a positive size".into()));
    }
    let total: f64 = cfg.category_weights.iter().map(|c| c.1).sum();
    if cfg.category_weights.is_empty() || !(total > 0.0) {
        return Err(Error::Config("category_weights must have positive mass".into()));
    }
    let mut rng = rng::rng_for(seed, &[stream::LANDSCAPE]);
    let (w, h) = (cfg.width, cfg.height);

    // Anchor parcels sit in the central third so that surveyed habitats are
    // surrounded by landscape on every side.
    let mut seeds: Vec<(f64, f64, CategoryId)> = Vec::new();
    let mut anchor_cells = Vec::new();
    for &cat in anchors {
        let r = h / 3 + rng.random_range(0..(h / 3).max(1));
        let c = w / 3 + rng.random_range(0..(w / 3).max(1));
        seeds.push((r as f64, c as f64, cat));
        anchor_cells.push((cat, r * w + c));
    }
    for _ in 0..cfg.parcels.max(1) {
        let r = rng.random::<f64>() * h as f64;
        let c = rng.random::<f64>() * w as f64;
        let mut u = rng.random::<f64>() * total;
        let mut cat = cfg.category_weights[0].0;
        for &(id, wt) in &cfg.category_weights {
            cat = id;
            if u < wt {
                break;
            }
            u -= wt;
        }
        seeds.push((r, c, cat));
    }

    let mut landuse = vec![0; w * h];
    for (idx, cell) in landuse.iter_mut().enumerate() {
        let (r, c) = ((idx / w) as f64, (idx % w) as f64);
        let mut best = f64::INFINITY;
        for &(sr, sc, cat) in &seeds {
            let d = (sr - r).powi(2) + (sc - c).powi(2);
            if d < best {
                best = d;
                *cell = cat;
            }
        }
    }
    for &(cat, idx) in &anchor_cells {
        landuse[idx] = cat;
    }
    Ok(SyntheticLandscape {
        raster: LandscapeRaster::new(id, w, h, cfg.resolution, landuse)?,
        anchors: anchor_cells,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn raster(w: usize, h: usize, res: f64, fill: CategoryId) -> LandscapeRaster {
        LandscapeRaster::new("t", w, h, res, vec![fill; w * h]).unwrap()
    }

    #[test]
    fn patch_centroids() {
        let p = patch_index(&raster(2, 2, 10.0, 0));
        let xy: Vec<(f64, f64)> = p.iter().map(|p| (p.x, p.y)).collect();
        assert_eq!(xy, vec![(5.0, 5.0), (15.0, 5.0), (5.0, 15.0), (15.0, 15.0)]);
        assert_eq!(patch_index(&raster(1, 1, 10.0, 0)).len(), 1);
        let big = patch_index(&raster(100, 100, 10.0, 0));
        assert_eq!(big.len(), 10_000);
        assert!(big.iter().enumerate().all(|(i, p)| p.id == i));
        assert_eq!((big[101].row, big[101].col), (1, 1));
    }

    #[test]
    fn rejects_bad_rasters() {
        assert!(LandscapeRaster::new("x", 0, 3, 1.0, vec![]).is_err());
        assert!(LandscapeRaster::new("x", 2, 2, 0.0, vec![0; 4]).is_err());
        assert!(LandscapeRaster::new("x", 2, 2, 1.0, vec![0; 3]).is_err());
    }

    #[test]
    fn raster_roundtrip() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("land.asc");
        let r = LandscapeRaster::new("land", 3, 2, 12.5, vec![0, 1, 2, 3, 4, 5]).unwrap();
        save_raster(&r, &path).unwrap();
        assert_eq!(load_raster(&path).unwrap(), r);

        let grid = r.grid();
        let vals = vec![0.1, 1.0 / 3.0, 1e-300, 2.5e12, 0.0, 7.0];
        let gpath = dir.path().join("nu.asc");
        save_real_grid(grid, &vals, &gpath).unwrap();
        assert_eq!(load_real_grid(&gpath).unwrap(), (grid, vals));
    }

    #[test]
    fn malformed_grids() {
        let p = Path::new("mem");
        assert!(parse_raster("a", p, "width 2\nheight 1\n0 0\n").is_err());
        assert!(parse_raster("a", p, "width 2\nheight 1\nresolution 1\n0 0 0\n").is_err());
        assert!(parse_raster("a", p, "width 2\nheight 2\nresolution 1\n0 0\n").is_err());
        assert!(parse_raster("a", p, "width 2\nheight 1\nresolution 1\n0 x\n").is_err());
        assert!(parse_raster("a", p, "width 2\nheight 1\nresolution 1\n0 1\n").is_ok());
    }

    #[test]
    fn point_mass_and_binary_nesting() {
        let reg = CategoryRegistry::default_agricultural();
        let mut r = raster(10, 10, 10.0, 6);
        for c in r.landuse.iter_mut().skip(50) {
            *c = 1;
        }
        let m = generate_attribute_maps(&r, &reg, 2, 2011, 9).unwrap();
        for (i, &cat) in r.landuse.iter().enumerate() {
            if cat == 6 {
                assert_eq!(m.floral[i], 0.0);
                assert_eq!(m.nesting[i], 0.0);
            } else {
                assert_eq!(m.nesting[i], 1.0);
                assert!((0.0..=1.0).contains(&m.floral[i]));
            }
        }
    }

    #[test]
    fn symmetric_beta_mean() {
        let reg = CategoryRegistry::new(vec![CategoryProfile {
            id: 0,
            name: "x".into(),
            floral: vec![FloralLaw::Beta { alpha: 2.0, beta: 2.0 }],
            nesting: 0.0,
        }])
        .unwrap();
        let m = generate_attribute_maps(&raster(100, 100, 10.0, 0), &reg, 1, 0, 3).unwrap();
        let n = m.floral.len() as f64;
        let mean = m.floral.iter().sum::<f64>() / n;
        // Var of Beta(2,2) is 1/20.
        let se = (0.05f64 / n).sqrt();
        assert!((mean - 0.5).abs() < 3.0 * se, "mean {mean}");
    }

    #[test]
    fn missing_profile_is_config_error() {
        let reg = CategoryRegistry::default_agricultural();
        let r = raster(2, 2, 1.0, 42);
        assert!(matches!(
            generate_attribute_maps(&r, &reg, 1, 0, 0),
            Err(Error::Config(_))
        ));
        assert!(generate_attribute_maps(&raster(2, 2, 1.0, 0), &reg, 4, 0, 0).is_err());
    }

    #[test]
    fn attribute_generation_is_pure() {
        let reg = CategoryRegistry::default_agricultural();
        let land = synthetic_landscape("s", &SyntheticLandscapeConfig::default(), &[0, 1, 2], 5)
            .unwrap();
        let a = generate_attribute_maps(&land.raster, &reg, 1, 2012, 77).unwrap();
        let b = generate_attribute_maps(&land.raster, &reg, 1, 2012, 77).unwrap();
        let c = generate_attribute_maps(&land.raster, &reg, 2, 2012, 77).unwrap();
        assert_eq!(a, b);
        assert_ne!(a.floral, c.floral);
        for &(cat, cell) in &land.anchors {
            assert_eq!(land.raster.landuse[cell], cat);
        }
    }

    proptest::proptest! {
        #[test]
        fn centroid_metric(w in 1usize..30, h in 1usize..30, a in 0usize..900, b in 0usize..900, c in 0usize..900) {
            let g = Grid { width: w, height: h, resolution: 7.5 };
            let n = g.n_cells();
            let (a, b, c) = (a % n, b % n, c % n);
            proptest::prop_assert_eq!(g.distance(a, b), g.distance(b, a));
            proptest::prop_assert!(g.distance(a, c) <= g.distance(a, b) + g.distance(b, c) + 1e-9);
        }
    }
}
