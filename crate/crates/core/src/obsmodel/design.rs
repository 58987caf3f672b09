use std::collections::HashSet;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::landscape::{CategoryId, Grid, SyntheticLandscape};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SurveySite {
    pub id: usize,
    /// Index into the landscape list the design was built against.
    pub landscape: usize,
    pub habitat: CategoryId,
    /// Cells covered by the transect.
    pub patches: Vec<usize>,
    /// Duration times area (minutes times square meters).
    pub exposure: f64,
}

/// One scheduled count.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct Visit {
    pub site: usize,
    pub year: i32,
    pub period: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SurveyDesign {
    /// Number of seasonal periods K.
    pub periods: usize,
    pub sites: Vec<SurveySite>,
    pub visits: Vec<Visit>,
}

impl SurveyDesign {
    pub fn validate(&self, grids: &[Grid]) -> Result<()> {
        if self.periods == 0 {
            return Err(Error::Input("design needs at least one period".into()));
        }
        for (i, s) in self.sites.iter().enumerate() {
            if s.id != i {
                return Err(Error::Input(format!("site {i} has id {}", s.id)));
            }
            if !(s.exposure > 0.0 && s.exposure.is_finite()) {
                return Err(Error::Input(format!("site {i}: exposure must be positive")));
            }
            let grid = grids
                .get(s.landscape)
                .ok_or_else(|| Error::Input(format!("site {i}: unknown landscape {}", s.landscape)))?;
            if s.patches.is_empty() || s.patches.iter().any(|&p| p >= grid.n_cells()) {
                return Err(Error::Input(format!("site {i}: invalid transect patches")));
            }
        }
        let mut seen = HashSet::new();
        for v in &self.visits {
            if v.site >= self.sites.len() || v.period == 0 || v.period > self.periods {
                return Err(Error::Input(format!("invalid visit {v:?}")));
            }
            if !seen.insert(*v) {
                return Err(Error::Input(format!("duplicate visit {v:?}")));
            }
        }
        Ok(())
    }

    /// Distinct `(landscape, year, period)` triples, in first-visit order.
    pub fn field_keys(&self) -> Vec<(usize, i32, usize)> {
        let mut seen = HashSet::new();
        self.visits
            .iter()
            .map(|v| (self.sites[v.site].landscape, v.year, v.period))
            .filter(|k| seen.insert(*k))
            .collect()
    }

    pub fn n_landscapes(&self) -> usize {
        self.sites.iter().map(|s| s.landscape + 1).max().unwrap_or(0)
    }
}

/// A block of landscapes sharing years, periods and transect protocol.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DesignStudy {
    pub name: String,
    pub landscapes: usize,
    pub years: Vec<i32>,
    pub periods: Vec<usize>,
    /// Minutes.
    pub duration: f64,
    /// Square meters.
    pub area: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SyntheticDesignConfig {
    pub studies: Vec<DesignStudy>,
    /// One survey site per habitat category in every landscape.
    pub habitats: Vec<CategoryId>,
    pub transect_cells: usize,
}

impl Default for SyntheticDesignConfig {
    /// Desk-scale design: 8 landscapes, 120 visits.
    fn default() -> Self {
        Self::scaled(4, 4, vec![2011, 2012], vec![2013, 2014])
    }
}

impl SyntheticDesignConfig {
    /// Two studies: a two-period one with 15 min x 150 m2 transects and a
    /// three-period one with 10 min x 200 m2 transects.
    pub fn scaled(step: usize, cost: usize, step_years: Vec<i32>, cost_years: Vec<i32>) -> Self {
        Self {
            studies: vec![
                DesignStudy {
                    name: "step".into(),
                    landscapes: step,
                    years: step_years,
                    periods: vec![1, 2],
                    duration: 15.0,
                    area: 150.0,
                },
                DesignStudy {
                    name: "cost".into(),
                    landscapes: cost,
                    years: cost_years,
                    periods: vec![1, 2, 3],
                    duration: 10.0,
                    area: 200.0,
                },
            ],
            habitats: vec![1, 2, 3],
            transect_cells: 1,
        }
    }

    /// 35 landscapes and 645 visits.
    pub fn field_scale() -> Self {
        Self::scaled(20, 15, vec![2011, 2012], vec![2013, 2014, 2015])
    }

    pub fn n_landscapes(&self) -> usize {
        self.studies.iter().map(|s| s.landscapes).sum()
    }

    pub fn periods(&self) -> usize {
        self.studies
            .iter()
            .flat_map(|s| s.periods.iter().copied())
            .max()
            .unwrap_or(0)
    }

    pub fn validate(&self) -> Result<()> {
        if self.habitats.is_empty() || self.transect_cells == 0 {
            return Err(Error::Config("design needs habitats and a transect length".into()));
        }
        for s in &self.studies {
            if s.years.is_empty() || s.periods.is_empty() || s.periods.contains(&0) {
                return Err(Error::Config(format!("study {}: empty years or periods", s.name)));
            }
            if !(s.duration > 0.0 && s.area > 0.0) {
                return Err(Error::Config(format!("study {}: exposure must be positive", s.name)));
            }
        }
        if self.n_landscapes() == 0 {
            return Err(Error::Config("design needs at least one landscape".into()));
        }
        Ok(())
    }

    /// Lays the design over landscapes generated with `self.habitats` as
    /// anchors; studies take consecutive landscapes in order.
    pub fn build(&self, landscapes: &[SyntheticLandscape]) -> Result<SurveyDesign> {
        self.validate()?;
        if landscapes.len() < self.n_landscapes() {
            return Err(Error::Config(format!(
                "design needs {} landscapes, got {}",
                self.n_landscapes(),
                landscapes.len()
            )));
        }
        let mut sites = Vec::new();
        let mut visits = Vec::new();
        let mut next = 0;
        for study in &self.studies {
            for l in next..next + study.landscapes {
                let land = &landscapes[l];
                let grid = land.raster.grid();
                for &habitat in &self.habitats {
                    let &(_, cell) = land
                        .anchors
                        .iter()
                        .find(|a| a.0 == habitat)
                        .ok_or_else(|| {
                            Error::Config(format!("landscape {l} has no anchor for habitat {habitat}"))
                        })?;
                    let row_end = (cell / grid.width + 1) * grid.width;
                    let patches = (cell..(cell + self.transect_cells).min(row_end)).collect();
                    let id = sites.len();
                    sites.push(SurveySite {
                        id,
                        landscape: l,
                        habitat,
                        patches,
                        exposure: study.duration * study.area,
                    });
                    for &year in &study.years {
                        for &period in &study.periods {
                            visits.push(Visit { site: id, year, period });
                        }
                    }
                }
            }
            next += study.landscapes;
        }
        let design = SurveyDesign {
            periods: self.periods(),
            sites,
            visits,
        };
        let grids: Vec<Grid> = landscapes.iter().map(|l| l.raster.grid()).collect();
        design.validate(&grids)?;
        Ok(design)
    }
}
