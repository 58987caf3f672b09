//! Central-place foraging intensities.
//!
//! For a nest in patch `i` and a flower patch `j` at distance `d_ij`:
//!
//! * `tau_f = tau0 (1 - f0 / f)` is how far a bee flies for floral value `f`;
//! * `s_i = sum_j max(tau0 (1 - f0/f_j) - d_ij, 0)` is the nest suitability;
//! * `tau_i = tau0 / (1 + exp((sqrt(s_i) - a) / b))` is the nest-specific range;
//! * `r_ij = q_i D_ij / sum_j' D_ij'` with `D_ij = tau_i (1 - f0/f_j) - d_ij`
//!   restricted to positive terms, and `nu_j = sum_i r_ij`.
//!
//! Both scans only visit the disc where a positive term is possible, using a
//! table of cell offsets sorted by distance.

use std::collections::HashMap;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::landscape::{offset_distance, AttributeMap, Grid};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CpfParams {
    /// Maximum flight distance for a patch of unbounded floral value (m).
    pub tau0: f64,
    /// Lowest floral value that is ever visited.
    pub f0: f64,
    /// Square-root suitability at which `tau_i = tau0 / 2`.
    pub a: f64,
    /// Logistic slope of `tau_i` against square-root suitability.
    pub b: f64,
}

impl CpfParams {
    pub fn new(tau0: f64, f0: f64, a: f64, b: f64) -> Result<Self> {
        let p = Self { tau0, f0, a, b };
        p.validate()?;
        Ok(p)
    }

    pub fn validate(&self) -> Result<()> {
        let ok = |v: f64| v > 0.0 && v.is_finite();
        if ok(self.tau0) && ok(self.f0) && ok(self.a) && ok(self.b) {
            Ok(())
        } else {
            Err(Error::Input(format!("CPF parameters must be positive: {self:?}")))
        }
    }
}

/// `tau0 (1 - f0 / f)`; callers must filter out `f < f0`.
pub fn max_flight_distance(f: f64, params: &CpfParams) -> f64 {
    debug_assert!(f >= params.f0, "floral value {f} below f0 {}", params.f0);
    params.tau0 * (1.0 - params.f0 / f)
}

/// Logistic decay of the nesting range with suitability.
pub fn nest_specific_distance(s: f64, params: &CpfParams) -> f64 {
    debug_assert!(s >= 0.0);
    params.tau0 / (1.0 + ((s.sqrt() - params.a) / params.b).exp())
}

#[derive(Debug, Clone, Copy)]
struct Offset {
    dr: i32,
    dc: i32,
    dist: f64,
}

/// Cell offsets sorted by distance, covering a disc of a given radius (or
/// the whole grid when that is smaller).
#[derive(Debug, Clone)]
pub struct OffsetTable {
    grid: Grid,
    radius: f64,
    whole_grid: bool,
    offsets: Vec<Offset>,
}

impl OffsetTable {
    pub fn new(grid: Grid, radius: f64) -> Self {
        let max_dr = grid.height as i64 - 1;
        let max_dc = grid.width as i64 - 1;
        let span = offset_distance(max_dr, max_dc, grid.resolution);
        let whole_grid = radius >= span;
        let cells = (radius / grid.resolution).ceil() as i64;
        let (rr, rc) = (cells.min(max_dr), cells.min(max_dc));
        let mut offsets = Vec::new();
        for dr in -rr..=rr {
            for dc in -rc..=rc {
                let dist = offset_distance(dr, dc, grid.resolution);
                if whole_grid || dist <= radius {
                    offsets.push(Offset {
                        dr: dr as i32,
                        dc: dc as i32,
                        dist,
                    });
                }
            }
        }
        offsets.sort_by(|a, b| {
            a.dist
                .total_cmp(&b.dist)
                .then(a.dr.cmp(&b.dr))
                .then(a.dc.cmp(&b.dc))
        });
        Self {
            grid,
            radius,
            whole_grid,
            offsets,
        }
    }

    pub fn grid(&self) -> Grid {
        self.grid
    }

    fn covers(&self, radius: f64) -> bool {
        self.whole_grid || radius <= self.radius
    }

    /// Visits every in-grid cell within `radius` (exclusive) of `center`,
    /// nearest first.
    #[inline]
    fn scan(&self, center: usize, radius: f64, mut f: impl FnMut(usize, f64)) {
        debug_assert!(self.covers(radius));
        let w = self.grid.width as i64;
        let h = self.grid.height as i64;
        let (r0, c0) = (center as i64 / w, center as i64 % w);
        for o in &self.offsets {
            if o.dist >= radius {
                break;
            }
            let r = r0 + o.dr as i64;
            let c = c0 + o.dc as i64;
            if r >= 0 && r < h && c >= 0 && c < w {
                f((r * w + c) as usize, o.dist);
            }
        }
    }
}

/// Per-call scratch: the floral reach factor `1 - f0/f_j` of every cell
/// (negative for cells below `f0`, which can never be visited).
struct Reach<'a> {
    table: &'a OffsetTable,
    params: CpfParams,
    factor: Vec<f64>,
    max_factor: f64,
}

impl<'a> Reach<'a> {
    fn new(map: &'a AttributeMap, table: &'a OffsetTable, params: &CpfParams) -> Self {
        let factor: Vec<f64> = map
            .floral
            .iter()
            .map(|&f| if f >= params.f0 { 1.0 - params.f0 / f } else { -1.0 })
            .collect();
        let max_factor = factor.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        Self {
            table,
            params: *params,
            factor,
            max_factor,
        }
    }

    fn suitability(&self, nest: usize) -> f64 {
        if self.max_factor <= 0.0 {
            return 0.0;
        }
        let tau0 = self.params.tau0;
        let mut s = 0.0;
        self.table
            .scan(nest, tau0 * self.max_factor, |j, d| {
                let delta = tau0 * self.factor[j] - d;
                if delta > 0.0 {
                    s += delta;
                }
            });
        s
    }

    /// `(s_i, tau_i, sum of positive contributions)` for nest `i`.
    fn nest(&self, i: usize) -> (f64, f64, f64) {
        let s = self.suitability(i);
        let tau = nest_specific_distance(s, &self.params);
        let mut total = 0.0;
        if self.max_factor > 0.0 {
            self.table.scan(i, tau * self.max_factor, |j, d| {
                let delta = tau * self.factor[j] - d;
                if delta > 0.0 {
                    total += delta;
                }
            });
        }
        (s, tau, total)
    }
}

fn table_for<'a>(
    map: &AttributeMap,
    params: &CpfParams,
    table: Option<&'a OffsetTable>,
    owned: &'a mut Option<OffsetTable>,
) -> &'a OffsetTable {
    match table {
        Some(t) if t.covers(params.tau0) && t.grid == map.grid => t,
        _ => owned.insert(OffsetTable::new(map.grid, params.tau0)),
    }
}

/// Suitability of a nest in patch `nest`.
pub fn suitability(map: &AttributeMap, nest: usize, params: &CpfParams) -> f64 {
    let mut owned = None;
    let table = table_for(map, params, None, &mut owned);
    Reach::new(map, table, params).suitability(nest)
}

/// Visitation intensity, nest ranges and suitabilities over a whole map.
#[derive(Debug, Clone, PartialEq)]
pub struct VisitationField {
    pub grid: Grid,
    pub nu: Vec<f64>,
    /// `tau_i` for nest cells (`q_i > 0`); zero elsewhere.
    pub tau_nest: Vec<f64>,
    /// `s_i` for nest cells; zero elsewhere.
    pub suitability: Vec<f64>,
}

impl VisitationField {
    /// Mean intensity over a set of patches.
    pub fn mean_over(&self, patches: &[usize]) -> f64 {
        patches.iter().map(|&p| self.nu[p]).sum::<f64>() / patches.len() as f64
    }

    pub fn save_nu(&self, path: &std::path::Path) -> Result<()> {
        crate::landscape::save_real_grid(self.grid, &self.nu, path)
    }
}

const NEST_CHUNK: usize = 512;

pub fn visitation_field(map: &AttributeMap, params: &CpfParams) -> VisitationField {
    visitation_field_with(map, params, None)
}

/// As [`visitation_field`], reusing a precomputed offset table when it
/// covers `tau0`. Nests are processed in fixed-size chunks whose partial
/// fields are merged in chunk order, so the result does not depend on the
/// number of worker threads.
pub fn visitation_field_with(
    map: &AttributeMap,
    params: &CpfParams,
    table: Option<&OffsetTable>,
) -> VisitationField {
    let mut owned = None;
    let table = table_for(map, params, table, &mut owned);
    let reach = Reach::new(map, table, params);
    let n = map.grid.n_cells();
    let mut tau_nest = vec![0.0; n];
    let mut suit = vec![0.0; n];

    struct Partial {
        start: usize,
        nu: Vec<f64>,
        tau: Vec<f64>,
        suit: Vec<f64>,
    }

    let starts: Vec<usize> = (0..n).step_by(NEST_CHUNK).collect();
    let partials: Vec<Partial> = starts
        .par_iter()
        .map(|&start| {
            let end = (start + NEST_CHUNK).min(n);
            let mut nu = vec![0.0; n];
            let mut tau = vec![0.0; end - start];
            let mut su = vec![0.0; end - start];
            let mut buf: Vec<(usize, f64)> = Vec::new();
            for i in start..end {
                let q = map.nesting[i];
                if q <= 0.0 {
                    continue;
                }
                let (s, t, total) = reach.nest(i);
                tau[i - start] = t;
                su[i - start] = s;
                if total <= 0.0 {
                    continue;
                }
                buf.clear();
                reach.table.scan(i, t * reach.max_factor, |j, d| {
                    let delta = t * reach.factor[j] - d;
                    if delta > 0.0 {
                        buf.push((j, delta));
                    }
                });
                for &(j, delta) in &buf {
                    nu[j] += q * delta / total;
                }
            }
            Partial {
                start,
                nu,
                tau,
                suit: su,
            }
        })
        .collect();

    let mut nu = vec![0.0; n];
    for p in partials {
        for (acc, v) in nu.iter_mut().zip(&p.nu) {
            *acc += v;
        }
        tau_nest[p.start..p.start + p.tau.len()].copy_from_slice(&p.tau);
        suit[p.start..p.start + p.suit.len()].copy_from_slice(&p.suit);
    }
    VisitationField {
        grid: map.grid,
        nu,
        tau_nest,
        suitability: suit,
    }
}

/// Intensity `nu_t` at selected cells only. Only nests within `tau0` of a
/// target are evaluated; agrees with [`visitation_field`] up to summation
/// order.
pub fn intensities_at(
    map: &AttributeMap,
    params: &CpfParams,
    table: Option<&OffsetTable>,
    targets: &[usize],
) -> Vec<f64> {
    let mut owned = None;
    let table = table_for(map, params, table, &mut owned);
    let reach = Reach::new(map, table, params);
    let mut nests: HashMap<usize, (f64, f64)> = HashMap::new();
    targets
        .iter()
        .map(|&t| {
            let g = reach.factor[t];
            if g <= 0.0 {
                return 0.0;
            }
            let mut nu = 0.0;
            // tau_i < tau0, so the tau0 disc around the target holds every
            // nest that can reach it.
            table.scan(t, params.tau0 * g, |i, d| {
                let q = map.nesting[i];
                if q <= 0.0 {
                    return;
                }
                let &mut (tau, total) = nests.entry(i).or_insert_with(|| {
                    let (_, tau, total) = reach.nest(i);
                    (tau, total)
                });
                let delta = tau * g - d;
                if delta > 0.0 && total > 0.0 {
                    nu += q * delta / total;
                }
            });
            nu
        })
        .collect()
}
