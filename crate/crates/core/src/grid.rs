//! Geometric size grid and cell-averaged number densities.

use std::io::{Read, Write};
use std::sync::Arc;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::quadrature::{adaptive_gk15, gk15};
use crate::summation::kahan_sum;

#[derive(Debug, Error)]
pub enum GridError {
    #[error("invalid grid: {0}")]
    Config(String),
    #[error("projection failed on cell {cell} [{lo:e}, {hi:e}]: integral is not finite")]
    Projection { cell: usize, lo: f64, hi: f64 },
    #[error("densities live on different grids")]
    GridMismatch,
    #[error("density has {got} values but the grid has {expected} cells")]
    Length { expected: usize, got: usize },
    #[error("density value in cell {cell} is {value:e}, below the tolerated undershoot")]
    Negative { cell: usize, value: f64 },
    #[error("density CSV: {0}")]
    Csv(String),
}

type GResult<T> = std::result::Result<T, GridError>;

/// Where the representative size of a cell sits.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum PivotRule {
    /// `(e_i + e_{i+1}) / 2`
    #[default]
    Arithmetic,
    /// `√(e_i e_{i+1})`
    Geometric,
}

/// Relative tolerance of the per-cell projection quadrature.
pub const PROJECTION_RTOL: f64 = 1e-10;
/// Evaluation budget of the per-cell projection quadrature.
pub const PROJECTION_MAX_EVALS: usize = 1000;

/// Geometric grid `e_i = x_min r^i`, `i = 0..=n_cells`.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(try_from = "GridDef", into = "GridDef")]
pub struct GridSpec {
    x_min: f64,
    x_max: f64,
    pivot_rule: PivotRule,
    ratio: f64,
    edges: Vec<f64>,
    pivots: Vec<f64>,
    widths: Vec<f64>,
}

/// Serialized grid parameters.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GridDef {
    pub x_min: f64,
    pub x_max: f64,
    pub n_cells: usize,
    #[serde(default)]
    pub pivot_rule: PivotRule,
}

impl Default for GridDef {
    fn default() -> Self {
        Self {
            x_min: 1e-3,
            x_max: 1e3,
            n_cells: 256,
            pivot_rule: PivotRule::Arithmetic,
        }
    }
}

impl GridDef {
    pub fn violations(&self) -> Vec<String> {
        let mut out = Vec::new();
        if !(self.x_min.is_finite() && self.x_min > 0.0) {
            out.push(format!("x_min must be finite and > 0 (got {})", self.x_min));
        }
        if !(self.x_max.is_finite() && self.x_max > self.x_min) {
            out.push(format!("x_max must be finite and > x_min (got {})", self.x_max));
        }
        if self.n_cells < 8 {
            out.push(format!("n_cells must be >= 8 (got {})", self.n_cells));
        }
        if out.is_empty() {
            let ratio = (self.x_max / self.x_min).powf(1.0 / self.n_cells as f64);
            if !(ratio > 1.0 && ratio <= 4.0) {
                out.push(format!(
                    "cell ratio (x_max/x_min)^(1/n_cells) must lie in (1, 4] (got {ratio})"
                ));
            }
        }
        out
    }
}

impl TryFrom<GridDef> for GridSpec {
    type Error = GridError;
    fn try_from(def: GridDef) -> GResult<Self> {
        GridSpec::with_rule(def.x_min, def.x_max, def.n_cells, def.pivot_rule)
    }
}

impl From<GridSpec> for GridDef {
    fn from(g: GridSpec) -> Self {
        g.def()
    }
}

impl PartialEq for GridSpec {
    fn eq(&self, other: &Self) -> bool {
        self.x_min == other.x_min
            && self.x_max == other.x_max
            && self.pivot_rule == other.pivot_rule
            && self.edges.len() == other.edges.len()
    }
}

impl GridSpec {
    pub fn new(x_min: f64, x_max: f64, n_cells: usize) -> GResult<Self> {
        Self::with_rule(x_min, x_max, n_cells, PivotRule::Arithmetic)
    }

    pub fn with_rule(x_min: f64, x_max: f64, n_cells: usize, pivot_rule: PivotRule) -> GResult<Self> {
        let def = GridDef {
            x_min,
            x_max,
            n_cells,
            pivot_rule,
        };
        let v = def.violations();
        if !v.is_empty() {
            return Err(GridError::Config(v.join("; ")));
        }
        let ratio = (x_max / x_min).powf(1.0 / n_cells as f64);
        let log_ratio = (x_max / x_min).ln() / n_cells as f64;
        let mut edges: Vec<f64> = (0..=n_cells)
            .map(|i| x_min * (log_ratio * i as f64).exp())
            .collect();
        edges[0] = x_min;
        edges[n_cells] = x_max;
        let pivots = edges
            .windows(2)
            .map(|w| match pivot_rule {
                PivotRule::Arithmetic => 0.5 * (w[0] + w[1]),
                PivotRule::Geometric => (w[0] * w[1]).sqrt(),
            })
            .collect();
        let widths = edges.windows(2).map(|w| w[1] - w[0]).collect();
        Ok(Self {
            x_min,
            x_max,
            pivot_rule,
            ratio,
            edges,
            pivots,
            widths,
        })
    }

    pub fn def(&self) -> GridDef {
        GridDef {
            x_min: self.x_min,
            x_max: self.x_max,
            n_cells: self.n_cells(),
            pivot_rule: self.pivot_rule,
        }
    }

    pub fn n_cells(&self) -> usize {
        self.pivots.len()
    }
    pub fn x_min(&self) -> f64 {
        self.x_min
    }
    pub fn x_max(&self) -> f64 {
        self.x_max
    }
    pub fn ratio(&self) -> f64 {
        self.ratio
    }
    pub fn pivot_rule(&self) -> PivotRule {
        self.pivot_rule
    }
    pub fn edges(&self) -> &[f64] {
        &self.edges
    }
    pub fn pivots(&self) -> &[f64] {
        &self.pivots
    }
    pub fn widths(&self) -> &[f64] {
        &self.widths
    }

    /// Index of the cell containing `x`, if `x` lies inside the grid.
    pub fn cell_of(&self, x: f64) -> Option<usize> {
        if !(x >= self.x_min && x <= self.x_max) {
            return None;
        }
        let i = self.edges.partition_point(|&e| e <= x);
        Some(i.saturating_sub(1).min(self.n_cells() - 1))
    }
}

/// Cell-averaged number density at time `t`.
///
/// `values[i]` is the number of particles in cell `i` divided by its width.
#[derive(Debug, Clone, PartialEq)]
pub struct Density {
    grid: Arc<GridSpec>,
    values: Vec<f64>,
    t: f64,
}

impl Density {
    pub fn zeros(grid: Arc<GridSpec>) -> Self {
        let n = grid.n_cells();
        Self {
            grid,
            values: vec![0.0; n],
            t: 0.0,
        }
    }

    pub fn from_values(grid: Arc<GridSpec>, values: Vec<f64>, t: f64) -> GResult<Self> {
        if values.len() != grid.n_cells() {
            return Err(GridError::Length {
                expected: grid.n_cells(),
                got: values.len(),
            });
        }
        Ok(Self { grid, values, t })
    }

    /// Monodisperse initial state: `number` particles at size `x0`, spread
    /// uniformly over the containing cell.
    pub fn monodisperse(grid: Arc<GridSpec>, x0: f64, number: f64) -> GResult<Self> {
        let cell = grid
            .cell_of(x0)
            .ok_or_else(|| GridError::Config(format!("monodisperse size {x0} is outside the grid")))?;
        let mut d = Self::zeros(grid);
        d.values[cell] = number / d.grid.widths()[cell];
        Ok(d)
    }

    pub fn grid(&self) -> &Arc<GridSpec> {
        &self.grid
    }
    pub fn values(&self) -> &[f64] {
        &self.values
    }
    pub fn t(&self) -> f64 {
        self.t
    }
    pub fn with_time(mut self, t: f64) -> Self {
        self.t = t;
        self
    }

    /// Particle number per cell, `v_i Δ_i`.
    pub fn numbers(&self) -> Vec<f64> {
        self.values
            .iter()
            .zip(self.grid.widths())
            .map(|(v, w)| v * w)
            .collect()
    }

    pub fn same_grid(&self, other: &Density) -> bool {
        Arc::ptr_eq(&self.grid, &other.grid) || *self.grid == *other.grid
    }

    /// Tolerated round-off undershoot, `10⁻¹² · max_i v_i`.
    pub fn undershoot_tolerance(&self) -> f64 {
        1e-12 * self.values.iter().cloned().fold(0.0, f64::max)
    }

    /// Checks finiteness and the undershoot bound.
    pub fn check(&self) -> GResult<()> {
        let eps = self.undershoot_tolerance();
        for (cell, &value) in self.values.iter().enumerate() {
            if !value.is_finite() || value < -eps {
                return Err(GridError::Negative { cell, value });
            }
        }
        Ok(())
    }

    /// `a·self + other` on the same grid.
    pub fn axpy(&self, a: f64, other: &Density) -> GResult<Density> {
        if !self.same_grid(other) {
            return Err(GridError::GridMismatch);
        }
        let values = self
            .values
            .iter()
            .zip(&other.values)
            .map(|(x, y)| a * x + y)
            .collect();
        Ok(Density {
            grid: self.grid.clone(),
            values,
            t: self.t,
        })
    }
}

/// Cell averages of `profile`: `v_i = (1/Δ_i) ∫_{cell i} profile(x) dx`.
///
/// Each cell uses adaptive Gauss-Kronrod to a relative tolerance of 10⁻¹⁰
/// with at most 1000 evaluations; cells that exhaust the budget fall back to
/// a single 15-point panel and log a warning.
pub fn project<F: Fn(f64) -> f64>(profile: F, grid: &Arc<GridSpec>) -> GResult<Density> {
    let mut values = Vec::with_capacity(grid.n_cells());
    for (cell, w) in grid.edges().windows(2).enumerate() {
        let (lo, hi) = (w[0], w[1]);
        let r = adaptive_gk15(&profile, lo, hi, PROJECTION_RTOL, 1e-300, PROJECTION_MAX_EVALS);
        let integral = if r.converged {
            r.value
        } else {
            let (v, _) = gk15(&profile, lo, hi);
            log::warn!(
                "projection of cell {cell} [{lo:e}, {hi:e}] did not converge within {} evaluations; \
                 using the fixed 15-point rule",
                PROJECTION_MAX_EVALS
            );
            v
        };
        if !integral.is_finite() {
            return Err(GridError::Projection { cell, lo, hi });
        }
        values.push(integral / (hi - lo));
    }
    Ok(Density {
        grid: grid.clone(),
        values,
        t: 0.0,
    })
}

/// Discrete X-norm `Σ_i (1 + p_i) |v_i| Δ_i`.
pub fn weighted_norm(d: &Density) -> f64 {
    let g = d.grid();
    kahan_sum(
        d.values()
            .iter()
            .zip(g.pivots())
            .zip(g.widths())
            .map(|((v, p), w)| (1.0 + p) * v.abs() * w),
    )
}

/// Conservative remap of `fine` onto the cells of `coarse`: the number in
/// each target cell is the overlap-weighted number of the source cells,
/// assuming a piecewise-constant source density.
pub fn remap_numbers(fine: &Density, coarse: &GridSpec) -> Vec<f64> {
    let src = fine.grid();
    let se = src.edges();
    let te = coarse.edges();
    let mut out = vec![0.0; coarse.n_cells()];
    let (mut i, mut j) = (0, 0);
    while i < src.n_cells() && j < coarse.n_cells() {
        let lo = se[i].max(te[j]);
        let hi = se[i + 1].min(te[j + 1]);
        if hi > lo {
            out[j] += fine.values()[i] * (hi - lo);
        }
        if se[i + 1] <= te[j + 1] {
            i += 1;
        } else {
            j += 1;
        }
    }
    out
}

/// CSV header of serialized densities.
pub const DENSITY_CSV_HEADER: [&str; 5] = ["cell_index", "edge_lo", "edge_hi", "pivot", "value"];

/// Formats a number with 17 significant digits (exact round trip).
pub fn fmt_num(v: f64) -> String {
    format!("{v:.16e}")
}

pub fn write_density_csv<W: Write>(d: &Density, out: W) -> GResult<()> {
    let mut w = csv::Writer::from_writer(out);
    let csv_err = |e: csv::Error| GridError::Csv(e.to_string());
    w.write_record(DENSITY_CSV_HEADER).map_err(csv_err)?;
    let g = d.grid();
    for i in 0..g.n_cells() {
        w.write_record([
            i.to_string(),
            fmt_num(g.edges()[i]),
            fmt_num(g.edges()[i + 1]),
            fmt_num(g.pivots()[i]),
            fmt_num(d.values()[i]),
        ])
        .map_err(csv_err)?;
    }
    w.flush().map_err(|e| GridError::Csv(e.to_string()))
}

/// Reads a density CSV. The grid is reconstructed from the edge columns and
/// must be geometric; `pivot_rule` is inferred from the pivot column.
pub fn read_density_csv<R: Read>(input: R) -> GResult<Density> {
    let mut rdr = csv::ReaderBuilder::new().trim(csv::Trim::All).from_reader(input);
    let headers = rdr.headers().map_err(|e| GridError::Csv(e.to_string()))?.clone();
    if headers.iter().collect::<Vec<_>>() != DENSITY_CSV_HEADER {
        return Err(GridError::Csv(format!(
            "expected header {:?}, found {:?}",
            DENSITY_CSV_HEADER,
            headers.iter().collect::<Vec<_>>()
        )));
    }
    let mut lo = Vec::new();
    let mut hi = Vec::new();
    let mut piv = Vec::new();
    let mut values = Vec::new();
    for (row, rec) in rdr.records().enumerate() {
        let rec = rec.map_err(|e| GridError::Csv(e.to_string()))?;
        let num = |k: usize| -> GResult<f64> {
            rec.get(k)
                .ok_or_else(|| GridError::Csv(format!("row {row}: missing column {k}")))?
                .parse::<f64>()
                .map_err(|e| GridError::Csv(format!("row {row}, column {}: {e}", DENSITY_CSV_HEADER[k])))
        };
        let idx: usize = rec
            .get(0)
            .unwrap_or("")
            .parse()
            .map_err(|e| GridError::Csv(format!("row {row}, cell_index: {e}")))?;
        if idx != row {
            return Err(GridError::Csv(format!("row {row}: cell_index {idx} out of order")));
        }
        lo.push(num(1)?);
        hi.push(num(2)?);
        piv.push(num(3)?);
        values.push(num(4)?);
    }
    let n = values.len();
    if n == 0 {
        return Err(GridError::Csv("no cells".into()));
    }
    let geometric = (lo[0] * hi[0]).sqrt();
    let rule = if (piv[0] - geometric).abs() <= 1e-12 * piv[0] {
        PivotRule::Geometric
    } else {
        PivotRule::Arithmetic
    };
    let grid = GridSpec::with_rule(lo[0], hi[n - 1], n, rule)?;
    for i in 0..n {
        let scale = grid.edges()[i + 1];
        if (grid.edges()[i] - lo[i]).abs() > 1e-12 * scale || (grid.edges()[i + 1] - hi[i]).abs() > 1e-12 * scale {
            return Err(GridError::Csv(format!("row {i}: edges are not those of a geometric grid")));
        }
    }
    Density::from_values(Arc::new(grid), values, 0.0)
}
