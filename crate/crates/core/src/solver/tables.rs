//! Operator assembly and the right-hand side of the sectional equations.
//!
//! The state is the particle number per cell, `N_i = v_i Δ_i`, concentrated
//! at the pivot `p_i`. Coagulation of a pair `(i, j)` produces a particle of
//! size `s = p_i + p_j`, which is shared between the two pivots bracketing
//! `s` so that number and mass are both reproduced; above the last pivot the
//! whole particle goes to the last cell with a mass-preserving weight.
//! Fragments are distributed the same way over pivot-to-pivot intervals,
//! using closed-form partial integrals of the breakage function.

use std::sync::Arc;

use serde::{Deserialize, Serialize};

use super::SolverError;
use crate::grid::{Density, GridSpec};
use crate::kernels::{CoagulationKernel, FragmentationSpec};
use crate::summation::{KahanSum, KahanVec};

/// How coagulation products beyond `x_max` are treated.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum TruncationMode {
    /// Pairs with `p_i + p_j > x_max` neither collide nor produce anything,
    /// so mass is conserved on the truncated domain.
    #[default]
    ConservativeTruncation,
    /// Such pairs still collide; their mass leaves the grid as overflow flux.
    ClassicalTruncation,
}

/// What happens to fragments smaller than `x_min`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum DustRule {
    /// Removed and accounted as dust flux.
    #[default]
    Remove,
    /// Added to the first cell with a mass-preserving number weight.
    Lump,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct AssemblyOptions {
    #[serde(default)]
    pub truncation: TruncationMode,
    #[serde(default)]
    pub dust: DustRule,
    /// Upper bound on table memory, in bytes.
    #[serde(default = "default_table_budget")]
    pub max_table_bytes: u64,
}

fn default_table_budget() -> u64 {
    1 << 30
}

impl Default for AssemblyOptions {
    fn default() -> Self {
        Self {
            truncation: TruncationMode::default(),
            dust: DustRule::default(),
            max_table_bytes: default_table_budget(),
        }
    }
}

/// Coagulation product of one unordered source pair.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CoagulationPair {
    pub i: u32,
    pub j: u32,
    /// `K(p_i, p_j)`, halved when `i == j`.
    pub rate: f64,
    pub lo: u32,
    pub w_lo: f64,
    pub hi: u32,
    /// Zero when the product lands beyond the last pivot.
    pub w_hi: f64,
}

impl CoagulationPair {
    /// Mass assigned to target pivots per collision.
    pub fn assigned_mass(&self, grid: &GridSpec) -> f64 {
        let p = grid.pivots();
        self.w_lo * p[self.lo as usize] + self.w_hi * p[self.hi as usize]
    }
}

#[derive(Debug, Clone)]
struct CoagulationTables {
    pairs: Vec<CoagulationPair>,
    /// Pairs beyond `x_max` in classical mode: (i, j, rate, product size).
    overflow: Vec<(u32, u32, f64, f64)>,
    /// Row-major `K(p_i, p_j)` restricted to colliding pairs; the death table
    /// is `D_{i,j} = kernel[i, j] Δ_j`.
    kernel: Vec<f64>,
}

#[derive(Debug, Clone)]
struct FragmentationTables {
    /// `S(p_j)`.
    rates: Vec<f64>,
    /// Lower-triangular rows: row `j` holds `B_{j,i}` for `i = 0..=j`.
    birth: Vec<f64>,
    /// Mass and number of sub-`x_min` fragments per breakage event.
    dust_mass: Vec<f64>,
    dust_number: Vec<f64>,
    /// Fragment number on the grid minus the exact fragment count, per event.
    number_defect: Vec<f64>,
}

/// Precomputed interaction tables on a fixed grid.
#[derive(Debug, Clone)]
pub struct OperatorTables {
    grid: Arc<GridSpec>,
    options: AssemblyOptions,
    coag: Option<CoagulationTables>,
    frag: Option<FragmentationTables>,
}

/// Time derivatives of the cell numbers and of the bookkeeping fluxes.
#[derive(Debug, Clone, PartialEq)]
pub struct Rates {
    pub numbers: Vec<f64>,
    pub overflow_mass: f64,
    pub dust_mass: f64,
    pub dust_number: f64,
    pub number_defect: f64,
}

fn row_start(j: usize) -> usize {
    j * (j + 1) / 2
}

/// Splits number `count` and mass `mass` of material located in
/// `[p_k, p_{k+1}]` between the two pivots.
fn split(count: f64, mass: f64, p_lo: f64, p_hi: f64) -> (f64, f64) {
    let w = p_hi - p_lo;
    ((p_hi * count - mass) / w, (mass - p_lo * count) / w)
}

impl OperatorTables {
    /// Builds the coagulation and fragmentation tables. Either process may be
    /// absent.
    pub fn assemble(
        kernel: Option<&CoagulationKernel>,
        frag: Option<&FragmentationSpec>,
        grid: Arc<GridSpec>,
        options: AssemblyOptions,
    ) -> Result<Self, SolverError> {
        let n = grid.n_cells();
        let mut bytes: u64 = 0;
        if kernel.is_some() {
            bytes += (n * n * 8) as u64 + (n * (n + 1) / 2 * std::mem::size_of::<CoagulationPair>()) as u64;
        }
        if frag.is_some() {
            bytes += (row_start(n) * 8 + 4 * n * 8) as u64;
        }
        if bytes > options.max_table_bytes {
            return Err(SolverError::TableBudget {
                bytes,
                budget: options.max_table_bytes,
            });
        }
        let coag = kernel
            .map(|k| {
                k.validate()?;
                Self::assemble_coagulation(k, &grid, options.truncation)
            })
            .transpose()?;
        let frag = frag
            .map(|f| Self::assemble_fragmentation(f, &grid, options.dust))
            .transpose()?;
        Ok(Self {
            grid,
            options,
            coag,
            frag,
        })
    }

    fn assemble_coagulation(
        kernel: &CoagulationKernel,
        grid: &GridSpec,
        mode: TruncationMode,
    ) -> Result<CoagulationTables, SolverError> {
        let n = grid.n_cells();
        let p = grid.pivots();
        let x_max = grid.x_max();
        let mut k_table = vec![0.0; n * n];
        for i in 0..n {
            for j in i..n {
                let v = kernel.eval(p[i], p[j])?;
                k_table[i * n + j] = v;
                k_table[j * n + i] = v;
            }
        }
        let mut pairs = Vec::new();
        let mut overflow = Vec::new();
        let mut masked = k_table.clone();
        if mode == TruncationMode::ConservativeTruncation {
            for i in 0..n {
                for j in 0..n {
                    if p[i] + p[j] > x_max {
                        masked[i * n + j] = 0.0;
                    }
                }
            }
        }
        for i in 0..n {
            for j in i..n {
                let s = p[i] + p[j];
                let mut rate = k_table[i * n + j];
                if i == j {
                    rate *= 0.5;
                }
                if rate == 0.0 {
                    continue;
                }
                if s > x_max {
                    if mode == TruncationMode::ClassicalTruncation {
                        overflow.push((i as u32, j as u32, rate, s));
                    }
                    continue;
                }
                // Largest pivot not exceeding s; s > p_j >= p_0.
                let k = p.partition_point(|&q| q <= s) - 1;
                let pair = if k + 1 < n {
                    let (w_lo, w_hi) = split(1.0, s, p[k], p[k + 1]);
                    CoagulationPair {
                        i: i as u32,
                        j: j as u32,
                        rate,
                        lo: k as u32,
                        w_lo,
                        hi: (k + 1) as u32,
                        w_hi,
                    }
                } else {
                    CoagulationPair {
                        i: i as u32,
                        j: j as u32,
                        rate,
                        lo: k as u32,
                        w_lo: s / p[k],
                        hi: k as u32,
                        w_hi: 0.0,
                    }
                };
                pairs.push(pair);
            }
        }
        Ok(CoagulationTables {
            pairs,
            overflow,
            kernel: masked,
        })
    }

    fn assemble_fragmentation(
        frag: &FragmentationSpec,
        grid: &GridSpec,
        dust_rule: DustRule,
    ) -> Result<FragmentationTables, SolverError> {
        let n = grid.n_cells();
        let p = grid.pivots();
        let x_min = grid.x_min();
        let count = frag.fragment_count();
        let mut rates = Vec::with_capacity(n);
        let mut birth = vec![0.0; row_start(n)];
        let mut dust_mass = vec![0.0; n];
        let mut dust_number = vec![0.0; n];
        let mut number_defect = vec![0.0; n];
        for j in 0..n {
            let y = p[j];
            let s = frag.eval_s(y)?;
            rates.push(s);
            let row = &mut birth[row_start(j)..row_start(j + 1)];
            let mut total = KahanSum::new();

            let dm = frag.breakage_partial_mass(y, 0.0, x_min)?;
            let dn = frag.breakage_partial_number(y, 0.0, x_min)?;
            match dust_rule {
                DustRule::Remove => {
                    dust_mass[j] = dm;
                    dust_number[j] = dn;
                }
                DustRule::Lump => {
                    row[0] += dm / p[0];
                    total.add(dm / p[0]);
                }
            }
            // [x_min, p_0] has a single target: keep its mass.
            let m0 = frag.breakage_partial_mass(y, x_min, p[0])?;
            row[0] += m0 / p[0];
            total.add(m0 / p[0]);
            for k in 0..j {
                let c = frag.breakage_partial_number(y, p[k], p[k + 1])?;
                let m = frag.breakage_partial_mass(y, p[k], p[k + 1])?;
                let (lo, hi) = split(c, m, p[k], p[k + 1]);
                row[k] += lo;
                row[k + 1] += hi;
                total.add(lo);
                total.add(hi);
            }
            number_defect[j] = total.value() + dust_number[j] - count;
            for b in row.iter_mut() {
                *b *= s;
            }
        }
        Ok(FragmentationTables {
            rates,
            birth,
            dust_mass,
            dust_number,
            number_defect,
        })
    }

    pub fn grid(&self) -> &Arc<GridSpec> {
        &self.grid
    }

    pub fn options(&self) -> AssemblyOptions {
        self.options
    }

    pub fn has_coagulation(&self) -> bool {
        self.coag.is_some()
    }

    pub fn has_fragmentation(&self) -> bool {
        self.frag.is_some()
    }

    /// Source pairs of coagulation birth, in assembly order (`i ≤ j` ascending).
    pub fn coagulation_pairs(&self) -> &[CoagulationPair] {
        self.coag.as_ref().map_or(&[], |c| &c.pairs)
    }

    /// `D_{i,j}`, or `None` without coagulation.
    pub fn death_entry(&self, i: usize, j: usize) -> Option<f64> {
        let n = self.grid.n_cells();
        self.coag
            .as_ref()
            .map(|c| c.kernel[i * n + j] * self.grid.widths()[j])
    }

    /// `B_{j,i}`: rate of fragment births in cell `i` per unit number of
    /// parents in cell `j` (zero for `i > j`).
    pub fn birth_entry(&self, j: usize, i: usize) -> Option<f64> {
        self.frag
            .as_ref()
            .map(|f| if i <= j { f.birth[row_start(j) + i] } else { 0.0 })
    }

    /// `S(p_j)`.
    pub fn loss_rate(&self, j: usize) -> Option<f64> {
        self.frag.as_ref().map(|f| f.rates[j])
    }

    /// Dust (mass, number) per breakage event of a parent in cell `j`.
    pub fn dust_per_event(&self, j: usize) -> Option<(f64, f64)> {
        self.frag.as_ref().map(|f| (f.dust_mass[j], f.dust_number[j]))
    }

    /// Largest per-unit loss rate over all cells for the given numbers.
    pub fn max_loss_rate(&self, numbers: &[f64]) -> f64 {
        let n = self.grid.n_cells();
        let mut worst: f64 = 0.0;
        for i in 0..n {
            let mut r = 0.0;
            if let Some(c) = &self.coag {
                let row = &c.kernel[i * n..(i + 1) * n];
                for j in 0..n {
                    r += row[j] * numbers[j].max(0.0);
                }
            }
            if let Some(f) = &self.frag {
                r += f.rates[i];
            }
            worst = worst.max(r);
        }
        worst
    }

    /// Time derivative of the cell numbers.
    pub fn rates(&self, numbers: &[f64]) -> Rates {
        let n = self.grid.n_cells();
        let mut gain = KahanVec::zeros(n);
        let mut loss = KahanVec::zeros(n);
        let mut overflow = KahanSum::new();
        let mut dust_mass = KahanSum::new();
        let mut dust_number = KahanSum::new();
        let mut defect = KahanSum::new();

        if let Some(c) = &self.coag {
            for pair in &c.pairs {
                let r = pair.rate * numbers[pair.i as usize] * numbers[pair.j as usize];
                if r == 0.0 {
                    continue;
                }
                gain.add(pair.lo as usize, r * pair.w_lo);
                if pair.w_hi != 0.0 {
                    gain.add(pair.hi as usize, r * pair.w_hi);
                }
                defect.add(r * (pair.w_lo + pair.w_hi - 1.0));
            }
            for &(i, j, rate, s) in &c.overflow {
                overflow.add(rate * numbers[i as usize] * numbers[j as usize] * s);
            }
            for i in 0..n {
                if numbers[i] == 0.0 {
                    continue;
                }
                let row = &c.kernel[i * n..(i + 1) * n];
                let mut acc = KahanSum::new();
                for j in 0..n {
                    acc.add(row[j] * numbers[j]);
                }
                loss.add(i, numbers[i] * acc.value());
            }
        }

        if let Some(f) = &self.frag {
            for j in 0..n {
                let nj = numbers[j];
                if nj == 0.0 {
                    continue;
                }
                let row = &f.birth[row_start(j)..row_start(j + 1)];
                for (i, b) in row.iter().enumerate() {
                    gain.add(i, b * nj);
                }
                let event = f.rates[j] * nj;
                loss.add(j, event);
                dust_mass.add(event * f.dust_mass[j]);
                dust_number.add(event * f.dust_number[j]);
                defect.add(event * f.number_defect[j]);
            }
        }

        let numbers_rate = gain
            .into_values()
            .into_iter()
            .zip(loss.into_values())
            .map(|(g, l)| g - l)
            .collect();
        Rates {
            numbers: numbers_rate,
            overflow_mass: overflow.value(),
            dust_mass: dust_mass.value(),
            dust_number: dust_number.value(),
            number_defect: defect.value(),
        }
    }

    /// `dv_i/dt` for the density `d`.
    pub fn rhs(&self, d: &Density) -> Result<Density, SolverError> {
        if **d.grid() != *self.grid {
            return Err(SolverError::GridMismatch);
        }
        let rates = self.rates(&d.numbers());
        let values = rates
            .numbers
            .iter()
            .zip(self.grid.widths())
            .map(|(r, w)| r / w)
            .collect();
        Ok(Density::from_values(self.grid.clone(), values, d.t())?)
    }
}
