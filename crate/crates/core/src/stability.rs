//! Two-solution comparison.
//!
//! Evolves an initial density `f₀` and a perturbed copy `g₀` with identical
//! solver settings, measures their distance
//! `u(t) = Σ (1+p_i) |v_i^f − v_i^g| Δ_i` and checks it against the
//! contraction bound `u(0) exp(∫₀ᵗ φ ds)`, where
//! `φ = φ_f + φ_g + L_frag`, `φ_f = 2^{1+μ} k1² [M₀(f) + M_{1+μ}(f)]` and
//! `L_frag = m N`.
//!
//! Also measures the distance between solutions on successively refined grids.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::config::{ConfigError, Scenario};
use crate::grid::{remap_numbers, Density, GridError};
use crate::observables::{moment, ObservableError};
use crate::solver::{evolve, RunReport, SolverError};
use crate::summation::KahanSum;

#[derive(Debug, Error)]
pub enum StabilityError {
    #[error("{0}")]
    MissingConstants(String),
    #[error("densities live on different grids")]
    GridMismatch,
    #[error("{0}")]
    InvalidArgument(String),
    #[error(transparent)]
    Config(#[from] ConfigError),
    #[error(transparent)]
    Solver(#[from] SolverError),
    #[error(transparent)]
    Grid(#[from] GridError),
    #[error(transparent)]
    Observable(#[from] ObservableError),
}

/// Weighted distance `Σ (1+p_i) |v_i^f − v_i^g| Δ_i`.
pub fn distance(f: &Density, g: &Density) -> Result<f64, StabilityError> {
    if !f.same_grid(g) {
        return Err(StabilityError::GridMismatch);
    }
    let grid = f.grid();
    let mut s = KahanSum::new();
    for i in 0..grid.n_cells() {
        s.add((1.0 + grid.pivots()[i]) * (f.values()[i] - g.values()[i]).abs() * grid.widths()[i]);
    }
    Ok(s.value())
}

/// `g₀ = f₀ (1 + ε (sin(ln p) − c))` with `c` chosen so that `M₁(g₀) = M₁(f₀)`.
/// With `ε = 0` the copy is bit-identical.
pub fn perturb(f: &Density, epsilon: f64) -> Result<Density, StabilityError> {
    if !(epsilon.is_finite() && epsilon >= 0.0) {
        return Err(StabilityError::InvalidArgument(format!("epsilon must be finite and >= 0 (got {epsilon})")));
    }
    let grid = f.grid();
    let (mut num, mut den) = (KahanSum::new(), KahanSum::new());
    for i in 0..grid.n_cells() {
        let m = grid.pivots()[i] * f.values()[i] * grid.widths()[i];
        num.add(m * grid.pivots()[i].ln().sin());
        den.add(m);
    }
    let c = if den.value() > 0.0 { num.value() / den.value() } else { 0.0 };
    if epsilon * (1.0 + c.abs()) >= 1.0 {
        return Err(StabilityError::InvalidArgument(format!(
            "epsilon = {epsilon} is too large: the perturbed density would turn negative"
        )));
    }
    let values = f
        .values()
        .iter()
        .zip(grid.pivots())
        .map(|(v, p)| v * (1.0 + epsilon * (p.ln().sin() - c)))
        .collect();
    Ok(Density::from_values(grid.clone(), values, f.t())?)
}

/// One sample of a [`GronwallTrace`].
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GronwallSample {
    pub t: f64,
    pub u: f64,
    pub phi: f64,
    pub integral_phi: f64,
    pub bound: f64,
    /// `bound (1 + τ_disc) − u`; negative means violated.
    pub margin: f64,
}

impl GronwallSample {
    pub fn holds(&self) -> bool {
        self.margin >= 0.0
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GronwallTrace {
    pub epsilon: f64,
    pub tau_disc: f64,
    pub k1: f64,
    pub mu: f64,
    pub l_frag: f64,
    pub samples: Vec<GronwallSample>,
}

impl GronwallTrace {
    pub fn holds(&self) -> bool {
        self.samples.iter().all(GronwallSample::holds)
    }

    pub fn violations(&self) -> usize {
        self.samples.iter().filter(|s| !s.holds()).count()
    }
}

/// Coefficients entering `φ`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GronwallConstants {
    pub k1: f64,
    pub mu: f64,
    /// `m N`; zero without fragmentation.
    pub l_frag: f64,
}

impl GronwallConstants {
    /// Constants from the scenario's declared or suggested hypothesis block.
    pub fn from_scenario(s: &Scenario) -> Result<Self, StabilityError> {
        let missing = |what: &str| {
            StabilityError::MissingConstants(format!(
                "no {what} constants available{}; declare them in the `hypotheses` block \
                 (run `coagfrag check-hypotheses` to audit them)",
                s.constants_error.as_ref().map(|e| format!(" ({e})")).unwrap_or_default()
            ))
        };
        let c = s.constants.ok_or_else(|| missing("hypothesis"))?;
        let (k1, mu) = match (&s.kernel, c.coagulation) {
            (None, _) => (0.0, 0.0),
            (Some(_), Some(env)) => (env.k1, env.mu),
            (Some(_), None) => return Err(missing("coagulation")),
        };
        let l_frag = match (&s.fragmentation, c.fragmentation) {
            (None, _) => 0.0,
            (Some(f), Some(env)) => {
                let n = f.fragment_count();
                if !n.is_finite() {
                    return Err(StabilityError::InvalidArgument("fragment count N is not finite".into()));
                }
                env.m * n
            }
            (Some(_), None) => return Err(missing("fragmentation")),
        };
        Ok(Self { k1, mu, l_frag })
    }

    /// `2^{1+μ} k1² [M₀ + M_{1+μ}]` of one density.
    pub fn phi_single(&self, d: &Density) -> f64 {
        if self.k1 == 0.0 {
            return 0.0;
        }
        2f64.powf(1.0 + self.mu) * self.k1 * self.k1 * (moment(d, 0.0) + moment(d, 1.0 + self.mu))
    }

    pub fn phi(&self, f: &Density, g: &Density) -> f64 {
        self.phi_single(f) + self.phi_single(g) + self.l_frag
    }
}

/// Assembles the trace from two runs sampled at the same times.
pub fn gronwall_trace(
    f: &RunReport,
    g: &RunReport,
    constants: GronwallConstants,
    epsilon: f64,
    tau_disc: f64,
) -> Result<GronwallTrace, StabilityError> {
    if f.snapshots.len() != g.snapshots.len() {
        return Err(StabilityError::InvalidArgument("runs have different snapshot schedules".into()));
    }
    let mut samples: Vec<GronwallSample> = Vec::with_capacity(f.snapshots.len());
    let mut u0 = 0.0;
    for (a, b) in f.snapshots.iter().zip(&g.snapshots) {
        let u = distance(a, b)?;
        let phi = constants.phi(a, b);
        let integral_phi = match samples.last() {
            None => {
                u0 = u;
                0.0
            }
            Some(prev) => prev.integral_phi + 0.5 * (a.t() - prev.t) * (phi + prev.phi),
        };
        let bound = u0 * integral_phi.exp();
        samples.push(GronwallSample {
            t: a.t(),
            u,
            phi,
            integral_phi,
            bound,
            margin: bound * (1.0 + tau_disc) - u,
        });
    }
    Ok(GronwallTrace {
        epsilon,
        tau_disc,
        k1: constants.k1,
        mu: constants.mu,
        l_frag: constants.l_frag,
        samples,
    })
}

/// Evolves the scenario's initial density and an `ε`-perturbed copy and
/// checks the contraction bound at every snapshot.
pub fn gronwall_run(scenario: &Scenario, epsilon: f64, tau_disc: f64) -> Result<GronwallTrace, StabilityError> {
    if !(tau_disc.is_finite() && tau_disc >= 0.0) {
        return Err(StabilityError::InvalidArgument(format!("tau_disc must be >= 0 (got {tau_disc})")));
    }
    let constants = GronwallConstants::from_scenario(scenario)?;
    let tables = scenario.tables()?;
    let f0 = scenario.initial_density()?;
    let g0 = perturb(&f0, epsilon)?;
    let run = |d: &Density| {
        evolve(
            &tables,
            d,
            scenario.t_end,
            &scenario.schedule,
            scenario.controller,
            &[1.0 + constants.mu],
        )
    };
    let f = run(&f0)?;
    let g = run(&g0)?;
    gronwall_trace(&f, &g, constants, epsilon, tau_disc)
}

/// Distance between two successive refinement levels.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LevelDistance {
    pub coarse: usize,
    pub fine: usize,
    pub distance: f64,
    /// `ln(d_k / d_{k+1}) / ln(n_{k+1} / n_k)`, from the next pair on.
    pub order: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RefinementReport {
    pub t_end: f64,
    pub levels: Vec<usize>,
    pub pairs: Vec<LevelDistance>,
    /// Distances strictly decrease from pair to pair.
    pub decreasing: bool,
    pub min_order: Option<f64>,
}

/// `Σ_i |N_i^coarse − (remapped N^fine)_i|`, the L¹ distance of the
/// densities measured on the coarse cells.
pub fn level_distance(coarse: &Density, fine: &Density) -> Result<f64, StabilityError> {
    let (gc, gf) = (coarse.grid(), fine.grid());
    if gc.x_min() != gf.x_min() || gc.x_max() != gf.x_max() || gf.n_cells() < gc.n_cells() {
        return Err(StabilityError::GridMismatch);
    }
    let remapped = remap_numbers(fine, gc);
    let mut s = KahanSum::new();
    for (n, r) in coarse.numbers().iter().zip(&remapped) {
        s.add((n - r).abs());
    }
    Ok(s.value())
}

/// Solves the scenario on each grid of `levels` (non-decreasing cell counts)
/// and compares successive final densities.
pub fn refinement_consistency(scenario: &Scenario, levels: &[usize]) -> Result<RefinementReport, StabilityError> {
    if levels.len() < 3 {
        return Err(StabilityError::InvalidArgument(format!(
            "refinement needs at least 3 levels (got {})",
            levels.len()
        )));
    }
    if levels.windows(2).any(|w| w[1] < w[0]) {
        return Err(StabilityError::InvalidArgument("levels must be non-decreasing".into()));
    }
    let mut finals = Vec::with_capacity(levels.len());
    for &n in levels {
        let s = scenario.with_cells(n)?;
        let tables = s.tables()?;
        let d0 = s.initial_density()?;
        let schedule = crate::solver::OutputSchedule::Uniform { count: 1 };
        let report = evolve(&tables, &d0, s.t_end, &schedule, s.controller, &[])?;
        finals.push(report.final_density().clone());
    }
    let mut pairs: Vec<LevelDistance> = Vec::with_capacity(levels.len() - 1);
    for k in 0..levels.len() - 1 {
        let distance = level_distance(&finals[k], &finals[k + 1])?;
        let order = match pairs.last() {
            Some(prev) if prev.distance > 0.0 && distance > 0.0 && levels[k] > levels[k - 1] => {
                Some((prev.distance / distance).ln() / (levels[k] as f64 / levels[k - 1] as f64).ln())
            }
            _ => None,
        };
        pairs.push(LevelDistance {
            coarse: levels[k],
            fine: levels[k + 1],
            distance,
            order,
        });
    }
    let decreasing = pairs.windows(2).all(|w| w[1].distance < w[0].distance);
    let min_order = pairs.iter().filter_map(|p| p.order).reduce(f64::min);
    Ok(RefinementReport {
        t_end: scenario.t_end,
        levels: levels.to_vec(),
        pairs,
        decreasing,
        min_order,
    })
}
