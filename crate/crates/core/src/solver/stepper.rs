//! Embedded Runge-Kutta 3(2) (Bogacki-Shampine) integration of the cell
//! numbers, with error control in the weighted norm and a positivity guard
//! on the step size.

use serde::{Deserialize, Serialize};

use super::tables::OperatorTables;
use super::SolverError;
use crate::grid::Density;

/// Step-size controller settings.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ControllerConfig {
    #[serde(default = "defaults::rtol")]
    pub rtol: f64,
    #[serde(default = "defaults::atol")]
    pub atol: f64,
    /// `dt ≤ safety / ρ_max`, `ρ_max` the largest per-unit loss rate.
    #[serde(default = "defaults::safety")]
    pub safety: f64,
    /// Steps below this size abort the run.
    #[serde(default = "defaults::dt_min")]
    pub dt_min: f64,
}

mod defaults {
    pub fn rtol() -> f64 {
        1e-6
    }
    pub fn atol() -> f64 {
        1e-12
    }
    pub fn safety() -> f64 {
        0.9
    }
    pub fn dt_min() -> f64 {
        1e-12
    }
}

impl Default for ControllerConfig {
    fn default() -> Self {
        Self {
            rtol: defaults::rtol(),
            atol: defaults::atol(),
            safety: defaults::safety(),
            dt_min: defaults::dt_min(),
        }
    }
}

impl ControllerConfig {
    pub fn default_rtol() -> f64 {
        defaults::rtol()
    }
    pub fn default_atol() -> f64 {
        defaults::atol()
    }
    pub fn default_safety() -> f64 {
        defaults::safety()
    }
    pub fn default_dt_min() -> f64 {
        defaults::dt_min()
    }

    pub fn violations(&self) -> Vec<String> {
        let mut out = Vec::new();
        if !(self.rtol.is_finite() && self.rtol > 0.0) {
            out.push(format!("rtol must be > 0 (got {})", self.rtol));
        }
        if !(self.atol.is_finite() && self.atol > 0.0) {
            out.push(format!("atol must be > 0 (got {})", self.atol));
        }
        if !(self.safety > 0.0 && self.safety <= 1.0) {
            out.push(format!("safety must lie in (0, 1] (got {})", self.safety));
        }
        if !(self.dt_min.is_finite() && self.dt_min > 0.0) {
            out.push(format!("dt_min must be > 0 (got {})", self.dt_min));
        }
        out
    }
}

/// Diagnostics of one accepted step.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct StepStats {
    /// Time at the end of the step.
    pub t: f64,
    pub dt: f64,
    /// Local error estimate in the weighted norm.
    pub error_estimate: f64,
    /// Mass that left through `x_max` during the step.
    pub overflow_flux: f64,
    /// Mass of fragments that fell below `x_min` during the step.
    pub dust_flux: f64,
    /// Change of particle number caused by pivot assignment, relative to
    /// exact number bookkeeping.
    pub number_defect: f64,
    /// Cells left slightly negative (within the tolerated undershoot). They
    /// are reported, not clipped.
    pub positivity_clips: usize,
    /// Attempts rejected before this step was accepted.
    pub rejected: usize,
}

pub(crate) const ACCUMULATORS: usize = 4;
const OVERFLOW: usize = 0;
const DUST_MASS: usize = 1;
const DUST_NUMBER: usize = 2;
const DEFECT: usize = 3;

/// Time integrator over a fixed set of operator tables.
///
/// The state holds the cell numbers followed by cumulative overflow mass,
/// dust mass, dust number and number defect, so the bookkeeping fluxes are
/// integrated by the same Runge-Kutta combination as the numbers.
pub struct Integrator<'a> {
    tables: &'a OperatorTables,
    config: ControllerConfig,
    t: f64,
    state: Vec<f64>,
    derivative: Option<Vec<f64>>,
    dt_next: f64,
}

impl<'a> Integrator<'a> {
    pub fn new(tables: &'a OperatorTables, d: &Density, config: ControllerConfig, dt_initial: f64) -> Result<Self, SolverError> {
        if **d.grid() != **tables.grid() {
            return Err(SolverError::GridMismatch);
        }
        let mut state = d.numbers();
        state.extend([0.0; ACCUMULATORS]);
        Ok(Self {
            tables,
            config,
            t: d.t(),
            state,
            derivative: None,
            dt_next: dt_initial,
        })
    }

    pub fn t(&self) -> f64 {
        self.t
    }

    fn n(&self) -> usize {
        self.tables.grid().n_cells()
    }

    pub fn numbers(&self) -> &[f64] {
        &self.state[..self.n()]
    }

    pub fn overflow_cum(&self) -> f64 {
        self.state[self.n() + OVERFLOW]
    }
    pub fn dust_cum(&self) -> f64 {
        self.state[self.n() + DUST_MASS]
    }
    pub fn dust_number_cum(&self) -> f64 {
        self.state[self.n() + DUST_NUMBER]
    }
    pub fn number_defect_cum(&self) -> f64 {
        self.state[self.n() + DEFECT]
    }

    pub fn density(&self) -> Density {
        let values = self
            .numbers()
            .iter()
            .zip(self.tables.grid().widths())
            .map(|(n, w)| n / w)
            .collect();
        Density::from_values(self.tables.grid().clone(), values, self.t).expect("state length matches grid")
    }

    fn derivative_of(&self, state: &[f64]) -> Vec<f64> {
        let n = self.n();
        let r = self.tables.rates(&state[..n]);
        let mut out = r.numbers;
        out.extend([r.overflow_mass, r.dust_mass, r.dust_number, r.number_defect]);
        out
    }

    fn weighted(&self, v: &[f64]) -> f64 {
        self.tables
            .grid()
            .pivots()
            .iter()
            .zip(v)
            .map(|(p, x)| (1.0 + p) * x.abs())
            .sum()
    }

    /// Takes one accepted step of size at most `dt_target`.
    pub fn step(&mut self, dt_target: f64) -> Result<StepStats, SolverError> {
        if !(dt_target > 0.0) {
            return Err(SolverError::InvalidArgument(format!("dt_target must be > 0 (got {dt_target})")));
        }
        let n = self.n();
        let cfg = self.config;
        let k1 = match self.derivative.take() {
            Some(k) => k,
            None => self.derivative_of(&self.state),
        };
        let rho = self.tables.max_loss_rate(&self.state[..n]);
        let guard = if rho > 0.0 { cfg.safety / rho } else { f64::INFINITY };
        let norm_y = self.weighted(&self.state[..n]);
        let tol = cfg.atol + cfg.rtol * norm_y;
        let mut rejected = 0;
        let mut dt = self.dt_next.min(guard);
        loop {
            let limited = dt_target < dt;
            if limited {
                dt = dt_target;
            }
            if dt < cfg.dt_min {
                return Err(SolverError::Stiffness { t: self.t, dt });
            }
            let y = &self.state;
            let stage = |k: &[f64], c: f64| -> Vec<f64> { y.iter().zip(k).map(|(a, b)| a + c * b).collect() };
            let k2 = self.derivative_of(&stage(&k1, 0.5 * dt));
            let k3 = self.derivative_of(&stage(&k2, 0.75 * dt));
            let y3: Vec<f64> = (0..y.len())
                .map(|i| y[i] + dt * (2.0 / 9.0 * k1[i] + 1.0 / 3.0 * k2[i] + 4.0 / 9.0 * k3[i]))
                .collect();
            let k4 = self.derivative_of(&y3);
            let err_vec: Vec<f64> = (0..n)
                .map(|i| dt * (-5.0 / 72.0 * k1[i] + 1.0 / 12.0 * k2[i] + 1.0 / 9.0 * k3[i] - 1.0 / 8.0 * k4[i]))
                .collect();
            let err = self.weighted(&err_vec);
            let numbers = &y3[..n];
            let max_n = numbers.iter().cloned().fold(0.0, f64::max);
            let negative = numbers.iter().any(|&x| x < -1e-12 * max_n);
            let factor = if err == 0.0 {
                5.0
            } else {
                (0.9 * (tol / err).cbrt()).clamp(0.2, 5.0)
            };
            if err.is_finite() && err <= tol && !negative {
                let prev = &self.state[n..];
                let stats = StepStats {
                    t: self.t + dt,
                    dt,
                    error_estimate: err,
                    overflow_flux: y3[n + OVERFLOW] - prev[OVERFLOW],
                    dust_flux: y3[n + DUST_MASS] - prev[DUST_MASS],
                    number_defect: y3[n + DEFECT] - prev[DEFECT],
                    positivity_clips: numbers.iter().filter(|&&x| x < 0.0).count(),
                    rejected,
                };
                self.t += dt;
                self.state = y3;
                self.derivative = Some(k4);
                let proposal = dt * factor;
                self.dt_next = if limited { proposal.max(self.dt_next) } else { proposal };
                return Ok(stats);
            }
            rejected += 1;
            dt *= if negative || !err.is_finite() { 0.5 } else { factor.min(0.9) };
            self.dt_next = dt;
        }
    }

    /// Steps until exactly `t_target`, returning the stats of every step.
    pub fn advance_to(&mut self, t_target: f64) -> Result<Vec<StepStats>, SolverError> {
        let mut log = Vec::new();
        while self.t < t_target {
            let remaining = t_target - self.t;
            let mut stats = self.step(remaining)?;
            if stats.dt == remaining {
                self.t = t_target;
                stats.t = t_target;
            }
            log.push(stats);
        }
        Ok(log)
    }
}

/// Advances `d` by one accepted step of size at most `dt_target`.
pub fn step(
    tables: &OperatorTables,
    d: &Density,
    dt_target: f64,
    config: ControllerConfig,
) -> Result<(Density, StepStats), SolverError> {
    let mut integrator = Integrator::new(tables, d, config, dt_target)?;
    let stats = integrator.step(dt_target)?;
    Ok((integrator.density(), stats))
}
