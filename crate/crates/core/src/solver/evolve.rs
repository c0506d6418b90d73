//! Time evolution with scheduled snapshots and mass-balance bookkeeping.

use serde::{Deserialize, Serialize};

use super::stepper::{ControllerConfig, Integrator, StepStats};
use super::tables::OperatorTables;
use super::SolverError;
use crate::grid::{weighted_norm, Density};
use crate::observables::{moment, MomentSeries};

/// When snapshots are taken, besides the initial state.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case", deny_unknown_fields)]
pub enum OutputSchedule {
    /// `count` equally spaced times ending at `t_end`.
    Uniform { count: usize },
    /// Explicit times in `(0, t_end]`; `t_end` is always added.
    Times { times: Vec<f64> },
}

impl Default for OutputSchedule {
    fn default() -> Self {
        Self::Uniform { count: 10 }
    }
}

impl OutputSchedule {
    pub fn violations(&self, t_end: f64) -> Vec<String> {
        match self {
            Self::Uniform { count } if *count == 0 => vec!["snapshot count must be >= 1".into()],
            Self::Times { times } => times
                .iter()
                .filter(|&&t| !(t > 0.0 && t <= t_end))
                .map(|t| format!("snapshot time {t} is outside (0, t_end={t_end}]"))
                .collect(),
            _ => Vec::new(),
        }
    }

    /// Snapshot times after `t = 0`, increasing, ending at `t_end`.
    pub fn resolve(&self, t_end: f64) -> Vec<f64> {
        if t_end <= 0.0 {
            return Vec::new();
        }
        let mut times: Vec<f64> = match self {
            Self::Uniform { count } => {
                let count = (*count).max(1);
                (1..=count)
                    .map(|k| if k == count { t_end } else { t_end * k as f64 / count as f64 })
                    .collect()
            }
            Self::Times { times } => times.iter().cloned().filter(|&t| t > 0.0 && t <= t_end).collect(),
        };
        times.sort_by(|a, b| a.partial_cmp(b).unwrap());
        times.dedup();
        if times.last() != Some(&t_end) {
            times.push(t_end);
        }
        times
    }
}

/// `M1(t) + overflow + dust = M1(0)` checked at each snapshot.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MassBalance {
    pub m1_initial: f64,
    pub m1_final: f64,
    pub overflow_cum: f64,
    pub dust_cum: f64,
    pub dust_number_cum: f64,
    pub number_defect_cum: f64,
    /// Relative residual `|M1 + overflow + dust − M1(0)| / M1(0)` per snapshot.
    pub residuals: Vec<f64>,
    pub max_residual: f64,
}

/// Aggregated step statistics.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StepSummary {
    pub accepted: usize,
    pub rejected: usize,
    pub dt_min: f64,
    pub dt_max: f64,
    pub max_error_estimate: f64,
    pub positivity_clips: usize,
}

impl StepSummary {
    fn from_log(log: &[StepStats]) -> Self {
        let mut s = Self {
            accepted: log.len(),
            rejected: 0,
            dt_min: if log.is_empty() { 0.0 } else { f64::INFINITY },
            dt_max: 0.0,
            max_error_estimate: 0.0,
            positivity_clips: 0,
        };
        for st in log {
            s.rejected += st.rejected;
            s.dt_min = s.dt_min.min(st.dt);
            s.dt_max = s.dt_max.max(st.dt);
            s.max_error_estimate = s.max_error_estimate.max(st.error_estimate);
            s.positivity_clips += st.positivity_clips;
        }
        s
    }
}

/// Output of [`evolve`].
#[derive(Debug, Clone, PartialEq)]
pub struct RunReport {
    pub snapshots: Vec<Density>,
    pub moments: MomentSeries,
    pub xnorm: Vec<f64>,
    pub overflow_cum: Vec<f64>,
    pub dust_cum: Vec<f64>,
    pub mass_balance: MassBalance,
    pub steps: StepSummary,
    pub step_log: Vec<StepStats>,
}

impl RunReport {
    pub fn final_density(&self) -> &Density {
        self.snapshots.last().expect("report always holds the initial snapshot")
    }

    pub fn times(&self) -> &[f64] {
        self.moments.times()
    }
}

/// Evolves `d0` to `t_end`, sampling snapshots and moments on `schedule`.
/// `extra_orders` adds moment orders beyond `M0, M1, M2`.
pub fn evolve(
    tables: &OperatorTables,
    d0: &Density,
    t_end: f64,
    schedule: &OutputSchedule,
    config: ControllerConfig,
    extra_orders: &[f64],
) -> Result<RunReport, SolverError> {
    if !(t_end >= 0.0 && t_end.is_finite()) {
        return Err(SolverError::InvalidArgument(format!("t_end must be finite and >= 0 (got {t_end})")));
    }
    let d0 = d0.clone().with_time(0.0);
    let times = schedule.resolve(t_end);
    let first_dt = times.first().map_or(1.0, |t| t * 0.01);
    let mut integrator = Integrator::new(tables, &d0, config, first_dt)?;

    let mut moments = MomentSeries::new(extra_orders)?;
    moments.push(&d0)?;
    let m1_initial = moment(&d0, 1.0);
    let mut report = RunReport {
        xnorm: vec![weighted_norm(&d0)],
        overflow_cum: vec![0.0],
        dust_cum: vec![0.0],
        snapshots: vec![d0],
        moments,
        mass_balance: MassBalance {
            m1_initial,
            m1_final: m1_initial,
            overflow_cum: 0.0,
            dust_cum: 0.0,
            dust_number_cum: 0.0,
            number_defect_cum: 0.0,
            residuals: vec![0.0],
            max_residual: 0.0,
        },
        steps: StepSummary::from_log(&[]),
        step_log: Vec::new(),
    };

    for &t in &times {
        let log = integrator.advance_to(t)?;
        report.step_log.extend(log);
        let d = integrator.density();
        d.check()?;
        let m1 = moment(&d, 1.0);
        let overflow = integrator.overflow_cum();
        let dust = integrator.dust_cum();
        let residual = if m1_initial > 0.0 {
            (m1 + overflow + dust - m1_initial).abs() / m1_initial
        } else {
            (m1 + overflow + dust).abs()
        };
        report.moments.push(&d)?;
        report.xnorm.push(weighted_norm(&d));
        report.overflow_cum.push(overflow);
        report.dust_cum.push(dust);
        let mb = &mut report.mass_balance;
        mb.residuals.push(residual);
        mb.max_residual = mb.max_residual.max(residual);
        mb.m1_final = m1;
        mb.overflow_cum = overflow;
        mb.dust_cum = dust;
        mb.dust_number_cum = integrator.dust_number_cum();
        mb.number_defect_cum = integrator.number_defect_cum();
        report.snapshots.push(d);
    }
    report.steps = StepSummary::from_log(&report.step_log);
    Ok(report)
}
