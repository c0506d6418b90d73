//! Sectional discretization of the coagulation-fragmentation equation and
//! its time integration.

mod evolve;
mod stepper;
mod tables;

pub use evolve::{evolve, MassBalance, OutputSchedule, RunReport, StepSummary};
pub use stepper::{step, ControllerConfig, Integrator, StepStats};
pub use tables::{AssemblyOptions, CoagulationPair, DustRule, OperatorTables, Rates, TruncationMode};

use thiserror::Error;

use crate::grid::GridError;
use crate::kernels::KernelError;
use crate::observables::ObservableError;

#[derive(Debug, Error)]
pub enum SolverError {
    #[error(transparent)]
    Kernel(#[from] KernelError),
    #[error(transparent)]
    Grid(#[from] GridError),
    #[error(transparent)]
    Observable(#[from] ObservableError),
    #[error("operator tables need {bytes} bytes, above the budget of {budget}; use a coarser grid")]
    TableBudget { bytes: u64, budget: u64 },
    #[error("density and operator tables live on different grids")]
    GridMismatch,
    #[error(
        "step size underflow at t = {t}: dt = {dt:e}; the problem is too stiff for the explicit \
         stepper, shrink the domain (x_max) or use an implicit integrator"
    )]
    Stiffness { t: f64, dt: f64 },
    #[error("{0}")]
    InvalidArgument(String),
}

#[cfg(test)]
mod tests;
