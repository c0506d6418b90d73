use thiserror::Error;

use crate::audit::AuditError;
use crate::config::ConfigError;
use crate::grid::GridError;
use crate::kernels::KernelError;
use crate::observables::ObservableError;
use crate::solver::SolverError;
use crate::stability::StabilityError;

/// Any failure the library can report.
#[derive(Debug, Error)]
pub enum Error {
    #[error(transparent)]
    Kernel(#[from] KernelError),
    #[error(transparent)]
    Grid(#[from] GridError),
    #[error(transparent)]
    Solver(#[from] SolverError),
    #[error(transparent)]
    Observable(#[from] ObservableError),
    #[error(transparent)]
    Audit(#[from] AuditError),
    #[error(transparent)]
    Stability(#[from] StabilityError),
    #[error(transparent)]
    Config(#[from] ConfigError),
    #[error("hypothesis audit failed: {0}")]
    HypothesesFailed(String),
    #[error("{context}: {source}")]
    Io {
        context: String,
        #[source]
        source: std::io::Error,
    },
}

impl Error {
    pub fn io(context: impl Into<String>, source: std::io::Error) -> Self {
        Self::Io {
            context: context.into(),
            source,
        }
    }

    /// Process exit status: 1 configuration, 2 solver, 3 failed hypotheses,
    /// 4 I/O.
    pub fn exit_code(&self) -> i32 {
        match self {
            Self::Io { .. } => 4,
            Self::HypothesesFailed(_) => 3,
            Self::Config(ConfigError::Read { .. }) => 4,
            Self::Config(ConfigError::Solver(_)) => 2,
            Self::Config(_) | Self::Kernel(_) | Self::Audit(_) => 1,
            Self::Stability(StabilityError::Config(ConfigError::Read { .. })) => 4,
            Self::Stability(StabilityError::Config(ConfigError::Solver(_))) => 2,
            Self::Stability(StabilityError::Config(_) | StabilityError::MissingConstants(_)) => 1,
            Self::Stability(_) | Self::Solver(_) | Self::Grid(_) | Self::Observable(_) => 2,
        }
    }
}

pub type Result<T, E = Error> = std::result::Result<T, E>;
