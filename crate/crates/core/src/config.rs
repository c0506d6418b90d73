//! Scenario files.
//!
//! A scenario is a single JSON document. Unknown keys are rejected, every
//! physical parameter is validated at load, and all violations are reported
//! together. Defaults are filled in on load, so serializing a loaded config
//! echoes the complete effective configuration.

use std::fs;
use std::path::{Path, PathBuf};
use std::sync::Arc;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::audit::{suggest_constants, AuditError, SamplingPlan};
use crate::grid::{project, read_density_csv, remap_numbers, Density, GridDef, GridError, GridSpec};
use crate::kernels::{
    CoagulationEnvelope, CoagulationKernel, FragmentationDef, FragmentationEnvelope, FragmentationSpec,
    HypothesisConstants, PowerLawFragmentation,
};
use crate::oracles::OracleCase;
use crate::solver::{AssemblyOptions, ControllerConfig, DustRule, OperatorTables, OutputSchedule, SolverError, TruncationMode};

#[derive(Debug, Error)]
pub enum ConfigError {
    #[error("cannot read {path}: {source}")]
    Read {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    /// Parse error with the JSON path of the offending key and the position.
    #[error("{path}: invalid configuration at `{key}` (line {line}, column {column}): {message}")]
    Parse {
        path: String,
        key: String,
        line: usize,
        column: usize,
        message: String,
    },
    #[error("invalid configuration:\n  - {}", .0.join("\n  - "))]
    Invalid(Vec<String>),
    #[error("unknown fixture `{0}`; run `coagfrag oracles` for the list")]
    UnknownFixture(String),
    #[error("initial condition: {0}")]
    Initial(#[from] GridError),
    #[error(transparent)]
    Audit(#[from] AuditError),
    #[error(transparent)]
    Solver(#[from] SolverError),
}

/// `"suggest"` or explicit constants.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum HypothesisBlock {
    Keyword(SuggestKeyword),
    Declared(HypothesisConstants),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum SuggestKeyword {
    Suggest,
}

impl Default for HypothesisBlock {
    fn default() -> Self {
        Self::Keyword(SuggestKeyword::Suggest)
    }
}

/// Initial density.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "profile", rename_all = "kebab-case", deny_unknown_fields)]
pub enum InitialCondition {
    /// `f₀(x) = amplitude · exp(−x / scale)`.
    Exponential {
        #[serde(default = "one")]
        amplitude: f64,
        #[serde(default = "one")]
        scale: f64,
    },
    /// `number` particles of size `x0`, placed in the containing cell.
    Monodisperse { x0: f64, number: f64 },
    /// Density CSV as written by `run`. Relative paths resolve against the
    /// config file's directory.
    Csv { path: PathBuf },
}

fn one() -> f64 {
    1.0
}

impl Default for InitialCondition {
    fn default() -> Self {
        Self::Exponential {
            amplitude: 1.0,
            scale: 1.0,
        }
    }
}

impl InitialCondition {
    fn violations(&self) -> Vec<String> {
        let mut out = Vec::new();
        match *self {
            Self::Exponential { amplitude, scale } => {
                if !(amplitude.is_finite() && amplitude >= 0.0) {
                    out.push(format!("initial.amplitude must be finite and >= 0 (got {amplitude})"));
                }
                if !(scale.is_finite() && scale > 0.0) {
                    out.push(format!("initial.scale must be finite and > 0 (got {scale})"));
                }
            }
            Self::Monodisperse { x0, number } => {
                if !(x0.is_finite() && x0 > 0.0) {
                    out.push(format!("initial.x0 must be finite and > 0 (got {x0})"));
                }
                if !(number.is_finite() && number >= 0.0) {
                    out.push(format!("initial.number must be finite and >= 0 (got {number})"));
                }
            }
            Self::Csv { .. } => {}
        }
        out
    }

    /// The initial density on `grid`. CSV densities must live on the same
    /// grid, or on a finer one with the same endpoints (then they are remapped).
    pub fn density(&self, grid: &Arc<GridSpec>) -> Result<Density, ConfigError> {
        match *self {
            Self::Exponential { amplitude, scale } => Ok(project(|x: f64| amplitude * (-x / scale).exp(), grid)?),
            Self::Monodisperse { x0, number } => Ok(Density::monodisperse(grid.clone(), x0, number)?),
            Self::Csv { ref path } => {
                let file = fs::File::open(path).map_err(|source| ConfigError::Read {
                    path: path.clone(),
                    source,
                })?;
                let d = read_density_csv(file)?;
                if **d.grid() == **grid {
                    return Ok(Density::from_values(grid.clone(), d.values().to_vec(), 0.0)?);
                }
                let fine = d.grid();
                if fine.x_min() == grid.x_min() && fine.x_max() == grid.x_max() && fine.n_cells() >= grid.n_cells() {
                    let values = remap_numbers(&d, grid).iter().zip(grid.widths()).map(|(n, w)| n / w).collect();
                    return Ok(Density::from_values(grid.clone(), values, 0.0)?);
                }
                Err(ConfigError::Invalid(vec![format!(
                    "initial density {} lives on a grid incompatible with the configured one",
                    path.display()
                )]))
            }
        }
    }
}

/// Time integration block.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TimeConfig {
    pub t_end: f64,
    #[serde(default)]
    pub schedule: OutputSchedule,
    #[serde(default = "ControllerConfig::default_rtol")]
    pub rtol: f64,
    #[serde(default = "ControllerConfig::default_atol")]
    pub atol: f64,
    #[serde(default = "ControllerConfig::default_safety")]
    pub safety: f64,
    #[serde(default = "ControllerConfig::default_dt_min")]
    pub dt_min: f64,
}

impl TimeConfig {
    pub fn controller(&self) -> ControllerConfig {
        ControllerConfig {
            rtol: self.rtol,
            atol: self.atol,
            safety: self.safety,
            dt_min: self.dt_min,
        }
    }
}

/// Two-solution comparison settings.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct StabilityConfig {
    #[serde(default = "stability_defaults::epsilon")]
    pub epsilon: f64,
    #[serde(default = "stability_defaults::tau_disc")]
    pub tau_disc: f64,
}

mod stability_defaults {
    pub fn epsilon() -> f64 {
        1e-3
    }
    pub fn tau_disc() -> f64 {
        0.05
    }
}

impl Default for StabilityConfig {
    fn default() -> Self {
        Self {
            epsilon: stability_defaults::epsilon(),
            tau_disc: stability_defaults::tau_disc(),
        }
    }
}

/// Complete scenario description.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ScenarioConfig {
    /// Coagulation kernel; `null` switches coagulation off.
    #[serde(default)]
    pub kernel: Option<CoagulationKernel>,
    /// Fragmentation; `null` switches fragmentation off.
    #[serde(default)]
    pub fragmentation: Option<FragmentationDef>,
    #[serde(default)]
    pub hypotheses: HypothesisBlock,
    #[serde(default)]
    pub grid: GridDef,
    #[serde(default)]
    pub initial: InitialCondition,
    pub time: TimeConfig,
    #[serde(default)]
    pub truncation: TruncationMode,
    #[serde(default)]
    pub dust: DustRule,
    /// Extra moment orders reported besides `M0, M1, M2`.
    #[serde(default)]
    pub moments: Vec<f64>,
    #[serde(default)]
    pub output: Option<PathBuf>,
    /// Seeds the random pairs of the audit's symmetry check.
    #[serde(default)]
    pub seed: u64,
    #[serde(default)]
    pub audit: SamplingPlan,
    #[serde(default)]
    pub stability: StabilityConfig,
}

impl ScenarioConfig {
    /// Every violated constraint, in document order.
    pub fn violations(&self) -> Vec<String> {
        let mut out = Vec::new();
        let mut add = |prefix: &str, items: Vec<String>| out.extend(items.into_iter().map(|v| format!("{prefix}: {v}")));
        if let Some(k) = &self.kernel {
            add("kernel", k.violations());
        }
        match &self.fragmentation {
            Some(FragmentationDef::PowerlawFrag { s0, gamma, alpha }) => {
                add("fragmentation", PowerLawFragmentation::violations(*s0, *gamma, *alpha))
            }
            Some(FragmentationDef::Custom { name }) => add(
                "fragmentation",
                vec![format!("custom fragmentation `{name}` cannot be configured from a file")],
            ),
            None => {}
        }
        if let HypothesisBlock::Declared(c) = &self.hypotheses {
            add("hypotheses", c.violations());
            if self.kernel.is_some() && c.coagulation.is_none() {
                add("hypotheses", vec!["coagulation constants (k1, mu) are missing".into()]);
            }
            if self.fragmentation.is_some() && c.fragmentation.is_none() {
                add(
                    "hypotheses",
                    vec!["fragmentation constants (m, lambda, l_gamma, nu) are missing".into()],
                );
            }
        }
        add("grid", self.grid.violations());
        add("initial", self.initial.violations());
        let t = &self.time;
        if !(t.t_end.is_finite() && t.t_end >= 0.0) {
            add("time", vec![format!("t_end must be finite and >= 0 (got {})", t.t_end)]);
        }
        add("time", t.schedule.violations(t.t_end));
        add("time", t.controller().violations());
        add(
            "moments",
            self.moments
                .iter()
                .filter(|r| !(r.is_finite() && **r >= 0.0))
                .map(|r| format!("moment order must be finite and >= 0 (got {r})"))
                .collect(),
        );
        add("audit", self.audit.violations());
        let s = &self.stability;
        if !(s.epsilon.is_finite() && s.epsilon >= 0.0 && s.epsilon < 0.5) {
            add("stability", vec![format!("epsilon must lie in [0, 0.5) (got {})", s.epsilon)]);
        }
        if !(s.tau_disc.is_finite() && s.tau_disc >= 0.0) {
            add("stability", vec![format!("tau_disc must be finite and >= 0 (got {})", s.tau_disc)]);
        }
        out
    }

    pub fn validate(&self) -> Result<(), ConfigError> {
        let v = self.violations();
        if v.is_empty() {
            Ok(())
        } else {
            Err(ConfigError::Invalid(v))
        }
    }

    /// Resolves the config into solver objects. Hypothesis constants are
    /// suggested when requested; an unsupported suggestion leaves them unset
    /// and records why.
    pub fn scenario(&self) -> Result<Scenario, ConfigError> {
        self.validate()?;
        let fragmentation = self
            .fragmentation
            .clone()
            .map(FragmentationSpec::try_from)
            .transpose()
            .map_err(|e| ConfigError::Invalid(vec![format!("fragmentation: {e}")]))?;
        let grid = Arc::new(GridSpec::try_from(self.grid)?);
        let (constants, constants_error) = match self.hypotheses {
            HypothesisBlock::Declared(c) => (Some(c), None),
            HypothesisBlock::Keyword(SuggestKeyword::Suggest) => {
                match suggest_constants(self.kernel.as_ref(), fragmentation.as_ref()) {
                    Ok(c) => (Some(c), None),
                    Err(e) => (None, Some(e.to_string())),
                }
            }
        };
        Ok(Scenario {
            kernel: self.kernel.clone(),
            fragmentation,
            constants,
            constants_error,
            grid,
            initial: self.initial.clone(),
            t_end: self.time.t_end,
            schedule: self.time.schedule.clone(),
            controller: self.time.controller(),
            assembly: AssemblyOptions {
                truncation: self.truncation,
                dust: self.dust,
                ..AssemblyOptions::default()
            },
            extra_orders: self.moments.clone(),
            seed: self.seed,
            plan: self.audit,
            stability: self.stability,
        })
    }
}

/// A validated scenario with solver objects constructed.
#[derive(Debug, Clone)]
pub struct Scenario {
    pub kernel: Option<CoagulationKernel>,
    pub fragmentation: Option<FragmentationSpec>,
    pub constants: Option<HypothesisConstants>,
    /// Why constants could not be suggested, when they could not.
    pub constants_error: Option<String>,
    pub grid: Arc<GridSpec>,
    pub initial: InitialCondition,
    pub t_end: f64,
    pub schedule: OutputSchedule,
    pub controller: ControllerConfig,
    pub assembly: AssemblyOptions,
    pub extra_orders: Vec<f64>,
    pub seed: u64,
    pub plan: SamplingPlan,
    pub stability: StabilityConfig,
}

impl Scenario {
    /// Same scenario on another grid with the same endpoints and pivot rule.
    pub fn with_cells(&self, n_cells: usize) -> Result<Scenario, ConfigError> {
        let g = &self.grid;
        let def = GridDef {
            n_cells,
            ..g.def()
        };
        let bad = def.violations();
        if !bad.is_empty() {
            return Err(ConfigError::Invalid(bad));
        }
        Ok(Scenario {
            grid: Arc::new(GridSpec::try_from(def)?),
            ..self.clone()
        })
    }

    pub fn initial_density(&self) -> Result<Density, ConfigError> {
        self.initial.density(&self.grid)
    }

    pub fn tables(&self) -> Result<OperatorTables, ConfigError> {
        Ok(OperatorTables::assemble(
            self.kernel.as_ref(),
            self.fragmentation.as_ref(),
            self.grid.clone(),
            self.assembly,
        )?)
    }
}

/// Parses a scenario from JSON text. `origin` names the source in errors.
pub fn parse_config(text: &str, origin: &str) -> Result<ScenarioConfig, ConfigError> {
    let mut de = serde_json::Deserializer::from_str(text);
    let config: ScenarioConfig = serde_path_to_error::deserialize(&mut de).map_err(|e| {
        let key = e.path().to_string();
        let inner = e.into_inner();
        ConfigError::Parse {
            path: origin.to_string(),
            key,
            line: inner.line(),
            column: inner.column(),
            message: inner.to_string(),
        }
    })?;
    config.validate()?;
    Ok(config)
}

/// Loads and validates a scenario file. A relative CSV path in the initial
/// condition is resolved against the file's directory.
pub fn load_config(path: &Path) -> Result<ScenarioConfig, ConfigError> {
    let text = fs::read_to_string(path).map_err(|source| ConfigError::Read {
        path: path.to_path_buf(),
        source,
    })?;
    let mut config = parse_config(&text, &path.display().to_string())?;
    if let InitialCondition::Csv { path: csv } = &mut config.initial {
        if csv.is_relative() {
            if let Some(dir) = path.parent() {
                *csv = dir.join(&*csv);
            }
        }
    }
    Ok(config)
}

/// Names accepted by [`fixture`].
pub const FIXTURES: [&str; 4] = ["scott-constant", "ziff-linear-binary", "powerlaw-number-growth", "gronwall-combined"];

/// Built-in scenarios: the three closed-form cases plus the combined
/// coagulation/fragmentation scenario used for the Gronwall comparison.
pub fn fixture(name: &str) -> Result<ScenarioConfig, ConfigError> {
    let time = |t_end: f64, count: usize| TimeConfig {
        t_end,
        schedule: OutputSchedule::Uniform { count },
        rtol: ControllerConfig::default_rtol(),
        atol: ControllerConfig::default_atol(),
        safety: ControllerConfig::default_safety(),
        dt_min: ControllerConfig::default_dt_min(),
    };
    let base = |case: Option<OracleCase>, t_end: f64, count: usize| ScenarioConfig {
        kernel: case.and_then(|c| c.kernel()),
        fragmentation: case.and_then(|c| c.fragmentation()).map(FragmentationDef::from),
        hypotheses: HypothesisBlock::default(),
        grid: GridDef::default(),
        initial: InitialCondition::default(),
        time: time(t_end, count),
        truncation: TruncationMode::default(),
        dust: DustRule::default(),
        moments: Vec::new(),
        output: None,
        seed: 0,
        audit: SamplingPlan::default(),
        stability: StabilityConfig::default(),
    };
    // A linear rate is not sublinear, so A4 cannot hold on the half line;
    // these constants bound S only on grids with x_max <= 1e3 (λ = 0.01).
    let linear_rate = |s0: f64, n: f64| FragmentationEnvelope {
        m: 1.1 * s0,
        lambda: 0.01,
        l_gamma: s0 * n,
        nu: 0.0,
    };
    let config = match name {
        "scott-constant" => base(Some(OracleCase::ScottConstant), 1.0, 10),
        "ziff-linear-binary" => {
            let mut c = base(Some(OracleCase::ZiffLinearBinary), 1.0, 10);
            c.hypotheses = HypothesisBlock::Declared(HypothesisConstants {
                coagulation: None,
                fragmentation: Some(linear_rate(1.0, 2.0)),
            });
            c
        }
        "powerlaw-number-growth" => {
            let mut c = base(Some(OracleCase::PowerlawNumberGrowth), 2.0, 20);
            // Resolve the three fragments per event down to 1e-9 so the
            // number lost below the grid stays negligible.
            c.grid.x_min = 1e-9;
            c.hypotheses = HypothesisBlock::Declared(HypothesisConstants {
                coagulation: None,
                fragmentation: Some(linear_rate(1.0, 1.5)),
            });
            c
        }
        "gronwall-combined" => {
            let mut c = base(None, 2.0, 20);
            c.kernel = Some(CoagulationKernel::Constant { k0: 1.0 });
            c.fragmentation = Some(FragmentationDef::PowerlawFrag {
                s0: 0.1,
                gamma: 1.0,
                alpha: 0.0,
            });
            c.grid.n_cells = 128;
            c.hypotheses = HypothesisBlock::Declared(HypothesisConstants {
                coagulation: Some(CoagulationEnvelope { k1: 1.0, mu: 0.0 }),
                fragmentation: Some(linear_rate(0.1, 2.0)),
            });
            c
        }
        other => return Err(ConfigError::UnknownFixture(other.to_string())),
    };
    config.validate()?;
    Ok(config)
}
