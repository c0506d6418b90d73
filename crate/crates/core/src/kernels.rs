//! Coagulation kernels, fragmentation rates and breakage functions.
//!
//! Presets are addressable by name (`"constant"`, `"shear"`,
//! `"smoluchowski-modified"`, `"sum-power"`, `"product-power"`,
//! `"custom-table"` for coagulation, `"powerlaw-frag"` for fragmentation).
//! All objects are immutable after construction; evaluation is pure.
//!
//! Sizes are volumes in dimensionless model units. The breakage function is
//! written `b(y, x)`: density of fragments of size `x` produced by the breakup
//! of a parent of size `y`, zero for `x ≥ y`.

use std::fmt;
use std::sync::Arc;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::quadrature::tanh_sinh;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum KernelError {
    #[error("invalid kernel configuration: {0}")]
    Config(String),
    #[error("{what} requires {constraint}, got {value}")]
    Domain {
        what: &'static str,
        constraint: &'static str,
        value: f64,
    },
    #[error("kernel evaluation is not finite at (x, y) = ({x:e}, {y:e})")]
    NonFinite { x: f64, y: f64 },
    #[error("breakage interval [{a:e}, {b:e}] is not contained in [0, {y:e}]")]
    Interval { y: f64, a: f64, b: f64 },
    #[error("{0}")]
    Unsupported(String),
}

type KResult<T> = std::result::Result<T, KernelError>;

fn require_positive_size(what: &'static str, v: f64) -> KResult<()> {
    if v > 0.0 && v.is_finite() {
        Ok(())
    } else {
        Err(KernelError::Domain {
            what,
            constraint: "a finite size > 0",
            value: v,
        })
    }
}

// ---------------------------------------------------------------------------
// Coagulation
// ---------------------------------------------------------------------------

/// Coagulation kernel `K(x, y)`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "family", rename_all = "kebab-case", deny_unknown_fields)]
pub enum CoagulationKernel {
    /// `K = k0`.
    Constant { k0: f64 },
    /// Shear flow with non-linear velocity profile, `K = k0 (x^{1/3} + y^{1/3})^{7/3}`.
    Shear { k0: f64 },
    /// `K = k0 (x^{1/3} + y^{1/3})² / (x^{1/3} y^{1/3} + c)`.
    #[serde(rename = "smoluchowski-modified")]
    ModifiedSmoluchowski { k0: f64, c: f64 },
    /// `K = k0 (x^{μ1} y^{μ2} + x^{μ2} y^{μ1})`.
    SumPower { k0: f64, mu1: f64, mu2: f64 },
    /// `K = k0 (x y)^{(μ1+μ2)/2}`, the symmetrised product `√(x^{μ1}y^{μ2} · x^{μ2}y^{μ1})`.
    ProductPower { k0: f64, mu1: f64, mu2: f64 },
    /// Tabulated kernel, bilinear in `(ln x, ln y)`.
    CustomTable(TableKernel),
}

impl CoagulationKernel {
    /// Preset name as used in configuration files.
    pub fn name(&self) -> &'static str {
        match self {
            Self::Constant { .. } => "constant",
            Self::Shear { .. } => "shear",
            Self::ModifiedSmoluchowski { .. } => "smoluchowski-modified",
            Self::SumPower { .. } => "sum-power",
            Self::ProductPower { .. } => "product-power",
            Self::CustomTable(_) => "custom-table",
        }
    }

    /// Every violated parameter constraint, empty if the kernel is valid.
    pub fn violations(&self) -> Vec<String> {
        let mut out = Vec::new();
        let mut prefactor = |k0: f64| {
            if !(k0.is_finite() && k0 >= 0.0) {
                out.push(format!("k0 must be finite and >= 0 (got {k0})"));
            }
        };
        match *self {
            Self::Constant { k0 } | Self::Shear { k0 } => prefactor(k0),
            Self::ModifiedSmoluchowski { k0, c } => {
                prefactor(k0);
                if !(c.is_finite() && c > 0.0) {
                    out.push(format!("c must be finite and > 0 (got {c})"));
                }
            }
            Self::SumPower { k0, mu1, mu2 } | Self::ProductPower { k0, mu1, mu2 } => {
                prefactor(k0);
                for (name, mu) in [("mu1", mu1), ("mu2", mu2)] {
                    if !(mu.is_finite() && mu >= 0.0) {
                        out.push(format!("{name} must be finite and >= 0 (got {mu})"));
                    }
                }
            }
            Self::CustomTable(_) => {}
        }
        out
    }

    pub fn validate(&self) -> KResult<()> {
        let v = self.violations();
        if v.is_empty() {
            Ok(())
        } else {
            Err(KernelError::Config(v.join("; ")))
        }
    }

    /// Unchecked evaluation for sizes already known to be positive.
    ///
    /// Arguments are put in ascending order first so the result is exactly
    /// symmetric.
    #[inline]
    pub fn value(&self, x: f64, y: f64) -> f64 {
        let (x, y) = if x <= y { (x, y) } else { (y, x) };
        match *self {
            Self::Constant { k0 } => k0,
            Self::Shear { k0 } => k0 * (x.cbrt() + y.cbrt()).powf(7.0 / 3.0),
            Self::ModifiedSmoluchowski { k0, c } => {
                let (a, b) = (x.cbrt(), y.cbrt());
                k0 * (a + b) * (a + b) / (a * b + c)
            }
            Self::SumPower { k0, mu1, mu2 } => {
                k0 * (x.powf(mu1) * y.powf(mu2) + x.powf(mu2) * y.powf(mu1))
            }
            Self::ProductPower { k0, mu1, mu2 } => k0 * (x * y).powf(0.5 * (mu1 + mu2)),
            Self::CustomTable(ref t) => t.value(x, y),
        }
    }

    /// `K(x, y)` with domain and finiteness checks.
    pub fn eval(&self, x: f64, y: f64) -> KResult<f64> {
        require_positive_size("K(x, y) argument x", x)?;
        require_positive_size("K(x, y) argument y", y)?;
        let v = self.value(x, y);
        if v.is_finite() && v >= 0.0 {
            Ok(v)
        } else {
            Err(KernelError::NonFinite { x, y })
        }
    }
}

/// Serialized form of [`TableKernel`]: node sizes and a full square matrix.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TableKernelDef {
    pub sizes: Vec<f64>,
    pub values: Vec<Vec<f64>>,
}

/// Symmetric tabulated kernel on a log-spaced (or arbitrary increasing) size
/// axis. Storage is the packed upper triangle; queries outside the node range
/// clamp to the boundary.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "TableKernelDef", into = "TableKernelDef")]
pub struct TableKernel {
    sizes: Vec<f64>,
    log_sizes: Vec<f64>,
    packed: Vec<f64>,
}

impl TableKernel {
    pub fn new(sizes: Vec<f64>, values: Vec<Vec<f64>>) -> KResult<Self> {
        let n = sizes.len();
        if n < 2 {
            return Err(KernelError::Config("custom-table needs at least 2 sizes".into()));
        }
        if sizes.iter().any(|s| !(s.is_finite() && *s > 0.0)) {
            return Err(KernelError::Config("custom-table sizes must be finite and > 0".into()));
        }
        if sizes.windows(2).any(|w| w[1] <= w[0]) {
            return Err(KernelError::Config(
                "custom-table sizes must be strictly increasing".into(),
            ));
        }
        if values.len() != n || values.iter().any(|row| row.len() != n) {
            return Err(KernelError::Config(format!(
                "custom-table values must be a {n}x{n} matrix"
            )));
        }
        let mut packed = Vec::with_capacity(n * (n + 1) / 2);
        for i in 0..n {
            for j in i..n {
                let (a, b) = (values[i][j], values[j][i]);
                if !(a.is_finite() && a >= 0.0) {
                    return Err(KernelError::Config(format!(
                        "custom-table value [{i}][{j}] must be finite and >= 0"
                    )));
                }
                if a != b {
                    return Err(KernelError::Config(format!(
                        "custom-table is not symmetric at [{i}][{j}]"
                    )));
                }
                packed.push(a);
            }
        }
        let log_sizes = sizes.iter().map(|s| s.ln()).collect();
        Ok(Self {
            sizes,
            log_sizes,
            packed,
        })
    }

    fn at(&self, i: usize, j: usize) -> f64 {
        let (i, j) = if i <= j { (i, j) } else { (j, i) };
        let n = self.sizes.len();
        self.packed[i * n - i * (i + 1) / 2 + j]
    }

    fn locate(&self, v: f64) -> (usize, f64) {
        let ls = &self.log_sizes;
        let n = ls.len();
        let lv = v.ln().clamp(ls[0], ls[n - 1]);
        let hi = ls.partition_point(|&s| s <= lv).clamp(1, n - 1);
        let lo = hi - 1;
        (lo, (lv - ls[lo]) / (ls[hi] - ls[lo]))
    }

    fn value(&self, x: f64, y: f64) -> f64 {
        let (i, tx) = self.locate(x);
        let (j, ty) = self.locate(y);
        (1.0 - tx) * (1.0 - ty) * self.at(i, j)
            + tx * (1.0 - ty) * self.at(i + 1, j)
            + (1.0 - tx) * ty * self.at(i, j + 1)
            + tx * ty * self.at(i + 1, j + 1)
    }
}

impl TryFrom<TableKernelDef> for TableKernel {
    type Error = KernelError;
    fn try_from(def: TableKernelDef) -> KResult<Self> {
        Self::new(def.sizes, def.values)
    }
}

impl From<TableKernel> for TableKernelDef {
    fn from(t: TableKernel) -> Self {
        let n = t.sizes.len();
        let values = (0..n).map(|i| (0..n).map(|j| t.at(i, j)).collect()).collect();
        Self {
            sizes: t.sizes,
            values,
        }
    }
}

// ---------------------------------------------------------------------------
// Fragmentation
// ---------------------------------------------------------------------------

/// Power-law fragmentation: `S(y) = s0 y^γ`, `b(y, x) = (α+2)/y (x/y)^α` on `0 < x < y`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PowerLawFragmentation {
    s0: f64,
    gamma: f64,
    alpha: f64,
}

impl PowerLawFragmentation {
    pub fn new(s0: f64, gamma: f64, alpha: f64) -> KResult<Self> {
        let v = Self::violations(s0, gamma, alpha);
        if v.is_empty() {
            Ok(Self { s0, gamma, alpha })
        } else {
            Err(KernelError::Config(v.join("; ")))
        }
    }

    pub fn violations(s0: f64, gamma: f64, alpha: f64) -> Vec<String> {
        let mut out = Vec::new();
        if !(s0.is_finite() && s0 > 0.0) {
            out.push(format!("s0 must be finite and > 0 (got {s0})"));
        }
        if !gamma.is_finite() {
            out.push(format!("gamma must be finite (got {gamma})"));
        }
        if !(alpha.is_finite() && alpha > -1.0) {
            out.push(format!(
                "alpha must be > -1 so the number of fragments is finite (got {alpha})"
            ));
        }
        out
    }

    pub fn s0(&self) -> f64 {
        self.s0
    }
    pub fn gamma(&self) -> f64 {
        self.gamma
    }
    pub fn alpha(&self) -> f64 {
        self.alpha
    }
}

/// User-supplied fragmentation law. The breakage density must vanish for
/// `x ≥ y` and be integrable at the origin; integrals of it are computed by
/// quadrature.
#[derive(Clone)]
pub struct CustomFragmentation {
    pub name: String,
    rate: Arc<dyn Fn(f64) -> f64 + Send + Sync>,
    breakage: Arc<dyn Fn(f64, f64) -> f64 + Send + Sync>,
    fragment_count: f64,
}

impl CustomFragmentation {
    /// `rate(y)` is `S(y)`; `breakage(y, x)` is `b(y, x)`. The fragment count
    /// is measured once at `y = 1`.
    pub fn new(
        name: impl Into<String>,
        rate: impl Fn(f64) -> f64 + Send + Sync + 'static,
        breakage: impl Fn(f64, f64) -> f64 + Send + Sync + 'static,
    ) -> KResult<Self> {
        let breakage: Arc<dyn Fn(f64, f64) -> f64 + Send + Sync> = Arc::new(breakage);
        let b = breakage.clone();
        let count = tanh_sinh(&|x| b(1.0, x), 0.0, 1.0, 1e-12, 12);
        if !count.value.is_finite() || count.value <= 0.0 {
            return Err(KernelError::Config(
                "custom breakage function must have a finite positive fragment count".into(),
            ));
        }
        Ok(Self {
            name: name.into(),
            rate: Arc::new(rate),
            breakage,
            fragment_count: count.value,
        })
    }
}

impl fmt::Debug for CustomFragmentation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("CustomFragmentation")
            .field("name", &self.name)
            .field("fragment_count", &self.fragment_count)
            .finish_non_exhaustive()
    }
}

impl PartialEq for CustomFragmentation {
    fn eq(&self, other: &Self) -> bool {
        self.name == other.name
            && Arc::ptr_eq(&self.rate, &other.rate)
            && Arc::ptr_eq(&self.breakage, &other.breakage)
    }
}

/// Fragmentation rate `S` together with the breakage function `b`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "FragmentationDef", into = "FragmentationDef")]
pub enum FragmentationSpec {
    PowerLaw(PowerLawFragmentation),
    Custom(CustomFragmentation),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "family", rename_all = "kebab-case", deny_unknown_fields)]
pub enum FragmentationDef {
    PowerlawFrag { s0: f64, gamma: f64, alpha: f64 },
    Custom { name: String },
}

impl TryFrom<FragmentationDef> for FragmentationSpec {
    type Error = KernelError;
    fn try_from(def: FragmentationDef) -> KResult<Self> {
        match def {
            FragmentationDef::PowerlawFrag { s0, gamma, alpha } => {
                Ok(Self::PowerLaw(PowerLawFragmentation::new(s0, gamma, alpha)?))
            }
            FragmentationDef::Custom { name } => Err(KernelError::Unsupported(format!(
                "custom fragmentation `{name}` can only be constructed programmatically"
            ))),
        }
    }
}

impl From<FragmentationSpec> for FragmentationDef {
    fn from(f: FragmentationSpec) -> Self {
        match f {
            FragmentationSpec::PowerLaw(p) => Self::PowerlawFrag {
                s0: p.s0,
                gamma: p.gamma,
                alpha: p.alpha,
            },
            FragmentationSpec::Custom(c) => Self::Custom { name: c.name },
        }
    }
}

impl FragmentationSpec {
    pub fn power_law(s0: f64, gamma: f64, alpha: f64) -> KResult<Self> {
        PowerLawFragmentation::new(s0, gamma, alpha).map(Self::PowerLaw)
    }

    pub fn name(&self) -> &str {
        match self {
            Self::PowerLaw(_) => "powerlaw-frag",
            Self::Custom(c) => &c.name,
        }
    }

    /// Unchecked `S(y)`.
    #[inline]
    pub fn rate(&self, y: f64) -> f64 {
        match self {
            Self::PowerLaw(p) => p.s0 * y.powf(p.gamma),
            Self::Custom(c) => (c.rate)(y),
        }
    }

    /// `S(y)`.
    pub fn eval_s(&self, y: f64) -> KResult<f64> {
        if y == 0.0 {
            if let Self::PowerLaw(p) = self {
                if p.gamma < 0.0 {
                    return Err(KernelError::Domain {
                        what: "S(y) with gamma < 0",
                        constraint: "y > 0 (rate is singular at the origin)",
                        value: y,
                    });
                }
            }
        } else {
            require_positive_size("S(y) argument y", y)?;
        }
        let v = self.rate(y);
        if v.is_finite() && v >= 0.0 {
            Ok(v)
        } else {
            Err(KernelError::NonFinite { x: y, y })
        }
    }

    /// Unchecked `b(y, x)`, zero outside `0 < x < y`.
    #[inline]
    pub fn breakage(&self, y: f64, x: f64) -> f64 {
        if x >= y || x <= 0.0 {
            return 0.0;
        }
        match self {
            Self::PowerLaw(p) => (p.alpha + 2.0) / y * (x / y).powf(p.alpha),
            Self::Custom(c) => (c.breakage)(y, x),
        }
    }

    /// `b(y, x)`: fragment-size density for a parent of size `y`.
    pub fn eval_b(&self, y: f64, x: f64) -> KResult<f64> {
        require_positive_size("b(y, x) parent size y", y)?;
        if !(x.is_finite() && x >= 0.0) {
            return Err(KernelError::Domain {
                what: "b(y, x) fragment size x",
                constraint: "a finite size >= 0",
                value: x,
            });
        }
        if x >= y {
            return Ok(0.0);
        }
        let v = match self {
            Self::PowerLaw(p) => (p.alpha + 2.0) / y * (x / y).powf(p.alpha),
            Self::Custom(c) => (c.breakage)(y, x),
        };
        if v.is_finite() && v >= 0.0 {
            Ok(v)
        } else {
            Err(KernelError::NonFinite { x: y, y: x })
        }
    }

    /// Number of fragments per breakage event, `N = ∫₀^y b(y, x) dx`.
    pub fn fragment_count(&self) -> f64 {
        match self {
            Self::PowerLaw(p) => (p.alpha + 2.0) / (p.alpha + 1.0),
            Self::Custom(c) => c.fragment_count,
        }
    }

    fn check_interval(y: f64, a: f64, b: f64) -> KResult<()> {
        require_positive_size("breakage parent size y", y)?;
        if 0.0 <= a && a <= b && b <= y {
            Ok(())
        } else {
            Err(KernelError::Interval { y, a, b })
        }
    }

    /// `∫_a^b x b(y, x) dx`, mass of fragments with sizes in `[a, b]`.
    pub fn breakage_partial_mass(&self, y: f64, a: f64, b: f64) -> KResult<f64> {
        Self::check_interval(y, a, b)?;
        if a == b {
            return Ok(0.0);
        }
        Ok(match self {
            Self::PowerLaw(p) => {
                let e = p.alpha + 2.0;
                y * ((b / y).powf(e) - (a / y).powf(e))
            }
            Self::Custom(c) => {
                tanh_sinh(&|x| x * (c.breakage)(y, x), a, b, 1e-12, 12).value
            }
        })
    }

    /// `∫_a^b b(y, x) dx`, number of fragments with sizes in `[a, b]`.
    pub fn breakage_partial_number(&self, y: f64, a: f64, b: f64) -> KResult<f64> {
        Self::check_interval(y, a, b)?;
        if a == b {
            return Ok(0.0);
        }
        Ok(match self {
            Self::PowerLaw(p) => {
                let e = p.alpha + 1.0;
                (p.alpha + 2.0) / e * ((b / y).powf(e) - (a / y).powf(e))
            }
            Self::Custom(c) => tanh_sinh(&|x| (c.breakage)(y, x), a, b, 1e-12, 12).value,
        })
    }
}

// ---------------------------------------------------------------------------
// Hypothesis constants
// ---------------------------------------------------------------------------

/// Growth envelope of the coagulation kernel: `K(x,y) ≤ k1² (1+x)^μ (1+y)^μ`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CoagulationEnvelope {
    pub k1: f64,
    pub mu: f64,
}

/// Fragmentation bounds: `S(x) ≤ m (1+x)^{1−λ}` and, for `x ≥ 1`,
/// `b(x, y) S(x) ≥ L_Γ (1+x)^ν` on `0 < y < x`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FragmentationEnvelope {
    pub m: f64,
    pub lambda: f64,
    pub l_gamma: f64,
    pub nu: f64,
}

/// Declared or suggested hypothesis constants. A block is absent when the
/// corresponding process is switched off.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct HypothesisConstants {
    #[serde(default)]
    pub coagulation: Option<CoagulationEnvelope>,
    #[serde(default)]
    pub fragmentation: Option<FragmentationEnvelope>,
}

impl HypothesisConstants {
    pub fn violations(&self) -> Vec<String> {
        let mut out = Vec::new();
        if let Some(c) = self.coagulation {
            if !(c.k1.is_finite() && c.k1 > 0.0) {
                out.push(format!("k1 must be finite and > 0 (got {})", c.k1));
            }
            if !(0.0..1.0).contains(&c.mu) {
                out.push(format!("mu must lie in [0, 1) (got {})", c.mu));
            }
        }
        if let Some(f) = self.fragmentation {
            if !(f.m.is_finite() && f.m > 0.0) {
                out.push(format!("m must be finite and > 0 (got {})", f.m));
            }
            if !(f.lambda > 0.0 && f.lambda < 1.0) {
                out.push(format!("lambda must lie in (0, 1) (got {})", f.lambda));
            }
            if !(f.l_gamma.is_finite() && f.l_gamma > 0.0) {
                out.push(format!("l_gamma must be finite and > 0 (got {})", f.l_gamma));
            }
            if !(f.nu.is_finite() && f.nu > -1.0) {
                out.push(format!("nu must be > -1 (got {})", f.nu));
            }
        }
        out
    }

    pub fn validate(&self) -> KResult<()> {
        let v = self.violations();
        if v.is_empty() {
            Ok(())
        } else {
            Err(KernelError::Config(v.join("; ")))
        }
    }
}
