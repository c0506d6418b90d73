//! Closed-form reference solutions.
//!
//! These never touch the solver's operator tables.
//!
//! - `scott-constant`: `K ≡ 1`, `S ≡ 0`, `f₀ = e^{−x}`:
//!   `f(x,t) = 4/(t+2)² · e^{−2x/(t+2)}`, `M₀ = 2/(t+2)`, `M₁ = 1`.
//! - `ziff-linear-binary`: `K ≡ 0`, `S(x) = x`, `b(y,x) = 2/y`, `f₀ = e^{−x}`:
//!   `f(x,t) = (1+t)² e^{−x(1+t)}`, `M₀ = 1+t`, `M₁ = 1`.
//! - `powerlaw-number-growth`: `K ≡ 0`, `S(x) = s₀x`, power-law `b`:
//!   `M₀(t) = M₀(0) + (N−1) s₀ M₁(0) t`.

use serde::Serialize;

use crate::grid::{project, Density, GridError};
use crate::kernels::{CoagulationKernel, FragmentationSpec, KernelError};
use crate::summation::KahanSum;

/// `scott-constant` density.
pub fn constant_coagulation(t: f64, x: f64) -> f64 {
    let s = t + 2.0;
    4.0 / (s * s) * (-2.0 * x / s).exp()
}

/// `scott-constant` zeroth moment.
pub fn constant_coagulation_m0(t: f64) -> f64 {
    2.0 / (t + 2.0)
}

/// `ziff-linear-binary` density.
pub fn linear_binary_fragmentation(t: f64, x: f64) -> f64 {
    (1.0 + t) * (1.0 + t) * (-x * (1.0 + t)).exp()
}

/// `ziff-linear-binary` zeroth moment.
pub fn linear_binary_fragmentation_m0(t: f64) -> f64 {
    1.0 + t
}

/// Zeroth moment under pure power-law fragmentation with linear rate.
pub fn multiple_fragmentation_number(frag: &FragmentationSpec, m0_initial: f64, m1_initial: f64, t: f64) -> Result<f64, KernelError> {
    match frag {
        FragmentationSpec::PowerLaw(p) if p.gamma() == 1.0 => {
            Ok(m0_initial + (frag.fragment_count() - 1.0) * p.s0() * m1_initial * t)
        }
        FragmentationSpec::PowerLaw(p) => Err(KernelError::Unsupported(format!(
            "number growth closes only for a linear rate (gamma = 1), got gamma = {}",
            p.gamma()
        ))),
        FragmentationSpec::Custom(_) => Err(KernelError::Unsupported(
            "number growth oracle needs the power-law family".into(),
        )),
    }
}

/// Relative L¹ error `Σ|v_i − f̄_i|Δ_i / Σ f̄_i Δ_i` of `d` against the exact
/// cell averages `f̄` of `exact`.
pub fn l1_relative_error<F: Fn(f64) -> f64>(d: &Density, exact: F) -> Result<f64, GridError> {
    let reference = project(exact, d.grid())?;
    let (mut num, mut den) = (KahanSum::new(), KahanSum::new());
    for ((v, r), w) in d.values().iter().zip(reference.values()).zip(d.grid().widths()) {
        num.add((v - r).abs() * w);
        den.add(r.abs() * w);
    }
    Ok(num.value() / den.value())
}

/// Named oracle fixture.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum OracleCase {
    ScottConstant,
    ZiffLinearBinary,
    PowerlawNumberGrowth,
}

impl OracleCase {
    pub const ALL: [OracleCase; 3] = [Self::ScottConstant, Self::ZiffLinearBinary, Self::PowerlawNumberGrowth];

    pub fn name(self) -> &'static str {
        match self {
            Self::ScottConstant => "scott-constant",
            Self::ZiffLinearBinary => "ziff-linear-binary",
            Self::PowerlawNumberGrowth => "powerlaw-number-growth",
        }
    }

    pub fn from_name(name: &str) -> Option<Self> {
        Self::ALL.into_iter().find(|c| c.name() == name)
    }

    pub fn description(self) -> &'static str {
        match self {
            Self::ScottConstant => "K = 1, no fragmentation, f0 = exp(-x); f = 4/(t+2)^2 exp(-2x/(t+2))",
            Self::ZiffLinearBinary => "no coagulation, S = x, b = 2/y, f0 = exp(-x); f = (1+t)^2 exp(-x(1+t))",
            Self::PowerlawNumberGrowth => {
                "no coagulation, S = x, b = 1.5 x^-0.5 / y^0.5 (N = 3), f0 = exp(-x); M0 = M0(0) + 2 M1(0) t"
            }
        }
    }

    pub fn kernel(self) -> Option<CoagulationKernel> {
        match self {
            Self::ScottConstant => Some(CoagulationKernel::Constant { k0: 1.0 }),
            _ => None,
        }
    }

    pub fn fragmentation(self) -> Option<FragmentationSpec> {
        match self {
            Self::ScottConstant => None,
            Self::ZiffLinearBinary => Some(FragmentationSpec::power_law(1.0, 1.0, 0.0).unwrap()),
            Self::PowerlawNumberGrowth => Some(FragmentationSpec::power_law(1.0, 1.0, -0.5).unwrap()),
        }
    }

    /// Closed-form density, where one exists.
    pub fn density(self, t: f64, x: f64) -> Option<f64> {
        match self {
            Self::ScottConstant => Some(constant_coagulation(t, x)),
            Self::ZiffLinearBinary => Some(linear_binary_fragmentation(t, x)),
            Self::PowerlawNumberGrowth => None,
        }
    }

    /// Closed-form `M₀(t)` for the `e^{−x}` initial condition.
    pub fn m0(self, t: f64) -> f64 {
        match self {
            Self::ScottConstant => constant_coagulation_m0(t),
            Self::ZiffLinearBinary => linear_binary_fragmentation_m0(t),
            Self::PowerlawNumberGrowth => 1.0 + 2.0 * t,
        }
    }

    /// The closed-form mass is 1 for all three cases.
    pub fn m1(self, _t: f64) -> f64 {
        1.0
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::quadrature::{adaptive_gk15, tanh_sinh};
    use approx::assert_relative_eq;

    #[test]
    fn initial_conditions() {
        for x in [0.0, 0.3, 2.0, 11.0] {
            assert_relative_eq!(constant_coagulation(0.0, x), (-x).exp(), max_relative = 1e-15);
            assert_relative_eq!(linear_binary_fragmentation(0.0, x), (-x).exp(), max_relative = 1e-15);
        }
        assert_eq!(constant_coagulation_m0(0.0), 1.0);
    }

    #[test]
    fn substitution_values() {
        assert_eq!(constant_coagulation(2.0, 0.0), 0.25);
        assert_eq!(constant_coagulation_m0(2.0), 0.5);
        assert_relative_eq!(linear_binary_fragmentation(1.0, 1.0), 4.0 * (-2f64).exp(), max_relative = 1e-15);
        assert_relative_eq!(linear_binary_fragmentation(1.0, 1.0), 0.5413, max_relative = 1e-4);
    }

    #[test]
    fn m0_matches_integrated_moment_ode() {
        // M0' = -M0²/2 by classical RK4 with a fine step.
        let mut m = 1.0;
        let h = 1e-3;
        for _ in 0..2000 {
            let f = |m: f64| -0.5 * m * m;
            let k1 = f(m);
            let k2 = f(m + 0.5 * h * k1);
            let k3 = f(m + 0.5 * h * k2);
            let k4 = f(m + h * k3);
            m += h / 6.0 * (k1 + 2.0 * k2 + 2.0 * k3 + k4);
        }
        assert_relative_eq!(m, constant_coagulation_m0(2.0), max_relative = 1e-12);
    }

    #[test]
    fn number_growth_closure() {
        let binary = FragmentationSpec::power_law(1.0, 1.0, 0.0).unwrap();
        let triple = FragmentationSpec::power_law(1.0, 1.0, -0.5).unwrap();
        for t in [0.0, 0.5, 2.0] {
            assert_eq!(
                multiple_fragmentation_number(&binary, 1.0, 1.0, t).unwrap(),
                linear_binary_fragmentation_m0(t)
            );
            assert_eq!(multiple_fragmentation_number(&triple, 1.0, 1.0, t).unwrap(), 1.0 + 2.0 * t);
        }
        assert_eq!(multiple_fragmentation_number(&triple, 0.7, 1.0, 0.0).unwrap(), 0.7);
        let sub = FragmentationSpec::power_law(1.0, 0.5, 0.0).unwrap();
        assert!(multiple_fragmentation_number(&sub, 1.0, 1.0, 1.0).is_err());
    }

    #[test]
    fn densities_are_mass_normalized() {
        for t in [0.0, 0.5, 1.0, 3.0, 10.0] {
            for case in [OracleCase::ScottConstant, OracleCase::ZiffLinearBinary] {
                let r = adaptive_gk15(&|x| x * case.density(t, x).unwrap(), 0.0, 400.0, 1e-12, 0.0, 100_000);
                assert_relative_eq!(r.value, 1.0, max_relative = 1e-8);
            }
        }
    }

    // Right side of the equation evaluated by direct quadrature.
    fn coagulation_rhs(f: &dyn Fn(f64) -> f64, x: f64) -> f64 {
        let birth = adaptive_gk15(&|y| f(x - y) * f(y), 0.0, x, 1e-13, 0.0, 100_000).value;
        let death = adaptive_gk15(&|y| f(y), 0.0, 200.0, 1e-13, 0.0, 100_000).value;
        0.5 * birth - f(x) * death
    }

    fn fragmentation_rhs(f: &dyn Fn(f64) -> f64, x: f64) -> f64 {
        let birth = adaptive_gk15(&|y| 2.0 / y * y * f(y), x, x + 200.0, 1e-13, 0.0, 100_000).value;
        birth - x * f(x)
    }

    #[test]
    fn closed_forms_satisfy_the_equation() {
        let h = 1e-4;
        for t in [0.3, 1.0, 2.5] {
            for x in [0.1, 0.7, 2.0, 5.0] {
                let dfdt = (constant_coagulation(t + h, x) - constant_coagulation(t - h, x)) / (2.0 * h);
                let rhs = coagulation_rhs(&|y| constant_coagulation(t, y), x);
                assert_relative_eq!(dfdt, rhs, max_relative = 1e-4);

                let dfdt =
                    (linear_binary_fragmentation(t + h, x) - linear_binary_fragmentation(t - h, x)) / (2.0 * h);
                let rhs = fragmentation_rhs(&|y| linear_binary_fragmentation(t, y), x);
                assert_relative_eq!(dfdt, rhs, max_relative = 1e-4);
            }
        }
    }

    #[test]
    fn fragmentation_oracles_agree_at_binary_breakage() {
        let binary = FragmentationSpec::power_law(1.0, 1.0, 0.0).unwrap();
        for t in [0.0, 0.25, 1.0, 4.0] {
            let m0 = tanh_sinh(&|x| linear_binary_fragmentation(t, x), 0.0, 200.0, 1e-12, 12).value;
            assert_relative_eq!(m0, multiple_fragmentation_number(&binary, 1.0, 1.0, t).unwrap(), max_relative = 1e-9);
        }
    }

    #[test]
    fn l1_error_of_exact_projection_is_zero() {
        let g = std::sync::Arc::new(crate::grid::GridSpec::new(1e-3, 1e3, 64).unwrap());
        let d = project(|x| constant_coagulation(1.0, x), &g).unwrap();
        assert_eq!(l1_relative_error(&d, |x| constant_coagulation(1.0, x)).unwrap(), 0.0);
        let scaled = Density::from_values(g.clone(), d.values().iter().map(|v| 1.01 * v).collect(), 0.0).unwrap();
        assert_relative_eq!(
            l1_relative_error(&scaled, |x| constant_coagulation(1.0, x)).unwrap(),
            0.01,
            max_relative = 1e-10
        );
    }

    #[test]
    fn fixture_names_resolve() {
        for c in OracleCase::ALL {
            assert_eq!(OracleCase::from_name(c.name()), Some(c));
        }
        assert_eq!(OracleCase::from_name("nope"), None);
    }
}
