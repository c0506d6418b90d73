//! Sectional solver and verification suite for the continuous
//! coagulation / multiple-fragmentation equation
//!
//! ```text
//! ∂f/∂t = ½∫₀ˣ K(x−y,y) f(x−y) f(y) dy − ∫₀^∞ K(x,y) f(x) f(y) dy
//!        + ∫ₓ^∞ b(y,x) S(y) f(y) dy − S(x) f(x)
//! ```
//!
//! The crate is organised by role:
//!
//! - [`kernels`]: coagulation kernels, fragmentation rates and breakage functions.
//! - [`audit`]: checks of the kernel growth hypotheses used by the uniqueness theory.
//! - [`grid`]: geometric size grid and cell-averaged densities.
//! - [`solver`]: operator assembly, right-hand side and adaptive time stepping.
//! - [`observables`]: moments, running moment integrals, the moment ladder.
//! - [`oracles`]: closed-form reference solutions.
//! - [`stability`]: two-solution distance and Gronwall bound harness.
//! - [`config`] and [`runner`]: scenario files and artifact emission.

pub mod audit;
pub mod config;
pub mod error;
pub mod grid;
pub mod kernels;
pub mod observables;
pub mod oracles;
pub mod quadrature;
pub mod runner;
pub mod solver;
pub mod stability;
pub mod summation;

pub use error::{Error, Result};
pub use grid::{Density, GridSpec, PivotRule};
pub use kernels::{CoagulationKernel, FragmentationSpec, HypothesisConstants};
