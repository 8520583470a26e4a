//! Energy-stable simulation core for the viscous Cahn-Hilliard equation
//! with hyperbolic relaxation.
//!
//! The crate provides uniform-grid scalar fields with summation-by-parts
//! stencils ([`field`]), the quadratized bulk potentials ([`potential`]),
//! spectral Poisson inversion and the per-step SPD solve ([`spectral`],
//! [`solver`]), two linear second-order unconditionally energy-stable
//! time steppers ([`stepper`]), and diagnostics that verify the discrete
//! energy laws as exact identities ([`diagnostics`]).
//!
//! Everything is generic over the scalar via [`real::Real`] (f32 or f64);
//! the `*64` aliases below are the types production code works with.

pub mod diagnostics;
pub mod error;
pub mod field;
pub mod grid;
pub mod potential;
pub mod real;
pub mod solver;
pub mod spectral;
pub mod stepper;

pub use error::{Error, Result};
pub use grid::{BoundaryKind, GridSpec};
pub use real::Real;

/// Concrete double-precision aliases; the CLI and tests run on these.
pub type Grid64 = grid::GridSpec<f64>;
pub type Field64 = field::ScalarField<f64>;
pub type Plan64 = spectral::SpectralPlan<f64>;
pub type Potential64 = potential::PotentialSpec<f64>;
pub type Params64 = stepper::ModelParams<f64>;
pub type Config64 = stepper::SchemeConfig<f64>;
pub type State64 = stepper::StepperState<f64>;
pub type Record64 = diagnostics::EnergyRecord<f64>;

/// Single-precision aliases for memory-bound experimentation.
pub type Grid32 = grid::GridSpec<f32>;
pub type Field32 = field::ScalarField<f32>;
pub type Plan32 = spectral::SpectralPlan<f32>;
