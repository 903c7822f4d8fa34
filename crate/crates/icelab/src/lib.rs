//! Two-dimensional ice-flow laboratory: momentum solvers of increasing
//! fidelity coupled to a semi-implicit free-surface stepper, plus tooling to
//! measure the largest stable timestep of each coupling and the cost of
//! buying more stability with better physics.
//!
//! Units throughout: meters, years, and MPa (so stresses and the ice
//! softness parameter stay O(1)).

pub mod constants;
pub mod error;
pub mod fem;
pub mod geometry;
pub mod harness;
pub mod cost;
pub mod sia;
pub mod sparse;
pub mod stability;
pub mod surface;

pub use constants::PhysicalConstants;
pub use error::{IceLabError, Result};
