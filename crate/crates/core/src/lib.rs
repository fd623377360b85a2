//! Length- and energy-preserving finite differences for wave maps into the
//! unit sphere, written as the first-order system
//!
//! ```text
//! d_t = d × w,    w_t = Δd × d,    |d| = 1
//! ```
//!
//! for the director `d` and the angular momentum `w = d_t × d`. Each time
//! step is an implicit midpoint step solved by a contractive fixed-point
//! iteration in which the director update is an exact per-node rotation.
//!
//! Numerical code is generic over [`Scalar`] (`f32` or `f64`); the aliases
//! below fix the precision.

pub mod analytic;
pub mod checks;
pub mod fixedpoint;
pub mod grid;
pub mod integrator;
pub mod io;
pub mod random;
pub mod rotation;
pub mod scalar;
pub mod scenario;

mod error;
mod par;

pub use error::{Error, Result};
pub use scalar::{Scalar, Vec3};

pub type Grid64 = grid::Grid<f64>;
pub type Grid32 = grid::Grid<f32>;
pub type VectorField64 = grid::VectorField<f64>;
pub type VectorField32 = grid::VectorField<f32>;
pub type ScalarField64 = grid::ScalarField<f64>;
pub type ScalarField32 = grid::ScalarField<f32>;
pub type SolverState64 = fixedpoint::SolverState<f64>;
pub type SolverState32 = fixedpoint::SolverState<f32>;
pub type FixedPointSolver64 = fixedpoint::FixedPointSolver<f64>;
pub type FixedPointSolver32 = fixedpoint::FixedPointSolver<f32>;
pub type Vec3f64 = scalar::Vec3<f64>;
pub type Vec3f32 = scalar::Vec3<f32>;
