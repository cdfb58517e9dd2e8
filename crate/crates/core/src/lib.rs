//! Numerical laboratory for linear parabolic SPDEs driven by Whittle–Matérn
//! noise with a rough scalar amplitude.
//!
//! The model `du = Δu dt + b(t) (I - Δ)^{-γ} dW` on `(0,1)^d` with zero
//! Neumann conditions is discretized with P1 finite elements on nested dyadic
//! meshes, backward Euler in time and a sinc quadrature for the fractional
//! power. Coarse and reference solutions share one keyed noise stream, so
//! pathwise errors and convergence rates can be measured directly.

pub mod driver;
pub mod error;
pub mod fem;
pub mod harness;
pub mod l0;
pub mod linalg;
pub mod mesh;
pub mod plot;
pub mod quadrature;
pub mod rng;
pub mod scheme;
pub mod wiener;

pub use error::{Error, Result};
