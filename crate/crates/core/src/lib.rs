//! Boundary-decay laboratory for the fractional Laplacian Δ^{α/2}.
//!
//! The numerical core (moduli, geometry, stable laws, fractional Laplacian
//! quadrature, walk-on-spheres, killed paths) is generic over `f32`/`f64`
//! through [`Real`]; the experiment layer runs in `f64`. The aliases below fix
//! the double-precision types used by callers.

// `!(x > 0.0)` style guards are deliberate: they also reject NaN.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod engine;
pub mod error;
pub mod experiments;
pub mod fraclap;
pub mod geometry;
pub mod killedpaths;
pub mod moduli;
pub mod quadrature;
pub mod scalar;
pub mod special;
pub mod stablelaw;
pub mod wos;

pub use error::{Error, Result};
pub use scalar::Real;

/// Double-precision modulus of continuity.
pub type Modulus = moduli::ModulusSpec<f64>;
/// Double-precision domain.
pub type Domain = geometry::Domain<f64>;
/// Double-precision stable index (α, d).
pub type StableIndex = stablelaw::StableIndex<f64>;
/// Double-precision barrier parameters.
pub type BarrierParams = stablelaw::BarrierParams<f64>;
/// Double-precision walk-on-spheres driver.
pub type Wos = wos::Wos<f64>;
