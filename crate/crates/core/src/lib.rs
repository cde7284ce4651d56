//! Numerical construction and verification of clustered nodal multi-peak
//! solutions for the coupled cubic Schrödinger system
//!
//! ```text
//! -ε²Δu + P(x)u = μ₁u³ + βv²u
//! -ε²Δv + Q(x)v = μ₂v³ + βu²v      in ℝ³
//! ```

// `!(x > 0.0)` style checks are deliberate: they also reject NaN.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod ansatz;
pub mod coupled;
pub mod energy;
pub mod error;
pub mod experiment;
pub mod grid;
pub mod ground_state;
pub mod krylov;
pub mod numerics;
pub mod reduction;
pub mod solver;
pub mod spectral;

pub use error::{Error, Result};
