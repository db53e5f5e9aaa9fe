//! Solvers for the nonlinear collisional breakage equation
//!
//! ```text
//! ∂w/∂τ = ∫_0^∞ ∫_n^∞ μ(ε,ρ) α(n,ε,ρ) w(ε,τ) w(ρ,τ) dε dρ − ∫_0^∞ μ(n,ε) w(n,τ) w(ε,τ) dε
//! ```
//!
//! * [`epdtm`]: truncated power series in time whose coefficients follow a
//!   birth/death recursion closed by the Elzaki monomial rule.
//! * [`fvm`]: a mass-conserving finite-volume reference solver.
//! * [`analysis`]: moments, weighted norms, error tables and the
//!   contraction/error-bound diagnostics.
//! * [`cli`]: configuration-driven runs writing CSV tables.

pub mod analysis;
pub mod cli;
pub mod epdtm;
pub mod error;
pub mod fvm;
pub mod model;
pub mod quadrature;

pub use error::{Error, Result};
