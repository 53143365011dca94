//! Limit cycles of polynomial perturbations of the linear center
//! `x' = -y, y' = x, z' = 0` in `R^(d+2)`, via first-order averaging.
//!
//! Pipeline: [`perturbation`] coefficients → exact [`averaging`] (built on
//! the closed-form [`moments`]) → certified zeros ([`polysolve`]) →
//! Poincaré-map shooting on the full ε-dynamics ([`dynamics`]).
//! [`generators`] builds instances that attain the maximal zero counts.

pub mod averaging;
pub mod dynamics;
pub mod error;
pub mod exactval;
pub mod generators;
pub mod moments;
pub mod ode;
pub mod perturbation;
pub mod poly;
pub mod polysolve;
pub mod quadrature;

pub use error::{Error, Result};
