//! Stochastic lattice simulation and scaling analysis of two-dimensional
//! phase roughening.
//!
//! The crate has three layers:
//!
//! - integrators: an Euler–Maruyama solver for the 2D KPZ equation ([`kpz`])
//!   and a split-step solver for a driven-dissipative condensate coupled to a
//!   reservoir ([`gpe`]), both built on the periodic lattice primitives in
//!   [`lattice`];
//! - estimators: connected phase correlators, roughness, running exponents,
//!   and first-order coherence maps ([`observables`]);
//! - analysis: universal scaling-function tabulation and orthogonal-distance
//!   collapse fits ([`scaling`]), plus fringe synthesis/demodulation for
//!   interferometric coherence extraction ([`interferometry`]).
//!
//! Everything is deterministic given a master seed: noise streams are
//! counter-based per trajectory and ensemble reductions run in a fixed order,
//! so repeated runs reproduce results byte for byte.

pub mod error;
mod fft2;
pub mod gpe;
pub mod interferometry;
pub mod io;
pub mod kpz;
pub mod lattice;
pub mod observables;
pub mod scaling;

pub use error::{Error, Result};

/// Crate version, recorded in run manifests.
pub const VERSION: &str = env!("CARGO_PKG_VERSION");
