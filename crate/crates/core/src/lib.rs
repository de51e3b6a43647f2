//! Simulation and numerical-verification lab for the symmetric inclusion
//! process SIP(alpha) with heavy-tailed jumps on a periodic torus.
//!
//! Modules, in pipeline order:
//!
//! - [`kernel`]: the jump law and its Fourier symbol.
//! - [`dynamics`]: the particle simulator.
//! - [`duality`]: self-duality weights and exact small-system oracles.
//! - [`hydro`]: the spectral solver of the hydrodynamic equation.
//! - [`fields`]: empirical and fluctuation observables.
//! - [`oupredict`]: the limiting Ornstein-Uhlenbeck characteristics.
//! - [`dirichlet`]: form and generator convergence.
//! - [`harness`]: experiment configuration and orchestration.
//! - [`acceptance`]: the acceptance criteria.

#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod acceptance;
pub mod alias;
pub mod dirichlet;
pub mod duality;
pub mod dynamics;
pub mod error;
pub mod fields;
pub mod harness;
pub mod hydro;
pub mod kernel;
pub mod oupredict;
pub mod seed;
pub mod spectral;
pub mod stats;
pub mod torus;

pub use error::{Error, Result};
