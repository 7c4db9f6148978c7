//! Simulation and numerical-analysis laboratory for one-dimensional
//! boundary-driven, weakly asymmetric exclusion processes.
//!
//! The crate stacks four layers:
//!
//! * [`model`] — configurations, cylinder functions, gradient jump rates;
//! * [`measures`] — product measures, transport coefficients, relative
//!   entropy (the exact probabilistic oracle);
//! * [`kmc`] / [`master`] — a statistically exact event-driven sampler and
//!   the full finite-state forward equation for small lattices;
//! * [`pde`] / [`experiments`] — the macroscopic solvers and the
//!   micro-vs-macro comparison experiments.

pub mod config;
pub mod error;
pub mod experiments;
pub mod kmc;
pub mod master;
pub mod measures;
pub mod model;
pub mod pde;

pub use error::{Error, Result};
