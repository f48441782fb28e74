//! Finite-volume laboratory for a parabolic-parabolic chemotaxis system with
//! logarithmic sensitivity and saturated signal production.
//!
//! The crate provides:
//! - closed-form admissibility analysis of the `(chi, a, b)` parameter space
//!   ([`params`]),
//! - conservative cell-centered grids with zero-flux boundary operators
//!   ([`grid`], [`snapshot`]),
//! - a positivity-preserving explicit/IMEX solver for the regularized system
//!   ([`solver`], [`profiles`]),
//! - per-step monitors for masses, the energy functional, its dissipation
//!   channels, and the saturation defect ([`diagnostics`]),
//! - weak-form verification against finite families of test functions,
//!   including discrete normal-trace audits ([`weakform`]),
//! - a deterministic experiment harness with flat-text configs and parameter
//!   sweeps ([`config`], [`experiment`]).

pub mod config;
pub mod diagnostics;
pub mod error;
pub mod experiment;
pub mod grid;
pub mod params;
pub mod profiles;
pub mod snapshot;
pub mod solver;
pub mod weakform;

pub use error::{Error, Result};
pub use params::{AdmissibilityReport, ModelParams};
