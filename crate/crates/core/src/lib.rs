//! Two-point cross-correlation toolkit for point catalogs in a 2-D
//! parametric plane (stellar mass vs. galaxy size).
//!
//! The pipeline: load catalogs ([`catalog`]), map them onto a unit plane,
//! count pairs as a function of separation ([`paircounts`]), compare against
//! uniform random baselines ([`randoms`]), form correlation estimators with
//! bootstrap errors ([`estimators`]), and characterize the result with
//! power-law fits and KS statistics ([`fitstats`]). A multivariate rank test
//! ([`ranktest`]) decides whether several catalogs are mutually compatible,
//! and [`merger`] evaluates virial relations between merger mass ratio and
//! growth in size and velocity dispersion.
//!
//! All stochastic steps draw from counter-based ChaCha8 streams derived from
//! a single master seed, so every result is reproducible bit for bit. The
//! `parallel` feature (default) runs the heavy kernels on a rayon pool; the
//! sequential fallback produces identical output.

pub mod catalog;
pub mod error;
pub mod estimators;
pub mod fitstats;
pub mod merger;
pub mod paircounts;
pub mod randoms;
pub mod ranktest;
pub mod seeding;
pub mod synth;

pub use error::{Error, Result};

/// Version tag written into every JSON artifact.
pub const SCHEMA_VERSION: u32 = 1;
