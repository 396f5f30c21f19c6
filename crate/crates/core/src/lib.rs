//! Massive-MIMO relay downlink simulator with regularized zero-forcing
//! precoding at the base station and the relay.
//!
//! Two engines evaluate the same system: a Monte-Carlo engine drawing
//! correlated Rayleigh channels with imperfect CSIT, and a
//! deterministic-equivalent engine that needs only the correlation
//! matrices.

pub mod channel;
pub mod config;
pub mod correlation;
pub mod deterministic;
pub mod error;
pub mod experiment;
pub mod linalg;
pub mod precoder;
pub mod real;
pub mod rng;
pub mod sinr;
pub mod stats;
pub mod verification;

pub use error::{Error, Result};
pub use real::Real;

/// Default working precision.
pub type Scalar = f64;
