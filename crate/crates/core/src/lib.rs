//! Probabilistic sim-to-real gap estimation and Monte Carlo controller
//! verification for planar unicycle robots.

pub mod certificate;
pub mod cli;
pub mod config;
pub mod dynamics;
pub mod error;
pub mod gap;
pub mod records;
pub mod rng;
pub mod uncertain;
pub mod verification;

pub use error::{Error, Result};
