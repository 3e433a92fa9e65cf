//! Adaptive control of renewal-reward task processes with time-average
//! penalty constraints.

pub mod baselines;
pub mod config;
pub mod constants;
pub mod controller;
pub mod error;
pub mod harness;
pub mod metrics;
pub mod model;
pub mod oracle;
pub mod output;
pub mod rng;
pub mod scenarios;
pub mod simplex;

pub use error::{Error, Result};
