//! Simulator for distributed compressed SGD with power error feedback.
//!
//! Clients compress gradient corrections with a fixed-point contractive
//! compressor (FCC) and a contractive compressor; the server keeps an
//! estimate of the averaged gradient and broadcasts the model. The crate
//! also provides the baselines, the test problems, stationarity checks and
//! an experiment harness.

pub mod algo;
pub mod compress;
pub mod error;
pub mod harness;
pub mod parallel;
pub mod problems;
pub mod rng;
pub mod stationarity;
pub mod vector;

pub use error::{Error, Result};
pub use vector::ModelVector;
