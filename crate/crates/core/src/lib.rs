//! Width-parametrized deep linear and ReLU networks, their gradient-descent
//! and Adam training, and the exact learning-rate polynomials of the linear case.

pub mod cli;
pub mod error;
pub mod harness;
pub mod model;
pub mod numerics;
pub mod optimizer;
pub mod parametrization;
pub mod poly;
pub mod theory;

pub use error::{Error, Result};
