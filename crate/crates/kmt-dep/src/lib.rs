//! Gaussian strong approximation toolkit for stationary causal processes.
//!
//! The crate simulates Bernoulli-shift processes driven by i.i.d. innovations,
//! estimates their functional dependence measure by coordinate-replacement
//! coupling, decomposes partial-sum paths into triadic m-dependent blocks, and
//! couples the blocks to a Brownian path through per-block quantile transforms.

pub mod coupling;
pub mod depmeasure;
pub mod error;
pub mod harness;
pub mod innovations;
pub mod numeric;
pub mod pipeline;
pub mod processes;

pub use error::{KmtError, Result};
