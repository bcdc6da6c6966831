//! Simulation engine and analysis toolkit for synchronous distributed SGD
//! where the master waits only for the fastest `k` of `n` workers.
//!
//! The crate is organised bottom-up:
//!
//! - [`datagen`]: synthetic regression data and horizontal sharding.
//! - [`model`]: the least-squares loss, its full and per-shard gradients and
//!   the exact optimum.
//! - [`cluster`]: worker response-time models and order-statistic moments.
//! - [`bounds`]: closed-form error bounds and the bound-optimal switching
//!   schedule for `k`.
//! - [`engine`]: fixed, scheduled and adaptive fastest-k SGD plus an
//!   asynchronous baseline, all producing wall-clock stamped traces.
//! - [`cli`]: the experiment runner behind the `fastk` binary.

pub mod bounds;
pub mod cli;
pub mod cluster;
pub mod datagen;
pub mod engine;
mod error;
pub mod model;
pub mod plot;
pub mod util;

pub use error::{Error, Result};
