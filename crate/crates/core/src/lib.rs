//! Extremum seeking for time-varying optima with growing gains and
//! frequencies.
//!
//! - [`cost_models`]: cost maps with known optimizer paths and an empirical
//!   checker for the convexity and boundedness assumptions.
//! - [`schedules`]: the gain/frequency growth laws and the time dilation.
//! - [`controllers`]: the asymptotic and exponential ES laws, gain conditions.
//! - [`averaging`]: Lie brackets, the averaged comparison systems, and the
//!   scalar comparison lemma.
//! - [`simulate`]: RK4 integration with a dither-aware step policy,
//!   trajectories, decay-rate fits and full-vs-averaged comparisons.

#![allow(clippy::neg_cmp_op_on_partial_ord, clippy::needless_range_loop)]

pub mod averaging;
pub mod controllers;
pub mod cost_models;
pub mod error;
pub mod numeric;
pub mod schedules;
pub mod simulate;

pub use error::{Error, Result};
