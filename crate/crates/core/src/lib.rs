//! Optimal dividend payout under a drawdown constraint.
//!
//! The payout rate is capped at `cbar` and may never fall below a fixed
//! proportion `b` of its own running maximum, which makes the control problem
//! path dependent. This crate computes the value function by solving a
//! recursive family of single-obstacle ODEs over discrete payout levels,
//! extracts the switching and converting free boundaries, and verifies the
//! result three independent ways: closed forms where they exist, a
//! discrete-time dynamic-programming oracle, and Monte Carlo simulation of the
//! optimal feedback strategy.

pub mod boundaries;
pub mod dp;
pub mod error;
pub mod model;
pub mod report;
pub mod sim;
pub mod solver;

pub use error::{Error, Result};
pub use model::{classify_regime, DerivedConstants, Model, ModelParams, Regime};
pub use solver::{SolverGrid, SolverOptions, ValueSurface};
