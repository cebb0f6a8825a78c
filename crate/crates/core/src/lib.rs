//! Mean-reverting portfolio design.
//!
//! Builds spreads from log-prices and a cointegration basis, estimates lagged
//! autocovariances, and minimizes a mean-reversion criterion plus a variance
//! term under a gross-leverage budget `||Bw||_1 <= L` using successive convex
//! approximation with an ADMM inner solver. Designed portfolios can be
//! evaluated with a z-score threshold backtest.

#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod admm;
pub mod backtest;
pub mod cli;
pub mod criteria;
pub mod error;
pub mod l1_projection;
pub mod market_data;
pub mod moments;
pub mod sca;
pub mod surrogate;
pub mod synth;

pub use error::{ErrorClass, MrpError, Result};
