//! Randomized well-calibrated forecasting and universal trading strategies.
//!
//! The crate builds up in layers:
//!
//! - [`rounding`] — randomized rounding of reals in `[0,1]` onto a uniform
//!   grid, the product weights for information vectors, and the discretized
//!   rounding kernel induced by those weights.
//! - [`kernels`] — the RKHS kernels (Sobolev, Gaussian, ...) used as side
//!   kernels and smooth substitutes, embedding constants, Gram matrices and
//!   norms of kernel-induced functions.
//! - [`forecaster`] — the defensive forecasting engine: each forecast is a
//!   root of a kernel-weighted residual sum, which keeps a designated
//!   supermartingale non-increasing; forecasts and information vectors are
//!   then randomized on the current grid.
//! - [`calibration`] — checking rules, calibration error reports and the
//!   theoretical bounds they are compared against.
//! - [`trading`] — the randomized decision strategies built on the
//!   forecasts, stationary competitors, regret bounds and capital ledgers.
//! - [`adversary`] — the counterexample construction showing that fixed
//!   i.i.d. randomized strategies are outperformed by a binary decision rule.
//! - [`arma`] — a one-step-ahead ARMA baseline forecaster.
//! - [`backtest`] — CSV ingestion, price scaling, the chain method of
//!   overlapping forecast windows, the synthetic TEST stock and experiment
//!   orchestration.

pub mod adversary;
pub mod arma;
pub mod backtest;
pub mod calibration;
mod error;
pub mod forecaster;
pub mod kernels;
pub mod rounding;
pub mod trading;

pub use error::{Error, Result};
pub use forecaster::{ForecastSession, ScheduleState};
pub use kernels::{InducedFunction, KernelSpec};
pub use rounding::{RandomSource, RoundingGrid, WeightVector};
pub use trading::{DecisionRule, EquityCurve, StrategyKind};
