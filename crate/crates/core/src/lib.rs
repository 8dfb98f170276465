//! Day-ahead electricity price forecasting.
//!
//! The crate covers the whole experiment pipeline:
//!
//! - [`timeseries`]: hourly series containers, resampling, gap filling, calendars
//! - [`ingest`]: ENTSO-E style CSV, Open-Meteo style JSON and a synthetic coupled-market generator
//! - [`features`]: lagged design matrices with min-max scaling and a feature group map
//! - [`lear`]: LASSO by coordinate descent with cross-validated regularisation
//! - [`dnn`]: a two-hidden-layer network with a Parzen-estimator hyperparameter search
//! - [`backtest`]: rolling-origin recalibration, naive benchmark and ensembling
//! - [`eval`]: accuracy metrics, Giacomini-White tests, correlations and contribution analysis
//! - [`cli`]: the `epf` command line driven by a JSON run configuration

// `!(x > 0.0)` style checks are deliberate: they also reject NaN.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod backtest;
pub mod cli;
pub mod dnn;
pub mod error;
pub mod eval;
pub mod features;
pub mod ingest;
pub mod io;
pub mod lear;
pub mod timeseries;

pub use error::{EpfError, Result};

/// Version of every JSON document this crate writes.
pub const SCHEMA_VERSION: u32 = 1;
