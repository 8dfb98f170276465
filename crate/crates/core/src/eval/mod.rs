//! Forecast accuracy, significance and attribution.

pub mod anc;
pub mod gw;
pub mod metrics;

pub use anc::{anc, anc_of_run, contributions, group_index, AncEntry, AncReport};
pub use gw::{errors, gw_matrix, gw_test, GwMatrix, GwResult};
pub use metrics::{
    evaluate, mae, metrics_csv, pearson, percentile_slice, quantile, r2, rmae, rmse, smape, MetricsReport, Slice,
};
