//! Feed-forward network forecaster and its hyperparameter search.

pub mod mlp;
pub mod tpe;
pub mod train;

pub use mlp::{Activation, Adam, Init, Mlp};
pub use tpe::{tpe_optimize, tpe_search, SearchSpace, TpeOutcome, TpeState, Trial};
pub use train::{predict_dnn, train, HyperConfig, MlpParams, Split};
