use std::collections::BTreeMap;
use std::path::Path;

use nalgebra::DMatrix;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::mlp::{Activation, Adam, DropoutMask, Init, LayerParams, Mlp, Mode};
use crate::error::{EpfError, Result, ResultExt};
use crate::features::{ColumnInfo, DayRows, DesignMatrix, ScalerState, TransformKind};
use crate::timeseries::{DateRange, HOURS_PER_DAY};
use crate::SCHEMA_VERSION;

/// Variables that are always fed to the network.
pub const FIXED_VARIABLES: [&str; 3] = ["calendar", "holiday", "hour"];

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct HyperConfig {
    pub n1: usize,
    pub n2: usize,
    pub activation: Activation,
    pub init: Init,
    pub learning_rate: f64,
    pub dropout: f64,
    pub transform: TransformKind,
    /// Input variables by name (`price`, `wind`, `price DE-LU`, ...). Absent
    /// variables are included.
    #[serde(default)]
    pub include_variable: BTreeMap<String, bool>,
    pub epochs_max: usize,
    pub patience: usize,
}

impl Default for HyperConfig {
    fn default() -> Self {
        HyperConfig {
            n1: 64,
            n2: 32,
            activation: Activation::Relu,
            init: Init::VarianceScaledUniform,
            learning_rate: 1e-3,
            dropout: 0.1,
            transform: TransformKind::Norm,
            include_variable: BTreeMap::new(),
            epochs_max: 1000,
            patience: 20,
        }
    }
}

impl HyperConfig {
    pub fn includes(&self, variable: &str) -> bool {
        FIXED_VARIABLES.contains(&variable) || self.include_variable.get(variable).copied().unwrap_or(true)
    }

    pub fn validate(&self) -> Result<()> {
        if self.n1 == 0 || self.n2 == 0 {
            return Err(EpfError::config("n1/n2", "hidden widths must be at least 1"));
        }
        if !(0.0..=0.5).contains(&self.dropout) {
            return Err(EpfError::config("dropout", format!("{} outside [0, 0.5]", self.dropout)));
        }
        if !(self.learning_rate > 0.0) || !self.learning_rate.is_finite() {
            return Err(EpfError::config("learning_rate", "must be positive"));
        }
        if self.epochs_max == 0 {
            return Err(EpfError::config("epochs_max", "must be at least 1"));
        }
        if !self.include_variable.is_empty() && !self.include_variable.values().any(|v| *v) {
            return Err(EpfError::config("include_variable", "at least one variable must be included"));
        }
        Ok(())
    }

    /// Indices of the day-level input columns this config feeds to the net:
    /// every included column outside the hour block.
    pub fn input_columns(&self, columns: &[ColumnInfo]) -> Result<Vec<usize>> {
        let cols: Vec<usize> = columns
            .iter()
            .enumerate()
            .filter(|(_, c)| c.group != "Hour" && self.includes(&c.variable))
            .map(|(j, _)| j)
            .collect();
        let has_variable = cols
            .iter()
            .any(|&j| !FIXED_VARIABLES.contains(&columns[j].variable.as_str()));
        if !has_variable {
            return Err(EpfError::config("include_variable", "no input variable left"));
        }
        Ok(cols)
    }
}

/// Validation holdout taken from the end of the calibration window.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Split {
    pub validation_fraction: f64,
}

impl Default for Split {
    fn default() -> Self {
        Split {
            validation_fraction: 0.1,
        }
    }
}

impl Split {
    /// Number of days held out of `n`; at least one on each side.
    pub fn validation_days(&self, n: usize) -> Result<usize> {
        if n < 2 {
            return Err(EpfError::config("calibration", "need at least 2 days to train a network"));
        }
        let v = (n as f64 * self.validation_fraction).round() as usize;
        Ok(v.clamp(1, n - 1))
    }
}

/// One sample per day: day-constant features and the 24 targets.
pub struct DayBatch {
    pub x: DMatrix<f64>,
    pub y: DMatrix<f64>,
}

pub fn day_batch(design: &DesignMatrix, columns: &[usize], days: std::ops::Range<usize>) -> DayBatch {
    let n = days.len();
    let x = DMatrix::from_fn(n, columns.len(), |i, a| design.x[((days.start + i) * HOURS_PER_DAY, columns[a])]);
    let y = DMatrix::from_fn(n, HOURS_PER_DAY, |i, h| design.y[(days.start + i) * HOURS_PER_DAY + h]);
    DayBatch { x, y }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MlpParams {
    pub schema_version: u32,
    pub config_label: String,
    pub config: HyperConfig,
    pub layers: Vec<LayerParams>,
    /// Design columns feeding the input layer, in order.
    pub input_columns: Vec<usize>,
    pub columns: Vec<ColumnInfo>,
    pub scaler: ScalerState,
    pub target_scaler: ScalerState,
    pub calibration: DateRange,
    pub seed: u64,
    pub best_epoch: usize,
    pub epochs_run: usize,
    pub validation_mse: f64,
}

impl MlpParams {
    pub fn network(&self) -> Result<Mlp> {
        Mlp::from_layers(&self.layers, self.config.activation, self.config.dropout)
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)?)
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let p: MlpParams = serde_json::from_str(text)?;
        if p.schema_version != SCHEMA_VERSION {
            return Err(EpfError::config(
                "schema_version",
                format!("expected {SCHEMA_VERSION}, found {}", p.schema_version),
            ));
        }
        let net = p.network()?;
        if net.n_in() != p.input_columns.len() || p.input_columns.iter().any(|&j| j >= p.columns.len()) {
            return Err(EpfError::Shape("input columns do not match the first layer".into()));
        }
        Ok(p)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)?;
        Self::from_json(&text).context(|| format!("network {}", path.display()))
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        crate::io::write_json(path, self)
    }
}

/// Full-batch Adam with early stopping on the held-out tail of the window.
///
/// Training stops once the validation MSE has not improved for `patience`
/// consecutive epochs (so `patience = 0` runs one epoch) or at `epochs_max`,
/// and returns the parameters of the best validation epoch.
pub fn train(design: &DesignMatrix, config: &HyperConfig, split: &Split, seed: u64) -> Result<MlpParams> {
    config.validate()?;
    if design.scaler.kind != config.transform {
        return Err(EpfError::config(
            "transform",
            format!("design is scaled with {:?}, config asks for {:?}", design.scaler.kind, config.transform),
        ));
    }
    let inputs = config.input_columns(&design.columns)?;
    let n_days = design.days.len();
    let n_val = split.validation_days(n_days)?;
    let n_train = n_days - n_val;
    let train_set = day_batch(design, &inputs, 0..n_train);
    let val_set = day_batch(design, &inputs, n_train..n_days);

    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut net = Mlp::init(
        &mut rng,
        inputs.len(),
        config.n1,
        config.n2,
        HOURS_PER_DAY,
        config.activation,
        config.init,
        config.dropout,
    );
    let mut adam = Adam::new(config.learning_rate, net.n_params());
    let mut best = (f64::INFINITY, net.clone(), 0);
    let mut stale = 0;
    let mut epochs_run = 0;
    for epoch in 1..=config.epochs_max {
        let mask = (config.dropout > 0.0)
            .then(|| DropoutMask::sample(&mut rng, n_train, config.n1, config.n2, config.dropout));
        let (loss, grads) = net.loss_and_gradient(&train_set.x, &train_set.y, mask.as_ref())?;
        if !loss.is_finite() || !grads.max_abs().is_finite() {
            return Err(EpfError::Divergence { epoch });
        }
        adam.step(&mut net, &grads);
        let pred = net.forward_batch(&val_set.x, Mode::Eval, None)?;
        let val = (pred - &val_set.y).norm_squared() / (n_val * HOURS_PER_DAY) as f64;
        if !val.is_finite() {
            return Err(EpfError::Divergence { epoch });
        }
        epochs_run = epoch;
        if val < best.0 {
            best = (val, net.clone(), epoch);
            stale = 0;
        } else {
            stale += 1;
        }
        if stale >= config.patience {
            break;
        }
    }
    let (validation_mse, net, best_epoch) = best;
    Ok(MlpParams {
        schema_version: SCHEMA_VERSION,
        config_label: design.config_label.clone(),
        config: config.clone(),
        layers: net.to_layers(),
        input_columns: inputs,
        columns: design.columns.clone(),
        scaler: design.scaler.clone(),
        target_scaler: design.target_scaler.clone(),
        calibration: design.calibration,
        seed,
        best_epoch,
        epochs_run,
        validation_mse,
    })
}

/// Prices for hours 0..23; `rows` must be scaled with the params' scaler.
pub fn predict_dnn(params: &MlpParams, rows: &DayRows) -> Result<[f64; HOURS_PER_DAY]> {
    if rows.x.ncols() != params.columns.len() || rows.x.nrows() == 0 {
        return Err(EpfError::Shape(format!(
            "day rows have {} columns, network was trained on {}",
            rows.x.ncols(),
            params.columns.len()
        )));
    }
    let net = params.network()?;
    let x = DMatrix::from_fn(1, params.input_columns.len(), |_, a| rows.x[(0, params.input_columns[a])]);
    let out = net.forward_batch(&x, Mode::Eval, None)?;
    let mut prices = [0.0; HOURS_PER_DAY];
    for (h, p) in prices.iter_mut().enumerate() {
        *p = params.target_scaler.inverse(0, out[(0, h)]);
    }
    Ok(prices)
}
