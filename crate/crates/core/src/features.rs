//! Lagged design matrices.
//!
//! One row per (target day D, hour h). Column blocks, in order:
//!
//! | block                         | width          | group             |
//! |-------------------------------|----------------|-------------------|
//! | own price, days D-1, D-2, D-3, D-7 | 4 x 24    | `Price_{D-k}`     |
//! | each exogenous variable, days D, D-1, D-7 | 3 x 24 each | `<Var> D-k` |
//! | each neighbour price, day D   | 24 each        | `Price <zone> D`  |
//! | day-of-week one-hot (Mon = 0) | 7              | `Calendar`        |
//! | public holiday flag           | 1              | `Holiday`         |
//! | target hour one-hot           | 24             | `Hour`            |
//!
//! All rows of a day share every column except the hour block. Features and
//! targets are min-max scaled with statistics taken from calibration days only.

use std::ops::Range;

use chrono::{Duration, NaiveDate};
use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use crate::error::{EpfError, Result};
use crate::timeseries::{day_of_week, DateRange, HourlySeries, MarketDataset, HOURS_PER_DAY, PRICE};

pub const OWN_PRICE_LAGS: [i64; 4] = [1, 2, 3, 7];
pub const EXOGENOUS_LAGS: [i64; 3] = [0, 1, 7];
/// Days of history the deepest lag needs.
pub const MAX_LAG_DAYS: i64 = 7;

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum TransformKind {
    /// Maps the calibration range onto [0, 1].
    Norm,
    /// Maps the calibration range onto [-1, 1].
    Norm1,
}

/// Per-column min-max statistics. A constant column maps to 0.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScalerState {
    pub kind: TransformKind,
    pub min: Vec<f64>,
    pub max: Vec<f64>,
}

impl ScalerState {
    pub fn fit<'a>(kind: TransformKind, width: usize, rows: impl IntoIterator<Item = &'a [f64]>) -> Self {
        let mut min = vec![f64::INFINITY; width];
        let mut max = vec![f64::NEG_INFINITY; width];
        for row in rows {
            for ((lo, hi), &v) in min.iter_mut().zip(max.iter_mut()).zip(row) {
                *lo = lo.min(v);
                *hi = hi.max(v);
            }
        }
        for (lo, hi) in min.iter_mut().zip(max.iter_mut()) {
            if !lo.is_finite() {
                *lo = 0.0;
                *hi = 0.0;
            }
        }
        ScalerState { kind, min, max }
    }

    pub fn width(&self) -> usize {
        self.min.len()
    }

    pub fn transform(&self, col: usize, x: f64) -> f64 {
        let (lo, hi) = (self.min[col], self.max[col]);
        if hi <= lo {
            return 0.0;
        }
        let unit = (x - lo) / (hi - lo);
        match self.kind {
            TransformKind::Norm => unit,
            TransformKind::Norm1 => 2.0 * unit - 1.0,
        }
    }

    pub fn inverse(&self, col: usize, x: f64) -> f64 {
        let (lo, hi) = (self.min[col], self.max[col]);
        if hi <= lo {
            return lo;
        }
        let unit = match self.kind {
            TransformKind::Norm => x,
            TransformKind::Norm1 => (x + 1.0) / 2.0,
        };
        lo + unit * (hi - lo)
    }

    pub fn transform_in_place(&self, row: &mut [f64]) {
        for (c, v) in row.iter_mut().enumerate() {
            *v = self.transform(c, *v);
        }
    }
}

pub fn norm_transform(x: &[f64], state: &ScalerState) -> Vec<f64> {
    x.iter().enumerate().map(|(c, &v)| state.transform(c, v)).collect()
}

pub fn norm_inverse(x: &[f64], state: &ScalerState) -> Vec<f64> {
    x.iter().enumerate().map(|(c, &v)| state.inverse(c, v)).collect()
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CovariateConfig {
    pub label: String,
    pub target_zone: String,
    pub base_variables: Vec<String>,
    #[serde(default)]
    pub neighbor_price_zones: Vec<String>,
}

impl CovariateConfig {
    pub fn validate(&self) -> Result<()> {
        if self.neighbor_price_zones.iter().any(|z| z == &self.target_zone) {
            return Err(EpfError::config(
                "neighbor_price_zones",
                format!("target zone {} cannot be its own neighbour", self.target_zone),
            ));
        }
        for (i, z) in self.neighbor_price_zones.iter().enumerate() {
            if self.neighbor_price_zones[..i].contains(z) {
                return Err(EpfError::config("neighbor_price_zones", format!("{z} listed twice")));
            }
        }
        for (i, v) in self.base_variables.iter().enumerate() {
            if v == PRICE || self.base_variables[..i].contains(v) {
                return Err(EpfError::config("base_variables", format!("invalid or repeated variable {v}")));
            }
        }
        Ok(())
    }

    pub fn feature_count(&self) -> usize {
        OWN_PRICE_LAGS.len() * HOURS_PER_DAY
            + self.base_variables.len() * EXOGENOUS_LAGS.len() * HOURS_PER_DAY
            + self.neighbor_price_zones.len() * HOURS_PER_DAY
            + 7
            + 1
            + HOURS_PER_DAY
    }
}

#[derive(Debug, Clone)]
enum Source<'a> {
    Hourly { series: &'a HourlySeries, lag: i64 },
    Calendar,
    Holiday,
    Hour,
}

#[derive(Debug, Clone)]
struct Block<'a> {
    source: Source<'a>,
    offset: usize,
    width: usize,
}

fn capitalize(s: &str) -> String {
    let mut c = s.chars();
    match c.next() {
        Some(f) => f.to_uppercase().chain(c).collect(),
        None => String::new(),
    }
}

fn lag_label(lag: i64) -> String {
    if lag == 0 {
        "D".into()
    } else {
        format!("D-{lag}")
    }
}

/// Column metadata shared by design matrices and fitted models.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ColumnInfo {
    pub name: String,
    pub group: String,
    /// Input variable the column belongs to (`price`, `wind`, `price DE-LU`, ...).
    pub variable: String,
}

/// Raw (unscaled) feature rows for one configuration over one dataset.
pub struct FeatureBuilder<'a> {
    dataset: &'a MarketDataset,
    config: CovariateConfig,
    target: &'a HourlySeries,
    blocks: Vec<Block<'a>>,
    columns: Vec<ColumnInfo>,
}

impl<'a> FeatureBuilder<'a> {
    pub fn new(dataset: &'a MarketDataset, config: &CovariateConfig) -> Result<Self> {
        config.validate()?;
        let zone = config.target_zone.as_str();
        let target = dataset.price(zone)?;
        let mut blocks = Vec::new();
        let mut columns = Vec::new();
        let mut push_hourly = |series: &'a HourlySeries, lag: i64, group: String, variable: String, stem: String| {
            blocks.push(Block {
                source: Source::Hourly { series, lag },
                offset: columns.len(),
                width: HOURS_PER_DAY,
            });
            for h in 0..HOURS_PER_DAY {
                columns.push(ColumnInfo {
                    name: format!("{stem}_h{h:02}"),
                    group: group.clone(),
                    variable: variable.clone(),
                });
            }
        };
        for lag in OWN_PRICE_LAGS {
            push_hourly(target, lag, format!("Price_{{D-{lag}}}"), PRICE.into(), format!("price_d-{lag}"));
        }
        for var in &config.base_variables {
            let series = dataset.require(var, zone)?;
            for lag in EXOGENOUS_LAGS {
                let label = lag_label(lag);
                push_hourly(
                    series,
                    lag,
                    format!("{} {label}", capitalize(var)),
                    var.clone(),
                    format!("{var}_{}", label.to_lowercase()),
                );
            }
        }
        for nz in &config.neighbor_price_zones {
            let series = dataset.price(nz)?;
            push_hourly(series, 0, format!("Price {nz} D"), format!("price {nz}"), format!("price_{nz}_d"));
        }
        let mut push_fixed = |source: Source<'a>, names: Vec<String>, group: &str, variable: &str| {
            blocks.push(Block {
                source,
                offset: columns.len(),
                width: names.len(),
            });
            for name in names {
                columns.push(ColumnInfo {
                    name,
                    group: group.into(),
                    variable: variable.into(),
                });
            }
        };
        push_fixed(Source::Calendar, (0..7).map(|d| format!("dow_{d}")).collect(), "Calendar", "calendar");
        push_fixed(Source::Holiday, vec!["holiday".into()], "Holiday", "holiday");
        push_fixed(
            Source::Hour,
            (0..HOURS_PER_DAY).map(|h| format!("hour_{h:02}")).collect(),
            "Hour",
            "hour",
        );
        debug_assert_eq!(columns.len(), config.feature_count());
        Ok(FeatureBuilder {
            dataset,
            config: config.clone(),
            target,
            blocks,
            columns,
        })
    }

    pub fn columns(&self) -> &[ColumnInfo] {
        &self.columns
    }

    pub fn config(&self) -> &CovariateConfig {
        &self.config
    }

    pub fn width(&self) -> usize {
        self.columns.len()
    }

    pub fn hour_block(&self) -> Range<usize> {
        let last = self.blocks.last().expect("hour block");
        last.offset..last.offset + last.width
    }

    /// First day that has the full lag history.
    pub fn earliest_day(&self) -> NaiveDate {
        self.dataset.span().start + Duration::days(MAX_LAG_DAYS)
    }

    /// Unscaled 24 x width feature rows and the 24 actual prices of `day`.
    pub fn raw_day(&self, day: NaiveDate) -> Result<DayRows> {
        if day < self.earliest_day() {
            return Err(EpfError::InsufficientHistory {
                earliest: self.earliest_day(),
            });
        }
        let span = self.dataset.span();
        if day > span.end {
            return Err(EpfError::config(
                "target_days",
                format!("{day} lies after the dataset end {}", span.end),
            ));
        }
        let width = self.width();
        let mut x = DMatrix::zeros(HOURS_PER_DAY, width);
        let holiday = self.dataset.is_holiday(&self.config.target_zone, day);
        let dow = day_of_week(day) as usize;
        for block in &self.blocks {
            match &block.source {
                Source::Hourly { series, lag } => {
                    let source_day = day - Duration::days(*lag);
                    let values = checked_day(series, source_day)?;
                    for (h, &v) in values.iter().enumerate() {
                        for r in 0..HOURS_PER_DAY {
                            x[(r, block.offset + h)] = v;
                        }
                    }
                }
                Source::Calendar => {
                    for r in 0..HOURS_PER_DAY {
                        x[(r, block.offset + dow)] = 1.0;
                    }
                }
                Source::Holiday => {
                    let v = if holiday { 1.0 } else { 0.0 };
                    for r in 0..HOURS_PER_DAY {
                        x[(r, block.offset)] = v;
                    }
                }
                Source::Hour => {
                    for r in 0..HOURS_PER_DAY {
                        x[(r, block.offset + r)] = 1.0;
                    }
                }
            }
        }
        let y = checked_day(self.target, day)?;
        let mut actual = [0.0; HOURS_PER_DAY];
        actual.copy_from_slice(y);
        Ok(DayRows { day, x, y: actual })
    }

    /// Scalers for features and target from the calibration days.
    pub fn fit_scalers(&self, calibration: DateRange, kind: TransformKind) -> Result<(ScalerState, ScalerState)> {
        let width = self.width();
        let mut min = vec![f64::INFINITY; width];
        let mut max = vec![f64::NEG_INFINITY; width];
        let mut ymin = f64::INFINITY;
        let mut ymax = f64::NEG_INFINITY;
        for day in calibration.days() {
            let rows = self.raw_day(day)?;
            for c in 0..width {
                for r in 0..HOURS_PER_DAY {
                    let v = rows.x[(r, c)];
                    min[c] = min[c].min(v);
                    max[c] = max[c].max(v);
                }
            }
            for &v in &rows.y {
                ymin = ymin.min(v);
                ymax = ymax.max(v);
            }
        }
        Ok((
            ScalerState { kind, min, max },
            ScalerState {
                kind,
                min: vec![ymin],
                max: vec![ymax],
            },
        ))
    }

    /// Scales a day's raw rows with previously fitted scalers.
    pub fn scaled_day(&self, day: NaiveDate, scaler: &ScalerState, target_scaler: &ScalerState) -> Result<DayRows> {
        let mut rows = self.raw_day(day)?;
        rows.scale(scaler, target_scaler)?;
        Ok(rows)
    }
}

fn checked_day(series: &HourlySeries, day: NaiveDate) -> Result<&[f64]> {
    let values = series
        .day_values(day)
        .ok_or_else(|| EpfError::InsufficientHistory { earliest: day + Duration::days(1) })?;
    if let Some(h) = values.iter().position(|v| !v.is_finite()) {
        return Err(EpfError::MissingValue {
            series: series.key().to_string(),
            timestamp: crate::timeseries::day_start(day) + Duration::hours(h as i64),
        });
    }
    Ok(values)
}

/// The 24 rows of one target day. `y` holds actual prices, scaled iff `x` is.
#[derive(Debug, Clone, PartialEq)]
pub struct DayRows {
    pub day: NaiveDate,
    pub x: DMatrix<f64>,
    pub y: [f64; HOURS_PER_DAY],
}

impl DayRows {
    pub fn scale(&mut self, scaler: &ScalerState, target_scaler: &ScalerState) -> Result<()> {
        if scaler.width() != self.x.ncols() {
            return Err(EpfError::Shape(format!(
                "scaler has {} columns, rows have {}",
                scaler.width(),
                self.x.ncols()
            )));
        }
        for c in 0..self.x.ncols() {
            for r in 0..self.x.nrows() {
                self.x[(r, c)] = scaler.transform(c, self.x[(r, c)]);
            }
        }
        for v in &mut self.y {
            *v = target_scaler.transform(0, *v);
        }
        Ok(())
    }
}

/// Scaled features and targets over a range of target days.
#[derive(Debug, Clone)]
pub struct DesignMatrix {
    pub columns: Vec<ColumnInfo>,
    pub days: Vec<NaiveDate>,
    /// `days.len() * 24` rows, day-major.
    pub x: DMatrix<f64>,
    pub y: Vec<f64>,
    pub scaler: ScalerState,
    pub target_scaler: ScalerState,
    pub hour_block: Range<usize>,
    pub calibration: DateRange,
    pub config_label: String,
}

impl DesignMatrix {
    pub fn n_rows(&self) -> usize {
        self.x.nrows()
    }

    pub fn n_cols(&self) -> usize {
        self.x.ncols()
    }

    pub fn groups(&self) -> Vec<&str> {
        self.columns.iter().map(|c| c.group.as_str()).collect()
    }

    /// Distinct group names in column order.
    pub fn group_names(&self) -> Vec<String> {
        let mut out: Vec<String> = Vec::new();
        for c in &self.columns {
            if out.last() != Some(&c.group) && !out.contains(&c.group) {
                out.push(c.group.clone());
            }
        }
        out
    }

    pub fn day_rows(&self, index: usize) -> DayRows {
        let r0 = index * HOURS_PER_DAY;
        let mut y = [0.0; HOURS_PER_DAY];
        y.copy_from_slice(&self.y[r0..r0 + HOURS_PER_DAY]);
        DayRows {
            day: self.days[index],
            x: self.x.rows(r0, HOURS_PER_DAY).into_owned(),
            y,
        }
    }

    /// Rebuilds the matrix under another scaler family from the same raw data.
    pub fn rescaled(&self, kind: TransformKind) -> DesignMatrix {
        if kind == self.scaler.kind {
            return self.clone();
        }
        let mut scaler = self.scaler.clone();
        scaler.kind = kind;
        let mut target_scaler = self.target_scaler.clone();
        target_scaler.kind = kind;
        let mut x = self.x.clone();
        for c in 0..x.ncols() {
            for r in 0..x.nrows() {
                let raw = self.scaler.inverse(c, x[(r, c)]);
                x[(r, c)] = scaler.transform(c, raw);
            }
        }
        let y = self
            .y
            .iter()
            .map(|&v| target_scaler.transform(0, self.target_scaler.inverse(0, v)))
            .collect();
        DesignMatrix {
            x,
            y,
            scaler,
            target_scaler,
            ..self.clone()
        }
    }
}

/// Design rows for `target_days`, scaled with statistics of `calibration` days.
pub fn build_design(
    dataset: &MarketDataset,
    config: &CovariateConfig,
    target_days: DateRange,
    calibration: DateRange,
    kind: TransformKind,
) -> Result<DesignMatrix> {
    let builder = FeatureBuilder::new(dataset, config)?;
    build_with(&builder, target_days, calibration, kind)
}

pub fn build_with(
    builder: &FeatureBuilder<'_>,
    target_days: DateRange,
    calibration: DateRange,
    kind: TransformKind,
) -> Result<DesignMatrix> {
    let (scaler, target_scaler) = builder.fit_scalers(calibration, kind)?;
    let n_days = target_days.len_days();
    let width = builder.width();
    let mut x = DMatrix::zeros(n_days * HOURS_PER_DAY, width);
    let mut y = Vec::with_capacity(n_days * HOURS_PER_DAY);
    let mut days = Vec::with_capacity(n_days);
    for (i, day) in target_days.days().enumerate() {
        let rows = builder.scaled_day(day, &scaler, &target_scaler)?;
        x.rows_mut(i * HOURS_PER_DAY, HOURS_PER_DAY).copy_from(&rows.x);
        y.extend_from_slice(&rows.y);
        days.push(day);
    }
    Ok(DesignMatrix {
        columns: builder.columns().to_vec(),
        days,
        x,
        y,
        scaler,
        target_scaler,
        hour_block: builder.hour_block(),
        calibration,
        config_label: builder.config().label.clone(),
    })
}
