//! Rolling-origin backtests.
//!
//! For each test day D the model is refitted on the window [D − cw, D − 1]
//! whenever the recalibration schedule fires; otherwise the previous model and
//! its scaler are reused, so day-D inputs may fall outside the scaled range.

use std::fmt;
use std::path::Path;
use std::time::Instant;

use chrono::{Datelike, Duration, NaiveDate, Weekday};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::dnn::{predict_dnn, tpe_optimize, train, HyperConfig, MlpParams, SearchSpace, Split};
use crate::error::{EpfError, Result, ResultExt};
use crate::features::{build_with, CovariateConfig, DayRows, FeatureBuilder, TransformKind, MAX_LAG_DAYS};
use crate::lear::{fit_lear_with, predict_lear, LassoFit, LearOptions};
use crate::timeseries::{DateRange, MarketDataset, HOURS_PER_DAY};
use crate::SCHEMA_VERSION;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "UPPERCASE")]
pub enum ModelKind {
    Lear,
    Dnn,
}

impl fmt::Display for ModelKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            ModelKind::Lear => "LEAR",
            ModelKind::Dnn => "DNN",
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Recalibration {
    Daily,
    Weekly,
    Monthly,
    Once,
}

impl Recalibration {
    pub const ALL: [Recalibration; 4] = [
        Recalibration::Daily,
        Recalibration::Weekly,
        Recalibration::Monthly,
        Recalibration::Once,
    ];

    /// Whether the model is refitted before forecasting `day`. Weekly fires on
    /// Mondays, monthly on the 1st, and every schedule fires on the first day.
    pub fn fires(self, day: NaiveDate, first: NaiveDate) -> bool {
        day == first
            || match self {
                Recalibration::Daily => true,
                Recalibration::Weekly => day.weekday() == Weekday::Mon,
                Recalibration::Monthly => day.day() == 1,
                Recalibration::Once => false,
            }
    }

    /// Days in `range` on which the model is refitted.
    pub fn schedule(self, range: DateRange) -> Vec<NaiveDate> {
        range.days().filter(|d| self.fires(*d, range.start)).collect()
    }
}

impl fmt::Display for Recalibration {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Recalibration::Daily => "daily",
            Recalibration::Weekly => "weekly",
            Recalibration::Monthly => "monthly",
            Recalibration::Once => "once",
        })
    }
}

/// How the network's hyperparameters are chosen.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct DnnSettings {
    /// Fixed hyperparameters; when absent they are tuned once on the first
    /// calibration window and kept for the rest of the run.
    pub hyper: Option<HyperConfig>,
    pub tpe_trials: usize,
    pub space: Option<SearchSpace>,
}

impl Default for DnnSettings {
    fn default() -> Self {
        DnnSettings {
            hyper: None,
            tpe_trials: 20,
            space: None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct BacktestConfig {
    /// Defaults to `MODEL_CWn_rf_covariates`.
    #[serde(default)]
    pub label: Option<String>,
    pub model: ModelKind,
    pub cw_days: usize,
    pub rf: Recalibration,
    pub covariates: CovariateConfig,
    pub test_range: DateRange,
    #[serde(default)]
    pub seed: u64,
    /// Input scaling for LEAR; the network uses its own config's transform.
    #[serde(default = "default_transform")]
    pub transform: TransformKind,
    #[serde(default)]
    pub dnn: DnnSettings,
}

fn default_transform() -> TransformKind {
    TransformKind::Norm
}

impl BacktestConfig {
    pub fn label(&self) -> String {
        self.label.clone().unwrap_or_else(|| {
            format!("{}_CW{}_{}_{}", self.model, self.cw_days, self.rf, self.covariates.label)
        })
    }

    pub fn validate(&self, dataset: &MarketDataset) -> Result<()> {
        self.covariates.validate()?;
        if self.cw_days < 2 {
            return Err(EpfError::config("cw_days", format!("need at least 2 days, got {}", self.cw_days)));
        }
        let span = dataset.span();
        let earliest = span.start + Duration::days(self.cw_days as i64 + MAX_LAG_DAYS);
        if self.test_range.start < earliest {
            return Err(EpfError::config(
                "test_range",
                format!(
                    "starts {} but a {}-day window needs data from {}; earliest feasible start is {earliest}",
                    self.test_range.start,
                    self.cw_days,
                    span.start
                ),
            ));
        }
        if self.test_range.end > span.end {
            return Err(EpfError::config(
                "test_range",
                format!("ends {} after the data ({})", self.test_range.end, span.end),
            ));
        }
        if let Some(h) = &self.dnn.hyper {
            h.validate()?;
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct RuntimeReport {
    pub total_wall_seconds: f64,
    pub per_day_average_seconds: f64,
    pub recalibration_count: usize,
    /// For ensembles: the members' summed wall time (the total is their max).
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub member_sum_seconds: Option<f64>,
}

/// Hourly forecasts over contiguous days.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ForecastSet {
    pub label: String,
    pub days: Vec<NaiveDate>,
    pub values: Vec<[f64; HOURS_PER_DAY]>,
    #[serde(default)]
    pub runtime: RuntimeReport,
}

impl ForecastSet {
    pub fn new(label: impl Into<String>, days: Vec<NaiveDate>, values: Vec<[f64; HOURS_PER_DAY]>) -> Result<Self> {
        let set = ForecastSet {
            label: label.into(),
            days,
            values,
            runtime: RuntimeReport::default(),
        };
        set.validate()?;
        Ok(set)
    }

    fn validate(&self) -> Result<()> {
        if self.days.len() != self.values.len() {
            return Err(EpfError::Shape(format!(
                "{} days but {} daily value rows",
                self.days.len(),
                self.values.len()
            )));
        }
        for w in self.days.windows(2) {
            if w[1] != w[0] + Duration::days(1) {
                return Err(EpfError::config("days", format!("not contiguous between {} and {}", w[0], w[1])));
            }
        }
        for (d, row) in self.days.iter().zip(&self.values) {
            if let Some(h) = row.iter().position(|v| !v.is_finite()) {
                return Err(EpfError::config("values", format!("non-finite value at {d} hour {h}")));
            }
        }
        Ok(())
    }

    pub fn range(&self) -> Option<DateRange> {
        Some(DateRange {
            start: *self.days.first()?,
            end: *self.days.last()?,
        })
    }

    /// Values in day-major, hour-minor order.
    pub fn flat(&self) -> Vec<f64> {
        self.values.iter().flatten().copied().collect()
    }

    pub fn to_csv(&self) -> String {
        let mut out = String::from("day,hour,value,label\n");
        for (d, row) in self.days.iter().zip(&self.values) {
            for (h, v) in row.iter().enumerate() {
                out.push_str(&format!("{d},{h},{v},{}\n", csv_field(&self.label)));
            }
        }
        out
    }

    pub fn from_csv_str(text: &str, origin: &str) -> Result<Self> {
        #[derive(Deserialize)]
        struct Row {
            day: NaiveDate,
            hour: usize,
            value: f64,
            label: String,
        }
        let mut reader = csv::Reader::from_reader(text.as_bytes());
        let mut label: Option<String> = None;
        let mut days: Vec<NaiveDate> = Vec::new();
        let mut values: Vec<[f64; HOURS_PER_DAY]> = Vec::new();
        let mut n_rows = 0;
        for (i, rec) in reader.deserialize::<Row>().enumerate() {
            let line = i + 2;
            let parse_err = |reason: String| EpfError::Parse {
                path: origin.to_string(),
                line,
                reason,
            };
            let row = rec.map_err(|e| parse_err(e.to_string()))?;
            match &label {
                None => label = Some(row.label.clone()),
                Some(l) if *l != row.label => {
                    return Err(parse_err(format!("label `{}` differs from `{l}`", row.label)));
                }
                _ => {}
            }
            let expected_hour = i % HOURS_PER_DAY;
            if row.hour != expected_hour {
                return Err(parse_err(format!("expected hour {expected_hour}, found {}", row.hour)));
            }
            if expected_hour == 0 {
                days.push(row.day);
                values.push([0.0; HOURS_PER_DAY]);
            } else if days.last() != Some(&row.day) {
                return Err(parse_err(format!("day {} starts before the previous day is complete", row.day)));
            }
            values.last_mut().expect("row started")[row.hour] = row.value;
            n_rows += 1;
        }
        if n_rows % HOURS_PER_DAY != 0 {
            return Err(EpfError::MalformedFile {
                path: origin.to_string(),
                reason: format!("{n_rows} rows do not make whole days"),
            });
        }
        let label = label.ok_or_else(|| EpfError::MalformedFile {
            path: origin.to_string(),
            reason: "no forecast rows".into(),
        })?;
        let set = ForecastSet {
            label,
            days,
            values,
            runtime: RuntimeReport::default(),
        };
        set.validate().context(|| origin.to_string())?;
        Ok(set)
    }

    pub fn read_csv(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)?;
        Self::from_csv_str(&text, &path.display().to_string())
    }

    pub fn write_csv(&self, path: &Path) -> Result<()> {
        crate::io::write_atomic(path, self.to_csv().as_bytes())
    }

    /// The same forecasts restricted to `range`.
    pub fn restrict(&self, range: DateRange) -> Result<ForecastSet> {
        let idx: Vec<usize> = (0..self.days.len()).filter(|&i| range.contains(self.days[i])).collect();
        if idx.len() != range.len_days() {
            return Err(EpfError::config(
                "range",
                format!("{range} is not covered by forecasts `{}`", self.label),
            ));
        }
        Ok(ForecastSet {
            label: self.label.clone(),
            days: idx.iter().map(|&i| self.days[i]).collect(),
            values: idx.iter().map(|&i| self.values[i]).collect(),
            runtime: self.runtime.clone(),
        })
    }
}

fn csv_field(s: &str) -> String {
    if s.contains([',', '"', '\n']) {
        format!("\"{}\"", s.replace('"', "\"\""))
    } else {
        s.to_string()
    }
}

/// A model together with the first test day it was used for.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub enum FittedModel {
    Lear(LassoFit),
    Dnn(MlpParams),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Calibration {
    pub first_day: NaiveDate,
    pub model: FittedModel,
}

#[derive(Debug, Clone, PartialEq)]
pub struct BacktestRun {
    pub forecast: ForecastSet,
    /// One entry per recalibration, in test-day order.
    pub calibrations: Vec<Calibration>,
    /// Scaled feature rows of each test day, as fed to the model.
    pub rows: Vec<DayRows>,
    /// Hyperparameters chosen for the network, when tuned.
    pub tuned: Option<HyperConfig>,
}

impl BacktestRun {
    /// Index into `calibrations` of the model used for test day `i`.
    pub fn calibration_of_day(&self, i: usize) -> usize {
        let day = self.forecast.days[i];
        self.calibrations.partition_point(|c| c.first_day <= day) - 1
    }
}

/// Runs one backtest and keeps only its forecasts.
pub fn run_backtest(dataset: &MarketDataset, config: &BacktestConfig) -> Result<ForecastSet> {
    Ok(run_backtest_detailed(dataset, config)?.forecast)
}

/// Runs one backtest, keeping every fitted model and the scaled test rows.
pub fn run_backtest_detailed(dataset: &MarketDataset, config: &BacktestConfig) -> Result<BacktestRun> {
    config.validate(dataset)?;
    let label = config.label();
    let builder = FeatureBuilder::new(dataset, &config.covariates)?;
    let mut hyper = config.dnn.hyper.clone();
    let mut tuned = None;
    let mut current: Option<FittedModel> = None;
    let mut calibrations = Vec::new();
    let mut days = Vec::with_capacity(config.test_range.len_days());
    let mut values = Vec::with_capacity(config.test_range.len_days());
    let mut rows_out = Vec::with_capacity(config.test_range.len_days());
    let mut elapsed = 0.0;
    for day in config.test_range.days() {
        let ctx = || format!("backtest {label}, day {day}");
        let started = Instant::now();
        if config.rf.fires(day, config.test_range.start) || current.is_none() {
            let window = DateRange::new(day - Duration::days(config.cw_days as i64), day - Duration::days(1))?;
            let model = match config.model {
                ModelKind::Lear => {
                    let design = build_with(&builder, window, window, config.transform).context(ctx)?;
                    let opts = LearOptions {
                        seed: config.seed,
                        ..LearOptions::default()
                    };
                    FittedModel::Lear(fit_lear_with(&design, &opts).context(ctx)?)
                }
                ModelKind::Dnn => {
                    if hyper.is_none() {
                        let design = build_with(&builder, window, window, TransformKind::Norm).context(ctx)?;
                        let space = config.dnn.space.clone().unwrap_or_else(|| SearchSpace::for_design(&design));
                        let best = tpe_optimize(&design, &space, config.dnn.tpe_trials, config.seed).context(ctx)?;
                        tuned = Some(best.clone());
                        hyper = Some(best);
                    }
                    let h = hyper.as_ref().expect("hyperparameters set");
                    let design = build_with(&builder, window, window, h.transform).context(ctx)?;
                    FittedModel::Dnn(train(&design, h, &Split::default(), config.seed).context(ctx)?)
                }
            };
            calibrations.push(Calibration {
                first_day: day,
                model: model.clone(),
            });
            current = Some(model);
        }
        let (pred, rows) = match current.as_ref().expect("model fitted") {
            FittedModel::Lear(fit) => {
                let rows = builder.scaled_day(day, &fit.scaler, &fit.target_scaler).context(ctx)?;
                (predict_lear(fit, &rows).context(ctx)?, rows)
            }
            FittedModel::Dnn(p) => {
                let rows = builder.scaled_day(day, &p.scaler, &p.target_scaler).context(ctx)?;
                (predict_dnn(p, &rows).context(ctx)?, rows)
            }
        };
        elapsed += started.elapsed().as_secs_f64();
        if let Some(h) = pred.iter().position(|v| !v.is_finite()) {
            return Err(EpfError::config("forecast", format!("non-finite prediction at hour {h}"))).context(ctx);
        }
        days.push(day);
        values.push(pred);
        rows_out.push(rows);
    }
    let n = days.len();
    let forecast = ForecastSet {
        label,
        days,
        values,
        runtime: RuntimeReport {
            total_wall_seconds: elapsed,
            per_day_average_seconds: elapsed / n as f64,
            recalibration_count: calibrations.len(),
            member_sum_seconds: None,
        },
    };
    Ok(BacktestRun {
        forecast,
        calibrations,
        rows: rows_out,
        tuned,
    })
}

/// Runs independent backtests in parallel; results keep the input order.
pub fn run_backtests(dataset: &MarketDataset, configs: &[BacktestConfig]) -> Vec<Result<BacktestRun>> {
    configs.par_iter().map(|c| run_backtest_detailed(dataset, c)).collect()
}

/// Seasonal persistence: the price observed seven days earlier.
pub fn naive_forecast(dataset: &MarketDataset, zone: &str, test_range: DateRange) -> Result<ForecastSet> {
    let prices = dataset.price(zone)?;
    let mut values = Vec::with_capacity(test_range.len_days());
    for day in test_range.days() {
        let source = day - Duration::days(7);
        let row = prices.day_values(source).ok_or(EpfError::InsufficientHistory {
            earliest: dataset.span().start + Duration::days(7),
        })?;
        let mut out = [0.0; HOURS_PER_DAY];
        out.copy_from_slice(row);
        values.push(out);
    }
    ForecastSet::new("naive", test_range.days().collect(), values)
}

/// Observed prices of `zone` over `range`.
pub fn actuals(dataset: &MarketDataset, zone: &str, range: DateRange) -> Result<ForecastSet> {
    let prices = dataset.price(zone)?;
    let mut values = Vec::with_capacity(range.len_days());
    for day in range.days() {
        let row = prices
            .day_values(day)
            .ok_or_else(|| EpfError::config("range", format!("no {zone} prices on {day}")))?;
        let mut out = [0.0; HOURS_PER_DAY];
        out.copy_from_slice(row);
        values.push(out);
    }
    ForecastSet::new("actual", range.days().collect(), values)
}

/// Members expected by the strict ensemble: two models over four windows.
pub const STRICT_ENSEMBLE_SIZE: usize = 8;

/// Pointwise mean of `members`. The runtime is the slowest member's, as if
/// members ran in parallel; the sum is recorded alongside.
pub fn ensemble(label: &str, members: &[ForecastSet], strict: bool) -> Result<ForecastSet> {
    let first = members
        .first()
        .ok_or_else(|| EpfError::config("members", "ensemble needs at least one member"))?;
    if strict && members.len() != STRICT_ENSEMBLE_SIZE {
        return Err(EpfError::config(
            "members",
            format!("strict ensemble needs {STRICT_ENSEMBLE_SIZE} members, got {}", members.len()),
        ));
    }
    for m in &members[1..] {
        if m.days != first.days {
            return Err(EpfError::config(
                "members",
                format!(
                    "`{}` covers {} but `{}` covers {}",
                    m.label,
                    m.range().map(|r| r.to_string()).unwrap_or_default(),
                    first.label,
                    first.range().map(|r| r.to_string()).unwrap_or_default()
                ),
            ));
        }
    }
    let k = members.len() as f64;
    let values = (0..first.days.len())
        .map(|d| {
            let mut row = [0.0; HOURS_PER_DAY];
            for (h, v) in row.iter_mut().enumerate() {
                // offset from the first member, so equal members average exactly
                let x0 = first.values[d][h];
                *v = x0 + members.iter().map(|m| m.values[d][h] - x0).sum::<f64>() / k;
            }
            row
        })
        .collect();
    let total = members.iter().map(|m| m.runtime.total_wall_seconds).fold(0.0, f64::max);
    let sum = members.iter().map(|m| m.runtime.total_wall_seconds).sum::<f64>();
    let n = first.days.len().max(1) as f64;
    Ok(ForecastSet {
        label: label.to_string(),
        days: first.days.clone(),
        values,
        runtime: RuntimeReport {
            total_wall_seconds: total,
            per_day_average_seconds: total / n,
            recalibration_count: members.iter().map(|m| m.runtime.recalibration_count).sum(),
            member_sum_seconds: Some(sum),
        },
    })
}

/// Runtime document written next to a forecast CSV.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RuntimeDocument {
    pub schema_version: u32,
    pub label: String,
    pub runtime: RuntimeReport,
}

impl RuntimeDocument {
    pub fn of(set: &ForecastSet) -> Self {
        RuntimeDocument {
            schema_version: SCHEMA_VERSION,
            label: set.label.clone(),
            runtime: set.runtime.clone(),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::ingest::{generate_synthetic, SyntheticConfig};

    fn d(s: &str) -> NaiveDate {
        NaiveDate::parse_from_str(s, "%Y-%m-%d").unwrap()
    }

    fn year_2024() -> DateRange {
        DateRange::new(d("2024-01-01"), d("2024-12-31")).unwrap()
    }

    #[test]
    fn schedule_counts_over_a_leap_year() {
        let counts: Vec<usize> = Recalibration::ALL.iter().map(|r| r.schedule(year_2024()).len()).collect();
        assert_eq!(counts, vec![366, 53, 12, 1]);
        let q1 = DateRange::new(d("2024-01-01"), d("2024-03-31")).unwrap();
        assert_eq!(Recalibration::Monthly.schedule(q1).len(), 3);
    }

    #[test]
    fn schedules_nest_for_any_start() {
        for offset in 0..40 {
            let start = d("2023-11-20") + Duration::days(offset);
            let r = DateRange::new(start, start + Duration::days(offset * 3 + 5)).unwrap();
            let c: Vec<usize> = Recalibration::ALL.iter().map(|x| x.schedule(r).len()).collect();
            assert!(c[0] >= c[1] && c[1] >= c[2] && c[2] >= c[3] && c[3] == 1, "{c:?}");
        }
    }

    fn set(label: &str, v: f64) -> ForecastSet {
        let days: Vec<NaiveDate> = DateRange::new(d("2024-01-01"), d("2024-01-03")).unwrap().days().collect();
        let values = days.iter().map(|_| [v; HOURS_PER_DAY]).collect();
        ForecastSet::new(label, days, values).unwrap()
    }

    #[test]
    fn ensemble_means() {
        let vals = [10.0, 20.0, 30.0, 40.0, 10.0, 20.0, 30.0, 40.0];
        let members: Vec<ForecastSet> = vals.iter().map(|v| set("m", *v)).collect();
        let e = ensemble("ens", &members, true).unwrap();
        assert!(e.flat().iter().all(|v| *v == 25.0));
        let mut rev = members.clone();
        rev.reverse();
        assert_eq!(ensemble("ens", &rev, true).unwrap().values, e.values);
        let same = vec![set("m", 7.5); 8];
        assert_eq!(ensemble("ens", &same, true).unwrap().values, same[0].values);
        let pm = ensemble("ens", &[set("a", 3.0), set("b", -3.0)], false).unwrap();
        assert!(pm.flat().iter().all(|v| *v == 0.0));
        assert!(ensemble("ens", &members[..7], true).is_err());
        let mut short = set("s", 1.0);
        short.days.pop();
        short.values.pop();
        assert!(ensemble("ens", &[set("a", 1.0), short], false).is_err());
    }

    #[test]
    fn ensemble_runtime_is_max_with_sum() {
        let mut a = set("a", 1.0);
        let mut b = set("b", 1.0);
        a.runtime.total_wall_seconds = 2.0;
        b.runtime.total_wall_seconds = 5.0;
        let e = ensemble("e", &[a, b], false).unwrap();
        assert_eq!(e.runtime.total_wall_seconds, 5.0);
        assert_eq!(e.runtime.member_sum_seconds, Some(7.0));
        assert_eq!(e.runtime.per_day_average_seconds, 5.0 / 3.0);
    }

    #[test]
    fn csv_round_trip_is_exact() {
        let days: Vec<NaiveDate> = DateRange::new(d("2024-02-28"), d("2024-03-01")).unwrap().days().collect();
        let values = (0..3)
            .map(|i| {
                let mut r = [0.0; HOURS_PER_DAY];
                for (h, v) in r.iter_mut().enumerate() {
                    *v = (i * 24 + h) as f64 / 7.0 - 3.3e-5 + 1e17 * (h == 5) as u8 as f64;
                }
                r
            })
            .collect();
        let f = ForecastSet::new("LEAR, \"x\"", days, values).unwrap();
        let back = ForecastSet::from_csv_str(&f.to_csv(), "mem").unwrap();
        assert_eq!(back.values, f.values);
        assert_eq!(back.label, f.label);
        assert_eq!(back.to_csv(), f.to_csv());
        let bad = f.to_csv().replacen(",1,", ",2,", 1);
        assert!(ForecastSet::from_csv_str(&bad, "mem").is_err());
    }

    fn dataset() -> MarketDataset {
        let cfg: SyntheticConfig = serde_json::from_value(serde_json::json!({
            "seed": 4,
            "n_days": 120,
            "start": "2023-11-25",
            "zones": [
                {"name": "A", "coupling": 25.0, "noise_sd": 2.0},
                {"name": "B", "coupling": 25.0, "noise_sd": 2.0}
            ]
        }))
        .unwrap();
        generate_synthetic(&cfg).unwrap()
    }

    fn config(rf: Recalibration, range: DateRange) -> BacktestConfig {
        BacktestConfig {
            label: None,
            model: ModelKind::Lear,
            cw_days: 56,
            rf,
            covariates: CovariateConfig {
                label: "base".into(),
                target_zone: "A".into(),
                base_variables: vec!["load".into()],
                neighbor_price_zones: vec![],
            },
            test_range: range,
            seed: 0,
            transform: TransformKind::Norm,
            dnn: DnnSettings::default(),
        }
    }

    #[test]
    fn naive_repeats_last_week() {
        let ds = dataset();
        let r = DateRange::new(d("2024-01-10"), d("2024-01-20")).unwrap();
        let n = naive_forecast(&ds, "A", r).unwrap();
        let a = actuals(&ds, "A", DateRange::new(d("2024-01-03"), d("2024-01-13")).unwrap()).unwrap();
        assert_eq!(n.values, a.values);
        assert!(naive_forecast(&ds, "A", DateRange::new(d("2023-11-28"), d("2023-12-09")).unwrap()).is_err());
    }

    #[test]
    fn first_day_of_daily_run_is_reproduced_alone() {
        let ds = dataset();
        let full = DateRange::new(d("2024-02-01"), d("2024-02-04")).unwrap();
        let run = run_backtest_detailed(&ds, &config(Recalibration::Daily, full)).unwrap();
        assert_eq!(run.forecast.runtime.recalibration_count, 4);
        let one = run_backtest(&ds, &config(Recalibration::Daily, DateRange::single(full.start))).unwrap();
        assert_eq!(one.values[0], run.forecast.values[0]);
        assert_eq!(run.calibration_of_day(2), 2);
    }

    #[test]
    fn stale_model_is_reused_between_refits() {
        let ds = dataset();
        let r = DateRange::new(d("2024-02-01"), d("2024-02-10")).unwrap();
        let run = run_backtest_detailed(&ds, &config(Recalibration::Weekly, r)).unwrap();
        let firsts: Vec<NaiveDate> = run.calibrations.iter().map(|c| c.first_day).collect();
        assert_eq!(firsts, vec![d("2024-02-01"), d("2024-02-05")]);
        assert_eq!(run.calibration_of_day(3), 0);
        assert_eq!(run.calibration_of_day(4), 1);
        let FittedModel::Lear(fit) = &run.calibrations[0].model else { panic!() };
        assert_eq!(fit.calibration, DateRange::new(d("2023-12-07"), d("2024-01-31")).unwrap());
        let rt = &run.forecast.runtime;
        assert!((rt.per_day_average_seconds * 10.0 - rt.total_wall_seconds).abs() < 1e-12);
    }

    #[test]
    fn infeasible_window_is_rejected() {
        let ds = dataset();
        let r = DateRange::new(d("2024-01-20"), d("2024-01-25")).unwrap();
        let err = run_backtest(&ds, &config(Recalibration::Once, r)).unwrap_err();
        assert!(err.to_string().contains("test_range"), "{err}");
    }

    #[test]
    fn parallel_runs_match_sequential() {
        let ds = dataset();
        let r = DateRange::new(d("2024-02-01"), d("2024-02-03")).unwrap();
        let configs: Vec<BacktestConfig> = Recalibration::ALL.iter().map(|rf| config(*rf, r)).collect();
        let par = run_backtests(&ds, &configs);
        for (c, p) in configs.iter().zip(par) {
            assert_eq!(p.unwrap().forecast.values, run_backtest(&ds, c).unwrap().values);
        }
    }
}
