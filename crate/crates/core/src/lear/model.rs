use std::path::Path;

use nalgebra::DVector;
use serde::{Deserialize, Serialize};

use super::cv::{cv_select_folds, make_cv_plan, CvPlan, CvPoint, FoldData, DEFAULT_FOLDS};
use super::solver::{active_set, solve_stats, SolverOptions};
use crate::error::{EpfError, Result, ResultExt};
use crate::features::{ColumnInfo, DayRows, DesignMatrix, ScalerState};
use crate::timeseries::{DateRange, HOURS_PER_DAY};
use crate::SCHEMA_VERSION;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LearOptions {
    pub folds: usize,
    pub seed: u64,
    pub solver: SolverOptions,
}

impl Default for LearOptions {
    fn default() -> Self {
        LearOptions {
            folds: DEFAULT_FOLDS,
            seed: 0,
            solver: SolverOptions::default(),
        }
    }
}

/// A calibrated LEAR model. Coefficients live in the scaled feature space.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LassoFit {
    pub schema_version: u32,
    pub config_label: String,
    pub columns: Vec<ColumnInfo>,
    pub beta: Vec<f64>,
    pub intercept: f64,
    pub lambda: f64,
    pub active_set: Vec<usize>,
    pub scaler: ScalerState,
    pub target_scaler: ScalerState,
    pub calibration: DateRange,
    #[serde(default)]
    pub cv_curve: Vec<CvPoint>,
}

impl LassoFit {
    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)?)
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let fit: LassoFit = serde_json::from_str(text)?;
        if fit.schema_version != SCHEMA_VERSION {
            return Err(EpfError::config(
                "schema_version",
                format!("expected {SCHEMA_VERSION}, found {}", fit.schema_version),
            ));
        }
        fit.validate()?;
        Ok(fit)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)?;
        Self::from_json(&text).context(|| format!("model {}", path.display()))
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        crate::io::write_json(path, self)
    }

    fn validate(&self) -> Result<()> {
        let p = self.columns.len();
        if self.beta.len() != p || self.scaler.width() != p {
            return Err(EpfError::Shape(format!(
                "{} columns, {} coefficients, scaler width {}",
                p,
                self.beta.len(),
                self.scaler.width()
            )));
        }
        if !(self.lambda >= 0.0) {
            return Err(EpfError::config("lambda", "must be non-negative"));
        }
        let nonzero = self.beta.iter().filter(|b| **b != 0.0).count();
        if nonzero != self.active_set.len() || self.active_set.iter().any(|&j| j >= p || self.beta[j] == 0.0) {
            return Err(EpfError::config("active_set", "does not match the nonzero coefficients"));
        }
        Ok(())
    }

    /// Errors unless `columns` is exactly the column set the model was fitted on.
    pub fn check_columns(&self, columns: &[ColumnInfo]) -> Result<()> {
        if columns != self.columns.as_slice() {
            let missing = self.columns.iter().find(|c| !columns.contains(c));
            return Err(EpfError::Shape(format!(
                "feature columns differ from the fitted model ({} vs {} columns{})",
                columns.len(),
                self.columns.len(),
                missing.map(|c| format!(", e.g. `{}` absent", c.name)).unwrap_or_default()
            )));
        }
        Ok(())
    }
}

/// Cross-validates λ on `design` with `plan`, then refits on all rows.
pub fn fit_lear(design: &DesignMatrix, plan: &CvPlan) -> Result<LassoFit> {
    fit_with_plan(design, plan, &SolverOptions::default())
}

/// Builds a day-level plan from `opts` and fits.
pub fn fit_lear_with(design: &DesignMatrix, opts: &LearOptions) -> Result<LassoFit> {
    let plan = make_cv_plan(&design.days, opts.folds, opts.seed, &design.x, &design.y)?;
    fit_with_plan(design, &plan, &opts.solver)
}

fn fit_with_plan(design: &DesignMatrix, plan: &CvPlan, solver: &SolverOptions) -> Result<LassoFit> {
    if plan.fold_of_block.len() != design.days.len() || plan.rows_per_block != HOURS_PER_DAY {
        return Err(EpfError::Shape(format!(
            "plan covers {} blocks of {}, design has {} days",
            plan.fold_of_block.len(),
            plan.rows_per_block,
            design.days.len()
        )));
    }
    let data = FoldData::new(&design.x, &design.y, plan)?;
    let cv = cv_select_folds(&data, plan, solver)?;
    let stats = data.full_stats();
    let sol = solve_stats(&stats, cv.lambda_star, None, solver).context(|| "final LEAR fit")?;
    Ok(LassoFit {
        schema_version: SCHEMA_VERSION,
        config_label: design.config_label.clone(),
        columns: design.columns.clone(),
        active_set: active_set(&sol.beta),
        beta: sol.beta.iter().copied().collect(),
        intercept: sol.intercept,
        lambda: cv.lambda_star,
        scaler: design.scaler.clone(),
        target_scaler: design.target_scaler.clone(),
        calibration: design.calibration,
        cv_curve: cv.curve,
    })
}

/// Predictions in the scaled target space.
pub fn predict_normalized(fit: &LassoFit, rows: &DayRows) -> Result<[f64; HOURS_PER_DAY]> {
    if rows.x.ncols() != fit.beta.len() || rows.x.nrows() != HOURS_PER_DAY {
        return Err(EpfError::Shape(format!(
            "day rows are {}x{}, model expects 24x{}",
            rows.x.nrows(),
            rows.x.ncols(),
            fit.beta.len()
        )));
    }
    let beta = DVector::from_column_slice(&fit.beta);
    let yhat = &rows.x * beta;
    let mut out = [0.0; HOURS_PER_DAY];
    for (h, v) in out.iter_mut().enumerate() {
        *v = fit.intercept + yhat[h];
    }
    Ok(out)
}

/// Prices for hours 0..23 of the day in `rows`, which must be scaled with the
/// fit's scaler.
pub fn predict_lear(fit: &LassoFit, rows: &DayRows) -> Result<[f64; HOURS_PER_DAY]> {
    let mut out = predict_normalized(fit, rows)?;
    for v in &mut out {
        *v = fit.target_scaler.inverse(0, *v);
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::features::{build_design, CovariateConfig, TransformKind};
    use crate::ingest::{generate_synthetic, SyntheticConfig};
    use chrono::NaiveDate;

    fn near_noiseless() -> SyntheticConfig {
        serde_json::from_value(serde_json::json!({
            "seed": 3,
            "n_days": 120,
            "start": "2023-01-01",
            "shared_spikes": {"prob": 0.0, "scale": 0.0},
            "zones": [
                {"name": "A", "coupling": 20.0, "noise_sd": 0.05, "spike_prob": 0.0, "spike_scale": 0.0,
                 "fundamentals": {"load_coef": 0.0, "wind_coef": 0.0, "solar_coef": 0.0}},
                {"name": "B", "coupling": 20.0, "noise_sd": 0.05, "spike_prob": 0.0, "spike_scale": 0.0,
                 "fundamentals": {"load_coef": 0.0, "wind_coef": 0.0, "solar_coef": 0.0}}
            ]
        }))
        .unwrap()
    }

    fn fitted() -> (crate::timeseries::MarketDataset, CovariateConfig, DesignMatrix, LassoFit) {
        let ds = generate_synthetic(&near_noiseless()).unwrap();
        let cfg = CovariateConfig {
            label: "A+B".into(),
            target_zone: "A".into(),
            base_variables: vec![],
            neighbor_price_zones: vec!["B".into()],
        };
        let start = NaiveDate::from_ymd_opt(2023, 1, 8).unwrap();
        let window = DateRange::new(start, start + chrono::Duration::days(59)).unwrap();
        let design = build_design(&ds, &cfg, window, window, TransformKind::Norm).unwrap();
        let fit = fit_lear_with(&design, &LearOptions::default()).unwrap();
        (ds, cfg, design, fit)
    }

    #[test]
    fn near_noiseless_calibration_day_is_accurate() {
        let (_, _, design, fit) = fitted();
        let rows = design.day_rows(10);
        let pred = predict_lear(&fit, &rows).unwrap();
        for h in 0..24 {
            let actual = design.target_scaler.inverse(0, rows.y[h]);
            assert!((pred[h] - actual).abs() < 1.0, "hour {h}: {} vs {actual}", pred[h]);
        }
    }

    #[test]
    fn zero_fit_predicts_intercept() {
        let (_, _, design, mut fit) = fitted();
        fit.beta.iter_mut().for_each(|b| *b = 0.0);
        fit.active_set.clear();
        let pred = predict_lear(&fit, &design.day_rows(0)).unwrap();
        let expected = fit.target_scaler.inverse(0, fit.intercept);
        assert!(pred.iter().all(|v| *v == expected));
    }

    #[test]
    fn column_order_does_not_matter() {
        let (_, _, design, fit) = fitted();
        let p = design.n_cols();
        let perm: Vec<usize> = (0..p).rev().collect();
        let mut permuted = design.clone();
        permuted.columns = perm.iter().map(|&j| design.columns[j].clone()).collect();
        permuted.x = design.x.select_columns(&perm);
        permuted.scaler.min = perm.iter().map(|&j| design.scaler.min[j]).collect();
        permuted.scaler.max = perm.iter().map(|&j| design.scaler.max[j]).collect();
        let fit2 = fit_lear_with(&permuted, &LearOptions::default()).unwrap();
        assert_eq!(fit.lambda, fit2.lambda);
        for d in 0..design.days.len() {
            let a = predict_lear(&fit, &design.day_rows(d)).unwrap();
            let b = predict_lear(&fit2, &permuted.day_rows(d)).unwrap();
            for h in 0..24 {
                assert!((a[h] - b[h]).abs() < 1e-10, "{} vs {}", a[h], b[h]);
            }
        }
    }

    #[test]
    fn json_round_trip_and_checks() {
        let (_, _, design, fit) = fitted();
        let back = LassoFit::from_json(&fit.to_json().unwrap()).unwrap();
        assert_eq!(back, fit);
        assert!(fit.check_columns(&design.columns).is_ok());
        assert!(fit.check_columns(&design.columns[1..]).is_err());
        let mut bad = fit.clone();
        bad.schema_version = 99;
        assert!(LassoFit::from_json(&bad.to_json().unwrap()).is_err());
        let mut rows = design.day_rows(0);
        rows.x = rows.x.columns(0, 10).into_owned();
        assert!(predict_lear(&fit, &rows).is_err());
    }
}
