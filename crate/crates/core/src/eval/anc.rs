//! Absolute normalized contributions of LEAR feature groups.
//!
//! For forecast hour i and group j, C_ij = Σ_{f∈j} x_if β_if in the scaled
//! space, with β the coefficients of the model that produced the forecast.
//! ANC_j is the mean of |C_ij| over all forecast hours.

use serde::{Deserialize, Serialize};

use crate::backtest::{BacktestRun, FittedModel};
use crate::error::{EpfError, Result};
use crate::features::{ColumnInfo, DayRows};
use crate::lear::LassoFit;
use crate::SCHEMA_VERSION;

/// Group names in first-appearance order, with the member columns of each.
pub fn group_index(columns: &[ColumnInfo]) -> Vec<(String, Vec<usize>)> {
    let mut groups: Vec<(String, Vec<usize>)> = Vec::new();
    for (j, c) in columns.iter().enumerate() {
        match groups.iter_mut().find(|(g, _)| *g == c.group) {
            Some((_, members)) => members.push(j),
            None => groups.push((c.group.clone(), vec![j])),
        }
    }
    groups
}

/// Per-hour group contributions for one day, shaped hours × groups.
pub fn contributions(fit: &LassoFit, rows: &DayRows, groups: &[(String, Vec<usize>)]) -> Result<Vec<Vec<f64>>> {
    if rows.x.ncols() != fit.beta.len() {
        return Err(EpfError::Shape(format!(
            "rows have {} columns, model has {}",
            rows.x.ncols(),
            fit.beta.len()
        )));
    }
    Ok((0..rows.x.nrows())
        .map(|h| {
            groups
                .iter()
                .map(|(_, members)| members.iter().map(|&f| rows.x[(h, f)] * fit.beta[f]).sum())
                .collect()
        })
        .collect())
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AncEntry {
    pub group: String,
    pub anc: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AncReport {
    pub schema_version: u32,
    /// Groups in column order.
    pub groups: Vec<AncEntry>,
    /// Group names by decreasing ANC.
    pub ranking: Vec<String>,
    pub n_hours: usize,
}

/// ANC over forecast days, each paired with the fit that produced it.
pub fn anc(days: &[(&LassoFit, &DayRows)]) -> Result<AncReport> {
    let (first, _) = days.first().ok_or_else(|| EpfError::config("days", "no forecasts to attribute"))?;
    let groups = group_index(&first.columns);
    let mut sums = vec![0.0; groups.len()];
    let mut n_hours = 0;
    for (fit, rows) in days {
        if fit.columns != first.columns {
            return Err(EpfError::Shape(format!(
                "fit `{}` has a different column set from `{}`",
                fit.config_label, first.config_label
            )));
        }
        for hour in contributions(fit, rows, &groups)? {
            for (s, c) in sums.iter_mut().zip(hour) {
                *s += c.abs();
            }
            n_hours += 1;
        }
    }
    let entries: Vec<AncEntry> = groups
        .iter()
        .zip(&sums)
        .map(|((g, _), s)| AncEntry {
            group: g.clone(),
            anc: s / n_hours as f64,
        })
        .collect();
    let mut order: Vec<usize> = (0..entries.len()).collect();
    order.sort_by(|&a, &b| entries[b].anc.total_cmp(&entries[a].anc).then(a.cmp(&b)));
    Ok(AncReport {
        schema_version: SCHEMA_VERSION,
        ranking: order.iter().map(|&i| entries[i].group.clone()).collect(),
        groups: entries,
        n_hours,
    })
}

/// ANC of a LEAR backtest, pairing each day with the model active on it.
pub fn anc_of_run(run: &BacktestRun) -> Result<AncReport> {
    let mut pairs = Vec::with_capacity(run.rows.len());
    for (i, rows) in run.rows.iter().enumerate() {
        match &run.calibrations[run.calibration_of_day(i)].model {
            FittedModel::Lear(fit) => pairs.push((fit, rows)),
            FittedModel::Dnn(_) => {
                return Err(EpfError::config("model", "contributions are defined for LEAR runs only"));
            }
        }
    }
    anc(&pairs)
}

impl AncReport {
    pub fn to_text(&self) -> String {
        let w = self.ranking.iter().map(|g| g.len()).max().unwrap_or(5).max(5);
        let mut out = format!("{:w$}  ANC\n", "group");
        for g in &self.ranking {
            let e = self.groups.iter().find(|e| &e.group == g).expect("ranked group exists");
            out.push_str(&format!("{g:w$}  {:.6}\n", e.anc));
        }
        out
    }
}
