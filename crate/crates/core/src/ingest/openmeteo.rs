//! Open-Meteo style JSON forecasts.
//!
//! Expected shape: `{"hourly": {"time": [...], "<variable>": [...]},
//! "hourly_units": {"<variable>": "<unit>"}}`. Times without an offset are
//! local to the document's `utc_offset_seconds` (0 when absent). `null`
//! entries are gaps.

use std::path::Path;

use chrono::{DateTime, Duration, NaiveDateTime, Utc};
use serde_json::Value;

use super::entsoe::{assemble, parse_instant};
use crate::error::{EpfError, Result};
use crate::timeseries::{HourlySeries, Step};

pub fn parse_openmeteo_json(path: &Path, variable: &str, name: &str, zone: &str) -> Result<HourlySeries> {
    let text = std::fs::read_to_string(path)?;
    parse_openmeteo_str(&text, &path.display().to_string(), variable, name, zone)
}

pub fn parse_openmeteo_str(
    text: &str,
    origin: &str,
    variable: &str,
    name: &str,
    zone: &str,
) -> Result<HourlySeries> {
    let malformed = |reason: &str| EpfError::MalformedFile {
        path: origin.to_string(),
        reason: reason.to_string(),
    };
    let doc: Value = serde_json::from_str(text)?;
    let hourly = doc
        .get("hourly")
        .and_then(Value::as_object)
        .ok_or_else(|| malformed("no `hourly` object"))?;
    let times = hourly
        .get("time")
        .and_then(Value::as_array)
        .ok_or_else(|| malformed("no `hourly.time` array"))?;
    let values = match hourly.get(variable).and_then(Value::as_array) {
        Some(v) => v,
        None => {
            return Err(EpfError::VariableNotFound {
                path: origin.to_string(),
                variable: variable.to_string(),
                available: hourly.keys().filter(|k| *k != "time").cloned().collect(),
            })
        }
    };
    if times.len() != values.len() {
        return Err(malformed(&format!(
            "`time` has {} entries but `{variable}` has {}",
            times.len(),
            values.len()
        )));
    }
    if times.is_empty() {
        return Err(malformed("empty hourly block"));
    }
    let offset = Duration::seconds(doc.get("utc_offset_seconds").and_then(Value::as_i64).unwrap_or(0));
    let unit = doc
        .get("hourly_units")
        .and_then(|u| u.get(variable))
        .and_then(Value::as_str)
        .unwrap_or("")
        .to_string();

    let mut rows = Vec::with_capacity(times.len());
    for (i, (t, v)) in times.iter().zip(values).enumerate() {
        let raw = t.as_str().ok_or_else(|| malformed(&format!("time[{i}] is not a string")))?;
        let at = parse_local(raw, offset).ok_or_else(|| EpfError::Parse {
            path: origin.to_string(),
            line: i + 1,
            reason: format!("bad time `{raw}`"),
        })?;
        let value = match v {
            Value::Null => f64::NAN,
            Value::Number(n) => n.as_f64().unwrap_or(f64::NAN),
            other => return Err(malformed(&format!("{variable}[{i}] is not numeric: {other}"))),
        };
        rows.push((at, value));
    }
    let series = assemble(rows, origin, name, zone, &unit)?;
    if series.step != Step::Hour {
        return Err(malformed("hourly block is not at hourly resolution"));
    }
    Ok(series)
}

fn parse_local(raw: &str, offset: Duration) -> Option<DateTime<Utc>> {
    if let Some(t) = parse_instant(raw) {
        return Some(t);
    }
    let naive = NaiveDateTime::parse_from_str(raw, "%Y-%m-%dT%H:%M")
        .or_else(|_| NaiveDateTime::parse_from_str(raw, "%Y-%m-%dT%H:%M:%S"))
        .ok()?;
    Some(naive.and_utc() - offset)
}
