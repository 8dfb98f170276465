//! ENTSO-E style CSV exports.
//!
//! Accepted layout: a header row, then one row per interval start. The time
//! column is an ISO-8601 timestamp with explicit offset, or an interval
//! `start/end` of which the start is used. The delimiter is `,` or `;`, picked
//! from the header; with `;` a decimal comma is accepted in values. Empty,
//! `n/e` and `N/A` cells are gaps.

use std::path::Path;

use chrono::{DateTime, FixedOffset, Utc};

use crate::error::{EpfError, Result};
use crate::timeseries::{HourlySeries, Step};

const TIME_HEADERS: &[&str] = &["timestamp", "mtu", "time", "datetime", "date", "interval"];
const VALUE_HEADERS: &[&str] = &["value", "price", "quantity"];

pub fn parse_entsoe_csv(path: &Path, name: &str, zone: &str, unit: &str) -> Result<HourlySeries> {
    let text = std::fs::read_to_string(path)?;
    parse_entsoe_str(&text, &path.display().to_string(), name, zone, unit)
}

pub fn parse_entsoe_str(
    text: &str,
    origin: &str,
    name: &str,
    zone: &str,
    unit: &str,
) -> Result<HourlySeries> {
    let header = text.lines().next().ok_or_else(|| EpfError::MalformedFile {
        path: origin.to_string(),
        reason: "empty file".into(),
    })?;
    let delimiter = if header.contains(';') { b';' } else { b',' };
    let mut reader = csv::ReaderBuilder::new()
        .delimiter(delimiter)
        .trim(csv::Trim::All)
        .from_reader(text.as_bytes());
    let headers = reader.headers()?.clone();
    let find = |wanted: &[&str]| {
        headers.iter().position(|h| {
            let h = h.to_ascii_lowercase();
            wanted.iter().any(|w| h == *w || h.starts_with(&format!("{w} ")))
        })
    };
    let time_col = find(TIME_HEADERS).unwrap_or(0);
    let value_col = find(VALUE_HEADERS)
        .or_else(|| (0..headers.len()).find(|&c| c != time_col))
        .ok_or_else(|| EpfError::MalformedFile {
            path: origin.to_string(),
            reason: "no value column".into(),
        })?;

    let mut rows: Vec<(DateTime<Utc>, f64)> = Vec::new();
    for (i, record) in reader.records().enumerate() {
        let line = i + 2;
        let record = record?;
        let parse_err = |reason: String| EpfError::Parse {
            path: origin.to_string(),
            line,
            reason,
        };
        let raw_time = record
            .get(time_col)
            .ok_or_else(|| parse_err("missing time field".into()))?;
        let at = parse_instant(raw_time).ok_or_else(|| parse_err(format!("bad timestamp `{raw_time}`")))?;
        let raw_value = record.get(value_col).unwrap_or("");
        let value = parse_value(raw_value, delimiter == b';')
            .ok_or_else(|| parse_err(format!("bad value `{raw_value}`")))?;
        rows.push((at, value));
    }
    if rows.is_empty() {
        return Err(EpfError::MalformedFile {
            path: origin.to_string(),
            reason: "no data rows".into(),
        });
    }
    assemble(rows, origin, name, zone, unit)
}

/// Builds a dense series from (instant, value) rows; absent slots become NaN.
pub(crate) fn assemble(
    rows: Vec<(DateTime<Utc>, f64)>,
    origin: &str,
    name: &str,
    zone: &str,
    unit: &str,
) -> Result<HourlySeries> {
    let malformed = |reason: String| EpfError::MalformedFile {
        path: origin.to_string(),
        reason,
    };
    let mut step_minutes: Option<i64> = None;
    for pair in rows.windows(2) {
        let diff = (pair[1].0 - pair[0].0).num_minutes();
        if diff <= 0 {
            return Err(malformed(format!(
                "timestamps not strictly increasing at {}",
                pair[1].0
            )));
        }
        step_minutes = Some(step_minutes.map_or(diff, |s: i64| s.min(diff)));
    }
    let step_minutes = step_minutes.unwrap_or(60);
    let step = Step::from_minutes(step_minutes)
        .ok_or_else(|| malformed(format!("unsupported resolution of {step_minutes} minutes")))?;
    let first = rows[0].0;
    let lead = (first - first.duration_trunc_hour()).num_minutes();
    if lead % step_minutes != 0 {
        return Err(malformed(format!("{first} is off the {step_minutes}-minute grid")));
    }
    let start = first.duration_trunc_hour();
    let last = rows[rows.len() - 1].0;
    let span_slots = ((last - start).num_minutes() / step_minutes) as usize + 1;
    let slots = span_slots.div_ceil(step.per_hour()) * step.per_hour();
    let mut values = vec![f64::NAN; slots];
    for (at, v) in rows {
        let offset = (at - start).num_minutes();
        if offset % step_minutes != 0 {
            return Err(malformed(format!("{at} breaks the {step_minutes}-minute step")));
        }
        values[(offset / step_minutes) as usize] = v;
    }
    HourlySeries::new(name, zone, unit, start, step, values)
}

trait TruncHour {
    fn duration_trunc_hour(&self) -> DateTime<Utc>;
}

impl TruncHour for DateTime<Utc> {
    fn duration_trunc_hour(&self) -> DateTime<Utc> {
        use chrono::DurationRound;
        self.duration_trunc(chrono::Duration::hours(1))
            .expect("hour truncation of a valid instant")
    }
}

pub(crate) fn parse_instant(raw: &str) -> Option<DateTime<Utc>> {
    let start = raw.split('/').next()?.trim();
    let start = start.split(" - ").next()?.trim();
    DateTime::parse_from_rfc3339(start)
        .or_else(|_| DateTime::parse_from_str(start, "%Y-%m-%dT%H:%M%:z"))
        .or_else(|_| parse_zulu_minutes(start))
        .ok()
        .map(|t: DateTime<FixedOffset>| t.with_timezone(&Utc))
}

fn parse_zulu_minutes(raw: &str) -> std::result::Result<DateTime<FixedOffset>, chrono::ParseError> {
    let naive = raw.strip_suffix('Z').unwrap_or("");
    chrono::NaiveDateTime::parse_from_str(naive, "%Y-%m-%dT%H:%M")
        .map(|n| n.and_utc().fixed_offset())
}

fn parse_value(raw: &str, decimal_comma: bool) -> Option<f64> {
    let raw = raw.trim();
    if raw.is_empty() || raw.eq_ignore_ascii_case("n/e") || raw.eq_ignore_ascii_case("n/a") {
        return Some(f64::NAN);
    }
    let normalized;
    let text = if decimal_comma && raw.contains(',') {
        normalized = raw.replace(',', ".");
        normalized.as_str()
    } else {
        raw
    };
    text.parse::<f64>().ok()
}

/// Writes a series in the `timestamp,value` layout; gaps are left empty.
pub fn to_entsoe_csv(s: &HourlySeries) -> String {
    let mut out = String::with_capacity(s.len() * 36 + 16);
    out.push_str("timestamp,value\n");
    for (i, v) in s.values.iter().enumerate() {
        let t = s.timestamp(i).format("%Y-%m-%dT%H:%M:%S+00:00");
        if v.is_nan() {
            out.push_str(&format!("{t},\n"));
        } else {
            out.push_str(&format!("{t},{v}\n"));
        }
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn hourly_rows(n: usize) -> String {
        let mut s = String::from("timestamp,value\n");
        for h in 0..n {
            s.push_str(&format!("2024-01-01T{:02}:00:00+00:00,{}\n", h, 40 + h));
        }
        s
    }

    #[test]
    fn one_hourly_day() {
        let s = parse_entsoe_str(&hourly_rows(24), "mem", "price", "BE", "EUR/MWh").unwrap();
        assert_eq!(s.len(), 24);
        assert_eq!(s.step, Step::Hour);
        assert_eq!(s.values[23], 63.0);
    }

    #[test]
    fn quarter_hour_semicolon_variant() {
        let mut text = String::from("MTU;Value\n");
        for q in 0..96 {
            let (h, m) = (q / 4, (q % 4) * 15);
            text.push_str(&format!(
                "2024-01-01T{h:02}:{m:02}+01:00/2024-01-01T{h:02}:{:02}+01:00;{},5\n",
                m + 14,
                q
            ));
        }
        let s = parse_entsoe_str(&text, "mem", "price", "AT", "EUR/MWh").unwrap();
        assert_eq!(s.len(), 96);
        assert_eq!(s.step, Step::QuarterHour);
        assert_eq!(s.values[1], 1.5);
        // +01:00 local midnight is 23:00 UTC the day before
        assert_eq!(s.start.to_rfc3339(), "2023-12-31T23:00:00+00:00");
    }

    #[test]
    fn skipped_hour_is_a_gap() {
        let text: String = hourly_rows(24)
            .lines()
            .enumerate()
            .filter(|(i, _)| *i != 6)
            .map(|(_, l)| format!("{l}\n"))
            .collect();
        let s = parse_entsoe_str(&text, "mem", "price", "BE", "EUR/MWh").unwrap();
        assert_eq!(s.len(), 24);
        assert!(s.values[5].is_nan());
        assert_eq!(s.values[6], 46.0);
    }

    #[test]
    fn bad_timestamp_reports_line() {
        let text = "timestamp,value\n2024-01-01T00:00:00+00:00,1\nyesterday,2\n";
        match parse_entsoe_str(text, "f.csv", "p", "BE", "").unwrap_err() {
            EpfError::Parse { line, .. } => assert_eq!(line, 3),
            e => panic!("unexpected {e}"),
        }
    }

    #[test]
    fn inconsistent_step_is_malformed() {
        let text = "timestamp,value\n2024-01-01T00:00:00+00:00,1\n2024-01-01T00:15:00+00:00,2\n2024-01-01T00:50:00+00:00,3\n";
        assert!(matches!(
            parse_entsoe_str(text, "f.csv", "p", "BE", "").unwrap_err(),
            EpfError::MalformedFile { .. }
        ));
        let text = "timestamp,value\n2024-01-01T00:00:00+00:00,1\n2024-01-01T00:20:00+00:00,2\n";
        assert!(parse_entsoe_str(text, "f.csv", "p", "BE", "").is_err());
    }

    proptest! {
        #[test]
        fn csv_round_trip(values in prop::collection::vec(prop::option::weighted(0.9, -1e4f64..1e4), 1..96)) {
            let mut values: Vec<f64> = values.into_iter().map(|v| v.unwrap_or(f64::NAN)).collect();
            values[0] = 1.0;
            let s = HourlySeries::from_days("price", "BE", "EUR/MWh", chrono::NaiveDate::from_ymd_opt(2024, 3, 1).unwrap(), values).unwrap();
            let back = parse_entsoe_str(&to_entsoe_csv(&s), "mem", "price", "BE", "EUR/MWh").unwrap();
            prop_assert_eq!(back.start, s.start);
            let last_valid = s.values.iter().rposition(|v| !v.is_nan()).unwrap();
            for i in 0..=last_valid {
                let (a, b) = (s.values[i], back.values[i]);
                prop_assert!(a.to_bits() == b.to_bits() || (a.is_nan() && b.is_nan()));
            }
        }
    }
}
