//! Hourly series containers and calendar helpers.
//!
//! Everything is indexed in UTC. A series is described by its start instant,
//! a fixed step and a dense value vector where `NaN` marks a gap, so the
//! timestamp of slot `i` is always `start + i * step`.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt;
use std::path::Path;

use chrono::{DateTime, Datelike, Duration, NaiveDate, NaiveTime, TimeZone, Timelike, Utc};
use serde::{Deserialize, Serialize};

use crate::error::{EpfError, Result};

pub const HOURS_PER_DAY: usize = 24;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Step {
    #[serde(rename = "1h")]
    Hour,
    #[serde(rename = "15min")]
    QuarterHour,
}

impl Step {
    pub fn minutes(self) -> i64 {
        match self {
            Step::Hour => 60,
            Step::QuarterHour => 15,
        }
    }

    pub fn duration(self) -> Duration {
        Duration::minutes(self.minutes())
    }

    pub fn per_hour(self) -> usize {
        (60 / self.minutes()) as usize
    }

    pub fn from_minutes(minutes: i64) -> Option<Step> {
        match minutes {
            60 => Some(Step::Hour),
            15 => Some(Step::QuarterHour),
            _ => None,
        }
    }
}

/// Inclusive range of calendar days.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct DateRange {
    pub start: NaiveDate,
    pub end: NaiveDate,
}

impl DateRange {
    pub fn new(start: NaiveDate, end: NaiveDate) -> Result<Self> {
        if end < start {
            return Err(EpfError::config(
                "date_range",
                format!("end {end} precedes start {start}"),
            ));
        }
        Ok(DateRange { start, end })
    }

    pub fn single(day: NaiveDate) -> Self {
        DateRange {
            start: day,
            end: day,
        }
    }

    pub fn len_days(&self) -> usize {
        ((self.end - self.start).num_days() + 1) as usize
    }

    pub fn contains(&self, day: NaiveDate) -> bool {
        self.start <= day && day <= self.end
    }

    pub fn days(&self) -> impl Iterator<Item = NaiveDate> + Clone {
        let start = self.start;
        (0..self.len_days() as i64).map(move |i| start + Duration::days(i))
    }

    pub fn intersect(&self, other: &DateRange) -> Option<DateRange> {
        let start = self.start.max(other.start);
        let end = self.end.min(other.end);
        (start <= end).then_some(DateRange { start, end })
    }
}

impl fmt::Display for DateRange {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}..={}", self.start, self.end)
    }
}

/// A (day, hour) cell of the 24-hour forecast frame.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct DayHourIndex {
    pub day: NaiveDate,
    pub hour: u8,
}

impl DayHourIndex {
    pub fn new(day: NaiveDate, hour: u8) -> Result<Self> {
        if hour as usize >= HOURS_PER_DAY {
            return Err(EpfError::config("hour", format!("{hour} outside 0..=23")));
        }
        Ok(DayHourIndex { day, hour })
    }
}

pub fn day_start(day: NaiveDate) -> DateTime<Utc> {
    Utc.from_utc_datetime(&day.and_time(NaiveTime::MIN))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HourlySeries {
    pub name: String,
    pub zone: String,
    pub unit: String,
    pub start: DateTime<Utc>,
    pub step: Step,
    pub values: Vec<f64>,
}

impl HourlySeries {
    pub fn new(
        name: impl Into<String>,
        zone: impl Into<String>,
        unit: impl Into<String>,
        start: DateTime<Utc>,
        step: Step,
        values: Vec<f64>,
    ) -> Result<Self> {
        let name = name.into();
        if start.minute() != 0 || start.second() != 0 || start.nanosecond() != 0 {
            return Err(EpfError::MalformedSeries {
                name,
                reason: format!("start {start} is not on an hour boundary"),
            });
        }
        Ok(HourlySeries {
            name,
            zone: zone.into(),
            unit: unit.into(),
            start,
            step,
            values,
        })
    }

    /// Hourly series covering whole days starting at midnight of `first_day`.
    pub fn from_days(
        name: impl Into<String>,
        zone: impl Into<String>,
        unit: impl Into<String>,
        first_day: NaiveDate,
        values: Vec<f64>,
    ) -> Result<Self> {
        Self::new(name, zone, unit, day_start(first_day), Step::Hour, values)
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    pub fn timestamp(&self, i: usize) -> DateTime<Utc> {
        self.start + Duration::minutes(self.step.minutes() * i as i64)
    }

    /// Exclusive end instant.
    pub fn end(&self) -> DateTime<Utc> {
        self.timestamp(self.values.len())
    }

    pub fn key(&self) -> SeriesKey {
        SeriesKey::new(&self.name, &self.zone)
    }

    /// Whole UTC days fully covered by the series, if any.
    pub fn full_day_span(&self) -> Option<DateRange> {
        let start = self.start;
        let first = if start.time() == NaiveTime::MIN {
            start.date_naive()
        } else {
            start.date_naive() + Duration::days(1)
        };
        let last = self.end().date_naive() - Duration::days(1);
        (first <= last).then_some(DateRange {
            start: first,
            end: last,
        })
    }

    fn index_of(&self, at: DateTime<Utc>) -> Option<usize> {
        let offset = (at - self.start).num_minutes();
        if offset < 0 || offset % self.step.minutes() != 0 {
            return None;
        }
        let i = (offset / self.step.minutes()) as usize;
        (i < self.values.len()).then_some(i)
    }

    /// The 24 hourly values of a UTC day, if the series is hourly and covers it.
    pub fn day_values(&self, day: NaiveDate) -> Option<&[f64]> {
        if self.step != Step::Hour {
            return None;
        }
        let i = self.index_of(day_start(day))?;
        self.values.get(i..i + HOURS_PER_DAY)
    }

    pub fn value_at(&self, at: DateTime<Utc>) -> Option<f64> {
        self.index_of(at).map(|i| self.values[i])
    }
}

#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct SeriesKey {
    pub name: String,
    pub zone: String,
}

impl SeriesKey {
    pub fn new(name: &str, zone: &str) -> Self {
        SeriesKey {
            name: name.to_string(),
            zone: zone.to_string(),
        }
    }
}

impl fmt::Display for SeriesKey {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}/{}", self.zone, self.name)
    }
}

/// Conventional series name of a zone's day-ahead price.
pub const PRICE: &str = "price";

/// Hourly mean of a 15-minute series. A gap in any quarter gaps the hour.
pub fn resample_quarter_to_hour(s: &HourlySeries) -> Result<HourlySeries> {
    match s.step {
        Step::Hour => return Ok(s.clone()),
        Step::QuarterHour => {}
    }
    if s.values.len() % 4 != 0 {
        return Err(EpfError::MalformedSeries {
            name: s.name.clone(),
            reason: format!(
                "{} quarter-hour values is not a whole number of hours",
                s.values.len()
            ),
        });
    }
    let values = s
        .values
        .chunks_exact(4)
        .map(|q| q.iter().sum::<f64>() / 4.0)
        .collect();
    Ok(HourlySeries {
        step: Step::Hour,
        values,
        ..s.clone()
    })
}

/// Linear interpolation over interior NaN runs no longer than `max_run`.
pub fn fill_gaps(s: &HourlySeries, max_run: usize) -> HourlySeries {
    let mut values = s.values.clone();
    let n = values.len();
    let mut i = 0;
    while i < n {
        if !values[i].is_nan() {
            i += 1;
            continue;
        }
        let run_start = i;
        while i < n && values[i].is_nan() {
            i += 1;
        }
        let run_len = i - run_start;
        if run_start == 0 || i == n || run_len > max_run {
            continue;
        }
        let left = values[run_start - 1];
        let right = values[i];
        let span = (run_len + 1) as f64;
        for (k, v) in values[run_start..i].iter_mut().enumerate() {
            let t = (k + 1) as f64 / span;
            *v = left + t * (right - left);
        }
    }
    HourlySeries {
        values,
        ..s.clone()
    }
}

/// Monday = 0, ..., Sunday = 6.
pub fn day_of_week(day: NaiveDate) -> u32 {
    day.weekday().num_days_from_monday()
}

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct HolidayCalendar {
    days: BTreeSet<NaiveDate>,
}

impl HolidayCalendar {
    pub fn new(days: impl IntoIterator<Item = NaiveDate>) -> Self {
        HolidayCalendar {
            days: days.into_iter().collect(),
        }
    }

    /// One ISO date per line; blank lines and `#` comments are skipped.
    pub fn parse(text: &str, origin: &str) -> Result<Self> {
        let mut days = BTreeSet::new();
        for (i, line) in text.lines().enumerate() {
            let line = line.trim();
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            let day = NaiveDate::parse_from_str(line, "%Y-%m-%d").map_err(|e| EpfError::Parse {
                path: origin.to_string(),
                line: i + 1,
                reason: format!("bad holiday date `{line}`: {e}"),
            })?;
            days.insert(day);
        }
        Ok(HolidayCalendar { days })
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)?;
        Self::parse(&text, &path.display().to_string())
    }

    pub fn to_text(&self) -> String {
        self.days.iter().map(|d| format!("{d}\n")).collect()
    }

    pub fn days(&self) -> impl Iterator<Item = &NaiveDate> {
        self.days.iter()
    }
}

pub fn is_public_holiday(day: NaiveDate, calendar: &HolidayCalendar) -> bool {
    calendar.days.contains(&day)
}

/// Hourly series aligned to a common span of whole UTC days, without gaps.
#[derive(Debug, Clone, PartialEq)]
pub struct MarketDataset {
    series: BTreeMap<SeriesKey, HourlySeries>,
    span: DateRange,
    holidays: BTreeMap<String, HolidayCalendar>,
}

impl MarketDataset {
    pub fn span(&self) -> DateRange {
        self.span
    }

    pub fn get(&self, name: &str, zone: &str) -> Option<&HourlySeries> {
        self.series.get(&SeriesKey::new(name, zone))
    }

    pub fn require(&self, name: &str, zone: &str) -> Result<&HourlySeries> {
        self.get(name, zone)
            .ok_or_else(|| EpfError::MissingSeries(SeriesKey::new(name, zone).to_string()))
    }

    pub fn price(&self, zone: &str) -> Result<&HourlySeries> {
        self.require(PRICE, zone)
    }

    pub fn series(&self) -> impl Iterator<Item = &HourlySeries> {
        self.series.values()
    }

    pub fn into_series(self) -> Vec<HourlySeries> {
        self.series.into_values().collect()
    }

    pub fn zones(&self) -> BTreeSet<&str> {
        self.series.keys().map(|k| k.zone.as_str()).collect()
    }

    pub fn holidays(&self, zone: &str) -> Option<&HolidayCalendar> {
        self.holidays.get(zone)
    }

    pub fn is_holiday(&self, zone: &str, day: NaiveDate) -> bool {
        self.holidays
            .get(zone)
            .is_some_and(|c| is_public_holiday(day, c))
    }

    pub fn with_holidays(mut self, zone: impl Into<String>, calendar: HolidayCalendar) -> Self {
        self.holidays.insert(zone.into(), calendar);
        self
    }

    pub fn holiday_calendars(&self) -> &BTreeMap<String, HolidayCalendar> {
        &self.holidays
    }

    /// Restricts every series to `span`, which must lie inside the current one.
    pub fn restrict(&self, span: DateRange) -> Result<MarketDataset> {
        if span.intersect(&self.span) != Some(span) {
            return Err(EpfError::Alignment(format!(
                "requested span {span} outside dataset span {}",
                self.span
            )));
        }
        let series = self
            .series
            .iter()
            .map(|(k, s)| (k.clone(), truncate(s, span)))
            .collect();
        Ok(MarketDataset {
            series,
            span,
            holidays: self.holidays.clone(),
        })
    }
}

fn truncate(s: &HourlySeries, span: DateRange) -> HourlySeries {
    let from = ((day_start(span.start) - s.start).num_hours()) as usize;
    let len = span.len_days() * HOURS_PER_DAY;
    HourlySeries {
        start: day_start(span.start),
        values: s.values[from..from + len].to_vec(),
        ..s.clone()
    }
}

/// Truncates hourly series to their common span of whole days.
///
/// Fails when the overlap is empty, a series is not hourly, a key repeats, or
/// a gap remains inside the common span.
pub fn align(series_list: Vec<HourlySeries>) -> Result<MarketDataset> {
    if series_list.is_empty() {
        return Err(EpfError::Alignment("no series supplied".into()));
    }
    let mut spans = Vec::with_capacity(series_list.len());
    for s in &series_list {
        if s.step != Step::Hour {
            return Err(EpfError::Alignment(format!(
                "series {} is not hourly; resample it first",
                s.key()
            )));
        }
        match s.full_day_span() {
            Some(span) => spans.push((s.key(), span)),
            None => {
                return Err(EpfError::Alignment(format!(
                    "series {} does not cover a single whole day",
                    s.key()
                )))
            }
        }
    }
    let mut common = spans[0].1;
    for (_, span) in &spans[1..] {
        match common.intersect(span) {
            Some(c) => common = c,
            None => {
                let listing = spans
                    .iter()
                    .map(|(k, s)| format!("{k} [{s}]"))
                    .collect::<Vec<_>>()
                    .join(", ");
                return Err(EpfError::Alignment(format!("empty overlap between {listing}")));
            }
        }
    }
    let mut series = BTreeMap::new();
    for s in series_list {
        let key = s.key();
        let t = truncate(&s, common);
        if let Some(i) = t.values.iter().position(|v| !v.is_finite()) {
            return Err(EpfError::MissingValue {
                series: key.to_string(),
                timestamp: t.timestamp(i),
            });
        }
        if series.insert(key.clone(), t).is_some() {
            return Err(EpfError::Alignment(format!("duplicate series {key}")));
        }
    }
    Ok(MarketDataset {
        series,
        span: common,
        holidays: BTreeMap::new(),
    })
}
