//! Turning market exports into a [`MarketDataset`].

mod entsoe;
mod openmeteo;
mod synthetic;

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

pub use entsoe::{parse_entsoe_csv, parse_entsoe_str, to_entsoe_csv};
pub use openmeteo::{parse_openmeteo_json, parse_openmeteo_str};
pub use synthetic::{
    generate_synthetic, solar_elevation_factor, FactorSpec, Fundamentals, RegimeShift, SpikeSpec,
    SyntheticConfig, ZoneSpec,
};

use crate::error::{EpfError, Result, ResultExt};
use crate::timeseries::{align, fill_gaps, resample_quarter_to_hour, HolidayCalendar, MarketDataset};

/// Longest interior gap, in hours, that loading interpolates.
pub const DEFAULT_MAX_GAP_HOURS: usize = 3;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum SourceKind {
    EntsoeCsv,
    OpenmeteoJson,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ManifestEntry {
    pub path: PathBuf,
    pub kind: SourceKind,
    pub name: String,
    pub zone: String,
    /// Ignored for Open-Meteo documents, which carry their own units.
    #[serde(default)]
    pub unit: String,
    /// Open-Meteo variable key; defaults to `name`.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub variable: Option<String>,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct IngestManifest {
    pub entries: Vec<ManifestEntry>,
    #[serde(default)]
    pub holiday_files: BTreeMap<String, PathBuf>,
    #[serde(default = "default_max_gap")]
    pub max_gap_hours: usize,
    /// Directory relative paths resolve against; set by [`IngestManifest::from_file`].
    #[serde(skip)]
    pub base_dir: Option<PathBuf>,
}

fn default_max_gap() -> usize {
    DEFAULT_MAX_GAP_HOURS
}

impl IngestManifest {
    pub fn from_file(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)?;
        let mut manifest: IngestManifest = serde_json::from_str(&text)?;
        manifest.base_dir = path.parent().map(Path::to_path_buf);
        Ok(manifest)
    }

    fn resolve(&self, p: &Path) -> PathBuf {
        match &self.base_dir {
            Some(base) if p.is_relative() => base.join(p),
            _ => p.to_path_buf(),
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.entries.is_empty() {
            return Err(EpfError::config("entries", "manifest lists no series"));
        }
        for (i, e) in self.entries.iter().enumerate() {
            if !self.resolve(&e.path).exists() {
                return Err(EpfError::config(
                    format!("entries[{i}].path"),
                    format!("{} does not exist", self.resolve(&e.path).display()),
                ));
            }
            if self.entries[..i].iter().any(|o| o.name == e.name && o.zone == e.zone) {
                return Err(EpfError::config(
                    format!("entries[{i}]"),
                    format!("duplicate series {}/{}", e.zone, e.name),
                ));
            }
        }
        for (zone, p) in &self.holiday_files {
            if !self.resolve(p).exists() {
                return Err(EpfError::config(
                    format!("holiday_files.{zone}"),
                    format!("{} does not exist", self.resolve(p).display()),
                ));
            }
        }
        Ok(())
    }
}

/// Parses, resamples, gap-fills and aligns every manifest entry.
pub fn load(manifest: &IngestManifest) -> Result<MarketDataset> {
    manifest.validate()?;
    let mut series = Vec::with_capacity(manifest.entries.len());
    for entry in &manifest.entries {
        let path = manifest.resolve(&entry.path);
        let label = format!("series {}/{} ({})", entry.zone, entry.name, path.display());
        let raw = match entry.kind {
            SourceKind::EntsoeCsv => parse_entsoe_csv(&path, &entry.name, &entry.zone, &entry.unit),
            SourceKind::OpenmeteoJson => parse_openmeteo_json(
                &path,
                entry.variable.as_deref().unwrap_or(&entry.name),
                &entry.name,
                &entry.zone,
            ),
        }
        .context(|| label.clone())?;
        let hourly = resample_quarter_to_hour(&raw).context(|| label.clone())?;
        series.push(fill_gaps(&hourly, manifest.max_gap_hours));
    }
    let mut dataset = align(series)?;
    for (zone, p) in &manifest.holiday_files {
        let calendar = HolidayCalendar::load(&manifest.resolve(p)).context(|| format!("holidays for {zone}"))?;
        dataset = dataset.with_holidays(zone.clone(), calendar);
    }
    Ok(dataset)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::timeseries::HourlySeries;
    use chrono::NaiveDate;

    fn write_series(dir: &Path, file: &str, values: Vec<f64>) -> PathBuf {
        let s = HourlySeries::from_days("x", "BE", "", NaiveDate::from_ymd_opt(2024, 1, 1).unwrap(), values).unwrap();
        let p = dir.join(file);
        std::fs::write(&p, to_entsoe_csv(&s)).unwrap();
        p
    }

    fn entry(path: PathBuf, name: &str) -> ManifestEntry {
        ManifestEntry {
            path,
            kind: SourceKind::EntsoeCsv,
            name: name.into(),
            zone: "BE".into(),
            unit: "MW".into(),
            variable: None,
        }
    }

    #[test]
    fn two_aligned_files() {
        let dir = tempfile::tempdir().unwrap();
        let a = write_series(dir.path(), "a.csv", vec![1.0; 48]);
        let b = write_series(dir.path(), "b.csv", vec![2.0; 48]);
        let holidays = dir.path().join("be.txt");
        std::fs::write(&holidays, "2024-01-02\n").unwrap();
        let manifest = IngestManifest {
            entries: vec![entry(a, "price"), entry(b, "load")],
            holiday_files: [("BE".to_string(), holidays)].into(),
            max_gap_hours: 3,
            base_dir: None,
        };
        let ds = load(&manifest).unwrap();
        assert_eq!(ds.series().count(), 2);
        assert_eq!(ds.span().len_days(), 2);
        assert!(ds.is_holiday("BE", NaiveDate::from_ymd_opt(2024, 1, 2).unwrap()));
    }

    #[test]
    fn long_gap_names_the_series() {
        let dir = tempfile::tempdir().unwrap();
        let mut v = vec![1.0; 48];
        v[10..14].fill(f64::NAN);
        let a = write_series(dir.path(), "a.csv", v);
        let manifest = IngestManifest {
            entries: vec![entry(a, "wind")],
            max_gap_hours: 3,
            ..Default::default()
        };
        let err = load(&manifest).unwrap_err();
        assert!(err.to_string().contains("BE/wind"), "{err}");

        let mut v = vec![1.0; 48];
        v[10..13].fill(f64::NAN);
        let a = write_series(dir.path(), "b.csv", v);
        let manifest = IngestManifest { entries: vec![entry(a, "wind")], max_gap_hours: 3, ..Default::default() };
        assert!(load(&manifest).is_ok());
    }

    #[test]
    fn empty_manifest_is_rejected() {
        assert!(load(&IngestManifest::default()).is_err());
    }

    #[test]
    fn relative_paths_follow_manifest_location() {
        let dir = tempfile::tempdir().unwrap();
        write_series(dir.path(), "a.csv", vec![5.0; 24]);
        let manifest_path = dir.path().join("manifest.json");
        std::fs::write(
            &manifest_path,
            r#"{"entries":[{"path":"a.csv","kind":"entsoe-csv","name":"price","zone":"BE","unit":"EUR/MWh"}]}"#,
        )
        .unwrap();
        let manifest = IngestManifest::from_file(&manifest_path).unwrap();
        assert_eq!(manifest.max_gap_hours, DEFAULT_MAX_GAP_HOURS);
        let ds = load(&manifest).unwrap();
        assert_eq!(ds.price("BE").unwrap().values, vec![5.0; 24]);
    }
}
