use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use chrono::Duration;
use serde::{Deserialize, Serialize};

use super::config::{DataSource, RunConfig};
use crate::backtest::{
    actuals, ensemble, naive_forecast, run_backtests, Calibration, FittedModel, ForecastSet, ModelKind, RuntimeDocument,
    RuntimeReport,
};
use crate::dnn::HyperConfig;
use crate::error::{EpfError, Result, ResultExt};
use crate::eval::{anc, anc_of_run, evaluate, gw_matrix, metrics_csv, AncReport, GwMatrix, MetricsReport, Slice};
use crate::features::FeatureBuilder;
use crate::ingest::{generate_synthetic, to_entsoe_csv, IngestManifest, ManifestEntry, SourceKind, SyntheticConfig};
use crate::io::{read_json, write_atomic, write_json};
use crate::timeseries::DateRange;
use crate::SCHEMA_VERSION;

/// File-name-safe form of a label.
fn file_stem(label: &str) -> String {
    label
        .chars()
        .map(|c| if c.is_ascii_alphanumeric() || "_-+.".contains(c) { c } else { '_' })
        .collect()
}

/// Writes the synthetic market of `config_path` as one CSV per series plus an
/// ingest manifest that loads them back.
pub fn cmd_synth(config_path: &Path, out_dir: &Path, seed: Option<u64>) -> Result<()> {
    let text = std::fs::read_to_string(config_path).map_err(EpfError::from).context(|| format!("reading {}", config_path.display()))?;
    let value: serde_json::Value = serde_json::from_str(&text)?;
    let mut synth: SyntheticConfig = if value.get("data").is_some() {
        let run: RunConfig = serde_json::from_value(value)?;
        match run.data {
            DataSource::Synthetic(s) => s,
            DataSource::Manifest(_) => {
                return Err(EpfError::config("data", "run config does not describe synthetic data"));
            }
        }
    } else {
        serde_json::from_value(value)?
    };
    if let Some(s) = seed {
        synth.seed = s;
    }
    let ds = generate_synthetic(&synth)?;
    let mut manifest = IngestManifest {
        max_gap_hours: crate::ingest::DEFAULT_MAX_GAP_HOURS,
        ..IngestManifest::default()
    };
    for s in ds.series() {
        let name = format!("{}_{}.csv", file_stem(&s.zone), file_stem(&s.name));
        write_atomic(&out_dir.join(&name), to_entsoe_csv(s).as_bytes())?;
        manifest.entries.push(ManifestEntry {
            path: PathBuf::from(name),
            kind: SourceKind::EntsoeCsv,
            name: s.name.clone(),
            zone: s.zone.clone(),
            unit: s.unit.clone(),
            variable: None,
        });
    }
    for (zone, cal) in ds.holiday_calendars() {
        if cal.days().next().is_some() {
            let name = format!("holidays_{}.txt", file_stem(zone));
            write_atomic(&out_dir.join(&name), cal.to_text().as_bytes())?;
            manifest.holiday_files.insert(zone.clone(), PathBuf::from(name));
        }
    }
    write_json(&out_dir.join("manifest.json"), &manifest)?;
    write_json(&out_dir.join("synthetic_config.json"), &synth)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MemberRecord {
    pub label: String,
    pub csv: PathBuf,
    pub runtime: RuntimeReport,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub tuned: Option<HyperConfig>,
}

/// Provenance of a backtest run. Runtimes vary between runs; every other
/// artifact is reproducible from the config hash and seed.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunManifest {
    pub schema_version: u32,
    pub crate_version: String,
    pub config_sha256: String,
    pub seed: u64,
    pub test_range: DateRange,
    pub members: Vec<MemberRecord>,
    pub ensembles: Vec<MemberRecord>,
}

/// Everything a backtest run produced, as returned to callers.
#[derive(Debug, Clone)]
pub struct BacktestOutputs {
    pub out_dir: PathBuf,
    pub members: Vec<ForecastSet>,
    pub ensembles: Vec<ForecastSet>,
    pub naive: ForecastSet,
    pub actual: ForecastSet,
    pub metrics: Vec<MetricsReport>,
    pub gw: GwMatrix,
    pub anc: BTreeMap<String, AncReport>,
    pub manifest: RunManifest,
}

pub fn cmd_backtest(
    config_path: &Path,
    out: Option<&Path>,
    seed: Option<u64>,
    strict_ensemble: bool,
) -> Result<BacktestOutputs> {
    let loaded = RunConfig::load(config_path)?;
    let mut cfg = loaded.config;
    if let Some(s) = seed {
        cfg.seed = s;
    }
    let out_dir = out.map(Path::to_path_buf).unwrap_or_else(|| cfg.output_dir());
    let strict = strict_ensemble || cfg.strict_ensemble;
    let ds = cfg.load_dataset()?;
    let zone = cfg.target_zone.clone();
    let actual = actuals(&ds, &zone, cfg.test_range)?;
    let naive = naive_forecast(&ds, &zone, cfg.test_range)?;

    let configs = cfg.backtests();
    for c in &configs {
        c.validate(&ds).context(|| format!("backtest {}", c.label()))?;
    }
    let runs = run_backtests(&ds, &configs)
        .into_iter()
        .collect::<Result<Vec<_>>>()?;

    let fdir = out_dir.join("forecasts");
    let mut members = Vec::new();
    let mut records = Vec::new();
    let mut anc_reports = BTreeMap::new();
    for (c, run) in configs.iter().zip(&runs) {
        let f = &run.forecast;
        let stem = file_stem(&f.label);
        let csv = PathBuf::from("forecasts").join(format!("{stem}.csv"));
        f.write_csv(&out_dir.join(&csv))?;
        write_json(&fdir.join(format!("{stem}.runtime.json")), &RuntimeDocument::of(f))?;
        for cal in &run.calibrations {
            write_json(&out_dir.join("models").join(&stem).join(format!("{}.json", cal.first_day)), cal)?;
        }
        if c.model == ModelKind::Lear {
            let report = anc_of_run(run)?;
            write_json(&out_dir.join("anc").join(format!("{stem}.json")), &report)?;
            anc_reports.insert(f.label.clone(), report);
        }
        records.push(MemberRecord {
            label: f.label.clone(),
            csv,
            runtime: f.runtime.clone(),
            tuned: run.tuned.clone(),
        });
        members.push(f.clone());
    }

    let mut ensembles = Vec::new();
    let mut ensemble_records = Vec::new();
    for cov in &cfg.covariate_configs {
        let group: Vec<ForecastSet> = configs
            .iter()
            .zip(&members)
            .filter(|(c, _)| c.covariates.label == cov.label)
            .map(|(_, m)| m.clone())
            .collect();
        let e = ensemble(&format!("ensemble_{}", cov.label), &group, strict)?;
        let csv = PathBuf::from("ensembles").join(format!("{}.csv", file_stem(&e.label)));
        e.write_csv(&out_dir.join(&csv))?;
        ensemble_records.push(MemberRecord {
            label: e.label.clone(),
            csv,
            runtime: e.runtime.clone(),
            tuned: None,
        });
        ensembles.push(e);
    }
    naive.write_csv(&fdir.join("naive.csv"))?;
    actual.write_csv(&fdir.join("actual.csv"))?;

    let mut metrics = Vec::new();
    for f in members.iter().chain(&ensembles).chain(std::iter::once(&naive)) {
        for s in Slice::ALL {
            metrics.push(evaluate(f, &actual, &naive, s).context(|| format!("metrics of {}", f.label))?);
        }
    }
    write_atomic(&out_dir.join("metrics.csv"), metrics_csv(&metrics).as_bytes())?;
    write_json(&out_dir.join("metrics.json"), &metrics)?;

    let mut compared: Vec<ForecastSet> = ensembles.clone();
    if ensembles.len() == 1 {
        compared.extend(members.iter().cloned());
    }
    compared.push(naive.clone());
    let gw = gw_matrix(&compared, &actual)?;
    write_gw(&gw, &out_dir)?;

    let manifest = RunManifest {
        schema_version: SCHEMA_VERSION,
        crate_version: env!("CARGO_PKG_VERSION").to_string(),
        config_sha256: loaded.sha256,
        seed: cfg.seed,
        test_range: cfg.test_range,
        members: records,
        ensembles: ensemble_records,
    };
    write_json(&out_dir.join("manifest.json"), &manifest)?;
    Ok(BacktestOutputs {
        out_dir,
        members,
        ensembles,
        naive,
        actual,
        metrics,
        gw,
        anc: anc_reports,
        manifest,
    })
}

fn write_gw(gw: &GwMatrix, dir: &Path) -> Result<()> {
    write_atomic(&dir.join("gw.txt"), gw.to_text().as_bytes())?;
    write_atomic(&dir.join("gw.csv"), gw.to_csv().as_bytes())?;
    write_json(&dir.join("gw.json"), gw)
}

fn read_all(paths: &[PathBuf]) -> Result<Vec<ForecastSet>> {
    paths.iter().map(|p| ForecastSet::read_csv(p)).collect()
}

pub fn cmd_ensemble(members: &[PathBuf], out: &Path, label: &str, strict: bool) -> Result<()> {
    let sets = read_all(members)?;
    ensemble(label, &sets, strict)?.write_csv(out)
}

pub fn cmd_evaluate(forecast: &Path, actual: &Path, naive: &Path, slice: Slice) -> Result<MetricsReport> {
    let f = ForecastSet::read_csv(forecast)?;
    let a = ForecastSet::read_csv(actual)?;
    let n = ForecastSet::read_csv(naive)?;
    evaluate(&f, &a, &n, slice)
}

pub fn cmd_gw(forecasts: &[PathBuf], actual: &Path, out: Option<&Path>) -> Result<GwMatrix> {
    let sets = read_all(forecasts)?;
    let a = ForecastSet::read_csv(actual)?;
    let m = gw_matrix(&sets, &a)?;
    if let Some(dir) = out {
        write_gw(&m, dir)?;
    }
    Ok(m)
}

/// ANC of saved LEAR calibrations. Each calibration covers the test days from
/// its first day up to the next calibration's first day.
pub fn cmd_anc(fits: &[PathBuf], config_path: &Path) -> Result<AncReport> {
    let cfg = RunConfig::load(config_path)?.config;
    let mut cals: Vec<Calibration> = fits
        .iter()
        .map(|p| read_json(p).context(|| format!("calibration {}", p.display())))
        .collect::<Result<_>>()?;
    cals.sort_by_key(|c| c.first_day);
    let ds = cfg.load_dataset()?;
    let mut owned = Vec::new();
    for (i, cal) in cals.iter().enumerate() {
        let FittedModel::Lear(fit) = &cal.model else {
            return Err(EpfError::config("fits", "contributions are defined for LEAR calibrations only"));
        };
        let cov = cfg
            .covariate_configs
            .iter()
            .find(|c| c.label == fit.config_label)
            .ok_or_else(|| EpfError::config("fits", format!("no covariate config labelled `{}`", fit.config_label)))?;
        let builder = FeatureBuilder::new(&ds, cov)?;
        fit.check_columns(builder.columns())?;
        let last = cals
            .get(i + 1)
            .map(|n| n.first_day - Duration::days(1))
            .unwrap_or(cfg.test_range.end)
            .min(cfg.test_range.end);
        for day in DateRange::new(cal.first_day, last)?.days() {
            owned.push((i, builder.scaled_day(day, &fit.scaler, &fit.target_scaler)?));
        }
    }
    let pairs: Vec<_> = owned
        .iter()
        .map(|(i, rows)| match &cals[*i].model {
            FittedModel::Lear(f) => (f, rows),
            FittedModel::Dnn(_) => unreachable!("checked above"),
        })
        .collect();
    anc(&pairs)
}
