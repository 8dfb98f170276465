use std::path::{Path, PathBuf};
use std::process::Command;

use epf_core::backtest::ForecastSet;
use epf_core::cli::{cmd_anc, cmd_backtest, RunConfig};
use epf_core::ingest::{self, IngestManifest};

fn bundled(name: &str) -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("configs").join(name)
}

fn epf() -> Command {
    Command::new(env!("CARGO_BIN_EXE_epf"))
}

/// Relative paths of every file under `dir`, sorted.
fn listing(dir: &Path) -> Vec<PathBuf> {
    fn walk(root: &Path, dir: &Path, out: &mut Vec<PathBuf>) {
        for entry in std::fs::read_dir(dir).unwrap() {
            let p = entry.unwrap().path();
            if p.is_dir() {
                walk(root, &p, out);
            } else {
                out.push(p.strip_prefix(root).unwrap().to_path_buf());
            }
        }
    }
    let mut out = Vec::new();
    walk(dir, dir, &mut out);
    out.sort();
    out
}

fn has_runtime(p: &Path) -> bool {
    let s = p.to_string_lossy();
    s.ends_with(".runtime.json") || s == "manifest.json"
}

#[test]
fn backtest_produces_the_full_artifact_set_reproducibly() {
    let tmp = tempfile::tempdir().unwrap();
    let (a, b) = (tmp.path().join("a"), tmp.path().join("b"));
    let out = cmd_backtest(&bundled("smoke_synthetic.json"), Some(&a), None, true).unwrap();

    assert_eq!(out.members.len(), 8);
    assert_eq!(out.ensembles.len(), 1);
    let files = listing(&a);
    let member_csvs = files
        .iter()
        .filter(|p| p.starts_with("forecasts") && p.extension().is_some_and(|e| e == "csv"))
        .filter(|p| !p.ends_with("naive.csv") && !p.ends_with("actual.csv"))
        .count();
    assert_eq!(member_csvs, 8);
    for f in ["ensembles/ensemble_de.csv", "metrics.csv", "metrics.json", "gw.txt", "gw.csv", "gw.json", "manifest.json"] {
        assert!(a.join(f).is_file(), "missing {f}");
    }
    // 8 members, 1 ensemble and naive, three slices each
    assert_eq!(out.metrics.len(), 30);
    assert_eq!(out.gw.labels.len(), 10);
    assert_eq!(out.anc.len(), 4);

    // every CSV re-parses to what was returned
    let ens = ForecastSet::read_csv(&a.join("ensembles/ensemble_de.csv")).unwrap();
    assert_eq!(ens, ForecastSet { runtime: ens.runtime.clone(), ..out.ensembles[0].clone() });
    for m in &out.manifest.members {
        let back = ForecastSet::read_csv(&a.join(&m.csv)).unwrap();
        let orig = out.members.iter().find(|f| f.label == m.label).unwrap();
        assert_eq!(back.values, orig.values);
        assert!(m.runtime.recalibration_count >= 2);
    }
    let manifest: serde_json::Value = serde_json::from_slice(&std::fs::read(a.join("manifest.json")).unwrap()).unwrap();
    assert_eq!(manifest["schema_version"], 1);
    assert_eq!(manifest["seed"], 11);
    assert_eq!(manifest["config_sha256"].as_str().unwrap().len(), 64);

    // same config and seed: every artifact except runtimes is byte-identical
    cmd_backtest(&bundled("smoke_synthetic.json"), Some(&b), None, true).unwrap();
    assert_eq!(files, listing(&b));
    for f in files.iter().filter(|f| !has_runtime(f)) {
        assert_eq!(std::fs::read(a.join(f)).unwrap(), std::fs::read(b.join(f)).unwrap(), "{} differs", f.display());
    }

    // ANC recomputed from the saved calibrations matches the run's report
    let lear = out.manifest.members.iter().find(|m| m.label.starts_with("LEAR")).unwrap();
    let stem = lear.csv.file_stem().unwrap();
    let mut fits: Vec<PathBuf> = std::fs::read_dir(a.join("models").join(stem))
        .unwrap()
        .map(|e| e.unwrap().path())
        .collect();
    fits.reverse();
    let report = cmd_anc(&fits, &bundled("smoke_synthetic.json")).unwrap();
    let expected = &out.anc[&lear.label];
    assert_eq!(report.ranking, expected.ranking);
    assert_eq!(report.n_hours, expected.n_hours);
    for (x, y) in report.groups.iter().zip(&expected.groups) {
        assert!((x.anc - y.anc).abs() < 1e-12);
    }
}

#[test]
fn evaluate_ensemble_and_gw_through_the_binary() {
    let tmp = tempfile::tempdir().unwrap();
    let dir = tmp.path();
    let day0 = chrono::NaiveDate::from_ymd_opt(2024, 3, 1).unwrap();
    let days: Vec<_> = (0..40).map(|i| day0 + chrono::Duration::days(i)).collect();
    let actual: Vec<[f64; 24]> = (0..40)
        .map(|d| std::array::from_fn(|h| 50.0 + 10.0 * ((d * 24 + h) as f64 * 0.37).sin()))
        .collect();
    let naive: Vec<[f64; 24]> = (0..40)
        .map(|d| std::array::from_fn(|h| 50.0 + 10.0 * ((d * 24 + h + 5) as f64 * 0.37).sin()))
        .collect();
    ForecastSet::new("actual", days.clone(), actual).unwrap().write_csv(&dir.join("actual.csv")).unwrap();
    ForecastSet::new("naive", days, naive).unwrap().write_csv(&dir.join("naive.csv")).unwrap();

    let run = epf()
        .args(["evaluate", "--forecast"])
        .arg(dir.join("actual.csv"))
        .arg("--actual")
        .arg(dir.join("actual.csv"))
        .arg("--naive")
        .arg(dir.join("naive.csv"))
        .output()
        .unwrap();
    assert!(run.status.success(), "{}", String::from_utf8_lossy(&run.stderr));
    let report: serde_json::Value = serde_json::from_slice(&run.stdout).unwrap();
    assert_eq!(report["mae"], 0.0);
    assert_eq!(report["rmae"], 0.0);

    let members: Vec<PathBuf> = (0..8).map(|_| dir.join("naive.csv")).collect();
    let run = epf()
        .arg("ensemble")
        .args(&members)
        .arg("--out")
        .arg(dir.join("ens.csv"))
        .arg("--label")
        .arg("naive")
        .arg("--strict-ensemble")
        .output()
        .unwrap();
    assert!(run.status.success(), "{}", String::from_utf8_lossy(&run.stderr));
    assert_eq!(
        std::fs::read_to_string(dir.join("ens.csv")).unwrap(),
        std::fs::read_to_string(dir.join("naive.csv")).unwrap()
    );

    let run = epf()
        .arg("gw")
        .arg(dir.join("naive.csv"))
        .arg(dir.join("actual.csv"))
        .arg("--actual")
        .arg(dir.join("actual.csv"))
        .arg("--out")
        .arg(dir.join("gw"))
        .output()
        .unwrap();
    assert!(run.status.success(), "{}", String::from_utf8_lossy(&run.stderr));
    assert!(String::from_utf8_lossy(&run.stdout).contains("naive"));
    assert!(dir.join("gw/gw.json").is_file());
}

#[test]
fn failures_exit_nonzero_with_a_json_error_naming_the_key() {
    let tmp = tempfile::tempdir().unwrap();
    let mut cfg: serde_json::Value =
        serde_json::from_slice(&std::fs::read(bundled("smoke_synthetic.json")).unwrap()).unwrap();
    cfg["cw_list"] = serde_json::json!([]);
    let path = tmp.path().join("bad.json");
    std::fs::write(&path, cfg.to_string()).unwrap();
    let run = epf().args(["backtest", "--config"]).arg(&path).output().unwrap();
    assert_eq!(run.status.code(), Some(2));
    let err: serde_json::Value = serde_json::from_slice(&run.stderr).unwrap();
    assert_eq!(err["error"]["kind"], "config");
    assert_eq!(err["error"]["key"], "cw_list");

    let run = epf()
        .args(["evaluate", "--forecast", "nope.csv", "--actual", "nope.csv", "--naive", "nope.csv"])
        .output()
        .unwrap();
    assert_eq!(run.status.code(), Some(1));
    let err: serde_json::Value = serde_json::from_slice(&run.stderr).unwrap();
    assert_eq!(err["error"]["kind"], "io");
}

#[test]
fn synth_output_loads_back_to_the_generated_market() {
    let tmp = tempfile::tempdir().unwrap();
    let run = epf()
        .args(["synth", "--config"])
        .arg(bundled("smoke_synthetic.json"))
        .arg("--out")
        .arg(tmp.path())
        .output()
        .unwrap();
    assert!(run.status.success(), "{}", String::from_utf8_lossy(&run.stderr));
    let manifest = IngestManifest::from_file(&tmp.path().join("manifest.json")).unwrap();
    let loaded = ingest::load(&manifest).unwrap();
    let cfg = RunConfig::load(&bundled("smoke_synthetic.json")).unwrap().config;
    let epf_core::cli::DataSource::Synthetic(s) = &cfg.data else { panic!("synthetic data") };
    let generated = ingest::generate_synthetic(s).unwrap();
    assert_eq!(loaded.span(), generated.span());
    for (x, y) in loaded.series().zip(generated.series()) {
        assert_eq!(x.key(), y.key());
        assert_eq!(x.values, y.values);
    }
}
