use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::backtest::{BacktestConfig, DnnSettings, ModelKind, Recalibration};
use crate::error::{EpfError, Result, ResultExt};
use crate::features::{CovariateConfig, TransformKind};
use crate::ingest::{self, IngestManifest, SyntheticConfig};
use crate::timeseries::{DateRange, MarketDataset};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum DataSource {
    Synthetic(SyntheticConfig),
    /// Path to an ingest manifest, relative to the run config.
    Manifest(PathBuf),
}

/// One experiment grid: every covariate configuration × model × window.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    pub data: DataSource,
    pub target_zone: String,
    pub covariate_configs: Vec<CovariateConfig>,
    pub models: Vec<ModelKind>,
    pub cw_list: Vec<usize>,
    pub rf: Recalibration,
    pub test_range: DateRange,
    #[serde(default)]
    pub seed: u64,
    pub output_dir: PathBuf,
    #[serde(default = "default_transform")]
    pub transform: TransformKind,
    #[serde(default)]
    pub dnn: DnnSettings,
    #[serde(default)]
    pub strict_ensemble: bool,
    /// Directory relative paths resolve against.
    #[serde(skip)]
    pub base_dir: Option<PathBuf>,
}

fn default_transform() -> TransformKind {
    TransformKind::Norm
}

/// A run config together with the digest of its file contents.
#[derive(Debug, Clone)]
pub struct LoadedConfig {
    pub config: RunConfig,
    pub sha256: String,
}

pub fn sha256_hex(bytes: &[u8]) -> String {
    Sha256::digest(bytes).iter().map(|b| format!("{b:02x}")).collect()
}

impl RunConfig {
    pub fn load(path: &Path) -> Result<LoadedConfig> {
        let bytes = std::fs::read(path).map_err(EpfError::from).context(|| format!("reading {}", path.display()))?;
        let mut config: RunConfig =
            serde_json::from_slice(&bytes).map_err(EpfError::from).context(|| format!("run config {}", path.display()))?;
        config.base_dir = path.parent().map(Path::to_path_buf);
        config.validate()?;
        Ok(LoadedConfig {
            config,
            sha256: sha256_hex(&bytes),
        })
    }

    pub fn resolve(&self, p: &Path) -> PathBuf {
        match &self.base_dir {
            Some(base) if p.is_relative() => base.join(p),
            _ => p.to_path_buf(),
        }
    }

    pub fn output_dir(&self) -> PathBuf {
        self.resolve(&self.output_dir)
    }

    pub fn validate(&self) -> Result<()> {
        if self.covariate_configs.is_empty() {
            return Err(EpfError::config("covariate_configs", "list at least one configuration"));
        }
        for (i, c) in self.covariate_configs.iter().enumerate() {
            if c.target_zone != self.target_zone {
                return Err(EpfError::config(
                    format!("covariate_configs[{i}].target_zone"),
                    format!("is {} but the run targets {}", c.target_zone, self.target_zone),
                ));
            }
            if self.covariate_configs[..i].iter().any(|o| o.label == c.label) {
                return Err(EpfError::config(
                    format!("covariate_configs[{i}].label"),
                    format!("`{}` is used twice", c.label),
                ));
            }
            c.validate().context(|| format!("covariate_configs[{i}]"))?;
        }
        if self.models.is_empty() {
            return Err(EpfError::config("models", "list at least one model"));
        }
        if self.cw_list.is_empty() {
            return Err(EpfError::config("cw_list", "list at least one calibration window"));
        }
        if let DataSource::Synthetic(s) = &self.data {
            s.validate().context(|| "data.synthetic")?;
        }
        Ok(())
    }

    pub fn load_dataset(&self) -> Result<MarketDataset> {
        let ds = match &self.data {
            DataSource::Synthetic(s) => ingest::generate_synthetic(s)?,
            DataSource::Manifest(p) => {
                let path = self.resolve(p);
                let manifest = IngestManifest::from_file(&path).context(|| format!("manifest {}", path.display()))?;
                ingest::load(&manifest)?
            }
        };
        let zones = ds.zones();
        let mut wanted = vec![&self.target_zone];
        for c in &self.covariate_configs {
            wanted.extend(&c.neighbor_price_zones);
        }
        if let Some(z) = wanted.iter().find(|z| !zones.contains(z.as_str())) {
            return Err(EpfError::config(
                "target_zone",
                format!("zone {z} is not in the data (zones: {})", zones.into_iter().collect::<Vec<_>>().join(", ")),
            ));
        }
        Ok(ds)
    }

    /// Backtests in grid order: covariates, then models, then windows.
    pub fn backtests(&self) -> Vec<BacktestConfig> {
        let mut out = Vec::new();
        for cov in &self.covariate_configs {
            for model in &self.models {
                for cw in &self.cw_list {
                    out.push(BacktestConfig {
                        label: None,
                        model: *model,
                        cw_days: *cw,
                        rf: self.rf,
                        covariates: cov.clone(),
                        test_range: self.test_range,
                        seed: self.seed,
                        transform: self.transform,
                        dnn: self.dnn.clone(),
                    });
                }
            }
        }
        out
    }
}
