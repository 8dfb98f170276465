//! Synthetic coupled day-ahead markets.
//!
//! Every zone's price loads on one shared latent factor
//!
//! ```text
//! F(d, h) = profile(h) - weekend_drop * [d is Sat/Sun] + L(d),   L(d) = ar * L(d-1) + shock_sd * e(d)
//! ```
//!
//! and on its own fundamentals:
//!
//! ```text
//! price_z(d, h) = base_z + coupling_z * F(d, h)
//!               + load_coef_z * (load_z - load_base_z) / 1000
//!               - wind_coef_z * wind_z / 1000 - solar_coef_z * solar_z / 1000
//!               + noise_sd_z * e + own spikes + spike_loading_z * S(d, h)
//! ```
//!
//! `S` is a spike process shared by all zones. A neighbour's day-D price
//! therefore reveals `L(d)` and `S(d, .)`, which the target zone's own history
//! and fundamentals cannot. All draws happen in a fixed order whatever the
//! parameters, so two configs differing only in coefficients share their noise.

use chrono::{Datelike, Duration, NaiveDate};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::error::{EpfError, Result};
use crate::timeseries::{align, day_of_week, HolidayCalendar, HourlySeries, MarketDataset, PRICE};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SyntheticConfig {
    pub seed: u64,
    pub n_days: usize,
    #[serde(default = "default_start")]
    pub start: NaiveDate,
    #[serde(default)]
    pub factor: FactorSpec,
    #[serde(default)]
    pub shared_spikes: SpikeSpec,
    pub zones: Vec<ZoneSpec>,
    #[serde(default)]
    pub regime_shift: Option<RegimeShift>,
}

fn default_start() -> NaiveDate {
    NaiveDate::from_ymd_opt(2023, 1, 1).expect("valid date")
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct FactorSpec {
    pub ar: f64,
    pub shock_sd: f64,
    pub weekend_drop: f64,
}

impl Default for FactorSpec {
    fn default() -> Self {
        FactorSpec {
            ar: 0.8,
            shock_sd: 0.35,
            weekend_drop: 0.15,
        }
    }
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SpikeSpec {
    /// Probability per hour.
    pub prob: f64,
    /// EUR/MWh.
    pub scale: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ZoneSpec {
    pub name: String,
    #[serde(default = "default_base_price")]
    pub base_price: f64,
    /// Weight of the shared factor in this zone's price.
    pub coupling: f64,
    /// Attenuation of the shared spikes in this zone.
    #[serde(default = "one")]
    pub spike_loading: f64,
    pub noise_sd: f64,
    /// Zone-specific spikes, on top of the shared ones.
    #[serde(default)]
    pub spike_prob: f64,
    #[serde(default)]
    pub spike_scale: f64,
    #[serde(default)]
    pub fundamentals: Fundamentals,
}

fn default_base_price() -> f64 {
    60.0
}

fn one() -> f64 {
    1.0
}

/// Per-zone load, wind and solar shapes and their price coefficients
/// (EUR/MWh per GW).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct Fundamentals {
    pub load_base_mw: f64,
    pub load_annual_amp: f64,
    pub load_daily_amp: f64,
    pub load_noise_sd: f64,
    pub load_coef: f64,
    pub wind_capacity_mw: f64,
    pub wind_mean: f64,
    pub wind_ar: f64,
    pub wind_sd: f64,
    pub wind_coef: f64,
    pub solar_capacity_mw: f64,
    pub cloudiness: f64,
    pub solar_coef: f64,
}

impl Default for Fundamentals {
    fn default() -> Self {
        Fundamentals {
            load_base_mw: 10_000.0,
            load_annual_amp: 0.1,
            load_daily_amp: 0.15,
            load_noise_sd: 0.02,
            load_coef: 3.0,
            wind_capacity_mw: 4_000.0,
            wind_mean: 0.3,
            wind_ar: 0.95,
            wind_sd: 0.06,
            wind_coef: 4.0,
            solar_capacity_mw: 5_000.0,
            cloudiness: 0.6,
            solar_coef: 2.0,
        }
    }
}

/// From day index `day` on, every zone's wind coefficient is multiplied by
/// `wind_coef_factor` and `level_shift` EUR/MWh is added to every price.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RegimeShift {
    pub day: usize,
    #[serde(default = "one")]
    pub wind_coef_factor: f64,
    #[serde(default)]
    pub level_shift: f64,
}

impl SyntheticConfig {
    pub fn validate(&self) -> Result<()> {
        if self.n_days < 30 {
            return Err(EpfError::config("n_days", "must be at least 30"));
        }
        if self.zones.is_empty() {
            return Err(EpfError::config("zones", "at least one zone required"));
        }
        check_prob("shared_spikes.prob", self.shared_spikes.prob)?;
        for (i, z) in self.zones.iter().enumerate() {
            if z.noise_sd.is_nan() || z.noise_sd <= 0.0 {
                return Err(EpfError::config(format!("zones[{i}].noise_sd"), "must be > 0"));
            }
            check_prob(&format!("zones[{i}].spike_prob"), z.spike_prob)?;
            if self.zones[..i].iter().any(|o| o.name == z.name) {
                return Err(EpfError::config(format!("zones[{i}].name"), format!("duplicate zone {}", z.name)));
            }
        }
        if !(self.factor.ar.abs() < 1.0) {
            return Err(EpfError::config("factor.ar", "must lie in (-1, 1)"));
        }
        Ok(())
    }

    pub fn end(&self) -> NaiveDate {
        self.start + Duration::days(self.n_days as i64 - 1)
    }
}

fn check_prob(key: &str, p: f64) -> Result<()> {
    if (0.0..=1.0).contains(&p) {
        Ok(())
    } else {
        Err(EpfError::config(key, format!("{p} outside [0, 1]")))
    }
}

fn bump(h: f64, centre: f64, width: f64) -> f64 {
    (-(h - centre).powi(2) / (2.0 * width * width)).exp()
}

/// Weekday shape of the shared factor, mean close to one.
fn factor_profile(hour: usize) -> f64 {
    let h = hour as f64;
    0.9 + 0.3 * bump(h, 8.5, 2.0) + 0.4 * bump(h, 19.0, 2.0) - 0.2 * bump(h, 3.5, 2.0)
}

fn load_shape(hour: usize) -> f64 {
    let h = hour as f64;
    0.6 * bump(h, 11.0, 3.5) + 0.8 * bump(h, 19.0, 2.5) - 0.7 * bump(h, 3.0, 2.5)
}

/// Clear-sky bell; exactly zero from 18:00 to 06:00.
pub fn solar_elevation_factor(hour: usize) -> f64 {
    if (7..18).contains(&hour) {
        (std::f64::consts::PI * (hour as f64 - 6.0) / 12.0).sin()
    } else {
        0.0
    }
}

fn annual(day: NaiveDate, peak_doy: f64) -> f64 {
    (2.0 * std::f64::consts::PI * (day.ordinal() as f64 - peak_doy) / 365.25).cos()
}

struct ZoneState {
    wind_cf: f64,
    price: Vec<f64>,
    load: Vec<f64>,
    wind: Vec<f64>,
    solar: Vec<f64>,
}

pub fn generate_synthetic(config: &SyntheticConfig) -> Result<MarketDataset> {
    config.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
    let hours = config.n_days * 24;
    let mut states: Vec<ZoneState> = config
        .zones
        .iter()
        .map(|z| ZoneState {
            wind_cf: z.fundamentals.wind_mean,
            price: Vec::with_capacity(hours),
            load: Vec::with_capacity(hours),
            wind: Vec::with_capacity(hours),
            solar: Vec::with_capacity(hours),
        })
        .collect();

    let f = &config.factor;
    let mut level = 0.0;
    for d in 0..config.n_days {
        let day = config.start + Duration::days(d as i64);
        let weekend = day_of_week(day) >= 5;
        let shock: f64 = rng.sample(StandardNormal);
        level = f.ar * level + f.shock_sd * shock;
        let shifted = config.regime_shift.as_ref().filter(|r| d >= r.day);

        let mut daily = Vec::with_capacity(config.zones.len());
        for _ in &config.zones {
            let cloud: f64 = rng.random();
            let load_day: f64 = rng.sample(StandardNormal);
            daily.push((cloud, load_day));
        }

        for h in 0..24 {
            let factor = factor_profile(h) - if weekend { f.weekend_drop } else { 0.0 } + level;
            let spike_hit: f64 = rng.random();
            let spike_sign: f64 = rng.random();
            let spike_size: f64 = rng.random();
            let shared_spike = if spike_hit < config.shared_spikes.prob {
                let sign = if spike_sign < 0.75 { 1.0 } else { -1.0 };
                sign * config.shared_spikes.scale * (0.5 + spike_size)
            } else {
                0.0
            };

            for ((zone, state), &(cloud, load_day)) in config.zones.iter().zip(&mut states).zip(&daily) {
                let fu = &zone.fundamentals;
                let wind_eps: f64 = rng.sample(StandardNormal);
                let load_eps: f64 = rng.sample(StandardNormal);
                let noise: f64 = rng.sample(StandardNormal);
                let own_hit: f64 = rng.random();
                let own_size: f64 = rng.random();

                state.wind_cf = (fu.wind_mean + fu.wind_ar * (state.wind_cf - fu.wind_mean) + fu.wind_sd * wind_eps)
                    .clamp(0.0, 1.0);
                let wind = fu.wind_capacity_mw * state.wind_cf;

                let load = fu.load_base_mw
                    * (1.0 + fu.load_annual_amp * annual(day, 15.0))
                    * (1.0 + fu.load_daily_amp * load_shape(h))
                    * if weekend { 0.92 } else { 1.0 }
                    * (1.0 + fu.load_noise_sd * (load_day + 0.3 * load_eps));

                let season = 0.65 + 0.35 * annual(day, 172.0);
                let solar = fu.solar_capacity_mw
                    * solar_elevation_factor(h)
                    * season
                    * (1.0 - fu.cloudiness * cloud);

                let wind_coef = fu.wind_coef * shifted.map_or(1.0, |r| r.wind_coef_factor);
                let own_spike = if own_hit < zone.spike_prob {
                    zone.spike_scale * (0.5 + own_size)
                } else {
                    0.0
                };
                let price = zone.base_price
                    + zone.coupling * factor
                    + fu.load_coef * (load - fu.load_base_mw) / 1000.0
                    - wind_coef * wind / 1000.0
                    - fu.solar_coef * solar / 1000.0
                    + zone.noise_sd * noise
                    + own_spike
                    + zone.spike_loading * shared_spike
                    + shifted.map_or(0.0, |r| r.level_shift);

                state.price.push(price);
                state.load.push(load);
                state.wind.push(wind);
                state.solar.push(solar);
            }
        }
    }

    let mut series = Vec::with_capacity(4 * config.zones.len());
    for (zone, state) in config.zones.iter().zip(states) {
        let z = zone.name.as_str();
        series.push(HourlySeries::from_days(PRICE, z, "EUR/MWh", config.start, state.price)?);
        series.push(HourlySeries::from_days("load", z, "MW", config.start, state.load)?);
        series.push(HourlySeries::from_days("wind", z, "MW", config.start, state.wind)?);
        series.push(HourlySeries::from_days("solar", z, "MW", config.start, state.solar)?);
    }
    let mut dataset = align(series)?;
    for zone in &config.zones {
        dataset = dataset.with_holidays(zone.name.clone(), HolidayCalendar::default());
    }
    Ok(dataset)
}
