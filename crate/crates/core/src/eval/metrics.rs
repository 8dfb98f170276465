use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::backtest::ForecastSet;
use crate::error::{EpfError, Result};

fn check_lengths(a: &[f64], b: &[f64]) -> Result<()> {
    if a.len() != b.len() {
        return Err(EpfError::Shape(format!("{} actual values vs {} forecasts", a.len(), b.len())));
    }
    if a.is_empty() {
        return Err(EpfError::Shape("no cells to evaluate".into()));
    }
    Ok(())
}

pub fn mae(p: &[f64], p_hat: &[f64]) -> Result<f64> {
    check_lengths(p, p_hat)?;
    Ok(p.iter().zip(p_hat).map(|(a, b)| (a - b).abs()).sum::<f64>() / p.len() as f64)
}

pub fn rmse(p: &[f64], p_hat: &[f64]) -> Result<f64> {
    check_lengths(p, p_hat)?;
    Ok((p.iter().zip(p_hat).map(|(a, b)| (a - b).powi(2)).sum::<f64>() / p.len() as f64).sqrt())
}

/// MAE relative to the naive forecast's MAE on the same cells.
pub fn rmae(p: &[f64], p_hat: &[f64], p_naive: &[f64]) -> Result<f64> {
    let benchmark = mae(p, p_naive)?;
    if benchmark == 0.0 {
        return Err(EpfError::Undefined("naive forecast is exact, relative MAE has no benchmark".into()));
    }
    Ok(mae(p, p_hat)? / benchmark)
}

/// Symmetric MAPE in percent, in [0, 200]. Cells where both values are zero
/// contribute zero.
pub fn smape(p: &[f64], p_hat: &[f64]) -> Result<f64> {
    check_lengths(p, p_hat)?;
    let total: f64 = p
        .iter()
        .zip(p_hat)
        .map(|(a, b)| {
            let denom = (a.abs() + b.abs()) / 2.0;
            if denom == 0.0 {
                0.0
            } else {
                (a - b).abs() / denom
            }
        })
        .sum();
    Ok(100.0 * total / p.len() as f64)
}

/// 1 − SSR/SST with the mean taken over the evaluated cells. Negative when
/// the forecast is worse than that mean.
pub fn r2(p: &[f64], p_hat: &[f64]) -> Result<f64> {
    check_lengths(p, p_hat)?;
    let mean = p.iter().sum::<f64>() / p.len() as f64;
    let sst: f64 = p.iter().map(|a| (a - mean).powi(2)).sum();
    if p.len() < 2 || sst == 0.0 {
        return Err(EpfError::Undefined("prices have no variance".into()));
    }
    let ssr: f64 = p.iter().zip(p_hat).map(|(a, b)| (a - b).powi(2)).sum();
    Ok(1.0 - ssr / sst)
}

pub fn pearson(a: &[f64], b: &[f64]) -> Result<f64> {
    check_lengths(a, b)?;
    if a.len() < 2 {
        return Err(EpfError::Undefined("correlation needs at least two pairs".into()));
    }
    let n = a.len() as f64;
    let ma = a.iter().sum::<f64>() / n;
    let mb = b.iter().sum::<f64>() / n;
    let (mut sab, mut saa, mut sbb) = (0.0, 0.0, 0.0);
    for (x, y) in a.iter().zip(b) {
        sab += (x - ma) * (y - mb);
        saa += (x - ma).powi(2);
        sbb += (y - mb).powi(2);
    }
    if saa == 0.0 || sbb == 0.0 {
        return Err(EpfError::Undefined("correlation with a constant series".into()));
    }
    Ok((sab / (saa.sqrt() * sbb.sqrt())).clamp(-1.0, 1.0))
}

/// Linearly interpolated empirical quantile.
pub fn quantile(values: &[f64], q: f64) -> Result<f64> {
    if values.is_empty() {
        return Err(EpfError::Shape("quantile of no values".into()));
    }
    let mut v = values.to_vec();
    v.sort_by(f64::total_cmp);
    let h = (v.len() - 1) as f64 * q.clamp(0.0, 1.0);
    let lo = h.floor() as usize;
    let hi = h.ceil() as usize;
    Ok(v[lo] + (h - lo as f64) * (v[hi] - v[lo]))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Slice {
    All,
    Bottom5,
    Top5,
}

impl Slice {
    pub const ALL: [Slice; 3] = [Slice::All, Slice::Bottom5, Slice::Top5];
}

impl fmt::Display for Slice {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Slice::All => "all",
            Slice::Bottom5 => "bottom5",
            Slice::Top5 => "top5",
        })
    }
}

impl FromStr for Slice {
    type Err = EpfError;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "all" => Ok(Slice::All),
            "bottom5" => Ok(Slice::Bottom5),
            "top5" => Ok(Slice::Top5),
            other => Err(EpfError::config("slice", format!("unknown slice `{other}` (all, bottom5, top5)"))),
        }
    }
}

/// Cells at or below the 5th percentile (bottom5) or at or above the 95th
/// (top5) of `actual`. With all-equal prices both masks select every cell.
pub fn percentile_slice(actual: &[f64], which: Slice) -> Result<Vec<bool>> {
    Ok(match which {
        Slice::All => vec![true; actual.len()],
        Slice::Bottom5 => {
            let t = quantile(actual, 0.05)?;
            actual.iter().map(|v| *v <= t).collect()
        }
        Slice::Top5 => {
            let t = quantile(actual, 0.95)?;
            actual.iter().map(|v| *v >= t).collect()
        }
    })
}

fn select(v: &[f64], mask: &[bool]) -> Vec<f64> {
    v.iter().zip(mask).filter(|(_, m)| **m).map(|(x, _)| *x).collect()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricsReport {
    pub label: String,
    pub slice: Slice,
    pub n_hours: usize,
    pub mae: f64,
    pub rmse: f64,
    pub rmae: f64,
    pub smape_percent: f64,
    pub r2: f64,
}

impl MetricsReport {
    pub const CSV_HEADER: &'static str = "label,slice,n_hours,mae,rmse,rmae,smape_percent,r2";

    pub fn csv_row(&self) -> String {
        format!(
            "{},{},{},{},{},{},{},{}",
            self.label, self.slice, self.n_hours, self.mae, self.rmse, self.rmae, self.smape_percent, self.r2
        )
    }
}

pub fn metrics_csv(reports: &[MetricsReport]) -> String {
    let mut out = format!("{}\n", MetricsReport::CSV_HEADER);
    for r in reports {
        out.push_str(&r.csv_row());
        out.push('\n');
    }
    out
}

fn check_aligned(a: &ForecastSet, b: &ForecastSet) -> Result<()> {
    if a.days != b.days {
        return Err(EpfError::Alignment(format!(
            "`{}` and `{}` cover different days ({} vs {})",
            a.label,
            b.label,
            a.range().map(|r| r.to_string()).unwrap_or_default(),
            b.range().map(|r| r.to_string()).unwrap_or_default()
        )));
    }
    Ok(())
}

/// All five metrics on the cells of `slice`, with the slice cut from the
/// actual prices of the whole range. The naive benchmark is restricted to the
/// same cells.
pub fn evaluate(forecast: &ForecastSet, actual: &ForecastSet, naive: &ForecastSet, slice: Slice) -> Result<MetricsReport> {
    check_aligned(forecast, actual)?;
    check_aligned(naive, actual)?;
    let p = actual.flat();
    let mask = percentile_slice(&p, slice)?;
    let p = select(&p, &mask);
    let f = select(&forecast.flat(), &mask);
    let n = select(&naive.flat(), &mask);
    Ok(MetricsReport {
        label: forecast.label.clone(),
        slice,
        n_hours: p.len(),
        mae: mae(&p, &f)?,
        rmse: rmse(&p, &f)?,
        rmae: rmae(&p, &f, &n)?,
        smape_percent: smape(&p, &f)?,
        r2: r2(&p, &f)?,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn hand_computed_values() {
        assert_eq!(mae(&[1.0, 2.0, 3.0], &[2.0, 2.0, 5.0]).unwrap(), 1.0);
        assert!((rmse(&[1.0, 2.0, 3.0], &[2.0, 2.0, 5.0]).unwrap() - (5.0f64 / 3.0).sqrt()).abs() < 1e-15);
        assert!((smape(&[100.0], &[50.0]).unwrap() - 100.0 * 50.0 / 75.0).abs() < 1e-12);
        assert_eq!(smape(&[100.0], &[0.0]).unwrap(), 200.0);
        assert_eq!(smape(&[0.0, 5.0], &[0.0, 5.0]).unwrap(), 0.0);
        // MAE 10 against a naive MAE of 25
        assert!((rmae(&[0.0], &[10.0], &[25.0]).unwrap() - 0.4).abs() < 1e-15);
        assert!(rmae(&[1.0], &[2.0], &[1.0]).is_err());
        assert!(mae(&[1.0], &[1.0, 2.0]).is_err());
    }

    #[test]
    fn offsets_and_identities() {
        let p: Vec<f64> = (0..50).map(|i| (i as f64).sin() * 30.0 + 40.0).collect();
        let shifted: Vec<f64> = p.iter().map(|v| v + 5.0).collect();
        assert!((mae(&p, &shifted).unwrap() - 5.0).abs() < 1e-12);
        assert!((rmse(&p, &shifted).unwrap() - 5.0).abs() < 1e-12);
        assert_eq!(r2(&p, &p).unwrap(), 1.0);
        let mean = p.iter().sum::<f64>() / p.len() as f64;
        assert!(r2(&p, &vec![mean; p.len()]).unwrap().abs() < 1e-12);
        assert!(r2(&p, &vec![mean + 100.0; p.len()]).unwrap() < 0.0);
        assert!(r2(&[3.0, 3.0], &[1.0, 2.0]).is_err());
    }

    #[test]
    fn pearson_cases() {
        let a: Vec<f64> = (0..20).map(|i| (i * i) as f64).collect();
        let b: Vec<f64> = a.iter().map(|v| 2.0 * v + 3.0).collect();
        let c: Vec<f64> = a.iter().map(|v| -v).collect();
        assert!((pearson(&a, &b).unwrap() - 1.0).abs() < 1e-12);
        assert!((pearson(&a, &c).unwrap() + 1.0).abs() < 1e-12);
        assert!(pearson(&a, &[1.0; 20]).is_err());
        let mut rng = ChaCha8Rng::seed_from_u64(12);
        let x: Vec<f64> = (0..10_000).map(|_| rng.random()).collect();
        let y: Vec<f64> = (0..10_000).map(|_| rng.random()).collect();
        assert!(pearson(&x, &y).unwrap().abs() < 0.05);
    }

    #[test]
    fn percentile_masks() {
        let ramp: Vec<f64> = (1..=100).map(f64::from).collect();
        let bottom = percentile_slice(&ramp, Slice::Bottom5).unwrap();
        assert_eq!(bottom.iter().filter(|m| **m).count(), 5);
        assert!(bottom[..5].iter().all(|m| *m));
        let flat = vec![4.0; 30];
        assert!(percentile_slice(&flat, Slice::Bottom5).unwrap().iter().all(|m| *m));
        assert!(percentile_slice(&flat, Slice::Top5).unwrap().iter().all(|m| *m));
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        for n in [200, 1000, 8760] {
            let v: Vec<f64> = (0..n).map(|_| rng.random::<f64>() * 100.0).collect();
            let b = percentile_slice(&v, Slice::Bottom5).unwrap();
            let t = percentile_slice(&v, Slice::Top5).unwrap();
            let nb = b.iter().filter(|m| **m).count() as f64;
            let nt = t.iter().filter(|m| **m).count() as f64;
            let expected = 0.05 * n as f64;
            assert!((nb - expected).abs() <= 1.5 && (nt - expected).abs() <= 1.5, "{nb} {nt} of {n}");
            assert!(b.iter().zip(&t).all(|(x, y)| !(x & y)));
        }
    }

    #[test]
    fn quantile_matches_sorted_interpolation() {
        assert_eq!(quantile(&[3.0, 1.0, 2.0, 4.0], 0.5).unwrap(), 2.5);
        assert_eq!(quantile(&[10.0, 0.0], 0.05).unwrap(), 0.5);
        assert_eq!(quantile(&[7.0], 0.95).unwrap(), 7.0);
    }

    proptest! {
        #[test]
        fn bounds_hold(pairs in proptest::collection::vec((-500.0f64..500.0, -500.0f64..500.0), 1..60)) {
            let (p, q): (Vec<f64>, Vec<f64>) = pairs.into_iter().unzip();
            let s = smape(&p, &q).unwrap();
            prop_assert!((0.0..=200.0 + 1e-9).contains(&s));
            prop_assert!(rmse(&p, &q).unwrap() >= mae(&p, &q).unwrap() - 1e-12);
        }
    }
}
