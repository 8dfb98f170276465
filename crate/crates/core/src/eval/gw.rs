//! Giacomini-White conditional predictive ability test on daily absolute-loss
//! differentials, with instruments [1, d_{t−1}].

use nalgebra::{Matrix2, Vector2};
use serde::{Deserialize, Serialize};
use statrs::distribution::{ChiSquared, ContinuousCDF};

use crate::backtest::ForecastSet;
use crate::error::{EpfError, Result};
use crate::timeseries::HOURS_PER_DAY;

pub const MIN_GW_DAYS: usize = 30;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GwResult {
    pub statistic: f64,
    /// Small when model A is less accurate than model B.
    pub p_one_sided: f64,
    pub p_two_sided: f64,
    /// Number of instrumented days.
    pub n: usize,
    pub instrument_dim: usize,
    /// The moment covariance was singular, so the test cannot reject.
    pub degenerate: bool,
}

/// Tests equal conditional accuracy of A and B from their hourly errors,
/// one row of 24 per day.
pub fn gw_test(err_a: &[[f64; HOURS_PER_DAY]], err_b: &[[f64; HOURS_PER_DAY]]) -> Result<GwResult> {
    if err_a.len() != err_b.len() {
        return Err(EpfError::Shape(format!("{} vs {} days of errors", err_a.len(), err_b.len())));
    }
    if err_a.len() < MIN_GW_DAYS {
        return Err(EpfError::config(
            "days",
            format!("the test needs at least {MIN_GW_DAYS} days, got {}", err_a.len()),
        ));
    }
    let d: Vec<f64> = err_a
        .iter()
        .zip(err_b)
        .map(|(a, b)| a.iter().map(|e| e.abs()).sum::<f64>() - b.iter().map(|e| e.abs()).sum::<f64>())
        .collect();
    let z: Vec<Vector2<f64>> = (1..d.len()).map(|t| Vector2::new(d[t], d[t - 1] * d[t])).collect();
    let n = z.len();
    let mean = z.iter().sum::<Vector2<f64>>() / n as f64;
    let mut cov = Matrix2::zeros();
    for zt in &z {
        let c = zt - mean;
        cov += c * c.transpose();
    }
    cov /= (n - 1) as f64;
    let degenerate_result = GwResult {
        statistic: 0.0,
        p_one_sided: 1.0,
        p_two_sided: 1.0,
        n,
        instrument_dim: 2,
        degenerate: true,
    };
    let eig = cov.symmetric_eigenvalues();
    let (lo, hi) = (eig.min(), eig.max());
    if !(hi > 0.0) || lo <= 1e-12 * hi {
        return Ok(degenerate_result);
    }
    let Some(inv) = cov.try_inverse() else {
        return Ok(degenerate_result);
    };
    let statistic = (n as f64 * mean.dot(&(inv * mean))).max(0.0);
    let chi2 = ChiSquared::new(2.0).expect("two degrees of freedom");
    let p_two = chi2.sf(statistic).clamp(0.0, 1.0);
    let mean_d = d[1..].iter().sum::<f64>() / n as f64;
    let p_one = if mean_d > 0.0 { p_two / 2.0 } else { 1.0 - p_two / 2.0 };
    Ok(GwResult {
        statistic,
        p_one_sided: p_one,
        p_two_sided: p_two,
        n,
        instrument_dim: 2,
        degenerate: false,
    })
}

/// Hourly errors of `forecast` against `actual`.
pub fn errors(forecast: &ForecastSet, actual: &ForecastSet) -> Result<Vec<[f64; HOURS_PER_DAY]>> {
    if forecast.days != actual.days {
        return Err(EpfError::Alignment(format!(
            "`{}` does not cover the same days as `{}`",
            forecast.label, actual.label
        )));
    }
    Ok(forecast
        .values
        .iter()
        .zip(&actual.values)
        .map(|(f, a)| {
            let mut e = [0.0; HOURS_PER_DAY];
            for h in 0..HOURS_PER_DAY {
                e[h] = a[h] - f[h];
            }
            e
        })
        .collect())
}

/// Pairwise one-sided p-values. Cell (r, c) is the p-value for "column
/// model c is more accurate than row model r"; the diagonal is `None`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GwMatrix {
    pub schema_version: u32,
    pub labels: Vec<String>,
    pub p_values: Vec<Vec<Option<f64>>>,
}

pub fn gw_matrix(forecasts: &[ForecastSet], actual: &ForecastSet) -> Result<GwMatrix> {
    if forecasts.len() < 2 {
        return Err(EpfError::config("forecasts", "a comparison matrix needs at least two forecasts"));
    }
    let errs = forecasts.iter().map(|f| errors(f, actual)).collect::<Result<Vec<_>>>()?;
    let k = forecasts.len();
    let mut p_values = vec![vec![None; k]; k];
    for r in 0..k {
        for c in 0..k {
            if r != c {
                p_values[r][c] = Some(gw_test(&errs[r], &errs[c])?.p_one_sided);
            }
        }
    }
    Ok(GwMatrix {
        schema_version: crate::SCHEMA_VERSION,
        labels: forecasts.iter().map(|f| f.label.clone()).collect(),
        p_values,
    })
}

impl GwMatrix {
    /// Aligned table; `*` marks p < 0.05.
    pub fn to_text(&self) -> String {
        let w = self.labels.iter().map(|l| l.len()).max().unwrap_or(0).max(8);
        let mut out = format!("{:w$}", "row \\ col");
        for l in &self.labels {
            out.push_str(&format!("  {l:>w$}"));
        }
        out.push('\n');
        for (r, row) in self.p_values.iter().enumerate() {
            out.push_str(&format!("{:w$}", self.labels[r]));
            for cell in row {
                let s = match cell {
                    None => "-".to_string(),
                    Some(p) if *p < 0.05 => format!("{p:.4}*"),
                    Some(p) => format!("{p:.4} "),
                };
                out.push_str(&format!("  {s:>w$}"));
            }
            out.push('\n');
        }
        out
    }

    pub fn to_csv(&self) -> String {
        let mut out = String::from("row");
        for l in &self.labels {
            out.push(',');
            out.push_str(l);
        }
        out.push('\n');
        for (r, row) in self.p_values.iter().enumerate() {
            out.push_str(&self.labels[r]);
            for cell in row {
                out.push(',');
                if let Some(p) = cell {
                    out.push_str(&p.to_string());
                }
            }
            out.push('\n');
        }
        out
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use chrono::NaiveDate;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;
    use rand_distr::StandardNormal;

    fn noise(rng: &mut impl Rng, days: usize, offset: f64) -> Vec<[f64; 24]> {
        (0..days)
            .map(|_| {
                let mut r = [0.0; 24];
                for v in &mut r {
                    *v = offset + rng.sample::<f64, _>(StandardNormal);
                }
                r
            })
            .collect()
    }

    #[test]
    fn identical_errors_are_degenerate() {
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        let e = noise(&mut rng, 60, 0.0);
        let r = gw_test(&e, &e).unwrap();
        assert!(r.degenerate);
        assert_eq!(r.p_one_sided, 1.0);
        assert!(gw_test(&e[..20], &e[..20]).is_err());
    }

    #[test]
    fn clear_gap_is_detected_in_the_right_direction() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let b = noise(&mut rng, 200, 0.0);
        let a: Vec<[f64; 24]> = b
            .iter()
            .map(|row| {
                let mut r = *row;
                for v in &mut r {
                    *v = v.abs() + 5.0 + 0.1 * rng.sample::<f64, _>(StandardNormal);
                }
                r
            })
            .collect();
        let ab = gw_test(&a, &b).unwrap();
        let ba = gw_test(&b, &a).unwrap();
        assert!(ab.p_one_sided < 0.01);
        assert!(ba.p_one_sided > 0.99);
        assert!((ab.p_one_sided + ba.p_one_sided - 1.0).abs() < 1e-12);
        assert_eq!(ab.instrument_dim, 2);
        assert_eq!(ab.n, 199);
    }

    #[test]
    fn statistic_matches_hand_formula() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let a = noise(&mut rng, 40, 0.3);
        let b = noise(&mut rng, 40, 0.0);
        let r = gw_test(&a, &b).unwrap();
        // closed-form 2x2 inverse and chi-squared(2) survival exp(-T/2)
        let d: Vec<f64> = a
            .iter()
            .zip(&b)
            .map(|(x, y)| x.iter().map(|v| v.abs()).sum::<f64>() - y.iter().map(|v| v.abs()).sum::<f64>())
            .collect();
        let z: Vec<(f64, f64)> = (1..40).map(|t| (d[t], d[t - 1] * d[t])).collect();
        let n = z.len() as f64;
        let (m1, m2) = (z.iter().map(|p| p.0).sum::<f64>() / n, z.iter().map(|p| p.1).sum::<f64>() / n);
        let s11 = z.iter().map(|p| (p.0 - m1).powi(2)).sum::<f64>() / (n - 1.0);
        let s22 = z.iter().map(|p| (p.1 - m2).powi(2)).sum::<f64>() / (n - 1.0);
        let s12 = z.iter().map(|p| (p.0 - m1) * (p.1 - m2)).sum::<f64>() / (n - 1.0);
        let det = s11 * s22 - s12 * s12;
        let t = n * (m1 * m1 * s22 - 2.0 * m1 * m2 * s12 + m2 * m2 * s11) / det;
        assert!((r.statistic - t).abs() < 1e-9 * t.max(1.0));
        assert!((r.p_two_sided - (-t / 2.0).exp()).abs() < 1e-12);
    }

    fn set(label: &str, values: Vec<[f64; 24]>) -> ForecastSet {
        let start = NaiveDate::from_ymd_opt(2024, 1, 1).unwrap();
        let days = (0..values.len()).map(|i| start + chrono::Duration::days(i as i64)).collect();
        ForecastSet::new(label, days, values).unwrap()
    }

    #[test]
    fn matrix_orientation_and_symmetry() {
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        let actual = set("actual", noise(&mut rng, 80, 50.0));
        let perturb = |rng: &mut ChaCha8Rng, sd: f64| {
            let v = actual
                .values
                .iter()
                .map(|row| {
                    let mut r = *row;
                    for x in &mut r {
                        *x += sd * rng.sample::<f64, _>(StandardNormal);
                    }
                    r
                })
                .collect();
            v
        };
        let good = set("good", perturb(&mut rng, 0.5));
        let bad1 = set("bad1", perturb(&mut rng, 3.0));
        let bad2 = set("bad2", perturb(&mut rng, 3.0));
        let m = gw_matrix(&[bad1.clone(), good.clone(), bad2], &actual).unwrap();
        assert!(m.p_values[0][1].unwrap() < 0.05 && m.p_values[2][1].unwrap() < 0.05);
        for r in 0..3 {
            assert!(m.p_values[r][r].is_none());
            for c in 0..3 {
                if r != c {
                    let s = m.p_values[r][c].unwrap() + m.p_values[c][r].unwrap();
                    assert!((s - 1.0).abs() < 1e-12);
                }
            }
        }
        assert!(m.to_text().contains('*'));
        assert_eq!(m.to_csv().lines().count(), 4);
        let dup = gw_matrix(&[good.clone(), good], &actual).unwrap();
        assert_eq!(dup.p_values[0][1], Some(1.0));
    }
}
