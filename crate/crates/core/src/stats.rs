//! Descriptive statistics, iid horizon scaling, correlations and the factor regression.

use std::collections::{BTreeMap, BTreeSet};
use std::path::Path;

use chrono::NaiveDate;
use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};
use statrs::distribution::{ContinuousCDF, FisherSnedecor};

use crate::error::{Error, Result};

/// Sample mean, standard deviation, skewness and excess kurtosis. Higher moments are
/// absent when the sample is too short or has no dispersion.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MomentSummary {
    pub n: usize,
    pub mean: f64,
    pub stdev: Option<f64>,
    pub skewness: Option<f64>,
    pub excess_kurtosis: Option<f64>,
}

/// Moments with `stdev` from the `n - 1` variance and population-style normalised
/// central moments for skewness and kurtosis; `corrected` switches the latter to the
/// adjusted Fisher-Pearson `G1` and `G2`.
pub fn sample_moments(series: &[f64], corrected: bool) -> Result<MomentSummary> {
    let n = series.len();
    if n == 0 {
        return Err(Error::Insufficient("sample moments need at least one observation".into()));
    }
    let nf = n as f64;
    let mean = series.iter().sum::<f64>() / nf;
    let central = |p: i32| series.iter().map(|x| (x - mean).powi(p)).sum::<f64>() / nf;
    let m2 = central(2);
    let stdev = (n >= 2).then(|| (m2 * nf / (nf - 1.0)).sqrt());
    let dispersed = m2 > 0.0;
    let skewness = (n >= 3 && dispersed).then(|| {
        let g1 = central(3) / m2.powf(1.5);
        if corrected {
            g1 * (nf * (nf - 1.0)).sqrt() / (nf - 2.0)
        } else {
            g1
        }
    });
    let excess_kurtosis = (n >= 4 && dispersed).then(|| {
        let g2 = central(4) / (m2 * m2) - 3.0;
        if corrected {
            (nf - 1.0) / ((nf - 2.0) * (nf - 3.0)) * ((nf + 1.0) * g2 + 6.0)
        } else {
            g2
        }
    });
    Ok(MomentSummary {
        n,
        mean,
        stdev,
        skewness,
        excess_kurtosis,
    })
}

/// Moments of an `h`-period sum of iid copies.
pub fn iid_scale(summary: &MomentSummary, h: f64) -> MomentSummary {
    MomentSummary {
        n: summary.n,
        mean: summary.mean * h,
        stdev: summary.stdev.map(|s| s * h.sqrt()),
        skewness: summary.skewness.map(|s| s / h.sqrt()),
        excess_kurtosis: summary.excess_kurtosis.map(|k| k / h),
    }
}

/// z-scores using the sample standard deviation.
pub fn standardize(series: &[f64]) -> Result<Vec<f64>> {
    let s = sample_moments(series, false)?;
    match s.stdev {
        Some(sd) if sd > 0.0 => Ok(series.iter().map(|x| (x - s.mean) / sd).collect()),
        _ => Err(Error::ZeroVariance("series to standardise".into())),
    }
}

/// Lag-`lag` sample autocorrelation and its large-sample standard error `1/sqrt(n)`.
pub fn autocorrelation(series: &[f64], lag: usize) -> Result<(f64, f64)> {
    let n = series.len();
    if n <= lag + 1 {
        return Err(Error::Insufficient(format!("{n} observations for lag {lag}")));
    }
    let mean = series.iter().sum::<f64>() / n as f64;
    let denom: f64 = series.iter().map(|x| (x - mean).powi(2)).sum();
    if denom == 0.0 {
        return Err(Error::ZeroVariance("autocorrelation input".into()));
    }
    let num: f64 = series
        .iter()
        .zip(&series[lag..])
        .map(|(a, b)| (a - mean) * (b - mean))
        .sum();
    Ok((num / denom, 1.0 / (n as f64).sqrt()))
}

/// Pearson correlation; `None` if either side has no variance.
pub fn pearson(a: &[f64], b: &[f64]) -> Option<f64> {
    let n = a.len().min(b.len());
    if n < 2 {
        return None;
    }
    let ma = a[..n].iter().sum::<f64>() / n as f64;
    let mb = b[..n].iter().sum::<f64>() / n as f64;
    let (mut sab, mut saa, mut sbb) = (0.0, 0.0, 0.0);
    for (x, y) in a.iter().zip(b) {
        sab += (x - ma) * (y - mb);
        saa += (x - ma).powi(2);
        sbb += (y - mb).powi(2);
    }
    (saa > 0.0 && sbb > 0.0).then(|| (sab / (saa * sbb).sqrt()).clamp(-1.0, 1.0))
}

#[derive(Debug, Clone, PartialEq)]
pub struct CorrelationMatrix {
    pub names: Vec<String>,
    /// NaN where a pair is undefined.
    pub values: DMatrix<f64>,
    pub n_obs: usize,
    pub undefined: Vec<(usize, usize)>,
}

/// Pairwise Pearson correlations over the dates common to every series.
pub fn correlation_matrix(series: &[(String, Vec<(NaiveDate, f64)>)]) -> Result<CorrelationMatrix> {
    let mut common: Option<BTreeSet<NaiveDate>> = None;
    for (_, s) in series {
        let dates: BTreeSet<NaiveDate> = s.iter().map(|p| p.0).collect();
        common = Some(match common {
            None => dates,
            Some(c) => c.intersection(&dates).copied().collect(),
        });
    }
    let common = common.unwrap_or_default();
    if common.len() < 2 {
        return Err(Error::Insufficient(format!(
            "{} common observations for a correlation matrix",
            common.len()
        )));
    }
    let aligned: Vec<Vec<f64>> = series
        .iter()
        .map(|(_, s)| {
            let map: BTreeMap<_, _> = s.iter().copied().collect();
            common.iter().map(|d| map[d]).collect()
        })
        .collect();
    let k = series.len();
    let mut values = DMatrix::from_element(k, k, f64::NAN);
    let mut undefined = Vec::new();
    for i in 0..k {
        for j in i..k {
            match pearson(&aligned[i], &aligned[j]) {
                Some(r) => {
                    let r = if i == j { 1.0 } else { r };
                    values[(i, j)] = r;
                    values[(j, i)] = r;
                }
                None => undefined.push((i, j)),
            }
        }
    }
    Ok(CorrelationMatrix {
        names: series.iter().map(|(n, _)| n.clone()).collect(),
        values,
        n_obs: common.len(),
        undefined,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Covariance {
    #[default]
    Classical,
    /// White's heteroskedasticity-consistent estimator with the `n/(n-k)` correction.
    Hc1,
}

#[derive(Debug, Clone, PartialEq)]
pub struct OlsFit {
    pub names: Vec<String>,
    pub coefficients: Vec<f64>,
    pub std_errors: Vec<f64>,
    pub t_stats: Vec<f64>,
    pub residuals: Vec<f64>,
    pub rss: f64,
    pub r2: f64,
    pub adjusted_r2: f64,
    pub n_obs: usize,
}

/// Condition number above which a design is rejected as collinear.
pub const MAX_CONDITION: f64 = 1e10;

/// Least squares by Householder QR. Columns are named for error reporting.
pub fn ols(y: &[f64], columns: &[(String, Vec<f64>)], covariance: Covariance) -> Result<OlsFit> {
    let n = y.len();
    let k = columns.len();
    if n <= k {
        return Err(Error::Insufficient(format!("{n} observations for {k} parameters")));
    }
    if let Some((name, _)) = columns.iter().find(|(_, c)| c.len() != n) {
        return Err(Error::Dimension(format!("column {name} does not match {n} observations")));
    }
    let x = DMatrix::from_fn(n, k, |i, j| columns[j].1[i]);
    check_collinearity(&x, columns)?;
    let yv = DVector::from_column_slice(y);
    let qr = x.clone().qr();
    let r = qr.r();
    let qty = qr.q().transpose() * &yv;
    let beta = r
        .solve_upper_triangular(&qty)
        .ok_or_else(|| Error::Collinear {
            condition: f64::INFINITY,
            columns: columns.iter().map(|c| c.0.clone()).collect(),
        })?;
    let resid = &yv - &x * &beta;
    let rss = resid.norm_squared();
    let mean = yv.mean();
    let tss: f64 = yv.iter().map(|v| (v - mean).powi(2)).sum();
    let has_intercept = columns.iter().any(|(_, c)| c.iter().all(|v| *v == 1.0));
    let (r2, dof_tss) = if has_intercept {
        (if tss > 0.0 { 1.0 - rss / tss } else { 1.0 }, n as f64 - 1.0)
    } else {
        let raw = yv.norm_squared();
        (if raw > 0.0 { 1.0 - rss / raw } else { 1.0 }, n as f64)
    };
    let dof = (n - k) as f64;
    let adjusted_r2 = 1.0 - (1.0 - r2) * dof_tss / dof;

    // (X'X)^-1 = R^-1 R^-T
    let r_inv = r
        .solve_upper_triangular(&DMatrix::identity(k, k))
        .expect("R is non-singular after the solve above");
    let xtx_inv = &r_inv * r_inv.transpose();
    let cov = match covariance {
        Covariance::Classical => &xtx_inv * (rss / dof),
        Covariance::Hc1 => {
            let mut meat = DMatrix::zeros(k, k);
            for i in 0..n {
                let row = x.row(i).transpose();
                meat += &row * row.transpose() * resid[i].powi(2);
            }
            &xtx_inv * meat * &xtx_inv * (n as f64 / dof)
        }
    };
    let std_errors: Vec<f64> = (0..k).map(|j| cov[(j, j)].max(0.0).sqrt()).collect();
    let coefficients: Vec<f64> = beta.iter().copied().collect();
    let t_stats = coefficients
        .iter()
        .zip(&std_errors)
        .map(|(b, s)| if *s > 0.0 { b / s } else { f64::NAN })
        .collect();
    Ok(OlsFit {
        names: columns.iter().map(|c| c.0.clone()).collect(),
        coefficients,
        std_errors,
        t_stats,
        residuals: resid.iter().copied().collect(),
        rss,
        r2,
        adjusted_r2,
        n_obs: n,
    })
}

fn check_collinearity(x: &DMatrix<f64>, columns: &[(String, Vec<f64>)]) -> Result<()> {
    // Scale columns to unit norm so the condition number reflects geometry, not units.
    let mut scaled = x.clone();
    for mut c in scaled.column_iter_mut() {
        let norm = c.norm();
        if norm > 0.0 {
            c /= norm;
        }
    }
    let svd = scaled.svd(false, true);
    let sv = &svd.singular_values;
    let (imin, smin) = sv
        .iter()
        .enumerate()
        .min_by(|a, b| a.1.total_cmp(b.1))
        .map(|(i, s)| (i, *s))
        .expect("non-empty design");
    let condition = sv.max() / smin;
    if condition.is_finite() && condition <= MAX_CONDITION {
        return Ok(());
    }
    let v_t = svd.v_t.expect("requested");
    let direction = v_t.row(imin);
    let peak = direction.amax();
    let offending = columns
        .iter()
        .zip(direction.iter())
        .filter(|(_, w)| w.abs() >= 0.1 * peak)
        .map(|(c, _)| c.0.clone())
        .collect();
    Err(Error::Collinear {
        condition,
        columns: offending,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FTest {
    pub statistic: f64,
    pub df_num: usize,
    pub df_den: usize,
    pub p_value: f64,
}

/// F test of `restrictions` zero constraints, from nested residual sums of squares.
pub fn f_test(rss_restricted: f64, rss_unrestricted: f64, restrictions: usize, df_unrestricted: usize) -> Result<FTest> {
    if restrictions == 0 || df_unrestricted == 0 {
        return Err(Error::Insufficient("F test needs positive degrees of freedom".into()));
    }
    let statistic = ((rss_restricted - rss_unrestricted).max(0.0) / restrictions as f64)
        / (rss_unrestricted / df_unrestricted as f64);
    let dist = FisherSnedecor::new(restrictions as f64, df_unrestricted as f64)
        .map_err(|e| Error::Model(e.to_string()))?;
    Ok(FTest {
        statistic,
        df_num: restrictions,
        df_den: df_unrestricted,
        p_value: dist.sf(statistic),
    })
}

/// Daily factor observations in percent, as published in the research factor files.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FactorObs {
    pub date: NaiveDate,
    pub mkt_rf: f64,
    pub smb: f64,
    pub hml: f64,
    pub mom: f64,
    pub rf: f64,
}

/// Reads a comma-delimited factor file. Leading description lines and trailing
/// annual blocks are skipped: data rows are those whose first field is a yyyymmdd date.
pub fn read_factor_file(path: &Path) -> Result<Vec<FactorObs>> {
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    let mut header: Option<Vec<String>> = None;
    let mut out = Vec::new();
    for (lineno, line) in text.lines().enumerate() {
        let fields: Vec<&str> = line.split(',').map(str::trim).collect();
        let Some(cols) = &header else {
            if fields.iter().any(|f| f.eq_ignore_ascii_case("Mkt-RF")) {
                header = Some(fields.iter().map(|f| f.to_ascii_uppercase()).collect());
            }
            continue;
        };
        let first = fields[0];
        if first.len() != 8 || !first.bytes().all(|b| b.is_ascii_digit()) {
            if out.is_empty() {
                continue;
            }
            break;
        }
        let bad = |message: String| Error::Row {
            path: path.to_path_buf(),
            line: lineno as u64 + 1,
            message,
        };
        let date = NaiveDate::parse_from_str(first, "%Y%m%d").map_err(|e| bad(e.to_string()))?;
        let get = |name: &str| -> Result<f64> {
            let i = cols
                .iter()
                .position(|c| c == name)
                .ok_or_else(|| bad(format!("missing column {name}")))?;
            fields
                .get(i)
                .ok_or_else(|| bad(format!("short row, no {name}")))?
                .parse()
                .map_err(|e| bad(format!("{name}: {e}")))
        };
        out.push(FactorObs {
            date,
            mkt_rf: get("MKT-RF")?,
            smb: get("SMB")?,
            hml: get("HML")?,
            mom: get("MOM")?,
            rf: get("RF")?,
        });
    }
    if header.is_none() {
        return Err(Error::Dataset(format!("{}: no Mkt-RF header found", path.display())));
    }
    Ok(out)
}

pub fn write_factor_file(path: &Path, rows: &[FactorObs]) -> Result<()> {
    let mut text = String::from("Daily factors (percent)\n\n,Mkt-RF,SMB,HML,MOM,RF\n");
    for r in rows {
        text.push_str(&format!(
            "{},{:.4},{:.4},{:.4},{:.4},{:.4}\n",
            r.date.format("%Y%m%d"),
            r.mkt_rf,
            r.smb,
            r.hml,
            r.mom,
            r.rf
        ));
    }
    std::fs::write(path, text).map_err(|e| Error::io(path, e))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ErSquare {
    /// Square of the standardised market factor.
    #[default]
    Standardized,
    /// Square of the raw market factor, standardised afterwards.
    Raw,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
pub struct RegressionOptions {
    pub covariance: Covariance,
    pub er_square: ErSquare,
}

/// `y = a + b_ER ER + b_ER2 ER^2 + b_s SMB + b_g HML + b_m MOM`, all series standardised.
#[derive(Debug, Clone, PartialEq)]
pub struct RegressionResult {
    pub names: Vec<String>,
    pub coefficients: Vec<f64>,
    pub t_stats: Vec<f64>,
    pub adjusted_r2: f64,
    /// Joint test of `b_s = b_g = b_m = 0`.
    pub f_test: FTest,
    pub n_obs: usize,
    pub restricted: bool,
}

/// Factor columns aligned with `y` by date, in the order ER, ER², size, growth, momentum.
pub fn aligned_design(
    y: &[(NaiveDate, f64)],
    factors: &[FactorObs],
    er_square: ErSquare,
) -> Result<(Vec<f64>, Vec<(String, Vec<f64>)>)> {
    let by_date: BTreeMap<NaiveDate, &FactorObs> = factors.iter().map(|f| (f.date, f)).collect();
    let rows: Vec<(f64, &FactorObs)> = y
        .iter()
        .filter_map(|(d, v)| by_date.get(d).map(|f| (*v, *f)))
        .collect();
    if rows.len() < y.len() {
        log::warn!("{} of {} observations have no factor row", y.len() - rows.len(), y.len());
    }
    let col = |f: fn(&FactorObs) -> f64| rows.iter().map(|(_, o)| f(o)).collect::<Vec<_>>();
    let yv: Vec<f64> = rows.iter().map(|r| r.0).collect();
    let er = col(|o| o.mkt_rf);
    let er_std = standardize(&er)?;
    let er2 = match er_square {
        ErSquare::Standardized => er_std.iter().map(|v| v * v).collect(),
        ErSquare::Raw => er.iter().map(|v| v * v).collect::<Vec<_>>(),
    };
    let named = |name: &str, v: Vec<f64>| -> Result<(String, Vec<f64>)> {
        standardize(&v)
            .map(|s| (name.to_string(), s))
            .map_err(|_| Error::ZeroVariance(format!("factor {name}")))
    };
    let columns = vec![
        ("ER".to_string(), er_std),
        named("ER2", er2)?,
        named("size", col(|o| o.smb))?,
        named("growth", col(|o| o.hml))?,
        named("momentum", col(|o| o.mom))?,
    ];
    let yv = standardize(&yv).map_err(|_| Error::ZeroVariance("regressand".into()))?;
    Ok((yv, columns))
}

pub fn ols_factor_regression(
    y: &[(NaiveDate, f64)],
    factors: &[FactorObs],
    restricted: bool,
    options: RegressionOptions,
) -> Result<RegressionResult> {
    let (yv, columns) = aligned_design(y, factors, options.er_square)?;
    let n = yv.len();
    let intercept = ("alpha".to_string(), vec![1.0; n]);
    let mut full = vec![intercept];
    full.extend(columns);
    let unrestricted = ols(&yv, &full, options.covariance)?;
    let restricted_fit = ols(&yv, &full[..3], options.covariance)?;
    let f = f_test(restricted_fit.rss, unrestricted.rss, 3, n - full.len())?;
    let fit = if restricted { restricted_fit } else { unrestricted };
    Ok(RegressionResult {
        names: fit.names,
        coefficients: fit.coefficients,
        t_stats: fit.t_stats,
        adjusted_r2: fit.adjusted_r2,
        f_test: f,
        n_obs: n,
        restricted,
    })
}

/// One-sample Kolmogorov-Smirnov test against U(0, 1): statistic and asymptotic p-value.
pub fn ks_uniform(samples: &[f64]) -> Result<(f64, f64)> {
    if samples.is_empty() {
        return Err(Error::Insufficient("KS test on an empty sample".into()));
    }
    let mut s = samples.to_vec();
    s.sort_by(f64::total_cmp);
    let n = s.len() as f64;
    let d = s
        .iter()
        .enumerate()
        .map(|(i, &u)| {
            let u = u.clamp(0.0, 1.0);
            ((i + 1) as f64 / n - u).max(u - i as f64 / n)
        })
        .fold(0.0, f64::max);
    let lambda = (n.sqrt() + 0.12 + 0.11 / n.sqrt()) * d;
    Ok((d, kolmogorov_sf(lambda)))
}

fn kolmogorov_sf(lambda: f64) -> f64 {
    if lambda < 0.2 {
        return 1.0;
    }
    let mut sum = 0.0;
    for k in 1..=100 {
        let term = (-2.0 * (k * k) as f64 * lambda * lambda).exp();
        sum += if k % 2 == 1 { term } else { -term };
        if term < 1e-16 {
            break;
        }
    }
    (2.0 * sum).clamp(0.0, 1.0)
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;
    use rand_distr::{Distribution, StandardNormal};

    fn normals(n: usize, seed: u64) -> Vec<f64> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        (0..n).map(|_| StandardNormal.sample(&mut rng)).collect()
    }

    #[test]
    fn degenerate_and_symmetric_samples() {
        let c = sample_moments(&[2.0; 5], false).unwrap();
        assert_eq!(c.stdev, Some(0.0));
        assert!(c.skewness.is_none() && c.excess_kurtosis.is_none());
        let s = sample_moments(&[-1.0, 1.0], false).unwrap();
        assert_eq!(s.mean, 0.0);
        assert!(s.skewness.is_none(), "n = 2 has no skewness");
        let s = sample_moments(&[-1.0, 0.0, 1.0], false).unwrap();
        assert_eq!(s.skewness, Some(0.0));
        assert!(sample_moments(&[], false).is_err());
    }

    #[test]
    fn moments_against_hand_computation() {
        // x = [0, 0, 0, 4]: mean 1, central m2 = 3, m3 = 6, m4 = 21
        let s = sample_moments(&[0.0, 0.0, 0.0, 4.0], false).unwrap();
        assert!((s.stdev.unwrap() - 2.0).abs() < 1e-15);
        assert!((s.skewness.unwrap() - 6.0 / 3f64.powf(1.5)).abs() < 1e-14);
        assert!((s.excess_kurtosis.unwrap() - (21.0 / 9.0 - 3.0)).abs() < 1e-14);
    }

    #[test]
    fn gaussian_sample_has_small_excess_kurtosis() {
        let s = sample_moments(&normals(200_000, 1), true).unwrap();
        // se of excess kurtosis ~ sqrt(24/n) ~ 0.011
        assert!(s.excess_kurtosis.unwrap().abs() < 0.05);
        assert!(s.skewness.unwrap().abs() < 0.025);
    }

    #[test]
    fn iid_scaling_composes() {
        let s = MomentSummary {
            n: 100,
            mean: 0.001,
            stdev: Some(0.013),
            skewness: Some(-0.16),
            excess_kurtosis: Some(2.79),
        };
        assert_eq!(iid_scale(&s, 1.0), s);
        let a = iid_scale(&iid_scale(&s, 4.0), 5.0);
        let b = iid_scale(&s, 20.0);
        assert!((a.stdev.unwrap() - b.stdev.unwrap()).abs() < 1e-15);
        assert!((a.skewness.unwrap() - b.skewness.unwrap()).abs() < 1e-15);
        assert!((a.excess_kurtosis.unwrap() - b.excess_kurtosis.unwrap()).abs() < 1e-15);
    }

    #[test]
    fn standardize_examples() {
        let z = standardize(&[1.0, 2.0, 3.0]).unwrap();
        assert_eq!(z, vec![-1.0, 0.0, 1.0]);
        let x = normals(50, 2);
        let y: Vec<f64> = x.iter().map(|v| -3.0 * v + 7.0).collect();
        for (a, b) in standardize(&x).unwrap().iter().zip(standardize(&y).unwrap()) {
            assert!((a + b).abs() < 1e-12);
        }
        assert!(matches!(standardize(&[1.0, 1.0]), Err(Error::ZeroVariance(_))));
    }

    #[test]
    fn correlation_matrix_properties() {
        let d0 = NaiveDate::from_ymd_opt(2020, 1, 1).unwrap();
        let dated = |v: &[f64], skip: usize| -> Vec<(NaiveDate, f64)> {
            v.iter()
                .enumerate()
                .skip(skip)
                .map(|(i, x)| (d0 + chrono::Duration::days(i as i64), *x))
                .collect()
        };
        let a = normals(300, 3);
        let neg: Vec<f64> = a.iter().map(|v| -v).collect();
        let b = normals(300, 4);
        let m = correlation_matrix(&[
            ("a".into(), dated(&a, 0)),
            ("neg".into(), dated(&neg, 10)),
            ("b".into(), dated(&b, 0)),
            ("flat".into(), dated(&[1.0; 300], 0)),
        ])
        .unwrap();
        assert_eq!(m.n_obs, 290);
        assert_eq!(m.values[(0, 0)], 1.0);
        assert!((m.values[(0, 1)] + 1.0).abs() < 1e-12);
        assert!(m.undefined.contains(&(0, 3)) && m.undefined.contains(&(3, 3)));
        let sub = m.values.view((0, 0), (3, 3)).into_owned();
        assert!(sub.clone().symmetric_eigen().eigenvalues.min() > -1e-10);
        assert_eq!(sub, sub.transpose());
    }

    #[test]
    fn exact_fit_recovers_identity() {
        let d0 = NaiveDate::from_ymd_opt(2020, 1, 1).unwrap();
        let (e, s, h, m) = (normals(200, 5), normals(200, 6), normals(200, 7), normals(200, 8));
        let factors: Vec<FactorObs> = (0..200)
            .map(|i| FactorObs {
                date: d0 + chrono::Duration::days(i as i64),
                mkt_rf: e[i],
                smb: s[i],
                hml: h[i],
                mom: m[i],
                rf: 0.0,
            })
            .collect();
        let y: Vec<_> = factors.iter().map(|f| (f.date, f.mkt_rf)).collect();
        let r = ols_factor_regression(&y, &factors, false, RegressionOptions::default()).unwrap();
        assert!((r.coefficients[1] - 1.0).abs() < 1e-12);
        for (i, b) in r.coefficients.iter().enumerate() {
            if i != 1 {
                assert!(b.abs() < 1e-12, "{}: {b}", r.names[i]);
            }
        }
        assert!((r.adjusted_r2 - 1.0).abs() < 1e-12);
    }

    #[test]
    fn residuals_are_orthogonal_and_restriction_lowers_fit() {
        let n = 400;
        let x1 = normals(n, 9);
        let x2 = normals(n, 10);
        let noise = normals(n, 11);
        let y: Vec<f64> = (0..n).map(|i| 1.0 + 0.3 * x1[i] + noise[i]).collect();
        let cols = vec![
            ("c".to_string(), vec![1.0; n]),
            ("x1".to_string(), x1.clone()),
            ("x2".to_string(), x2.clone()),
        ];
        for cov in [Covariance::Classical, Covariance::Hc1] {
            let full = ols(&y, &cols, cov).unwrap();
            for (_, c) in &cols {
                let dot: f64 = c.iter().zip(&full.residuals).map(|(a, b)| a * b).sum();
                assert!(dot.abs() < 1e-10);
            }
            let part = ols(&y, &cols[..2], cov).unwrap();
            assert!(part.r2 <= full.r2);
            let f = f_test(part.rss, full.rss, 1, n - 3).unwrap();
            assert!(f.statistic >= 0.0 && (0.0..=1.0).contains(&f.p_value));
        }
    }

    #[test]
    fn classical_errors_match_closed_form_for_simple_regression() {
        let n = 50;
        let x = normals(n, 12);
        let e = normals(n, 13);
        let y: Vec<f64> = (0..n).map(|i| 2.0 - x[i] + 0.5 * e[i]).collect();
        let fit = ols(&y, &[("c".into(), vec![1.0; n]), ("x".into(), x.clone())], Covariance::Classical).unwrap();
        let mx = x.iter().sum::<f64>() / n as f64;
        let sxx: f64 = x.iter().map(|v| (v - mx).powi(2)).sum();
        let s2 = fit.rss / (n - 2) as f64;
        assert!((fit.std_errors[1] - (s2 / sxx).sqrt()).abs() < 1e-12);
    }

    #[test]
    fn collinear_columns_are_named() {
        let n = 30;
        let a = normals(n, 14);
        let b = normals(n, 15);
        let c: Vec<f64> = a.iter().zip(&b).map(|(x, y)| x - 2.0 * y).collect();
        let cols = vec![
            ("const".to_string(), vec![1.0; n]),
            ("a".to_string(), a),
            ("b".to_string(), b),
            ("c".to_string(), c),
        ];
        match ols(&normals(n, 16), &cols, Covariance::Classical) {
            Err(Error::Collinear { columns, .. }) => assert_eq!(columns, vec!["a", "b", "c"]),
            other => panic!("expected collinearity, got {other:?}"),
        }
    }

    #[test]
    fn ks_statistic_examples() {
        let grid: Vec<f64> = (0..1000).map(|i| (i as f64 + 0.5) / 1000.0).collect();
        let (d, p) = ks_uniform(&grid).unwrap();
        assert!((d - 0.0005).abs() < 1e-12);
        assert!(p > 0.99);
        let skewed: Vec<f64> = grid.iter().map(|u| u * u).collect();
        assert!(ks_uniform(&skewed).unwrap().1 < 1e-6);
        // Kolmogorov distribution: P(K > 1.36) ~ 0.049
        assert!((kolmogorov_sf(1.36) - 0.0494).abs() < 5e-4);
    }

    #[test]
    fn autocorrelation_of_a_moving_average() {
        let e = normals(20_001, 17);
        let ma: Vec<f64> = e.windows(2).map(|w| w[0] + w[1]).collect();
        let (rho, se) = autocorrelation(&ma, 1).unwrap();
        assert!((rho - 0.5).abs() < 4.0 * se, "{rho}");
        let (rho, se) = autocorrelation(&e, 1).unwrap();
        assert!(rho.abs() < 4.0 * se);
    }

    #[test]
    fn factor_file_roundtrip_and_preamble() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("f.csv");
        std::fs::write(
            &path,
            "This file was created from research data\n\n,Mkt-RF,SMB,HML,Mom,RF\n19960102,  0.51, -0.1, 0.2, 0.3, 0.02\n19960103,-0.20,0.0,0.1,-0.4,0.02\n\n Annual Factors\n,Mkt-RF\n1996,20.1\n",
        )
        .unwrap();
        let rows = read_factor_file(&path).unwrap();
        assert_eq!(rows.len(), 2);
        assert_eq!(rows[0].date, NaiveDate::from_ymd_opt(1996, 1, 2).unwrap());
        assert_eq!(rows[1].mom, -0.4);
        let out = dir.path().join("g.csv");
        write_factor_file(&out, &rows).unwrap();
        assert_eq!(read_factor_file(&out).unwrap(), rows);
    }
}
