//! Tables (CSV) and figures (SVG) from the pipeline stores.
//!
//! Everything is a pure function of the store contents, so identical stores give
//! byte-identical reports.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};

use chrono::NaiveDate;
use serde::{Deserialize, Serialize};

use crate::contracts::read_panel_store;
use crate::error::{Error, Result};
use crate::series::{read_series_csv, Frequency, PanelIndex};
use crate::stats::{correlation_matrix, iid_scale, sample_moments, standardize, MomentSummary};

/// Row of the series index written next to the series CSVs.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SeriesIndexRow {
    pub label: String,
    pub spec: String,
    pub frequency: Frequency,
    pub tau_days: i64,
    pub method: String,
    pub file: String,
}

pub const SERIES_INDEX: &str = "index.csv";

pub fn read_series_index(dir: &Path) -> Result<Vec<SeriesIndexRow>> {
    let path = dir.join(SERIES_INDEX);
    if !path.is_file() {
        return Err(Error::MissingStore(path));
    }
    let mut r = csv::Reader::from_path(&path).map_err(|e| Error::csv(&path, e))?;
    r.deserialize()
        .collect::<std::result::Result<Vec<_>, _>>()
        .map_err(|e| Error::csv(&path, e))
}

pub fn write_series_index(dir: &Path, rows: &[SeriesIndexRow]) -> Result<PathBuf> {
    let path = dir.join(SERIES_INDEX);
    let mut w = csv::Writer::from_path(&path).map_err(|e| Error::csv(&path, e))?;
    if rows.is_empty() {
        w.write_record(["label", "spec", "frequency", "tau_days", "method", "file"])
            .map_err(|e| Error::csv(&path, e))?;
    }
    for r in rows {
        w.serialize(r).map_err(|e| Error::csv(&path, e))?;
    }
    w.flush().map_err(|e| Error::io(&path, e))?;
    Ok(path)
}

fn num(v: Option<f64>) -> String {
    v.map(|x| format!("{x:.6}")).unwrap_or_default()
}

/// Observed daily, weekly and monthly moments of log forward changes, with the
/// weekly and monthly moments implied by iid scaling of the daily ones.
#[derive(Debug, Clone, PartialEq)]
pub struct ScalingTable {
    pub daily: MomentSummary,
    pub weekly: MomentSummary,
    pub weekly_iid: MomentSummary,
    pub monthly: MomentSummary,
    pub monthly_iid: MomentSummary,
}

/// Non-overlapping `h`-period sums.
fn aggregate(returns: &[f64], h: usize) -> Vec<f64> {
    returns.chunks_exact(h).map(|c| c.iter().sum()).collect()
}

pub fn scaling_table(daily_returns: &[f64]) -> Result<ScalingTable> {
    let summary = |h: usize| sample_moments(&aggregate(daily_returns, h), false);
    let daily = summary(1)?;
    Ok(ScalingTable {
        weekly: summary(5)?,
        weekly_iid: iid_scale(&daily, 5.0),
        monthly: summary(20)?,
        monthly_iid: iid_scale(&daily, 20.0),
        daily,
    })
}

fn write_scaling_table(path: &Path, table: Option<&ScalingTable>) -> Result<()> {
    let mut out = String::from("statistic,daily_obs,weekly_obs,weekly_iid,monthly_obs,monthly_iid\n");
    if let Some(t) = table {
        let cols = [t.daily, t.weekly, t.weekly_iid, t.monthly, t.monthly_iid];
        let rows: [(&str, fn(&MomentSummary) -> Option<f64>); 3] = [
            ("stdev", |m| m.stdev),
            ("skewness", |m| m.skewness),
            ("excess_kurtosis", |m| m.excess_kurtosis),
        ];
        for (name, get) in rows {
            out.push_str(name);
            for c in &cols {
                out.push(',');
                out.push_str(&num(get(c)));
            }
            out.push('\n');
        }
    }
    fs::write(path, out).map_err(|e| Error::io(path, e))
}

const PALETTE: [&str; 8] = [
    "#1f77b4", "#d62728", "#2ca02c", "#9467bd", "#ff7f0e", "#8c564b", "#e377c2", "#17becf",
];

/// Line chart of dated series on a shared date axis.
pub fn line_chart_svg(title: &str, series: &[(String, Vec<(NaiveDate, f64)>)]) -> String {
    let (w, h, left, right, top, bottom) = (900.0, 420.0, 70.0, 170.0, 40.0, 40.0);
    let points = series.iter().flat_map(|(_, s)| s.iter());
    let (mut x0, mut x1, mut y0, mut y1) = (i64::MAX, i64::MIN, f64::INFINITY, f64::NEG_INFINITY);
    for (d, v) in points {
        let x = d.num_days_from_ce_i64();
        x0 = x0.min(x);
        x1 = x1.max(x);
        if v.is_finite() {
            y0 = y0.min(*v);
            y1 = y1.max(*v);
        }
    }
    let mut svg = String::new();
    let _ = writeln!(
        svg,
        r#"<svg xmlns="http://www.w3.org/2000/svg" width="{w}" height="{h}" viewBox="0 0 {w} {h}" font-family="sans-serif" font-size="12">"#
    );
    let _ = writeln!(svg, r#"<rect width="{w}" height="{h}" fill="white"/>"#);
    let _ = writeln!(svg, r#"<text x="{left}" y="24" font-size="14">{}</text>"#, escape(title));
    let (pw, ph) = (w - left - right, h - top - bottom);
    let _ = writeln!(
        svg,
        r#"<rect x="{left}" y="{top}" width="{pw}" height="{ph}" fill="none" stroke="black"/>"#
    );
    if x0 > x1 || !y0.is_finite() {
        let _ = writeln!(
            svg,
            r#"<text x="{:.2}" y="{:.2}" text-anchor="middle">no data</text>"#,
            left + pw / 2.0,
            top + ph / 2.0
        );
        svg.push_str("</svg>\n");
        return svg;
    }
    if y1 == y0 {
        y0 -= 1.0;
        y1 += 1.0;
    }
    let span = (x1 - x0).max(1) as f64;
    let sx = |x: i64| left + pw * (x - x0) as f64 / span;
    let sy = |y: f64| top + ph * (1.0 - (y - y0) / (y1 - y0));
    if y0 < 0.0 && y1 > 0.0 {
        let _ = writeln!(
            svg,
            r##"<line x1="{left}" y1="{z:.2}" x2="{:.2}" y2="{z:.2}" stroke="#999" stroke-dasharray="4 3"/>"##,
            left + pw,
            z = sy(0.0)
        );
    }
    let first = NaiveDate::from_num_days_from_ce_opt(x0 as i32).expect("date from data");
    let last = NaiveDate::from_num_days_from_ce_opt(x1 as i32).expect("date from data");
    let _ = writeln!(svg, r#"<text x="{left}" y="{:.2}">{first}</text>"#, h - 14.0);
    let _ = writeln!(
        svg,
        r#"<text x="{:.2}" y="{:.2}" text-anchor="end">{last}</text>"#,
        left + pw,
        h - 14.0
    );
    let _ = writeln!(svg, r#"<text x="{:.2}" y="{:.2}" text-anchor="end">{y1:.3}</text>"#, left - 6.0, top + 4.0);
    let _ = writeln!(
        svg,
        r#"<text x="{:.2}" y="{:.2}" text-anchor="end">{y0:.3}</text>"#,
        left - 6.0,
        top + ph
    );
    for (i, (name, s)) in series.iter().enumerate() {
        let colour = PALETTE[i % PALETTE.len()];
        let coords: Vec<String> = s
            .iter()
            .filter(|(_, v)| v.is_finite())
            .map(|(d, v)| format!("{:.2},{:.2}", sx(d.num_days_from_ce_i64()), sy(*v)))
            .collect();
        let _ = writeln!(
            svg,
            r#"<polyline fill="none" stroke="{colour}" stroke-width="1.2" points="{}"/>"#,
            coords.join(" ")
        );
        let ly = top + 16.0 * (i as f64 + 1.0);
        let _ = writeln!(
            svg,
            r#"<line x1="{:.2}" y1="{ly:.2}" x2="{:.2}" y2="{ly:.2}" stroke="{colour}" stroke-width="2"/>"#,
            left + pw + 10.0,
            left + pw + 30.0
        );
        let _ = writeln!(
            svg,
            r#"<text x="{:.2}" y="{:.2}">{}</text>"#,
            left + pw + 36.0,
            ly + 4.0,
            escape(name)
        );
    }
    svg.push_str("</svg>\n");
    svg
}

trait DaysFromCe {
    fn num_days_from_ce_i64(&self) -> i64;
}

impl DaysFromCe for NaiveDate {
    fn num_days_from_ce_i64(&self) -> i64 {
        chrono::Datelike::num_days_from_ce(self) as i64
    }
}

fn escape(s: &str) -> String {
    s.replace('&', "&amp;").replace('<', "&lt;").replace('>', "&gt;")
}

/// Writes the report into `out` from the stores under `root`. The series store must
/// exist (it may be empty); panel and regression stores are optional.
pub fn write_report(root: &Path, out: &Path) -> Result<Vec<PathBuf>> {
    let series_dir = root.join("series");
    let index = read_series_index(&series_dir)?;
    fs::create_dir_all(out).map_err(|e| Error::io(out, e))?;
    let mut written = Vec::new();

    let table1 = out.join("table1_iid_scaling.csv");
    let scaling = match read_panel_store(&root.join("panels")) {
        Ok(panels) if !panels.is_empty() => {
            let tau = index.first().map_or(30, |r| r.tau_days);
            let idx = PanelIndex::new(&panels);
            let forwards: Vec<f64> = idx
                .dates()
                .into_iter()
                .filter_map(|d| idx.constant_maturity(d, tau).map(|p| p.forward))
                .collect();
            let returns: Vec<f64> = forwards.windows(2).map(|w| (w[1] / w[0]).ln()).collect();
            scaling_table(&returns).ok()
        }
        _ => None,
    };
    write_scaling_table(&table1, scaling.as_ref())?;
    written.push(table1);

    let mut groups: BTreeMap<(i64, String), Vec<(String, Vec<(NaiveDate, f64)>)>> = BTreeMap::new();
    for row in &index {
        let data = read_series_csv(&series_dir.join(&row.file))?;
        groups
            .entry((row.tau_days, row.frequency.to_string()))
            .or_default()
            .push((row.spec.clone(), data));
    }

    for ((tau, freq), set) in &groups {
        let table2 = out.join(format!("table2_correlations_{freq}_{tau}d.csv"));
        let mut text = String::from("series");
        for (name, _) in set {
            let _ = write!(text, ",{name}");
        }
        text.push('\n');
        let usable: Vec<_> = set.iter().filter(|(_, s)| s.len() >= 2).cloned().collect();
        if let Ok(m) = correlation_matrix(&usable) {
            for (i, name) in m.names.iter().enumerate() {
                text.push_str(name);
                for (j, _) in set.iter().enumerate() {
                    let v = m.names.iter().position(|n| *n == set[j].0).map(|jj| m.values[(i, jj)]);
                    let _ = write!(text, ",{}", num(v.filter(|x| x.is_finite())));
                }
                text.push('\n');
            }
        }
        fs::write(&table2, text).map_err(|e| Error::io(&table2, e))?;
        written.push(table2);

        // Standardised so series with very different scales share one axis.
        let scaled: Vec<(String, Vec<(NaiveDate, f64)>)> = set
            .iter()
            .map(|(name, s)| {
                let values: Vec<f64> = s.iter().map(|p| p.1).collect();
                let z = standardize(&values).unwrap_or_else(|_| vec![0.0; values.len()]);
                (name.clone(), s.iter().map(|p| p.0).zip(z).collect::<Vec<_>>())
            })
            .collect();
        let cumulative: Vec<_> = scaled
            .iter()
            .map(|(name, s)| {
                let mut acc = 0.0;
                let c = s
                    .iter()
                    .map(|(d, v)| {
                        acc += v;
                        (*d, acc)
                    })
                    .collect();
                (name.clone(), c)
            })
            .collect();
        for (stem, title, data) in [
            ("fig1_cumulative", "Cumulative standardised P&L", &cumulative),
            ("fig3_increments", "Standardised P&L increments", &scaled),
        ] {
            let path = out.join(format!("{stem}_{freq}_{tau}d.svg"));
            let svg = line_chart_svg(&format!("{title}, {freq}, {tau}-day"), data);
            fs::write(&path, svg).map_err(|e| Error::io(&path, e))?;
            written.push(path);
        }
    }
    if groups.is_empty() {
        let path = out.join("fig1_cumulative.svg");
        fs::write(&path, line_chart_svg("Cumulative standardised P&L", &[])).map_err(|e| Error::io(&path, e))?;
        written.push(path);
    }

    let regression = root.join("regress").join("regression.csv");
    let table3 = out.join("table3_regression.csv");
    if regression.is_file() {
        fs::copy(&regression, &table3).map_err(|e| Error::io(&table3, e))?;
    } else {
        fs::write(&table3, crate::pipeline::REGRESSION_HEADER.join(",") + "\n").map_err(|e| Error::io(&table3, e))?;
    }
    written.push(table3);
    Ok(written)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn empty_store_gives_scaffold() {
        let dir = tempfile::tempdir().unwrap();
        fs::create_dir_all(dir.path().join("series")).unwrap();
        write_series_index(&dir.path().join("series"), &[]).unwrap();
        let files = write_report(dir.path(), &dir.path().join("report")).unwrap();
        assert_eq!(files.len(), 3);
        let t1 = fs::read_to_string(dir.path().join("report/table1_iid_scaling.csv")).unwrap();
        assert_eq!(t1.lines().count(), 1);
        let svg = fs::read_to_string(dir.path().join("report/fig1_cumulative.svg")).unwrap();
        assert!(svg.contains("no data"));
    }

    #[test]
    fn missing_series_store_is_named() {
        let dir = tempfile::tempdir().unwrap();
        match write_report(dir.path(), &dir.path().join("report")) {
            Err(Error::MissingStore(p)) => assert!(p.ends_with("series/index.csv")),
            other => panic!("{other:?}"),
        }
    }

    #[test]
    fn charts_are_deterministic() {
        let d0 = NaiveDate::from_ymd_opt(2020, 1, 1).unwrap();
        let s = vec![(
            "a<b".to_string(),
            (0..10).map(|i| (d0 + chrono::Duration::days(i), (i as f64).sin())).collect(),
        )];
        let a = line_chart_svg("t", &s);
        assert_eq!(a, line_chart_svg("t", &s));
        assert!(a.contains("a&lt;b") && a.contains("polyline"));
    }

    #[test]
    fn scaling_table_uses_iid_scale() {
        let r: Vec<f64> = (0..400).map(|i| ((i * 7919) % 101) as f64 / 100.0 - 0.5).collect();
        let t = scaling_table(&r).unwrap();
        assert_eq!(t.monthly_iid, iid_scale(&sample_moments(&r, false).unwrap(), 20.0));
        assert_eq!(t.weekly.n, 80);
    }
}
