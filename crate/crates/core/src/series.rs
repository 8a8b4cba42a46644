//! Constant-maturity P&L series from a panel of fixed-expiry contract prices.
//!
//! The default construction (method c) holds, for each monitoring interval
//! `[t-, t]`, swaps on the two traded expiries that bracket `t- + tau`. Their
//! one-period increments are then combined with weights fixed at `t-`:
//!
//! ```text
//! Phî = [(T_u - t - tau) Phî^l - (T_l - t - tau) Phî^u] / (T_u - T_l)
//! ```
//!
//! Each observation is therefore the P&L of a position that could be held over
//! that interval, and consecutive observations never overlap.
//!
//! Method (a) holds one expiry until it leaves the panel and then rolls, so its
//! maturity drifts. Method (b) interpolates swap rates and contract levels to a
//! constant maturity, and pays the realised characteristic over the following
//! `tau` days. Its windows overlap whenever sampling is finer than `tau`.

use std::collections::BTreeMap;
use std::fmt;
use std::path::Path;

use chrono::{Duration, NaiveDate};
use log::warn;
use serde::{Deserialize, Serialize};

use crate::contracts::ContractPanel;
use crate::error::{Error, Result};
use crate::swaps::{PnlIncrement, SwapKind};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Frequency {
    Daily,
    Weekly,
    Monthly,
}

impl Frequency {
    pub const ALL: [Frequency; 3] = [Frequency::Daily, Frequency::Weekly, Frequency::Monthly];

    pub fn trading_days(self) -> usize {
        match self {
            Frequency::Daily => 1,
            Frequency::Weekly => 5,
            Frequency::Monthly => 20,
        }
    }

    pub fn parse(raw: &str) -> Option<Self> {
        Self::ALL.into_iter().find(|f| f.to_string() == raw.trim().to_ascii_lowercase())
    }
}

impl fmt::Display for Frequency {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Frequency::Daily => "daily",
            Frequency::Weekly => "weekly",
            Frequency::Monthly => "monthly",
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Method {
    /// Hold to near maturity, then roll.
    A,
    /// Interpolate levels to a constant maturity; realised leg over the next tau days.
    B,
    /// Hold each bracketing pair for one period and interpolate increments.
    #[default]
    C,
}

impl Method {
    pub fn parse(raw: &str) -> Option<Self> {
        match raw.trim().to_ascii_lowercase().as_str() {
            "a" => Some(Method::A),
            "b" => Some(Method::B),
            "c" => Some(Method::C),
            _ => None,
        }
    }
}

/// Every `frequency`-th trading date of a calendar.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MonitoringPartition {
    pub frequency: Frequency,
    pub dates: Vec<NaiveDate>,
}

impl MonitoringPartition {
    pub fn from_calendar(calendar: &[NaiveDate], frequency: Frequency) -> Result<Self> {
        if !calendar.windows(2).all(|w| w[0] < w[1]) {
            return Err(Error::Dataset("trading calendar must be strictly increasing".into()));
        }
        let dates = calendar.iter().copied().step_by(frequency.trading_days()).collect();
        Ok(Self { frequency, dates })
    }

    pub fn intervals(&self) -> impl Iterator<Item = (NaiveDate, NaiveDate)> + '_ {
        self.dates.windows(2).map(|w| (w[0], w[1]))
    }
}

/// Constant-maturity increment from the increments of two bracketing expiries.
pub fn constant_maturity_increment(
    incr_lower: f64,
    incr_upper: f64,
    lower: NaiveDate,
    upper: NaiveDate,
    t: NaiveDate,
    tau_days: i64,
) -> Result<f64> {
    let (wl, wu) = bracket_weights(lower, upper, t, tau_days)?;
    Ok(wl * incr_lower + wu * incr_upper)
}

/// Weights `((T_u - t - tau), -(T_l - t - tau)) / (T_u - T_l)`.
pub fn bracket_weights(lower: NaiveDate, upper: NaiveDate, t: NaiveDate, tau_days: i64) -> Result<(f64, f64)> {
    let target = t + Duration::days(tau_days);
    if target < lower || target > upper {
        return Err(Error::Bracketing { target, lower, upper });
    }
    if lower == upper {
        return Ok((1.0, 0.0));
    }
    let span = (upper - lower).num_days() as f64;
    let wl = (upper - target).num_days() as f64 / span;
    let wu = -(lower - target).num_days() as f64 / span;
    Ok((wl, wu))
}

/// Panel rows indexed by trade date, each sorted by expiry.
#[derive(Debug, Clone, Default)]
pub struct PanelIndex {
    by_date: BTreeMap<NaiveDate, Vec<ContractPanel>>,
}

impl PanelIndex {
    pub fn new(panels: &[ContractPanel]) -> Self {
        let mut by_date: BTreeMap<NaiveDate, Vec<ContractPanel>> = BTreeMap::new();
        for p in panels {
            by_date.entry(p.trade_date).or_default().push(p.clone());
        }
        for rows in by_date.values_mut() {
            rows.sort_by_key(|p| p.expiry);
        }
        Self { by_date }
    }

    pub fn dates(&self) -> Vec<NaiveDate> {
        self.by_date.keys().copied().collect()
    }

    pub fn get(&self, date: NaiveDate, expiry: NaiveDate) -> Option<&ContractPanel> {
        self.by_date
            .get(&date)?
            .binary_search_by_key(&expiry, |p| p.expiry)
            .ok()
            .map(|i| &self.by_date[&date][i])
    }

    pub fn rows(&self, date: NaiveDate) -> &[ContractPanel] {
        self.by_date.get(&date).map_or(&[], Vec::as_slice)
    }

    /// Expiries `(T_l, T_u)` on `date` with `T_l <= date + tau <= T_u`, optionally
    /// also quoted on `also_on`.
    pub fn bracket(
        &self,
        date: NaiveDate,
        tau_days: i64,
        also_on: Option<NaiveDate>,
    ) -> Option<(NaiveDate, NaiveDate)> {
        let target = date + Duration::days(tau_days);
        let usable: Vec<NaiveDate> = self
            .rows(date)
            .iter()
            .map(|p| p.expiry)
            .filter(|&e| also_on.is_none_or(|d| self.get(d, e).is_some()))
            .collect();
        let lower = usable.iter().rev().find(|&&e| e <= target).copied()?;
        let upper = usable.iter().find(|&&e| e >= target).copied()?;
        Some((lower, upper))
    }

    /// Levels interpolated linearly in expiry to `date + tau`.
    pub fn constant_maturity(&self, date: NaiveDate, tau_days: i64) -> Option<ContractPanel> {
        let (lower, upper) = self.bracket(date, tau_days, None)?;
        let (wl, wu) = bracket_weights(lower, upper, date, tau_days).ok()?;
        let l = self.get(date, lower)?;
        let u = self.get(date, upper)?;
        let mut powers = [0.0; 6];
        for (i, slot) in powers.iter_mut().enumerate() {
            *slot = wl * l.powers[i] + wu * u.powers[i];
        }
        Some(ContractPanel {
            trade_date: date,
            expiry: date + Duration::days(tau_days),
            forward: wl * l.forward + wu * u.forward,
            powers,
            v_eta: wl * l.v_eta + wu * u.v_eta,
            conv_var_rate: wl * l.conv_var_rate + wu * u.conv_var_rate,
        })
    }
}

/// One observation of a P&L series.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SeriesPoint {
    pub start: NaiveDate,
    pub date: NaiveDate,
    pub increment: f64,
    pub realised_part: f64,
    pub implied_part: f64,
    /// Contiguous block of the series; increases after every gap.
    pub segment: usize,
    /// Expiries and weights of the traded legs (method c), or the held expiry (method a).
    pub legs: Vec<Leg>,
    /// Calendar days from `start` to the (effective) maturity of the position.
    pub maturity_days: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Leg {
    pub expiry: NaiveDate,
    pub weight: f64,
    pub pnl: PnlIncrement,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Gap {
    pub start: NaiveDate,
    pub end: NaiveDate,
    pub reason: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PnlSeries {
    pub label: String,
    pub kind: SwapKind,
    pub method: Method,
    pub frequency: Frequency,
    pub tau_days: i64,
    pub points: Vec<SeriesPoint>,
    pub gaps: Vec<Gap>,
}

impl PnlSeries {
    pub fn increments(&self) -> Vec<f64> {
        self.points.iter().map(|p| p.increment).collect()
    }

    pub fn dates(&self) -> Vec<NaiveDate> {
        self.points.iter().map(|p| p.date).collect()
    }

    fn empty(kind: SwapKind, method: Method, frequency: Frequency, tau_days: i64) -> Self {
        Self {
            label: format!("{kind}_{frequency}_{tau_days}d_{}", method_tag(method)),
            kind,
            method,
            frequency,
            tau_days,
            points: Vec::new(),
            gaps: Vec::new(),
        }
    }

    fn gap(&mut self, start: NaiveDate, end: NaiveDate, reason: String) {
        warn!("{}: gap {start}..{end}: {reason}", self.label);
        self.gaps.push(Gap { start, end, reason });
    }

    fn next_segment(&self) -> usize {
        match (self.points.last(), self.gaps.last()) {
            (Some(p), Some(g)) if g.start >= p.date => p.segment + 1,
            (Some(p), _) => p.segment,
            (None, _) => 0,
        }
    }
}

fn method_tag(m: Method) -> &'static str {
    match m {
        Method::A => "a",
        Method::B => "b",
        Method::C => "c",
    }
}

pub fn build_pnl_series(
    panels: &PanelIndex,
    kind: SwapKind,
    partition: &MonitoringPartition,
    tau_days: i64,
    method: Method,
) -> Result<PnlSeries> {
    if tau_days <= 0 {
        return Err(Error::Config(format!("tau must be positive, got {tau_days}")));
    }
    let mut series = PnlSeries::empty(kind, method, partition.frequency, tau_days);
    match method {
        Method::C => build_c(panels, kind, partition, tau_days, &mut series)?,
        Method::A => build_a(panels, kind, partition, tau_days, &mut series)?,
        Method::B => build_b(panels, kind, partition, tau_days, &mut series)?,
    }
    Ok(series)
}

fn build_c(
    panels: &PanelIndex,
    kind: SwapKind,
    partition: &MonitoringPartition,
    tau: i64,
    series: &mut PnlSeries,
) -> Result<()> {
    for (start, end) in partition.intervals() {
        let Some((lower, upper)) = panels.bracket(start, tau, Some(end)) else {
            series.gap(start, end, format!("no expiries quoted on both dates bracket {start} + {tau}d"));
            continue;
        };
        let (wl, wu) = bracket_weights(lower, upper, start, tau)?;
        let mut legs = Vec::with_capacity(2);
        for (expiry, weight) in [(lower, wl), (upper, wu)] {
            if weight == 0.0 && !legs.is_empty() {
                continue;
            }
            let prev = panels.get(start, expiry).expect("bracket checked");
            let next = panels.get(end, expiry).expect("bracket checked");
            match kind.fixed_expiry_increment(prev, prev, next) {
                Ok(pnl) => legs.push(Leg { expiry, weight, pnl }),
                Err(e) => {
                    series.gap(start, end, e.to_string());
                    legs.clear();
                    break;
                }
            }
        }
        if legs.is_empty() {
            continue;
        }
        let combine = |f: fn(&PnlIncrement) -> f64| legs.iter().map(|l| l.weight * f(&l.pnl)).sum::<f64>();
        let segment = series.next_segment();
        series.points.push(SeriesPoint {
            start,
            date: end,
            increment: combine(|p| p.value),
            realised_part: combine(|p| p.realised_part),
            implied_part: combine(|p| p.implied_part),
            segment,
            legs,
            maturity_days: tau as f64,
        });
    }
    Ok(())
}

fn build_a(
    panels: &PanelIndex,
    kind: SwapKind,
    partition: &MonitoringPartition,
    tau: i64,
    series: &mut PnlSeries,
) -> Result<()> {
    // (held expiry, inception panel)
    let mut held: Option<(NaiveDate, ContractPanel)> = None;
    for (start, end) in partition.intervals() {
        let still_quoted = held
            .as_ref()
            .is_some_and(|(e, _)| panels.get(start, *e).is_some() && panels.get(end, *e).is_some());
        if !still_quoted {
            let target = start + Duration::days(tau);
            let fresh = panels
                .rows(start)
                .iter()
                .filter(|p| panels.get(end, p.expiry).is_some())
                .find(|p| p.expiry >= target)
                .cloned();
            match fresh {
                Some(p) => held = Some((p.expiry, p)),
                None => {
                    series.gap(start, end, format!("no expiry at or beyond {target} to roll into"));
                    held = None;
                    continue;
                }
            }
        }
        let (expiry, inception) = held.as_ref().expect("set above");
        let prev = panels.get(start, *expiry).expect("checked");
        let next = panels.get(end, *expiry).expect("checked");
        let pnl = kind.fixed_expiry_increment(inception, prev, next)?;
        let segment = series.next_segment();
        series.points.push(SeriesPoint {
            start,
            date: end,
            increment: pnl.value,
            realised_part: pnl.realised_part,
            implied_part: pnl.implied_part,
            segment,
            legs: vec![Leg {
                expiry: *expiry,
                weight: 1.0,
                pnl,
            }],
            maturity_days: (*expiry - start).num_days() as f64,
        });
    }
    Ok(())
}

fn build_b(
    panels: &PanelIndex,
    kind: SwapKind,
    partition: &MonitoringPartition,
    tau: i64,
    series: &mut PnlSeries,
) -> Result<()> {
    let calendar = panels.dates();
    let Some(&last) = calendar.last() else {
        return Ok(());
    };
    for &start in &partition.dates {
        let window_end = start + Duration::days(tau);
        if window_end > last {
            break;
        }
        let Some(open) = panels.constant_maturity(start, tau) else {
            series.gap(start, window_end, "no constant-maturity level at window start".into());
            continue;
        };
        let x0 = open.power(1);
        let scale = kind.standardisation(&open)?;
        let rate = kind.rate(&open, x0)?;
        let window: Vec<NaiveDate> = calendar
            .iter()
            .copied()
            .filter(|&d| d >= start && d <= window_end)
            .collect();
        let mut realised = 0.0;
        let mut complete = true;
        let mut prev = open.clone();
        for &d in &window[1..] {
            let Some(next) = panels.constant_maturity(d, tau) else {
                complete = false;
                break;
            };
            realised += kind.realised(x0, &prev, &next)?;
            prev = next;
        }
        if !complete {
            series.gap(start, window_end, "constant-maturity level missing inside window".into());
            continue;
        }
        let end = *window.last().expect("window contains start");
        let segment = series.next_segment();
        series.points.push(SeriesPoint {
            start,
            date: end,
            increment: scale * (realised - rate),
            realised_part: scale * realised,
            implied_part: -scale * rate,
            segment,
            legs: Vec::new(),
            maturity_days: tau as f64,
        });
    }
    Ok(())
}

/// One-period increments of level-interpolated constant-maturity swaps. These are
/// not investable, and they differ from method (c) whenever the term structure slopes.
pub fn level_interpolated_increments(
    panels: &PanelIndex,
    kind: SwapKind,
    partition: &MonitoringPartition,
    tau_days: i64,
) -> Result<Vec<(NaiveDate, f64)>> {
    let mut out = Vec::new();
    for (start, end) in partition.intervals() {
        let (Some(a), Some(b)) = (
            panels.constant_maturity(start, tau_days),
            panels.constant_maturity(end, tau_days),
        ) else {
            continue;
        };
        let x0 = a.power(1);
        let v = kind.realised(x0, &a, &b)? + kind.rate(&b, x0)? - kind.rate(&a, x0)?;
        out.push((end, v * kind.standardisation(&a)?));
    }
    Ok(out)
}

/// Running sum of increments.
pub fn cumulate(increments: &[f64]) -> Vec<f64> {
    increments
        .iter()
        .scan(0.0, |acc, &x| {
            *acc += x;
            Some(*acc)
        })
        .collect()
}

/// CSV with columns `date,increment,realised_part,implied_part,cumulative`.
pub fn write_series_csv(path: &Path, series: &PnlSeries) -> Result<()> {
    if let Some(dir) = path.parent() {
        std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    }
    let mut w = csv::Writer::from_path(path).map_err(|e| Error::csv(path, e))?;
    w.write_record(["date", "increment", "realised_part", "implied_part", "cumulative"])
        .map_err(|e| Error::csv(path, e))?;
    let cumulative = cumulate(&series.increments());
    for (p, c) in series.points.iter().zip(cumulative) {
        w.write_record([
            p.date.to_string(),
            p.increment.to_string(),
            p.realised_part.to_string(),
            p.implied_part.to_string(),
            c.to_string(),
        ])
        .map_err(|e| Error::csv(path, e))?;
    }
    w.flush().map_err(|e| Error::io(path, e))
}

#[derive(Deserialize)]
struct SeriesRow {
    date: NaiveDate,
    increment: f64,
}

/// Reads `(date, increment)` pairs back from a series CSV.
pub fn read_series_csv(path: &Path) -> Result<Vec<(NaiveDate, f64)>> {
    let mut r = csv::Reader::from_path(path).map_err(|e| Error::csv(path, e))?;
    r.deserialize::<SeriesRow>()
        .map(|row| {
            row.map(|r| (r.date, r.increment))
                .map_err(|e| Error::csv(path, e))
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::synth::{lognormal_panel, trading_dates, SynthConfig, SynthMarket};

    fn d(s: &str) -> NaiveDate {
        NaiveDate::parse_from_str(s, "%Y-%m-%d").unwrap()
    }

    #[test]
    fn interpolation_weight_examples() {
        let t = d("2024-01-01");
        let tl = t + Duration::days(30);
        let tu = t + Duration::days(60);
        assert_eq!(constant_maturity_increment(1.5, 9.0, tl, tu, t, 30).unwrap(), 1.5);
        // target on the lower expiry: all weight on the lower leg
        assert_eq!(constant_maturity_increment(1.5, 9.0, t, tu, t - Duration::days(30), 30).unwrap(), 1.5);
        assert_eq!(constant_maturity_increment(1.5, 9.0, tl, tl, t, 30).unwrap(), 1.5);
        let mid = constant_maturity_increment(2.0, 4.0, tl, tu, t + Duration::days(15), 30).unwrap();
        assert!((mid - 3.0).abs() < 1e-15);
        let top = constant_maturity_increment(2.0, 4.0, tl, tu, t + Duration::days(30), 30).unwrap();
        assert_eq!(top, 4.0);
        assert!(matches!(
            constant_maturity_increment(1.0, 1.0, tl, tu, t + Duration::days(31), 30),
            Err(Error::Bracketing { .. })
        ));
    }

    #[test]
    fn cumulate_examples() {
        assert_eq!(cumulate(&[1.0, -1.0]), vec![1.0, 0.0]);
        assert!(cumulate(&[]).is_empty());
        let v = [0.3, -0.1, 0.7];
        assert!((cumulate(&v)[2] - v.iter().sum::<f64>()).abs() < 1e-15);
    }

    #[test]
    fn partition_steps_in_trading_days() {
        let cal = trading_dates(d("2024-01-01"), 45);
        let w = MonitoringPartition::from_calendar(&cal, Frequency::Weekly).unwrap();
        assert_eq!(w.dates.len(), 9);
        assert_eq!(w.dates[1], cal[5]);
        let m = MonitoringPartition::from_calendar(&cal, Frequency::Monthly).unwrap();
        assert_eq!(m.dates, vec![cal[0], cal[20], cal[40]]);
    }

    /// Panel with a single expiry that always sits exactly tau days ahead is impossible
    /// for a fixed expiry, so this builds the degenerate bracket directly.
    #[test]
    fn single_expiry_at_target_equals_fixed_maturity_increment() {
        let t0 = d("2024-01-01");
        let t1 = d("2024-01-02");
        let expiry = t0 + Duration::days(30);
        let panels = vec![
            lognormal_panel(t0, expiry, 100.0, 0.004),
            lognormal_panel(t1, expiry, 101.0, 0.0039),
        ];
        let index = PanelIndex::new(&panels);
        let part = MonitoringPartition::from_calendar(&[t0, t1], Frequency::Daily).unwrap();
        let s = build_pnl_series(&index, SwapKind::Variance, &part, 30, Method::C).unwrap();
        let direct = SwapKind::Variance
            .fixed_expiry_increment(&panels[0], &panels[0], &panels[1])
            .unwrap();
        assert_eq!(s.points.len(), 1);
        assert!((s.points[0].increment - direct.value).abs() < 1e-15);
    }

    #[test]
    fn identical_legs_give_that_increment() {
        let cal = trading_dates(d("2024-01-01"), 3);
        let e1 = d("2024-01-20");
        let e2 = d("2024-03-01");
        let mut panels = Vec::new();
        for (i, &t) in cal.iter().enumerate() {
            let f = 100.0 + i as f64;
            panels.push(lognormal_panel(t, e1, f, 0.004));
            panels.push(lognormal_panel(t, e2, f, 0.004));
        }
        let index = PanelIndex::new(&panels);
        let part = MonitoringPartition::from_calendar(&cal, Frequency::Daily).unwrap();
        let s = build_pnl_series(&index, SwapKind::Variance, &part, 30, Method::C).unwrap();
        for (p, w) in s.points.iter().zip(cal.windows(2)) {
            let a = index.get(w[0], e1).unwrap();
            let b = index.get(w[1], e1).unwrap();
            let direct = SwapKind::Variance.fixed_expiry_increment(a, a, b).unwrap();
            assert!((p.increment - direct.value).abs() < 1e-15);
        }
    }

    #[test]
    fn gaps_split_the_series() {
        let cal = trading_dates(d("2024-01-01"), 5);
        let e1 = d("2024-01-25");
        let e2 = d("2024-03-01");
        let mut panels = Vec::new();
        for (i, &t) in cal.iter().enumerate() {
            panels.push(lognormal_panel(t, e2, 100.0, 0.004));
            if i != 2 {
                panels.push(lognormal_panel(t, e1, 100.0, 0.004));
            }
        }
        let index = PanelIndex::new(&panels);
        let part = MonitoringPartition::from_calendar(&cal, Frequency::Daily).unwrap();
        let s = build_pnl_series(&index, SwapKind::Variance, &part, 30, Method::C).unwrap();
        assert_eq!(s.gaps.len(), 2);
        assert_eq!(s.points.len(), 2);
        assert_eq!(s.points[0].segment, 0);
        assert_eq!(s.points[1].segment, 1);
    }

    #[test]
    fn increments_reconstruct_from_stored_legs() {
        let market = SynthMarket::generate(&SynthConfig {
            trading_days: 60,
            ..SynthConfig::default()
        })
        .unwrap();
        let index = PanelIndex::new(&market.panels());
        let part = MonitoringPartition::from_calendar(&index.dates(), Frequency::Weekly).unwrap();
        for kind in SwapKind::ALL {
            let s = build_pnl_series(&index, kind, &part, 30, Method::C).unwrap();
            assert!(s.gaps.is_empty(), "{kind}: {:?}", s.gaps);
            for p in &s.points {
                let rebuilt: f64 = p.legs.iter().map(|l| l.weight * l.pnl.value).sum();
                assert!((rebuilt - p.increment).abs() <= 1e-12 * p.increment.abs().max(1e-12));
                let (wl, wu) = bracket_weights(p.legs[0].expiry, p.legs.last().unwrap().expiry, p.start, 30).unwrap();
                assert!((p.legs[0].weight - wl).abs() < 1e-15);
                assert!((wl + wu - 1.0).abs() < 1e-15);
            }
            for w in s.points.windows(2) {
                assert!(w[0].date <= w[1].start);
            }
        }
    }

    #[test]
    fn level_interpolation_differs_on_sloped_term_structure() {
        let market = SynthMarket::generate(&SynthConfig {
            trading_days: 80,
            ..SynthConfig::default()
        })
        .unwrap();
        let index = PanelIndex::new(&market.panels());
        let part = MonitoringPartition::from_calendar(&index.dates(), Frequency::Daily).unwrap();
        let c = build_pnl_series(&index, SwapKind::Variance, &part, 30, Method::C).unwrap();
        let levels = level_interpolated_increments(&index, SwapKind::Variance, &part, 30).unwrap();
        let diff: f64 = c
            .points
            .iter()
            .zip(&levels)
            .map(|(p, (_, l))| (p.increment - l).abs())
            .sum::<f64>()
            / levels.len() as f64;
        let scale: f64 = levels.iter().map(|(_, l)| l.abs()).sum::<f64>() / levels.len() as f64;
        assert!(diff > 0.01 * scale, "{diff} vs {scale}");
    }

    #[test]
    fn method_a_maturity_drifts_and_b_overlaps() {
        let market = SynthMarket::generate(&SynthConfig {
            trading_days: 120,
            ..SynthConfig::default()
        })
        .unwrap();
        let index = PanelIndex::new(&market.panels());
        let part = MonitoringPartition::from_calendar(&index.dates(), Frequency::Daily).unwrap();
        let a = build_pnl_series(&index, SwapKind::Variance, &part, 30, Method::A).unwrap();
        let (lo, hi) = a
            .points
            .iter()
            .fold((f64::MAX, f64::MIN), |(l, h), p| (l.min(p.maturity_days), h.max(p.maturity_days)));
        assert!(hi - lo > 14.0, "{lo}..{hi}");
        let b = build_pnl_series(&index, SwapKind::Variance, &part, 30, Method::B).unwrap();
        assert!(b.points.windows(2).all(|w| w[1].start < w[0].date));
    }
}
