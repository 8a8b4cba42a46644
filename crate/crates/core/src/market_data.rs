//! Option-chain ingestion, quote filters, put-call-parity forwards and raw OTM curves.
//!
//! Mids are treated as forward (undiscounted) option prices. When a discount-factor
//! column is configured, mids are divided by it on load.

use std::cmp::Ordering;
use std::collections::BTreeMap;
use std::fmt;
use std::fs;
use std::path::{Path, PathBuf};

use chrono::NaiveDate;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Side {
    Put,
    Call,
}

impl Side {
    pub fn parse(raw: &str) -> Option<Side> {
        match raw.trim().to_ascii_lowercase().as_str() {
            "p" | "put" => Some(Side::Put),
            "c" | "call" => Some(Side::Call),
            _ => None,
        }
    }
}

impl fmt::Display for Side {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Side::Put => f.write_str("put"),
            Side::Call => f.write_str("call"),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OptionQuote {
    pub trade_date: NaiveDate,
    pub expiry: NaiveDate,
    pub strike: f64,
    pub side: Side,
    pub mid: f64,
    pub volume: u64,
    pub implied_vol: f64,
}

impl OptionQuote {
    /// Calendar days to expiry: trade date exclusive, expiry date inclusive.
    pub fn days_to_expiry(&self) -> i64 {
        (self.expiry - self.trade_date).num_days()
    }

    fn validate(&self) -> std::result::Result<(), String> {
        if !(self.strike.is_finite() && self.strike > 0.0) {
            return Err(format!("strike must be positive, got {}", self.strike));
        }
        if self.expiry <= self.trade_date {
            return Err(format!(
                "expiry {} is not after trade date {}",
                self.expiry, self.trade_date
            ));
        }
        if !(self.mid.is_finite() && self.mid >= 0.0) {
            return Err(format!("mid must be non-negative, got {}", self.mid));
        }
        if !(self.implied_vol.is_finite() && self.implied_vol >= 0.0) {
            return Err(format!(
                "implied vol must be non-negative, got {}",
                self.implied_vol
            ));
        }
        Ok(())
    }
}

/// All quotes of one trade date, grouped by expiry and sorted by (strike, side).
#[derive(Debug, Clone, PartialEq)]
pub struct QuoteSet {
    pub trade_date: NaiveDate,
    expiries: BTreeMap<NaiveDate, Vec<OptionQuote>>,
}

impl QuoteSet {
    pub fn new(trade_date: NaiveDate) -> Self {
        Self {
            trade_date,
            expiries: BTreeMap::new(),
        }
    }

    pub fn insert(&mut self, quote: OptionQuote) -> Result<()> {
        if quote.trade_date != self.trade_date {
            return Err(Error::Dataset(format!(
                "quote dated {} inserted into set for {}",
                quote.trade_date, self.trade_date
            )));
        }
        let bucket = self.expiries.entry(quote.expiry).or_default();
        let pos = bucket.binary_search_by(|q| cmp_strike_side(q, &quote));
        match pos {
            Ok(_) => Err(Error::DuplicateQuote {
                trade_date: quote.trade_date,
                expiry: quote.expiry,
                strike: quote.strike,
                side: quote.side.to_string(),
            }),
            Err(at) => {
                bucket.insert(at, quote);
                Ok(())
            }
        }
    }

    pub fn len(&self) -> usize {
        self.expiries.values().map(Vec::len).sum()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn expiries(&self) -> impl Iterator<Item = (&NaiveDate, &[OptionQuote])> {
        self.expiries.iter().map(|(e, q)| (e, q.as_slice()))
    }

    pub fn quotes(&self) -> impl Iterator<Item = &OptionQuote> {
        self.expiries.values().flatten()
    }

    /// Forward and raw OTM curve per expiry. Expiries that fail are returned separately.
    pub fn otm_curves(&self) -> (Vec<RawOtmCurve>, Vec<Error>) {
        let mut curves = Vec::new();
        let mut failures = Vec::new();
        for (&expiry, quotes) in &self.expiries {
            let curve = extract_forward(expiry, quotes)
                .and_then(|f| to_otm_curve(self.trade_date, expiry, quotes, f));
            match curve {
                Ok(c) => curves.push(c),
                Err(e) => failures.push(e),
            }
        }
        (curves, failures)
    }
}

fn cmp_strike_side(a: &OptionQuote, b: &OptionQuote) -> Ordering {
    a.strike.total_cmp(&b.strike).then(a.side.cmp(&b.side))
}

/// Maps logical fields onto the header names of an input file.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ColumnMap {
    pub trade_date: String,
    pub expiry: String,
    pub strike: String,
    pub side: String,
    pub mid: String,
    pub volume: String,
    pub implied_vol: String,
    /// When set, mids are divided by this column to obtain forward prices.
    pub discount_factor: Option<String>,
    pub date_format: String,
}

impl Default for ColumnMap {
    fn default() -> Self {
        Self {
            trade_date: "trade_date".into(),
            expiry: "expiry".into(),
            strike: "strike".into(),
            side: "side".into(),
            mid: "mid".into(),
            volume: "volume".into(),
            implied_vol: "implied_vol".into(),
            discount_factor: None,
            date_format: "%Y-%m-%d".into(),
        }
    }
}

struct ColumnIndex {
    trade_date: usize,
    expiry: usize,
    strike: usize,
    side: usize,
    mid: usize,
    volume: usize,
    implied_vol: usize,
    discount_factor: Option<usize>,
}

impl ColumnIndex {
    fn resolve(path: &Path, headers: &csv::StringRecord, map: &ColumnMap) -> Result<Self> {
        let find = |name: &str| -> Result<usize> {
            headers
                .iter()
                .position(|h| h.trim() == name)
                .ok_or_else(|| Error::Dataset(format!("{}: missing column '{name}'", path.display())))
        };
        Ok(Self {
            trade_date: find(&map.trade_date)?,
            expiry: find(&map.expiry)?,
            strike: find(&map.strike)?,
            side: find(&map.side)?,
            mid: find(&map.mid)?,
            volume: find(&map.volume)?,
            implied_vol: find(&map.implied_vol)?,
            discount_factor: map.discount_factor.as_deref().map(find).transpose()?,
        })
    }
}

fn sniff_delimiter(path: &Path) -> Result<u8> {
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    let header = text.lines().next().unwrap_or_default();
    Ok(if header.contains('\t') { b'\t' } else { b',' })
}

/// Reads one or more delimited files (comma or tab, with header row) and returns
/// one [`QuoteSet`] per trade date in chronological order.
pub fn load_quotes<P: AsRef<Path>>(paths: &[P], map: &ColumnMap) -> Result<Vec<QuoteSet>> {
    let mut sets: BTreeMap<NaiveDate, QuoteSet> = BTreeMap::new();
    let mut rows = 0usize;
    for path in paths {
        let path = path.as_ref();
        let delimiter = sniff_delimiter(path)?;
        let mut reader = csv::ReaderBuilder::new()
            .delimiter(delimiter)
            .trim(csv::Trim::All)
            .from_path(path)
            .map_err(|e| Error::csv(path, e))?;
        let headers = reader.headers().map_err(|e| Error::csv(path, e))?.clone();
        let cols = ColumnIndex::resolve(path, &headers, map)?;
        for record in reader.records() {
            let record = record.map_err(|e| Error::csv(path, e))?;
            let line = record.position().map_or(0, |p| p.line());
            let quote = parse_row(&record, &cols, map).map_err(|message| Error::Row {
                path: path.to_path_buf(),
                line,
                message,
            })?;
            sets.entry(quote.trade_date)
                .or_insert_with(|| QuoteSet::new(quote.trade_date))
                .insert(quote)?;
            rows += 1;
        }
    }
    if rows == 0 {
        return Err(Error::Dataset("no quotes found in input".into()));
    }
    Ok(sets.into_values().collect())
}

fn parse_row(
    record: &csv::StringRecord,
    cols: &ColumnIndex,
    map: &ColumnMap,
) -> std::result::Result<OptionQuote, String> {
    let field = |i: usize, name: &str| -> std::result::Result<&str, String> {
        record.get(i).ok_or_else(|| format!("missing field '{name}'"))
    };
    let date = |i: usize, name: &str| -> std::result::Result<NaiveDate, String> {
        let raw = field(i, name)?;
        NaiveDate::parse_from_str(raw, &map.date_format)
            .map_err(|e| format!("bad {name} '{raw}': {e}"))
    };
    let number = |i: usize, name: &str| -> std::result::Result<f64, String> {
        let raw = field(i, name)?;
        raw.parse::<f64>().map_err(|_| format!("bad {name} '{raw}'"))
    };
    let side_raw = field(cols.side, "side")?;
    let side = Side::parse(side_raw).ok_or_else(|| format!("bad side '{side_raw}'"))?;
    let volume = number(cols.volume, "volume")?;
    if !(volume.is_finite() && volume >= 0.0) {
        return Err(format!("volume must be non-negative, got {volume}"));
    }
    let mut mid = number(cols.mid, "mid")?;
    if let Some(i) = cols.discount_factor {
        let df = number(i, "discount_factor")?;
        if !(df.is_finite() && df > 0.0) {
            return Err(format!("discount factor must be positive, got {df}"));
        }
        mid /= df;
    }
    let quote = OptionQuote {
        trade_date: date(cols.trade_date, "trade_date")?,
        expiry: date(cols.expiry, "expiry")?,
        strike: number(cols.strike, "strike")?,
        side,
        mid,
        volume: volume.round() as u64,
        implied_vol: number(cols.implied_vol, "implied_vol")?,
    };
    quote.validate()?;
    Ok(quote)
}

/// Quote-level and expiry-level filter thresholds.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct FilterConfig {
    pub min_days: i64,
    pub max_days: i64,
    /// Quotes with mid at or below this level (index points) are dropped.
    pub min_mid: f64,
    pub min_implied_vol: f64,
    pub max_implied_vol: f64,
    pub min_strikes: usize,
}

impl Default for FilterConfig {
    fn default() -> Self {
        Self {
            min_days: 7,
            max_days: 365,
            min_mid: 0.5,
            min_implied_vol: 0.01,
            max_implied_vol: 1.0,
            min_strikes: 3,
        }
    }
}

impl FilterConfig {
    pub fn keeps(&self, q: &OptionQuote) -> bool {
        let days = q.days_to_expiry();
        days >= self.min_days
            && days <= self.max_days
            && q.volume > 0
            && q.mid > self.min_mid
            && q.implied_vol > self.min_implied_vol
            && q.implied_vol < self.max_implied_vol
    }
}

/// Drops illiquid or implausible quotes, then every expiry left with too few strikes.
pub fn filter_quotes(qs: &QuoteSet, cfg: &FilterConfig) -> QuoteSet {
    let mut out = QuoteSet::new(qs.trade_date);
    for (&expiry, quotes) in &qs.expiries {
        let kept: Vec<OptionQuote> = quotes.iter().filter(|q| cfg.keeps(q)).cloned().collect();
        let mut strikes: Vec<f64> = kept.iter().map(|q| q.strike).collect();
        strikes.dedup();
        if strikes.len() >= cfg.min_strikes {
            out.expiries.insert(expiry, kept);
        }
    }
    out
}

/// Put-call-parity forward from the strike with the smallest |P - C|.
///
/// Ties go to the lower strike.
pub fn extract_forward(expiry: NaiveDate, quotes: &[OptionQuote]) -> Result<f64> {
    let mut best: Option<(f64, f64, f64)> = None; // (gap, strike, call - put)
    for put in quotes.iter().filter(|q| q.side == Side::Put) {
        let Some(call) = quotes
            .iter()
            .find(|q| q.side == Side::Call && q.strike == put.strike)
        else {
            continue;
        };
        let gap = (put.mid - call.mid).abs();
        let better = match best {
            None => true,
            Some((g, k, _)) => gap < g || (gap == g && put.strike < k),
        };
        if better {
            best = Some((gap, put.strike, call.mid - put.mid));
        }
    }
    best.map(|(_, k, diff)| k + diff)
        .ok_or(Error::ForwardUnavailable { expiry })
}

/// One maturity's OTM prices: puts below the forward, calls at or above it.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RawOtmCurve {
    pub trade_date: NaiveDate,
    pub expiry: NaiveDate,
    pub forward: f64,
    /// Average implied volatility of the retained OTM quotes.
    pub avg_implied_vol: f64,
    pub points: Vec<(f64, f64)>,
}

impl RawOtmCurve {
    pub fn strikes(&self) -> impl Iterator<Item = f64> + '_ {
        self.points.iter().map(|p| p.0)
    }

    /// Year fraction to expiry on an ACT/365 basis.
    pub fn tau(&self) -> f64 {
        year_fraction(self.trade_date, self.expiry)
    }
}

pub fn year_fraction(from: NaiveDate, to: NaiveDate) -> f64 {
    (to - from).num_days() as f64 / 365.0
}

pub fn to_otm_curve(
    trade_date: NaiveDate,
    expiry: NaiveDate,
    quotes: &[OptionQuote],
    forward: f64,
) -> Result<RawOtmCurve> {
    let mut otm: Vec<&OptionQuote> = quotes
        .iter()
        .filter(|q| match q.side {
            Side::Put => q.strike < forward,
            Side::Call => q.strike >= forward,
        })
        .collect();
    otm.sort_by(|a, b| a.strike.total_cmp(&b.strike));
    otm.dedup_by(|a, b| a.strike == b.strike);
    if otm.len() < 3 {
        return Err(Error::CurveUnavailable {
            expiry,
            points: otm.len(),
        });
    }
    let avg_implied_vol = otm.iter().map(|q| q.implied_vol).sum::<f64>() / otm.len() as f64;
    Ok(RawOtmCurve {
        trade_date,
        expiry,
        forward,
        avg_implied_vol,
        points: otm.iter().map(|q| (q.strike, q.mid)).collect(),
    })
}

/// Column order of the normalized quote store.
pub const QUOTE_STORE_COLUMNS: [&str; 7] = [
    "trade_date",
    "expiry",
    "strike",
    "side",
    "mid",
    "volume",
    "implied_vol",
];

pub fn quote_store_file(dir: &Path, date: NaiveDate) -> PathBuf {
    dir.join(format!("quotes_{date}.csv"))
}

/// Writes one CSV per trade date (`quotes_YYYY-MM-DD.csv`) with [`QUOTE_STORE_COLUMNS`].
pub fn write_quote_store(dir: &Path, sets: &[QuoteSet]) -> Result<Vec<PathBuf>> {
    fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    let mut written = Vec::with_capacity(sets.len());
    for set in sets {
        let path = quote_store_file(dir, set.trade_date);
        let mut w = csv::Writer::from_path(&path).map_err(|e| Error::csv(&path, e))?;
        w.write_record(QUOTE_STORE_COLUMNS)
            .map_err(|e| Error::csv(&path, e))?;
        for q in set.quotes() {
            w.write_record([
                q.trade_date.to_string(),
                q.expiry.to_string(),
                q.strike.to_string(),
                q.side.to_string(),
                q.mid.to_string(),
                q.volume.to_string(),
                q.implied_vol.to_string(),
            ])
            .map_err(|e| Error::csv(&path, e))?;
        }
        w.flush().map_err(|e| Error::io(&path, e))?;
        written.push(path);
    }
    Ok(written)
}

/// Lists `prefix*.csv` files of a store directory in name order.
pub(crate) fn store_files(dir: &Path, prefix: &str) -> Result<Vec<PathBuf>> {
    if !dir.is_dir() {
        return Err(Error::MissingStore(dir.to_path_buf()));
    }
    let mut files: Vec<PathBuf> = fs::read_dir(dir)
        .map_err(|e| Error::io(dir, e))?
        .filter_map(|entry| entry.ok().map(|e| e.path()))
        .filter(|p| {
            p.file_name()
                .and_then(|n| n.to_str())
                .is_some_and(|n| n.starts_with(prefix) && n.ends_with(".csv"))
        })
        .collect();
    files.sort();
    Ok(files)
}

pub fn read_quote_store(dir: &Path) -> Result<Vec<QuoteSet>> {
    let files = store_files(dir, "quotes_")?;
    if files.is_empty() {
        return Err(Error::MissingStore(dir.to_path_buf()));
    }
    load_quotes(&files, &ColumnMap::default())
}

#[cfg(test)]
mod tests {
    use super::*;

    fn d(s: &str) -> NaiveDate {
        NaiveDate::parse_from_str(s, "%Y-%m-%d").unwrap()
    }

    fn quote(strike: f64, side: Side, mid: f64) -> OptionQuote {
        OptionQuote {
            trade_date: d("2024-01-02"),
            expiry: d("2024-02-16"),
            strike,
            side,
            mid,
            volume: 10,
            implied_vol: 0.2,
        }
    }

    fn write(dir: &Path, name: &str, body: &str) -> PathBuf {
        let p = dir.join(name);
        fs::write(&p, body).unwrap();
        p
    }

    const HEADER: &str = "trade_date,expiry,strike,side,mid,volume,implied_vol\n";

    #[test]
    fn loads_well_formed_rows() {
        let dir = tempfile::tempdir().unwrap();
        let body = format!(
            "{HEADER}2024-01-02,2024-02-16,1900,P,12.5,10,0.21\n\
             2024-01-02,2024-02-16,2000,C,30,5,0.19\n\
             2024-01-02,2024-02-16,2000,P,31,7,0.19\n"
        );
        let p = write(dir.path(), "a.csv", &body);
        let sets = load_quotes(&[p], &ColumnMap::default()).unwrap();
        assert_eq!(sets.len(), 1);
        assert_eq!(sets[0].len(), 3);
    }

    #[test]
    fn tab_delimited_input_is_accepted() {
        let dir = tempfile::tempdir().unwrap();
        let body = "trade_date\texpiry\tstrike\tside\tmid\tvolume\timplied_vol\n\
                    2024-01-02\t2024-02-16\t1900\tput\t12.5\t10\t0.21\n";
        let p = write(dir.path(), "a.tsv", body);
        let sets = load_quotes(&[p], &ColumnMap::default()).unwrap();
        assert_eq!(sets[0].len(), 1);
    }

    #[test]
    fn negative_strike_reports_line_number() {
        let dir = tempfile::tempdir().unwrap();
        let body = format!(
            "{HEADER}2024-01-02,2024-02-16,1900,P,12.5,10,0.21\n\
             2024-01-02,2024-02-16,-5,C,30,5,0.19\n"
        );
        let p = write(dir.path(), "a.csv", &body);
        match load_quotes(&[p], &ColumnMap::default()) {
            Err(Error::Row { line, message, .. }) => {
                assert_eq!(line, 3);
                assert!(message.contains("strike"));
            }
            other => panic!("expected row error, got {other:?}"),
        }
    }

    #[test]
    fn empty_file_is_a_dataset_error() {
        let dir = tempfile::tempdir().unwrap();
        let p = write(dir.path(), "a.csv", HEADER);
        assert!(matches!(
            load_quotes(&[p], &ColumnMap::default()),
            Err(Error::Dataset(_))
        ));
    }

    #[test]
    fn merging_files_rejects_duplicates() {
        let dir = tempfile::tempdir().unwrap();
        let a = write(
            dir.path(),
            "a.csv",
            &format!("{HEADER}2024-01-02,2024-02-16,1900,P,12.5,10,0.21\n"),
        );
        let b = write(
            dir.path(),
            "b.csv",
            &format!("{HEADER}2024-01-02,2024-02-16,2000,P,22.5,10,0.21\n"),
        );
        let merged = load_quotes(&[&a, &b], &ColumnMap::default()).unwrap();
        assert_eq!(merged[0].len(), 2);

        let c = write(
            dir.path(),
            "c.csv",
            &format!("{HEADER}2024-01-02,2024-02-16,1900,P,13.0,3,0.22\n"),
        );
        assert!(matches!(
            load_quotes(&[&a, &c], &ColumnMap::default()),
            Err(Error::DuplicateQuote { .. })
        ));
    }

    #[test]
    fn discount_factor_column_rescales_mids() {
        let dir = tempfile::tempdir().unwrap();
        let body = "trade_date,expiry,strike,side,mid,volume,implied_vol,df\n\
                    2024-01-02,2024-02-16,1900,P,9.9,10,0.21,0.99\n";
        let p = write(dir.path(), "a.csv", body);
        let map = ColumnMap {
            discount_factor: Some("df".into()),
            ..ColumnMap::default()
        };
        let sets = load_quotes(&[p], &map).unwrap();
        let q = sets[0].quotes().next().unwrap();
        assert!((q.mid - 10.0).abs() < 1e-12);
    }

    #[test]
    fn filter_rules() {
        let mut qs = QuoteSet::new(d("2024-01-02"));
        let mut zero_vol = quote(1900.0, Side::Put, 10.0);
        zero_vol.volume = 0;
        qs.insert(zero_vol).unwrap();
        qs.insert(quote(2000.0, Side::Put, 20.0)).unwrap();
        qs.insert(quote(2100.0, Side::Call, 8.0)).unwrap();
        qs.insert(quote(2200.0, Side::Call, 3.0)).unwrap();
        let mut near = quote(2000.0, Side::Call, 20.0);
        near.expiry = d("2024-01-08"); // six calendar days
        qs.insert(near).unwrap();

        let out = filter_quotes(&qs, &FilterConfig::default());
        // zero-volume quote and six-day expiry go; three strikes remain so the expiry stays.
        assert_eq!(out.len(), 3);
        assert!(out.quotes().all(|q| q.volume > 0 && q.days_to_expiry() >= 7));
        assert_eq!(out.expiries().count(), 1);

        let seven = {
            let mut q = quote(2000.0, Side::Call, 20.0);
            q.expiry = d("2024-01-09");
            q
        };
        assert!(FilterConfig::default().keeps(&seven));
    }

    #[test]
    fn filter_drops_thin_expiries_and_bad_quotes() {
        let mut qs = QuoteSet::new(d("2024-01-02"));
        qs.insert(quote(1900.0, Side::Put, 10.0)).unwrap();
        qs.insert(quote(2000.0, Side::Put, 20.0)).unwrap();
        qs.insert(quote(2000.0, Side::Call, 20.0)).unwrap();
        qs.insert(quote(2100.0, Side::Call, 0.5)).unwrap(); // mid <= 0.5
        let out = filter_quotes(&qs, &FilterConfig::default());
        assert!(out.is_empty());

        let mut high_iv = quote(1800.0, Side::Put, 5.0);
        high_iv.implied_vol = 1.0;
        assert!(!FilterConfig::default().keeps(&high_iv));
        high_iv.implied_vol = 0.01;
        assert!(!FilterConfig::default().keeps(&high_iv));
    }

    #[test]
    fn forward_from_zero_gap_pair() {
        let e = d("2024-02-16");
        let qs = [quote(2000.0, Side::Put, 50.0), quote(2000.0, Side::Call, 50.0)];
        assert_eq!(extract_forward(e, &qs).unwrap(), 2000.0);
    }

    #[test]
    fn forward_uses_smallest_gap() {
        let e = d("2024-02-16");
        let qs = [
            quote(1900.0, Side::Put, 40.0),
            quote(1900.0, Side::Call, 52.0),
            quote(2000.0, Side::Put, 30.0),
            quote(2000.0, Side::Call, 31.0),
        ];
        assert_eq!(extract_forward(e, &qs).unwrap(), 2001.0);
    }

    #[test]
    fn forward_tie_prefers_lower_strike() {
        let e = d("2024-02-16");
        let qs = [
            quote(1900.0, Side::Put, 40.0),
            quote(1900.0, Side::Call, 41.0),
            quote(2000.0, Side::Put, 30.0),
            quote(2000.0, Side::Call, 31.0),
        ];
        assert_eq!(extract_forward(e, &qs).unwrap(), 1901.0);
    }

    #[test]
    fn forward_requires_a_pair() {
        let e = d("2024-02-16");
        let qs = [quote(1900.0, Side::Put, 40.0), quote(2000.0, Side::Call, 31.0)];
        assert!(matches!(
            extract_forward(e, &qs),
            Err(Error::ForwardUnavailable { .. })
        ));
    }

    #[test]
    fn otm_curve_side_selection() {
        let e = d("2024-02-16");
        let qs = [
            quote(1800.0, Side::Put, 5.0),
            quote(1800.0, Side::Call, 160.0),
            quote(1900.0, Side::Put, 12.0),
            quote(2000.0, Side::Call, 30.0),
            quote(2100.0, Side::Call, 10.0),
        ];
        let c = to_otm_curve(d("2024-01-02"), e, &qs, 1950.0).unwrap();
        assert_eq!(
            c.points,
            vec![(1800.0, 5.0), (1900.0, 12.0), (2000.0, 30.0), (2100.0, 10.0)]
        );
    }

    #[test]
    fn otm_curve_needs_three_points() {
        let e = d("2024-02-16");
        let qs = [quote(1900.0, Side::Put, 12.0), quote(2000.0, Side::Call, 30.0)];
        assert!(matches!(
            to_otm_curve(d("2024-01-02"), e, &qs, 1950.0),
            Err(Error::CurveUnavailable { points: 2, .. })
        ));
    }

    #[test]
    fn quote_store_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let mut qs = QuoteSet::new(d("2024-01-02"));
        qs.insert(quote(1900.0, Side::Put, 12.345678901234)).unwrap();
        qs.insert(quote(2000.0, Side::Call, 30.0)).unwrap();
        write_quote_store(dir.path(), std::slice::from_ref(&qs)).unwrap();
        let back = read_quote_store(dir.path()).unwrap();
        assert_eq!(back, vec![qs]);
    }

    mod props {
        use super::*;
        use proptest::prelude::*;

        fn arb_set() -> impl Strategy<Value = QuoteSet> {
            prop::collection::vec(
                (
                    0usize..4,
                    1700u32..2300,
                    any::<bool>(),
                    0.0f64..60.0,
                    0u64..3,
                    0.0f64..1.2,
                ),
                0..60,
            )
            .prop_map(|rows| {
                let td = d("2024-01-02");
                let expiries = [d("2024-01-05"), d("2024-01-09"), d("2024-03-15"), d("2025-06-20")];
                let mut qs = QuoteSet::new(td);
                for (e, k, put, mid, vol, iv) in rows {
                    let q = OptionQuote {
                        trade_date: td,
                        expiry: expiries[e],
                        strike: f64::from(k / 5 * 5),
                        side: if put { Side::Put } else { Side::Call },
                        mid,
                        volume: vol,
                        implied_vol: iv,
                    };
                    let _ = qs.insert(q);
                }
                qs
            })
        }

        proptest! {
            #[test]
            fn filter_is_idempotent(qs in arb_set()) {
                let cfg = FilterConfig::default();
                let once = filter_quotes(&qs, &cfg);
                prop_assert_eq!(filter_quotes(&once, &cfg), once);
            }

            #[test]
            fn otm_points_are_sorted_and_non_negative(qs in arb_set(), f in 1800.0f64..2200.0) {
                for (&e, quotes) in qs.expiries() {
                    if let Ok(c) = to_otm_curve(qs.trade_date, e, quotes, f) {
                        prop_assert!(c.points.windows(2).all(|w| w[0].0 < w[1].0));
                        prop_assert!(c.points.iter().all(|p| p.1 >= 0.0));
                    }
                }
            }

            #[test]
            fn forward_ignores_wider_pairs(gap in 0.0f64..5.0, extra in 0.0f64..10.0, k in 1500u32..1800) {
                let e = d("2024-02-16");
                let base = [quote(2000.0, Side::Put, 30.0), quote(2000.0, Side::Call, 30.0 + gap)];
                let f0 = extract_forward(e, &base).unwrap();
                let mut more = base.to_vec();
                more.push(quote(f64::from(k), Side::Put, 10.0));
                more.push(quote(f64::from(k), Side::Call, 10.0 + gap + extra + 1e-9));
                prop_assert_eq!(extract_forward(e, &more).unwrap(), f0);
            }
        }
    }
}
