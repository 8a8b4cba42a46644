//! Stage runners and the end-to-end pipeline.
//!
//! Each stage reads its predecessors' stores and writes only its own directory under
//! the output root, so stages can be resumed individually. A run finishes by hashing
//! every artefact into `manifest.csv`.

use std::fs;
use std::path::{Path, PathBuf};

use chrono::NaiveDate;
use log::{info, warn};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::config::{Check, PipelineConfig, SimulateConfig, Stage};
use crate::contracts::{build_panels, read_panel_store, write_panel_store, Quadrature};
use crate::error::{Error, Result};
use crate::market_data::{filter_quotes, load_quotes, read_quote_store, write_quote_store, ColumnMap, FilterConfig};
use crate::report::{read_series_index, write_report, write_series_index, SeriesIndexRow};
use crate::series::{build_pnl_series, read_series_csv, write_series_csv, Frequency, Method, MonitoringPartition, PanelIndex};
use crate::sim::{estimate_p_bias, estimate_q_bias, estimator_variance, verify_aggregation, Estimate, McRun};
use crate::stats::{ols_factor_regression, read_factor_file, write_factor_file, FactorObs, RegressionOptions, RegressionResult};
use crate::surface::{check_static_arbitrage, fit_surface, read_grid_store, write_grid_store, SurfaceConfig};
use crate::swaps::SwapKind;
use crate::synth::{factor_rows, SynthConfig, SynthMarket};

pub const MANIFEST: &str = "manifest.csv";
pub const FACTOR_DIR: &str = "factors";
pub const FACTOR_FILE: &str = "factors.csv";

/// Why a run stopped.
#[derive(Debug, thiserror::Error)]
pub enum PipelineError {
    #[error("validation failed: {0}")]
    Validation(#[source] Error),
    #[error("stage '{stage}' failed: {source}")]
    Stage {
        stage: Stage,
        #[source]
        source: Error,
    },
}

impl PipelineError {
    pub fn exit_code(&self) -> i32 {
        match self {
            PipelineError::Validation(_) => 2,
            PipelineError::Stage { .. } => 3,
        }
    }
}

/// Replaces a stage's own store directory with an empty one.
fn fresh_dir(dir: &Path) -> Result<()> {
    if dir.exists() {
        fs::remove_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    }
    fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))
}

pub fn ingest_stage(
    inputs: &[PathBuf],
    columns: &ColumnMap,
    filters: &FilterConfig,
    synth: Option<&SynthConfig>,
    out: &Path,
) -> Result<Vec<PathBuf>> {
    let raw = match synth {
        Some(cfg) => SynthMarket::generate(cfg)?.quotes(),
        None => load_quotes(inputs, columns)?,
    };
    let total: usize = raw.iter().map(|s| s.len()).sum();
    let filtered: Vec<_> = raw
        .iter()
        .map(|s| filter_quotes(s, filters))
        .filter(|s| !s.is_empty())
        .collect();
    let kept: usize = filtered.iter().map(|s| s.len()).sum();
    info!("ingest: kept {kept} of {total} quotes on {} dates", filtered.len());
    if filtered.is_empty() {
        return Err(Error::Dataset("no quotes survive the filters".into()));
    }
    fresh_dir(out)?;
    write_quote_store(out, &filtered)
}

/// Writes the factor file that accompanies a synthetic market.
pub fn synth_factor_stage(cfg: &SynthConfig, out: &Path) -> Result<PathBuf> {
    let market = SynthMarket::generate(cfg)?;
    let rows: Vec<FactorObs> = factor_rows(&market, cfg.seed.wrapping_add(1))
        .into_iter()
        .map(|(date, [mkt_rf, smb, hml, mom, rf])| FactorObs {
            date,
            mkt_rf,
            smb,
            hml,
            mom,
            rf,
        })
        .collect();
    fresh_dir(out)?;
    let path = out.join(FACTOR_FILE);
    write_factor_file(&path, &rows)?;
    Ok(path)
}

pub fn surface_stage(quotes: &Path, cfg: &SurfaceConfig, out: &Path) -> Result<Vec<PathBuf>> {
    let sets = read_quote_store(quotes)?;
    let fitted: Vec<_> = sets
        .par_iter()
        .map(|set| {
            let (curves, errors) = set.otm_curves();
            for e in &errors {
                warn!("surface {}: {e}", set.trade_date);
            }
            if curves.is_empty() {
                warn!("surface {}: no usable maturities", set.trade_date);
                return Ok(Vec::new());
            }
            fit_surface(&curves, cfg)
        })
        .collect::<Result<Vec<_>>>()?;
    let grids: Vec<_> = fitted.into_iter().flatten().collect();
    let report = check_static_arbitrage(&grids, cfg.tolerance);
    if !report.is_clean() {
        warn!("surface: {} static-arbitrage violations remain", report.violation_count());
    }
    info!("surface: {} grids", grids.len());
    fresh_dir(out)?;
    write_grid_store(out, &grids)
}

pub fn contracts_stage(grids: &Path, rule: Quadrature, out: &Path) -> Result<Vec<PathBuf>> {
    let grids = read_grid_store(grids)?;
    let mut panels = Vec::with_capacity(grids.len());
    for (g, p) in grids.iter().zip(build_panels(&grids, rule)) {
        match p {
            Ok(p) => panels.push(p),
            Err(e) => warn!("contracts {} {}: {e}", g.trade_date, g.expiry),
        }
    }
    info!("contracts: {} panels", panels.len());
    fresh_dir(out)?;
    write_panel_store(out, &panels)
}

/// Daily fixed-expiry P&L of every listed expiry, struck when first observed.
pub fn swaps_stage(panels: &Path, specs: &[SwapKind], out: &Path) -> Result<Vec<PathBuf>> {
    let panels = read_panel_store(panels)?;
    let mut by_expiry: std::collections::BTreeMap<NaiveDate, Vec<&crate::contracts::ContractPanel>> =
        std::collections::BTreeMap::new();
    for p in &panels {
        by_expiry.entry(p.expiry).or_default().push(p);
    }
    fresh_dir(out)?;
    let mut written = Vec::new();
    for &spec in specs {
        let path = out.join(format!("{spec}.csv"));
        let mut w = csv::Writer::from_path(&path).map_err(|e| Error::csv(&path, e))?;
        w.write_record(["expiry", "start", "date", "increment", "realised_part", "implied_part"])
            .map_err(|e| Error::csv(&path, e))?;
        for (expiry, rows) in &by_expiry {
            let inception = rows[0];
            for pair in rows.windows(2) {
                let pnl = spec.fixed_expiry_increment(inception, pair[0], pair[1])?;
                w.write_record([
                    expiry.to_string(),
                    pair[0].trade_date.to_string(),
                    pair[1].trade_date.to_string(),
                    pnl.value.to_string(),
                    pnl.realised_part.to_string(),
                    pnl.implied_part.to_string(),
                ])
                .map_err(|e| Error::csv(&path, e))?;
            }
        }
        w.flush().map_err(|e| Error::io(&path, e))?;
        written.push(path);
    }
    Ok(written)
}

pub fn series_stage(
    panels: &Path,
    specs: &[SwapKind],
    frequencies: &[Frequency],
    taus: &[i64],
    method: Method,
    out: &Path,
) -> Result<Vec<PathBuf>> {
    let index = PanelIndex::new(&read_panel_store(panels)?);
    let calendar = index.dates();
    fresh_dir(out)?;
    let mut rows = Vec::new();
    let mut written = Vec::new();
    for &tau in taus {
        for &freq in frequencies {
            let partition = MonitoringPartition::from_calendar(&calendar, freq)?;
            for &spec in specs {
                let s = build_pnl_series(&index, spec, &partition, tau, method)?;
                let file = format!("{}.csv", s.label);
                let path = out.join(&file);
                write_series_csv(&path, &s)?;
                info!("series {}: {} points, {} gaps", s.label, s.points.len(), s.gaps.len());
                rows.push(SeriesIndexRow {
                    label: s.label.clone(),
                    spec: spec.to_string(),
                    frequency: freq,
                    tau_days: tau,
                    method: format!("{method:?}").to_ascii_lowercase(),
                    file,
                });
                written.push(path);
            }
        }
    }
    written.push(write_series_index(out, &rows)?);
    Ok(written)
}

/// One row of a simulation report.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SimRow {
    pub check: String,
    pub characteristic: String,
    pub measure: String,
    pub partition: usize,
    pub value: f64,
    pub se: f64,
    pub z: f64,
    pub paths: usize,
}

pub fn run_simulation(cfg: &SimulateConfig) -> Result<Vec<SimRow>> {
    let run = McRun::new(cfg.horizon_days, cfg.paths);
    let mut rows = Vec::new();
    let measure = format!("{:?}", cfg.measure);
    for &c in &cfg.characteristics {
        let mut push = |check: &str, partition: usize, e: Estimate| {
            rows.push(SimRow {
                check: check.into(),
                characteristic: c.label().into(),
                measure: measure.clone(),
                partition,
                value: e.value,
                se: e.se,
                z: e.z_score(),
                paths: cfg.paths,
            })
        };
        match cfg.check {
            Check::Ap => {
                for r in verify_aggregation(c, &cfg.model, cfg.measure, &cfg.partitions, run)? {
                    push("ap", r.partition, r.deviation);
                    push("ap_paired", r.partition, r.paired);
                }
            }
            Check::Qbias => {
                for &n in &cfg.partitions {
                    push("qbias", n, estimate_q_bias(c, &cfg.model, n, run)?);
                }
            }
            Check::Pbias => {
                for &n in &cfg.partitions {
                    push("pbias", n, estimate_p_bias(c, &cfg.model, n, run)?);
                }
            }
            Check::Variance => {
                for &n in &cfg.partitions {
                    push("variance", n, estimator_variance(c, &cfg.model, cfg.measure, n, run, cfg.centring)?);
                }
            }
        }
    }
    Ok(rows)
}

pub fn write_sim_rows(path: &Path, rows: &[SimRow]) -> Result<()> {
    let mut w = csv::Writer::from_path(path).map_err(|e| Error::csv(path, e))?;
    for r in rows {
        w.serialize(r).map_err(|e| Error::csv(path, e))?;
    }
    if rows.is_empty() {
        w.write_record(["check", "characteristic", "measure", "partition", "value", "se", "z", "paths"])
            .map_err(|e| Error::csv(path, e))?;
    }
    w.flush().map_err(|e| Error::io(path, e))
}

pub fn simulate_stage(configs: &[SimulateConfig], out: &Path) -> Result<Vec<PathBuf>> {
    fresh_dir(out)?;
    let mut written = Vec::new();
    for cfg in configs {
        let rows = run_simulation(cfg)?;
        let path = out.join(format!("{}.csv", cfg.name));
        write_sim_rows(&path, &rows)?;
        written.push(path);
    }
    Ok(written)
}

pub const REGRESSION_HEADER: [&str; 18] = [
    "series",
    "model",
    "n_obs",
    "alpha",
    "beta_er",
    "beta_er2",
    "beta_size",
    "beta_growth",
    "beta_momentum",
    "t_alpha",
    "t_er",
    "t_er2",
    "t_size",
    "t_growth",
    "t_momentum",
    "adjusted_r2",
    "f_stat",
    "f_p_value",
];

fn regression_record(series: &str, r: &RegressionResult) -> Vec<String> {
    let pad = |v: &[f64]| -> Vec<String> {
        (0..6)
            .map(|i| v.get(i).map(|x| format!("{x:.6}")).unwrap_or_default())
            .collect()
    };
    let mut rec = vec![
        series.to_string(),
        if r.restricted { "restricted" } else { "unrestricted" }.to_string(),
        r.n_obs.to_string(),
    ];
    rec.extend(pad(&r.coefficients));
    rec.extend(pad(&r.t_stats));
    rec.push(format!("{:.6}", r.adjusted_r2));
    rec.push(format!("{:.6}", r.f_test.statistic));
    rec.push(format!("{:.6}", r.f_test.p_value));
    rec
}

fn in_period(data: Vec<(NaiveDate, f64)>, period: Option<(NaiveDate, NaiveDate)>) -> Vec<(NaiveDate, f64)> {
    match period {
        Some((from, to)) => data.into_iter().filter(|(d, _)| *d >= from && *d <= to).collect(),
        None => data,
    }
}

/// Regresses one P&L CSV on the factors and writes a one-row table.
pub fn regress_one(
    pnl: &Path,
    factors: &Path,
    period: Option<(NaiveDate, NaiveDate)>,
    restricted: bool,
    options: RegressionOptions,
    out: &Path,
) -> Result<RegressionResult> {
    let y = in_period(read_series_csv(pnl)?, period);
    let f = read_factor_file(factors)?;
    let r = ols_factor_regression(&y, &f, restricted, options)?;
    let mut w = csv::Writer::from_path(out).map_err(|e| Error::csv(out, e))?;
    w.write_record(REGRESSION_HEADER).map_err(|e| Error::csv(out, e))?;
    let name = pnl.file_stem().and_then(|s| s.to_str()).unwrap_or("series");
    w.write_record(regression_record(name, &r)).map_err(|e| Error::csv(out, e))?;
    w.flush().map_err(|e| Error::io(out, e))?;
    Ok(r)
}

/// Restricted and unrestricted fits for every series in the store.
pub fn regress_stage(
    series: &Path,
    factors: &Path,
    period: Option<(NaiveDate, NaiveDate)>,
    options: RegressionOptions,
    out: &Path,
) -> Result<Vec<PathBuf>> {
    let index = read_series_index(series)?;
    let f = read_factor_file(factors)?;
    fresh_dir(out)?;
    let path = out.join("regression.csv");
    let mut w = csv::Writer::from_path(&path).map_err(|e| Error::csv(&path, e))?;
    w.write_record(REGRESSION_HEADER).map_err(|e| Error::csv(&path, e))?;
    for row in &index {
        let y = in_period(read_series_csv(&series.join(&row.file))?, period);
        for restricted in [true, false] {
            match ols_factor_regression(&y, &f, restricted, options) {
                Ok(r) => w
                    .write_record(regression_record(&row.label, &r))
                    .map_err(|e| Error::csv(&path, e))?,
                Err(e) => warn!("regress {}: {e}", row.label),
            }
        }
    }
    w.flush().map_err(|e| Error::io(&path, e))?;
    Ok(vec![path])
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ManifestEntry {
    pub path: String,
    pub bytes: u64,
    pub sha256: String,
}

pub fn sha256_file(path: &Path) -> Result<String> {
    let bytes = fs::read(path).map_err(|e| Error::io(path, e))?;
    Ok(hex::encode(Sha256::digest(&bytes)))
}

/// Hashes every file under `root` except the manifest itself, in path order.
pub fn build_manifest(root: &Path) -> Result<Vec<ManifestEntry>> {
    fn walk(dir: &Path, out: &mut Vec<PathBuf>) -> Result<()> {
        for entry in fs::read_dir(dir).map_err(|e| Error::io(dir, e))? {
            let p = entry.map_err(|e| Error::io(dir, e))?.path();
            if p.is_dir() {
                walk(&p, out)?;
            } else {
                out.push(p);
            }
        }
        Ok(())
    }
    let mut files = Vec::new();
    walk(root, &mut files)?;
    let mut entries = files
        .iter()
        .filter(|p| p.parent() != Some(root) || p.file_name() != Some(MANIFEST.as_ref()))
        .map(|p| {
            let rel = p.strip_prefix(root).expect("walked under root");
            let path = rel.components().map(|c| c.as_os_str().to_string_lossy()).collect::<Vec<_>>().join("/");
            Ok(ManifestEntry {
                path,
                bytes: fs::metadata(p).map_err(|e| Error::io(p, e))?.len(),
                sha256: sha256_file(p)?,
            })
        })
        .collect::<Result<Vec<_>>>()?;
    entries.sort_by(|a, b| a.path.cmp(&b.path));
    Ok(entries)
}

pub fn write_manifest(root: &Path, entries: &[ManifestEntry]) -> Result<PathBuf> {
    let path = root.join(MANIFEST);
    let mut w = csv::Writer::from_path(&path).map_err(|e| Error::csv(&path, e))?;
    for e in entries {
        w.serialize(e).map_err(|e| Error::csv(&path, e))?;
    }
    w.flush().map_err(|e| Error::io(&path, e))?;
    Ok(path)
}

/// Runs the configured stages in dependency order and writes the manifest.
pub fn run_pipeline(config: &PipelineConfig) -> std::result::Result<Vec<ManifestEntry>, PipelineError> {
    let mut cfg = config.clone();
    cfg.reseed(config.seed);
    cfg.validate().map_err(PipelineError::Validation)?;
    let root = cfg.paths.output.clone();
    fs::create_dir_all(&root).map_err(|e| PipelineError::Validation(Error::io(&root, e)))?;
    let dir = |s: Stage| root.join(s.dir_name());
    let synth_factors = root.join(FACTOR_DIR).join(FACTOR_FILE);

    for stage in Stage::ALL.into_iter().filter(|s| cfg.runs(*s)) {
        info!("stage {stage}");
        let fail = |source: Error| PipelineError::Stage { stage, source };
        match stage {
            Stage::Ingest => {
                ingest_stage(&cfg.paths.input, &cfg.columns, &cfg.filters, cfg.synth.as_ref(), &dir(stage))
                    .map_err(fail)?;
                if let Some(s) = &cfg.synth {
                    synth_factor_stage(s, &root.join(FACTOR_DIR)).map_err(fail)?;
                }
            }
            Stage::Surface => {
                surface_stage(&dir(Stage::Ingest), &cfg.surface, &dir(stage)).map_err(fail)?;
            }
            Stage::Contracts => {
                contracts_stage(&dir(Stage::Surface), cfg.contracts.quadrature, &dir(stage)).map_err(fail)?;
            }
            Stage::Swaps => {
                swaps_stage(&dir(Stage::Contracts), &cfg.series.specs, &dir(stage)).map_err(fail)?;
            }
            Stage::Series => {
                let s = &cfg.series;
                series_stage(&dir(Stage::Contracts), &s.specs, &s.frequencies, &s.taus, s.method, &dir(stage))
                    .map_err(fail)?;
            }
            Stage::Simulate => {
                simulate_stage(&cfg.simulate, &dir(stage)).map_err(fail)?;
            }
            Stage::Regress => {
                let factors = cfg.paths.factors.clone().unwrap_or_else(|| synth_factors.clone());
                let options = RegressionOptions {
                    covariance: cfg.regress.covariance,
                    er_square: cfg.regress.er_square,
                };
                let period = cfg.period().map_err(PipelineError::Validation)?;
                regress_stage(&dir(Stage::Series), &factors, period, options, &dir(stage)).map_err(fail)?;
            }
            Stage::Report => {
                write_report(&root, &dir(stage)).map_err(fail)?;
            }
        }
    }
    let entries = build_manifest(&root).map_err(|source| PipelineError::Stage {
        stage: Stage::Report,
        source,
    })?;
    write_manifest(&root, &entries).map_err(|source| PipelineError::Stage {
        stage: Stage::Report,
        source,
    })?;
    Ok(entries)
}
