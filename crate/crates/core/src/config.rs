//! TOML pipeline configuration.
//!
//! ```toml
//! seed = 7
//! stages = ["ingest", "surface", "contracts", "swaps", "series", "regress", "report"]
//!
//! [paths]
//! input = ["quotes.csv"]
//! factors = "factors.csv"
//! output = "out"
//!
//! [series]
//! taus = [30]
//! frequencies = ["daily", "weekly", "monthly"]
//! specs = ["variance", "third", "fourth", "skew", "kurtosis"]
//! ```

use std::fmt;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::contracts::Quadrature;
use crate::error::{Error, Result};
use crate::market_data::{ColumnMap, FilterConfig};
use crate::series::{Frequency, Method};
use crate::sim::{Centring, Characteristic, MarketModel, Measure};
use crate::stats::{Covariance, ErSquare};
use crate::surface::SurfaceConfig;
use crate::swaps::SwapKind;
use crate::synth::SynthConfig;

/// Parses any configuration fragment, e.g. a standalone market model.
pub fn from_toml<T: serde::de::DeserializeOwned>(text: &str) -> Result<T> {
    toml::from_str(text).map_err(|e| Error::Config(e.to_string()))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Stage {
    Ingest,
    Surface,
    Contracts,
    Swaps,
    Series,
    Simulate,
    Regress,
    Report,
}

impl Stage {
    /// Dependency order.
    pub const ALL: [Stage; 8] = [
        Stage::Ingest,
        Stage::Surface,
        Stage::Contracts,
        Stage::Swaps,
        Stage::Series,
        Stage::Simulate,
        Stage::Regress,
        Stage::Report,
    ];

    pub fn dir_name(self) -> &'static str {
        match self {
            Stage::Ingest => "quotes",
            Stage::Surface => "grids",
            Stage::Contracts => "panels",
            Stage::Swaps => "swaps",
            Stage::Series => "series",
            Stage::Simulate => "simulate",
            Stage::Regress => "regress",
            Stage::Report => "report",
        }
    }
}

impl fmt::Display for Stage {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Stage::Ingest => "ingest",
            Stage::Surface => "surface",
            Stage::Contracts => "contracts",
            Stage::Swaps => "swaps",
            Stage::Series => "series",
            Stage::Simulate => "simulate",
            Stage::Regress => "regress",
            Stage::Report => "report",
        })
    }
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(default)]
pub struct Paths {
    /// Raw delimited quote files.
    pub input: Vec<PathBuf>,
    pub factors: Option<PathBuf>,
    pub output: PathBuf,
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(default)]
pub struct ContractsConfig {
    pub quadrature: Quadrature,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SeriesConfig {
    pub taus: Vec<i64>,
    pub frequencies: Vec<Frequency>,
    pub specs: Vec<SwapKind>,
    pub method: Method,
}

impl Default for SeriesConfig {
    fn default() -> Self {
        Self {
            taus: vec![30],
            frequencies: Frequency::ALL.to_vec(),
            specs: vec![
                SwapKind::Variance,
                SwapKind::Third,
                SwapKind::Fourth,
                SwapKind::Skew,
                SwapKind::Kurtosis,
            ],
            method: Method::C,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Check {
    /// Aggregation property: monitored sum against the exact terminal expectation.
    Ap,
    Qbias,
    Pbias,
    Variance,
}

impl Check {
    pub fn parse(raw: &str) -> Option<Self> {
        match raw.trim().to_ascii_lowercase().as_str() {
            "ap" => Some(Check::Ap),
            "qbias" => Some(Check::Qbias),
            "pbias" => Some(Check::Pbias),
            "variance" => Some(Check::Variance),
            _ => None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SimulateConfig {
    pub name: String,
    pub model: MarketModel,
    pub measure: Measure,
    pub check: Check,
    pub characteristics: Vec<Characteristic>,
    pub partitions: Vec<usize>,
    pub horizon_days: f64,
    pub paths: usize,
    pub centring: Centring,
}

impl Default for SimulateConfig {
    fn default() -> Self {
        Self {
            name: "ap".into(),
            model: MarketModel::default(),
            measure: Measure::Q,
            check: Check::Ap,
            characteristics: vec![Characteristic::Variance, Characteristic::Third, Characteristic::Fourth],
            partitions: vec![1, 5, 20, 30],
            horizon_days: 30.0,
            paths: 10_000,
            centring: Centring::Sample,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(default)]
pub struct RegressConfig {
    pub covariance: Covariance,
    pub er_square: ErSquare,
    /// Inclusive `YYYY-MM-DD:YYYY-MM-DD`.
    pub period: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct PipelineConfig {
    /// Every random draw in the pipeline derives from this.
    pub seed: u64,
    /// Rayon worker count; 0 uses all cores.
    pub threads: usize,
    pub stages: Vec<Stage>,
    pub paths: Paths,
    pub columns: ColumnMap,
    pub filters: FilterConfig,
    pub surface: SurfaceConfig,
    pub contracts: ContractsConfig,
    pub series: SeriesConfig,
    pub regress: RegressConfig,
    pub simulate: Vec<SimulateConfig>,
    /// When present, ingest generates quotes (and a factor file) instead of reading input.
    pub synth: Option<SynthConfig>,
}

impl Default for PipelineConfig {
    fn default() -> Self {
        Self {
            seed: 7,
            threads: 0,
            stages: Stage::ALL.to_vec(),
            paths: Paths {
                output: PathBuf::from("out"),
                ..Paths::default()
            },
            columns: ColumnMap::default(),
            filters: FilterConfig::default(),
            surface: SurfaceConfig::default(),
            contracts: ContractsConfig::default(),
            series: SeriesConfig::default(),
            regress: RegressConfig::default(),
            simulate: Vec::new(),
            synth: None,
        }
    }
}

impl PipelineConfig {
    /// Relative paths are taken relative to the config file's directory.
    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        let mut cfg: Self = toml::from_str(&text).map_err(|e| Error::Config(format!("{}: {e}", path.display())))?;
        if let Some(base) = path.parent() {
            cfg.rebase(base);
        }
        Ok(cfg)
    }

    fn rebase(&mut self, base: &Path) {
        let fix = |p: &mut PathBuf| {
            if p.is_relative() {
                *p = base.join(&*p);
            }
        };
        self.paths.input.iter_mut().for_each(fix);
        if let Some(f) = self.paths.factors.as_mut() {
            fix(f);
        }
        fix(&mut self.paths.output);
    }

    pub fn to_toml(&self) -> String {
        toml::to_string_pretty(self).expect("configuration is always representable")
    }

    /// Replaces every seed in the configuration with ones derived from `seed`.
    pub fn reseed(&mut self, seed: u64) {
        self.seed = seed;
        if let Some(s) = self.synth.as_mut() {
            s.seed = seed;
        }
        for (i, s) in self.simulate.iter_mut().enumerate() {
            s.model.seed = seed.wrapping_add(i as u64);
        }
    }

    pub fn runs(&self, stage: Stage) -> bool {
        self.stages.contains(&stage)
    }

    pub fn period(&self) -> Result<Option<(chrono::NaiveDate, chrono::NaiveDate)>> {
        let Some(raw) = &self.regress.period else {
            return Ok(None);
        };
        let (a, b) = raw
            .split_once(':')
            .ok_or_else(|| Error::Config(format!("period '{raw}' is not from:to")))?;
        let parse = |s: &str| {
            chrono::NaiveDate::parse_from_str(s.trim(), "%Y-%m-%d")
                .map_err(|e| Error::Config(format!("period bound '{s}': {e}")))
        };
        let (from, to) = (parse(a)?, parse(b)?);
        if from > to {
            return Err(Error::Config(format!("period '{raw}' ends before it starts")));
        }
        Ok(Some((from, to)))
    }

    /// Checks everything that can be checked before work starts.
    pub fn validate(&self) -> Result<()> {
        let out = &self.paths.output;
        if out.as_os_str().is_empty() {
            return Err(Error::Config("paths.output must be set".into()));
        }
        let first = Stage::ALL.into_iter().find(|s| self.runs(*s));
        if self.runs(Stage::Ingest) {
            match &self.synth {
                Some(s) => s.validate()?,
                None if self.paths.input.is_empty() => {
                    return Err(Error::Config("ingest needs paths.input or a [synth] section".into()))
                }
                None => {
                    for p in &self.paths.input {
                        if !p.is_file() {
                            return Err(Error::Config(format!("input file {} not found", p.display())));
                        }
                    }
                }
            }
        }
        if self.runs(Stage::Regress) {
            let generated = self.synth.is_some() && self.runs(Stage::Ingest);
            match &self.paths.factors {
                Some(p) if p.is_file() || generated => {}
                Some(p) => return Err(Error::Config(format!("factor file {} not found", p.display()))),
                None if generated => {}
                None => return Err(Error::Config("regress needs paths.factors".into())),
            }
            self.period()?;
        }
        // A stage that starts mid-pipeline must find its predecessor's store.
        let needs = |s: Stage| -> Option<Stage> {
            match s {
                Stage::Surface => Some(Stage::Ingest),
                Stage::Contracts => Some(Stage::Surface),
                Stage::Swaps | Stage::Series => Some(Stage::Contracts),
                Stage::Regress => Some(Stage::Series),
                _ => None,
            }
        };
        if let Some(first) = first {
            if let Some(pred) = needs(first) {
                let store = out.join(pred.dir_name());
                if !store.is_dir() {
                    return Err(Error::MissingStore(store));
                }
            }
        }
        if self.surface.grid_points < 3 || !(self.surface.sigma_range > 0.0) {
            return Err(Error::Config("surface.grid_points >= 3 and surface.sigma_range > 0 required".into()));
        }
        if self.series.taus.iter().any(|t| *t <= 0) {
            return Err(Error::Config("series.taus must be positive".into()));
        }
        for s in &self.simulate {
            s.model.validate()?;
            if s.paths < 2 || s.partitions.iter().any(|p| *p == 0) || !(s.horizon_days > 0.0) {
                return Err(Error::Config(format!("simulate '{}': paths >= 2, partitions >= 1, horizon > 0", s.name)));
            }
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn defaults_roundtrip_through_toml() {
        let mut cfg = PipelineConfig::default();
        cfg.simulate.push(SimulateConfig::default());
        cfg.synth = Some(SynthConfig::default());
        let back: PipelineConfig = toml::from_str(&cfg.to_toml()).unwrap();
        assert_eq!(back, cfg);
    }

    #[test]
    fn simulate_only_needs_no_market_data() {
        let dir = tempfile::tempdir().unwrap();
        let cfg = PipelineConfig {
            stages: vec![Stage::Simulate],
            paths: Paths {
                output: dir.path().join("out"),
                ..Paths::default()
            },
            simulate: vec![SimulateConfig::default()],
            ..PipelineConfig::default()
        };
        cfg.validate().unwrap();
    }

    #[test]
    fn missing_factor_file_fails_validation() {
        let dir = tempfile::tempdir().unwrap();
        let input = dir.path().join("q.csv");
        std::fs::write(&input, "x\n").unwrap();
        let cfg = PipelineConfig {
            paths: Paths {
                input: vec![input],
                factors: Some(dir.path().join("absent.csv")),
                output: dir.path().join("out"),
            },
            ..PipelineConfig::default()
        };
        let err = cfg.validate().unwrap_err().to_string();
        assert!(err.contains("absent.csv"), "{err}");
    }

    #[test]
    fn relative_paths_follow_the_config_file() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("c.toml");
        std::fs::write(&path, "stages = [\"simulate\"]\n[paths]\noutput = \"o\"\n").unwrap();
        let cfg = PipelineConfig::load(&path).unwrap();
        assert_eq!(cfg.paths.output, dir.path().join("o"));
        assert_eq!(cfg.stages, vec![Stage::Simulate]);
    }

    #[test]
    fn period_parsing() {
        let mut cfg = PipelineConfig::default();
        cfg.regress.period = Some("2008-07-01:2009-06-30".into());
        assert!(cfg.period().unwrap().is_some());
        cfg.regress.period = Some("2009-07-01:2009-06-30".into());
        assert!(cfg.period().is_err());
    }
}
