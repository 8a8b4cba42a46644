use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{anyhow, Context};
use clap::{Args, Parser, Subcommand, ValueEnum};
use log::info;
use momentswap::config::{Check, PipelineConfig, SimulateConfig};
use momentswap::contracts::Quadrature;
use momentswap::pipeline::{self, PipelineError};
use momentswap::series::{build_pnl_series, write_series_csv, Frequency, Method, MonitoringPartition, PanelIndex};
use momentswap::sim::{Centring, Characteristic, MarketModel, Measure};
use momentswap::stats::{Covariance, ErSquare, RegressionOptions};
use momentswap::swaps::SwapKind;
use momentswap::synth::SynthConfig;
use momentswap::{Error, NaiveDate};

/// Discretisation-invariant moment swaps: from option quotes to risk-premium series.
#[derive(Debug, Parser)]
#[command(name = "momentswap", version, about)]
struct Cli {
    /// Pipeline configuration (TOML).
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Top-level seed; overrides every seed in the configuration.
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Worker threads (0 = all cores).
    #[arg(long, global = true, default_value_t = 0)]
    threads: usize,
    /// error, warn, info, debug or trace.
    #[arg(long, global = true, default_value = "info")]
    log_level: log::LevelFilter,
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Read, filter and normalise raw option quotes into a quote store.
    Ingest {
        /// Delimited quote file (repeatable).
        #[arg(long, required = true)]
        input: Vec<PathBuf>,
        #[arg(long)]
        out: PathBuf,
    },
    /// Fit arbitrage-free smiles and sample them on strike grids.
    Surface {
        #[arg(long)]
        quotes: PathBuf,
        #[arg(long)]
        out: PathBuf,
    },
    /// Price power log contracts, entropy and conventional variance from grids.
    Contracts {
        #[arg(long)]
        grids: PathBuf,
        #[arg(long)]
        out: PathBuf,
        #[arg(long, value_enum, default_value_t = Rule::Riemann)]
        quadrature: Rule,
    },
    /// Fixed-expiry daily swap P&L for every listed expiry.
    Swaps {
        #[arg(long)]
        panel: PathBuf,
        #[arg(long, value_enum)]
        spec: Vec<Spec>,
        #[arg(long)]
        out: PathBuf,
    },
    /// Constant-maturity P&L series.
    Series {
        #[arg(long)]
        panel: PathBuf,
        #[arg(long, value_enum)]
        spec: Spec,
        #[arg(long, value_enum, default_value_t = Freq::Daily)]
        freq: Freq,
        /// Constant maturity in calendar days.
        #[arg(long, default_value_t = 30)]
        tau: i64,
        #[arg(long, value_enum, default_value_t = MethodArg::C)]
        method: MethodArg,
        #[arg(long)]
        out: PathBuf,
    },
    /// Monte Carlo checks of aggregation, Q-bias, P-bias and estimator variance.
    Simulate(SimulateArgs),
    /// Factor regression of a P&L series.
    Regress {
        #[arg(long)]
        pnl: PathBuf,
        #[arg(long)]
        factors: PathBuf,
        /// Inclusive YYYY-MM-DD:YYYY-MM-DD.
        #[arg(long)]
        period: Option<String>,
        #[arg(long, value_enum, default_value_t = YesNo::No)]
        restricted: YesNo,
        #[arg(long, value_enum, default_value_t = CovarianceArg::Classical)]
        covariance: CovarianceArg,
        #[arg(long, value_enum, default_value_t = ErSquareArg::Standardized)]
        er_square: ErSquareArg,
        #[arg(long)]
        out: PathBuf,
    },
    /// Tables and figures from the stores under an output root.
    Report {
        /// Output root holding the series (and optionally panels, regress) stores.
        #[arg(long)]
        stores: PathBuf,
        #[arg(long)]
        out: PathBuf,
    },
    /// Full pipeline as described by --config.
    Run,
    /// Write a synthetic quote store and factor file.
    Synth {
        #[arg(long)]
        out: PathBuf,
        #[arg(long, default_value_t = 260)]
        days: usize,
    },
}

#[derive(Debug, Args)]
struct SimulateArgs {
    /// Market model (TOML); GBM with sigma 0.2 if omitted.
    #[arg(long)]
    model: Option<PathBuf>,
    #[arg(long, value_enum, default_value_t = MeasureArg::Q)]
    measure: MeasureArg,
    #[arg(long, value_enum, default_value_t = CheckArg::Ap)]
    check: CheckArg,
    #[arg(long, default_value_t = 100_000)]
    paths: usize,
    /// Characteristics to examine (repeatable).
    #[arg(long = "characteristic", value_enum)]
    characteristics: Vec<CharArg>,
    /// Monitoring partitions (steps per horizon), comma separated.
    #[arg(long, value_delimiter = ',', default_values_t = [1usize, 5, 20, 30])]
    partitions: Vec<usize>,
    #[arg(long, default_value_t = 30.0)]
    horizon_days: f64,
    #[arg(long, value_enum, default_value_t = CentringArg::Sample)]
    centring: CentringArg,
    #[arg(long)]
    out: PathBuf,
}

macro_rules! arg_enum {
    ($name:ident => $target:ty { $($variant:ident $(= $alias:literal)? => $value:expr),+ $(,)? }) => {
        #[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
        enum $name { $($(#[value(name = $alias)])? $variant),+ }
        impl From<$name> for $target {
            fn from(v: $name) -> Self {
                match v { $($name::$variant => $value),+ }
            }
        }
    };
}

arg_enum!(Rule => Quadrature { Riemann => Quadrature::Riemann, Trapezoid => Quadrature::Trapezoid });
arg_enum!(Spec => SwapKind {
    Variance => SwapKind::Variance,
    Third => SwapKind::Third,
    Fourth => SwapKind::Fourth,
    Skew => SwapKind::Skew,
    Kurtosis => SwapKind::Kurtosis,
    Lv => SwapKind::Lv,
    Rv => SwapKind::Rv,
    Psi => SwapKind::Psi,
    Erp => SwapKind::Erp,
});
arg_enum!(Freq => Frequency { Daily => Frequency::Daily, Weekly => Frequency::Weekly, Monthly => Frequency::Monthly });
arg_enum!(MethodArg => Method { A = "a" => Method::A, B = "b" => Method::B, C = "c" => Method::C });
arg_enum!(MeasureArg => Measure { P = "P" => Measure::P, Q = "Q" => Measure::Q });
arg_enum!(CheckArg => Check { Ap => Check::Ap, Qbias => Check::Qbias, Pbias => Check::Pbias, Variance => Check::Variance });
arg_enum!(CharArg => Characteristic {
    Variance => Characteristic::Variance,
    Third => Characteristic::Third,
    Fourth => Characteristic::Fourth,
    Rv => Characteristic::Rv,
    Lv => Characteristic::Lv,
    Psi => Characteristic::Psi,
    Cube => Characteristic::Cube,
    Erp => Characteristic::Erp,
});
arg_enum!(CentringArg => Centring { Sample => Centring::Sample, RiskNeutral => Centring::RiskNeutral });
arg_enum!(CovarianceArg => Covariance { Classical => Covariance::Classical, Hc1 => Covariance::Hc1 });
arg_enum!(ErSquareArg => ErSquare { Standardized => ErSquare::Standardized, Raw => ErSquare::Raw });

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
enum YesNo {
    Yes,
    No,
}

/// Exit status for a failure: 2 for bad input or configuration, 3 for a stage failure.
enum Failure {
    Validation(anyhow::Error),
    Stage(anyhow::Error),
}

impl From<Error> for Failure {
    fn from(e: Error) -> Self {
        match e {
            Error::Config(_) | Error::MissingStore(_) => Failure::Validation(e.into()),
            _ => Failure::Stage(e.into()),
        }
    }
}

fn validation(e: impl Into<anyhow::Error>) -> Failure {
    Failure::Validation(e.into())
}

fn load_config(cli: &Cli) -> Result<PipelineConfig, Failure> {
    let mut cfg = match &cli.config {
        Some(path) => PipelineConfig::load(path)
            .with_context(|| format!("loading {}", path.display()))
            .map_err(validation)?,
        None => PipelineConfig::default(),
    };
    if let Some(seed) = cli.seed {
        cfg.reseed(seed);
    }
    Ok(cfg)
}

fn parse_period(raw: Option<String>) -> Result<Option<(NaiveDate, NaiveDate)>, Failure> {
    let mut cfg = PipelineConfig::default();
    cfg.regress.period = raw;
    cfg.period().map_err(validation)
}

fn require_dir(path: &Path) -> Result<(), Failure> {
    if path.is_dir() {
        Ok(())
    } else {
        Err(Error::MissingStore(path.to_path_buf()).into())
    }
}

fn execute(cli: Cli) -> Result<(), Failure> {
    let cfg = load_config(&cli)?;
    match cli.command {
        Command::Ingest { input, out } => {
            for p in &input {
                if !p.is_file() {
                    return Err(validation(anyhow!("input file {} not found", p.display())));
                }
            }
            let files = pipeline::ingest_stage(&input, &cfg.columns, &cfg.filters, None, &out)?;
            info!("wrote {} quote files to {}", files.len(), out.display());
        }
        Command::Surface { quotes, out } => {
            require_dir(&quotes)?;
            let files = pipeline::surface_stage(&quotes, &cfg.surface, &out)?;
            info!("wrote {} grid files to {}", files.len(), out.display());
        }
        Command::Contracts { grids, out, quadrature } => {
            require_dir(&grids)?;
            pipeline::contracts_stage(&grids, quadrature.into(), &out)?;
        }
        Command::Swaps { panel, spec, out } => {
            require_dir(&panel)?;
            let specs: Vec<SwapKind> = if spec.is_empty() {
                cfg.series.specs.clone()
            } else {
                spec.into_iter().map(Into::into).collect()
            };
            pipeline::swaps_stage(&panel, &specs, &out)?;
        }
        Command::Series {
            panel,
            spec,
            freq,
            tau,
            method,
            out,
        } => {
            require_dir(&panel)?;
            if tau <= 0 {
                return Err(validation(anyhow!("--tau must be positive")));
            }
            let index = PanelIndex::new(&momentswap::contracts::read_panel_store(&panel)?);
            let partition = MonitoringPartition::from_calendar(&index.dates(), freq.into())?;
            let s = build_pnl_series(&index, spec.into(), &partition, tau, method.into())?;
            write_series_csv(&out, &s)?;
            info!("{}: {} points, {} gaps", s.label, s.points.len(), s.gaps.len());
        }
        Command::Simulate(args) => {
            let mut model = match &args.model {
                Some(path) => {
                    let text = std::fs::read_to_string(path)
                        .with_context(|| format!("reading {}", path.display()))
                        .map_err(validation)?;
                    toml_model(&text).map_err(validation)?
                }
                None => MarketModel::default(),
            };
            if let Some(seed) = cli.seed {
                model.seed = seed;
            }
            let characteristics = if args.characteristics.is_empty() {
                SimulateConfig::default().characteristics
            } else {
                args.characteristics.into_iter().map(Into::into).collect()
            };
            let sim = SimulateConfig {
                name: "cli".into(),
                model,
                measure: args.measure.into(),
                check: args.check.into(),
                characteristics,
                partitions: args.partitions,
                horizon_days: args.horizon_days,
                paths: args.paths,
                centring: args.centring.into(),
            };
            let mut probe = PipelineConfig {
                stages: vec![momentswap::config::Stage::Simulate],
                simulate: vec![sim.clone()],
                ..PipelineConfig::default()
            };
            probe.paths.output = args.out.parent().map(Path::to_path_buf).unwrap_or_default();
            probe.validate().map_err(validation)?;
            let rows = pipeline::run_simulation(&sim)?;
            pipeline::write_sim_rows(&args.out, &rows)?;
            for r in &rows {
                info!(
                    "{} {} n={}: {:.6e} (se {:.2e}, z {:.2})",
                    r.check, r.characteristic, r.partition, r.value, r.se, r.z
                );
            }
        }
        Command::Regress {
            pnl,
            factors,
            period,
            restricted,
            covariance,
            er_square,
            out,
        } => {
            for p in [&pnl, &factors] {
                if !p.is_file() {
                    return Err(validation(anyhow!("{} not found", p.display())));
                }
            }
            let period = parse_period(period)?;
            let options = RegressionOptions {
                covariance: covariance.into(),
                er_square: er_square.into(),
            };
            let r = pipeline::regress_one(&pnl, &factors, period, restricted == YesNo::Yes, options, &out)?;
            info!("adjusted R2 {:.4}, F {:.3} (p {:.4})", r.adjusted_r2, r.f_test.statistic, r.f_test.p_value);
        }
        Command::Report { stores, out } => {
            momentswap::report::write_report(&stores, &out)?;
        }
        Command::Run => {
            if cli.config.is_none() {
                return Err(validation(anyhow!("run requires --config")));
            }
            match pipeline::run_pipeline(&cfg) {
                Ok(entries) => info!("manifest lists {} files", entries.len()),
                Err(e @ PipelineError::Validation(_)) => return Err(Failure::Validation(e.into())),
                Err(e @ PipelineError::Stage { .. }) => return Err(Failure::Stage(e.into())),
            }
        }
        Command::Synth { out, days } => {
            let synth = SynthConfig {
                trading_days: days,
                seed: cli.seed.unwrap_or(SynthConfig::default().seed),
                ..cfg.synth.clone().unwrap_or_default()
            };
            synth.validate().map_err(validation)?;
            let quotes = momentswap::synth::SynthMarket::generate(&synth)?.quotes();
            momentswap::market_data::write_quote_store(&out.join("quotes"), &quotes)?;
            pipeline::synth_factor_stage(&synth, &out.join(pipeline::FACTOR_DIR))?;
            info!("wrote {} synthetic trading days to {}", quotes.len(), out.display());
        }
    }
    Ok(())
}

fn toml_model(text: &str) -> anyhow::Result<MarketModel> {
    let model: MarketModel = momentswap::config::from_toml(text)?;
    model.validate()?;
    Ok(model)
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    env_logger::Builder::new()
        .filter_level(cli.log_level)
        .format_timestamp(None)
        .init();
    if cli.threads > 0 {
        if let Err(e) = rayon::ThreadPoolBuilder::new().num_threads(cli.threads).build_global() {
            eprintln!("error: {e}");
            return ExitCode::from(2);
        }
    }
    match execute(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(Failure::Validation(e)) => {
            eprintln!("error: {e:#}");
            ExitCode::from(2)
        }
        Err(Failure::Stage(e)) => {
            eprintln!("error: {e:#}");
            ExitCode::from(3)
        }
    }
}
