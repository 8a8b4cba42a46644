use std::path::PathBuf;

use chrono::NaiveDate;
use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("{path}:{line}: {message}")]
    Row {
        path: PathBuf,
        line: u64,
        message: String,
    },

    #[error("dataset error: {0}")]
    Dataset(String),

    #[error("duplicate quote on {trade_date}: expiry {expiry}, strike {strike}, {side}")]
    DuplicateQuote {
        trade_date: NaiveDate,
        expiry: NaiveDate,
        strike: f64,
        side: String,
    },

    #[error("forward unavailable for expiry {expiry}: no strike carries both a put and a call")]
    ForwardUnavailable { expiry: NaiveDate },

    #[error("OTM curve unavailable for expiry {expiry}: {points} usable points, need at least 3")]
    CurveUnavailable { expiry: NaiveDate, points: usize },

    #[error("surface fit failed for expiry {expiry}: {constraint}")]
    SurfaceFit { expiry: NaiveDate, constraint: String },

    #[error("invalid strike grid: {0}")]
    InvalidGrid(String),

    #[error("unsupported power order {0}; supported orders are 1..=4")]
    UnsupportedOrder(u32),

    #[error("dimension mismatch: {0}")]
    Dimension(String),

    #[error("non-positive implied variance {0}")]
    NonPositiveVariance(f64),

    #[error("maturity t+tau = {target} is not bracketed by [{lower}, {upper}]")]
    Bracketing {
        target: NaiveDate,
        lower: NaiveDate,
        upper: NaiveDate,
    },

    #[error("insufficient data: {0}")]
    Insufficient(String),

    #[error("zero variance in {0}")]
    ZeroVariance(String),

    #[error("collinear design (condition number {condition:.3e}); offending columns: {columns:?}")]
    Collinear { condition: f64, columns: Vec<String> },

    #[error("invalid model: {0}")]
    Model(String),

    #[error("invalid configuration: {0}")]
    Config(String),

    #[error("missing store: {0}")]
    MissingStore(PathBuf),

    #[error("io error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("csv error on {path}: {source}")]
    Csv {
        path: PathBuf,
        #[source]
        source: csv::Error,
    },
}

impl Error {
    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }

    pub(crate) fn csv(path: impl Into<PathBuf>, source: csv::Error) -> Self {
        Error::Csv {
            path: path.into(),
            source,
        }
    }
}
