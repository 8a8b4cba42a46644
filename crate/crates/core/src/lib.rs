//! Discretisation-invariant moment swaps built from option quotes.

pub mod black;
pub mod config;
pub mod contracts;
pub mod error;
pub mod market_data;
pub mod pipeline;
pub mod qp;
pub mod quadrature;
pub mod report;
pub mod series;
pub mod sim;
pub mod stats;
pub mod surface;
pub mod swaps;
pub mod synth;

pub use chrono::NaiveDate;
pub use error::{Error, Result};
