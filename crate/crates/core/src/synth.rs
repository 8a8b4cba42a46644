//! Synthetic option markets with a sloped implied-volatility term structure.
//!
//! A single forward follows a lognormal path under P on weekday trading dates.
//! Expiries are listed every `expiry_spacing_days` calendar days. Each expiry's ATM
//! implied volatility depends on its time to expiry, so a fixed-expiry swap rolls
//! down the term structure as time passes. Panels carry exact lognormal contract
//! prices. Quotes add a linear smile in log-moneyness for the full pipeline.

use chrono::{Datelike, Duration, NaiveDate, Weekday};
use rand::{RngExt, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::black;
use crate::contracts::ContractPanel;
use crate::error::{Error, Result};
use crate::market_data::{year_fraction, OptionQuote, QuoteSet, Side};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SynthConfig {
    pub start: NaiveDate,
    pub trading_days: usize,
    pub initial_forward: f64,
    pub realised_vol: f64,
    pub p_drift: f64,
    /// ATM implied vol as time to expiry goes to zero.
    pub vol_short: f64,
    /// ATM implied vol for long expiries.
    pub vol_long: f64,
    pub term_decay_days: f64,
    /// Change of implied vol per unit log-moneyness (negative for a put skew).
    pub smile_slope: f64,
    pub expiry_spacing_days: i64,
    pub max_expiry_days: i64,
    pub min_expiry_days: i64,
    pub strike_step: f64,
    pub seed: u64,
}

impl Default for SynthConfig {
    fn default() -> Self {
        Self {
            start: NaiveDate::from_ymd_opt(2020, 1, 2).expect("valid date"),
            trading_days: 260,
            initial_forward: 2000.0,
            realised_vol: 0.16,
            p_drift: 0.06,
            vol_short: 0.15,
            vol_long: 0.24,
            term_decay_days: 90.0,
            smile_slope: -0.15,
            expiry_spacing_days: 7,
            max_expiry_days: 120,
            min_expiry_days: 1,
            strike_step: 10.0,
            seed: 7,
        }
    }
}

impl SynthConfig {
    pub fn validate(&self) -> Result<()> {
        let positive = [
            self.initial_forward,
            self.realised_vol,
            self.vol_short,
            self.vol_long,
            self.term_decay_days,
            self.strike_step,
        ];
        if positive.iter().any(|v| !(v.is_finite() && *v > 0.0)) {
            return Err(Error::Config("synthetic market parameters must be positive".into()));
        }
        if self.trading_days < 2 || self.expiry_spacing_days < 1 || self.max_expiry_days <= self.min_expiry_days {
            return Err(Error::Config("synthetic calendar is degenerate".into()));
        }
        Ok(())
    }

    /// ATM implied vol for `days` to expiry.
    pub fn atm_vol(&self, days: f64) -> f64 {
        self.vol_long + (self.vol_short - self.vol_long) * (-days / self.term_decay_days).exp()
    }

    pub fn smile_vol(&self, days: f64, forward: f64, strike: f64) -> f64 {
        (self.atm_vol(days) + self.smile_slope * (strike / forward).ln()).max(0.02)
    }
}

/// Weekday trading dates starting at `start`.
pub fn trading_dates(start: NaiveDate, count: usize) -> Vec<NaiveDate> {
    let mut out = Vec::with_capacity(count);
    let mut d = start;
    while out.len() < count {
        if !matches!(d.weekday(), Weekday::Sat | Weekday::Sun) {
            out.push(d);
        }
        d += Duration::days(1);
    }
    out
}

/// Trading dates with the forward on each.
#[derive(Debug, Clone, PartialEq)]
pub struct SynthMarket {
    pub config: SynthConfig,
    pub dates: Vec<NaiveDate>,
    pub forwards: Vec<f64>,
}

impl SynthMarket {
    pub fn generate(config: &SynthConfig) -> Result<Self> {
        config.validate()?;
        let dates = trading_dates(config.start, config.trading_days);
        let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
        let mut x = config.initial_forward.ln();
        let mut forwards = vec![config.initial_forward];
        for w in dates.windows(2) {
            let dt = year_fraction(w[0], w[1]);
            let z: f64 = StandardNormal.sample(&mut rng);
            let s = config.realised_vol;
            x += (config.p_drift - 0.5 * s * s) * dt + s * dt.sqrt() * z;
            forwards.push(x.exp());
        }
        Ok(Self {
            config: config.clone(),
            dates,
            forwards,
        })
    }

    /// Expiries listed on `date`.
    pub fn expiries(&self, date: NaiveDate) -> Vec<NaiveDate> {
        let c = &self.config;
        let first = c.start + Duration::days(c.expiry_spacing_days / 2);
        let mut out = Vec::new();
        let mut e = first;
        while (e - date).num_days() <= c.max_expiry_days {
            let days = (e - date).num_days();
            if days >= c.min_expiry_days {
                out.push(e);
            }
            e += Duration::days(c.expiry_spacing_days);
        }
        out
    }

    /// Exact lognormal contract prices at each (date, expiry), ATM term structure only.
    pub fn panels(&self) -> Vec<ContractPanel> {
        let mut out = Vec::new();
        for (&date, &f) in self.dates.iter().zip(&self.forwards) {
            for expiry in self.expiries(date) {
                let days = (expiry - date).num_days() as f64;
                let w = self.config.atm_vol(days).powi(2) * days / 365.0;
                out.push(lognormal_panel(date, expiry, f, w));
            }
        }
        out
    }

    /// Option quotes with a linear smile, on a fixed strike ladder.
    pub fn quotes(&self) -> Vec<QuoteSet> {
        let c = &self.config;
        let mut rng = ChaCha8Rng::seed_from_u64(c.seed ^ 0x5eed);
        let mut sets = Vec::new();
        for (&date, &f) in self.dates.iter().zip(&self.forwards) {
            let mut set = QuoteSet::new(date);
            for expiry in self.expiries(date) {
                let days = (expiry - date).num_days() as f64;
                let tau = days / 365.0;
                let width = 3.0 * c.atm_vol(days) * tau.sqrt();
                let lo = (f * (-width).exp() / c.strike_step).ceil() as i64;
                let hi = (f * width.exp() / c.strike_step).floor() as i64;
                for i in lo..=hi {
                    let k = i as f64 * c.strike_step;
                    let vol = c.smile_vol(days, f, k);
                    let tv = vol * tau.sqrt();
                    for side in [Side::Put, Side::Call] {
                        let mid = match side {
                            Side::Put => black::put(f, k, tv),
                            Side::Call => black::call(f, k, tv),
                        };
                        let quote = OptionQuote {
                            trade_date: date,
                            expiry,
                            strike: k,
                            side,
                            mid,
                            volume: rng.random_range(1..500),
                            implied_vol: vol,
                        };
                        set.insert(quote).expect("synthetic ladder has unique strikes");
                    }
                }
            }
            sets.push(set);
        }
        sets
    }
}

/// Contract prices of a lognormal forward with total implied variance `w`.
pub fn lognormal_panel(trade_date: NaiveDate, expiry: NaiveDate, forward: f64, w: f64) -> ContractPanel {
    let mean = forward.ln() - 0.5 * w;
    let mut m = [1.0, mean, 0.0, 0.0, 0.0, 0.0, 0.0];
    for n in 2..7 {
        m[n] = mean * m[n - 1] + (n - 1) as f64 * w * m[n - 2];
    }
    ContractPanel {
        trade_date,
        expiry,
        forward,
        powers: [m[1], m[2], m[3], m[4], m[5], m[6]],
        v_eta: w,
        conv_var_rate: w,
    }
}

/// Daily factor returns in the research-file layout (percent units), with the
/// market factor taken from the synthetic forward.
pub fn factor_rows(market: &SynthMarket, seed: u64) -> Vec<(NaiveDate, [f64; 5])> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut rows = Vec::with_capacity(market.dates.len());
    for i in 1..market.dates.len() {
        let mkt = 100.0 * (market.forwards[i] / market.forwards[i - 1] - 1.0);
        let mut draw = |s: f64| -> f64 {
            let z: f64 = StandardNormal.sample(&mut rng);
            s * z
        };
        let smb = draw(0.5);
        let hml = draw(0.5);
        let mom = draw(0.7);
        rows.push((market.dates[i], [mkt, smb, hml, mom, 0.0]));
    }
    rows
}
