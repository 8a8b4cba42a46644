//! Static replication of power log contracts, the entropy-variance contract and
//! the conventional variance swap rate from a strike grid of OTM prices.
//!
//! A claim `f(F_T)` with `f` twice differentiable is replicated by a forward position
//! and a strip of OTM options weighted by `f''(k)`. For `f = (ln k)^p` that weight is
//! `gamma_p(k)`, and the forward price of the claim is
//!
//! ```text
//! X^(p) = (ln F)^p + sum_j gamma_p(k_j) q(k_j) (k_j - k_{j-1})
//! ```

use std::fs;
use std::path::{Path, PathBuf};

use chrono::NaiveDate;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::market_data::store_files;
use crate::surface::StrikeGrid;

/// Highest power priced internally; the public surface stops at 4.
pub const MAX_INTERNAL_ORDER: u32 = 6;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Quadrature {
    /// `sum_{j>=2} f(k_j) (k_j - k_{j-1})`, the rule used for the published series.
    #[default]
    Riemann,
    Trapezoid,
}

/// `d^2/dk^2 (ln k)^p` for `p` in 1..=4.
pub fn gamma_weight(p: u32, k: f64) -> Result<f64> {
    if !(1..=4).contains(&p) {
        return Err(Error::UnsupportedOrder(p));
    }
    gamma_weight_extended(p, k)
}

/// As [`gamma_weight`] but accepting orders up to [`MAX_INTERNAL_ORDER`], needed for
/// the off-diagonal terms of the fourth-moment swap's second-moment matrix.
pub fn gamma_weight_extended(p: u32, k: f64) -> Result<f64> {
    if !(1..=MAX_INTERNAL_ORDER).contains(&p) {
        return Err(Error::UnsupportedOrder(p));
    }
    let inv_k2 = 1.0 / (k * k);
    if p == 1 {
        return Ok(-inv_k2);
    }
    let l = k.ln();
    let pf = f64::from(p);
    Ok(pf * l.powi(p as i32 - 2) * inv_k2 * (pf - 1.0 - l))
}

fn integrate(grid: &StrikeGrid, rule: Quadrature, weight: impl Fn(f64) -> f64) -> Result<f64> {
    grid.validate()?;
    let f: Vec<f64> = grid
        .strikes
        .iter()
        .zip(&grid.otm_prices)
        .map(|(&k, &q)| weight(k) * q)
        .collect();
    let k = &grid.strikes;
    let total = (1..k.len())
        .map(|j| {
            let dk = k[j] - k[j - 1];
            match rule {
                Quadrature::Riemann => f[j] * dk,
                Quadrature::Trapezoid => 0.5 * (f[j] + f[j - 1]) * dk,
            }
        })
        .sum();
    Ok(total)
}

pub fn price_power_log_contract(grid: &StrikeGrid, p: u32) -> Result<f64> {
    price_power_log_contract_with(grid, p, Quadrature::Riemann)
}

pub fn price_power_log_contract_with(grid: &StrikeGrid, p: u32, rule: Quadrature) -> Result<f64> {
    gamma_weight(p, 1.0)?;
    price_power_extended(grid, p, rule)
}

fn price_power_extended(grid: &StrikeGrid, p: u32, rule: Quadrature) -> Result<f64> {
    gamma_weight_extended(p, 1.0)?;
    let x = grid.forward.ln();
    let options = integrate(grid, rule, |k| {
        gamma_weight_extended(p, k).expect("order checked above")
    })?;
    Ok(x.powi(p as i32) + options)
}

/// `E^Q[(x_T - x_t)^p]`, replicated with the shifted weight `F^-2 gamma_p(k/F)`.
pub fn price_centred_power(grid: &StrikeGrid, p: u32, rule: Quadrature) -> Result<f64> {
    gamma_weight_extended(p, 1.0)?;
    let f = grid.forward;
    integrate(grid, rule, |k| {
        gamma_weight_extended(p, k / f).expect("order checked above") / (f * f)
    })
}

/// Entropy variance `2 F^-1 sum k^-1 q dk`.
pub fn price_entropy_contract(grid: &StrikeGrid) -> Result<f64> {
    price_entropy_contract_with(grid, Quadrature::Riemann)
}

pub fn price_entropy_contract_with(grid: &StrikeGrid, rule: Quadrature) -> Result<f64> {
    Ok(2.0 / grid.forward * integrate(grid, rule, |k| 1.0 / k)?)
}

/// Conventional variance swap rate `2 sum k^-2 q dk`.
pub fn conventional_variance_rate(grid: &StrikeGrid) -> Result<f64> {
    conventional_variance_rate_with(grid, Quadrature::Riemann)
}

pub fn conventional_variance_rate_with(grid: &StrikeGrid, rule: Quadrature) -> Result<f64> {
    Ok(2.0 * integrate(grid, rule, |k| 1.0 / (k * k))?)
}

/// Contract prices for one (trade date, expiry).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ContractPanel {
    pub trade_date: NaiveDate,
    pub expiry: NaiveDate,
    pub forward: f64,
    /// `X^(1) ..= X^(6)`; entries 5 and 6 only feed second-moment matrices.
    pub powers: [f64; 6],
    pub v_eta: f64,
    pub conv_var_rate: f64,
}

/// Central moments of `x_T` under Q implied by a panel row.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ImpliedMoments {
    pub mean: f64,
    pub variance: f64,
    pub third: f64,
    pub fourth: f64,
}

impl ContractPanel {
    pub fn log_forward(&self) -> f64 {
        self.forward.ln()
    }

    /// `X^(p)`, with `X^(0) = 1`.
    pub fn power(&self, p: usize) -> f64 {
        if p == 0 {
            1.0
        } else {
            self.powers[p - 1]
        }
    }

    /// Raw moments of `x_T - x_t` recovered from the power contracts by binomial expansion.
    fn moments_about_log_forward(&self) -> [f64; 5] {
        let x = self.log_forward();
        let mut m = [1.0; 5];
        for (n, slot) in m.iter_mut().enumerate().skip(1) {
            *slot = (0..=n)
                .map(|j| binomial(n, j) * (-x).powi((n - j) as i32) * self.power(j))
                .sum();
        }
        m
    }

    pub fn implied_moments(&self) -> ImpliedMoments {
        let m = self.moments_about_log_forward();
        let mu = m[1];
        ImpliedMoments {
            mean: self.power(1),
            variance: m[2] - mu * mu,
            third: m[3] - 3.0 * mu * m[2] + 2.0 * mu.powi(3),
            fourth: m[4] - 4.0 * mu * m[3] + 6.0 * mu * mu * m[2] - 3.0 * mu.powi(4),
        }
    }

    /// Flags violations of the non-negativity invariants, allowing `tol` of rounding.
    pub fn check(&self, tol: f64) -> Vec<String> {
        let m = self.implied_moments();
        let mut issues = Vec::new();
        if m.variance < -tol {
            issues.push(format!("negative implied variance {:.3e}", m.variance));
        }
        if m.fourth < -tol {
            issues.push(format!("negative implied fourth moment {:.3e}", m.fourth));
        }
        if self.v_eta < -tol {
            issues.push(format!("negative entropy variance {:.3e}", self.v_eta));
        }
        if self.conv_var_rate < -tol {
            issues.push(format!("negative conventional rate {:.3e}", self.conv_var_rate));
        }
        issues
    }
}

pub(crate) fn binomial(n: usize, k: usize) -> f64 {
    (0..k).fold(1.0, |acc, i| acc * (n - i) as f64 / (i + 1) as f64)
}

pub fn build_panel(grid: &StrikeGrid, rule: Quadrature) -> Result<ContractPanel> {
    grid.validate()?;
    let mut powers = [0.0; 6];
    for (i, slot) in powers.iter_mut().enumerate() {
        *slot = price_power_extended(grid, i as u32 + 1, rule)?;
    }
    Ok(ContractPanel {
        trade_date: grid.trade_date,
        expiry: grid.expiry,
        forward: grid.forward,
        powers,
        v_eta: price_entropy_contract_with(grid, rule)?,
        conv_var_rate: conventional_variance_rate_with(grid, rule)?,
    })
}

/// Prices every grid in parallel, keeping input order.
pub fn build_panels(grids: &[StrikeGrid], rule: Quadrature) -> Vec<Result<ContractPanel>> {
    grids.par_iter().map(|g| build_panel(g, rule)).collect()
}

pub const PANEL_STORE_COLUMNS: [&str; 11] = [
    "trade_date",
    "expiry",
    "F",
    "X",
    "X2",
    "X3",
    "X4",
    "X5",
    "X6",
    "v_eta",
    "conv_var_rate",
];

pub fn panel_store_file(dir: &Path, date: NaiveDate) -> PathBuf {
    dir.join(format!("panel_{date}.csv"))
}

#[derive(Serialize, Deserialize)]
struct PanelRow {
    trade_date: NaiveDate,
    expiry: NaiveDate,
    #[serde(rename = "F")]
    forward: f64,
    #[serde(rename = "X")]
    x1: f64,
    #[serde(rename = "X2")]
    x2: f64,
    #[serde(rename = "X3")]
    x3: f64,
    #[serde(rename = "X4")]
    x4: f64,
    #[serde(rename = "X5")]
    x5: f64,
    #[serde(rename = "X6")]
    x6: f64,
    v_eta: f64,
    conv_var_rate: f64,
}

/// One CSV per trade date, one row per expiry.
pub fn write_panel_store(dir: &Path, panels: &[ContractPanel]) -> Result<Vec<PathBuf>> {
    fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    let mut sorted: Vec<&ContractPanel> = panels.iter().collect();
    sorted.sort_by_key(|p| (p.trade_date, p.expiry));
    let mut written = Vec::new();
    for chunk in sorted.chunk_by(|a, b| a.trade_date == b.trade_date) {
        let path = panel_store_file(dir, chunk[0].trade_date);
        let mut w = csv::Writer::from_path(&path).map_err(|e| Error::csv(&path, e))?;
        for p in chunk {
            let [x1, x2, x3, x4, x5, x6] = p.powers;
            w.serialize(PanelRow {
                trade_date: p.trade_date,
                expiry: p.expiry,
                forward: p.forward,
                x1,
                x2,
                x3,
                x4,
                x5,
                x6,
                v_eta: p.v_eta,
                conv_var_rate: p.conv_var_rate,
            })
            .map_err(|e| Error::csv(&path, e))?;
        }
        w.flush().map_err(|e| Error::io(&path, e))?;
        written.push(path);
    }
    Ok(written)
}

pub fn read_panel_store(dir: &Path) -> Result<Vec<ContractPanel>> {
    let mut panels = Vec::new();
    for path in store_files(dir, "panel_")? {
        let mut r = csv::Reader::from_path(&path).map_err(|e| Error::csv(&path, e))?;
        for row in r.deserialize::<PanelRow>() {
            let row = row.map_err(|e| Error::csv(&path, e))?;
            panels.push(ContractPanel {
                trade_date: row.trade_date,
                expiry: row.expiry,
                forward: row.forward,
                powers: [row.x1, row.x2, row.x3, row.x4, row.x5, row.x6],
                v_eta: row.v_eta,
                conv_var_rate: row.conv_var_rate,
            });
        }
    }
    panels.sort_by_key(|p| (p.trade_date, p.expiry));
    Ok(panels)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::black;
    use crate::surface::SurfaceConfig;

    fn d(s: &str) -> NaiveDate {
        NaiveDate::parse_from_str(s, "%Y-%m-%d").unwrap()
    }

    fn bs_grid(sigma: f64, days: i64, points: usize) -> StrikeGrid {
        let td = d("2024-03-01");
        let tv = sigma * (days as f64 / 365.0).sqrt();
        let cfg = SurfaceConfig {
            grid_points: points,
            ..SurfaceConfig::default()
        };
        StrikeGrid::from_otm_fn(td, td + chrono::Duration::days(days), 2000.0, sigma, &cfg, |k| {
            black::otm(2000.0, k, tv)
        })
    }

    /// Gauss-Hermite style oracle: E[g(Z)] for standard normal Z by fine Simpson quadrature.
    fn normal_expectation(g: impl Fn(f64) -> f64) -> f64 {
        let n = 20_000;
        let (a, b) = (-12.0, 12.0);
        let h = (b - a) / n as f64;
        let pdf = |z: f64| (-0.5 * z * z).exp() / (2.0 * std::f64::consts::PI).sqrt();
        (0..=n)
            .map(|i| {
                let z = a + h * i as f64;
                let w = if i == 0 || i == n { 1.0 } else if i % 2 == 1 { 4.0 } else { 2.0 };
                w * g(z) * pdf(z)
            })
            .sum::<f64>()
            * h
            / 3.0
    }

    #[test]
    fn gamma_weight_examples() {
        assert_eq!(gamma_weight(3, 1.0).unwrap(), 0.0);
        assert!(gamma_weight(2, std::f64::consts::E).unwrap().abs() < 1e-16);
        assert!((gamma_weight(1, 2.0).unwrap() + 0.25).abs() < 1e-16);
        assert!(matches!(gamma_weight(5, 1.0), Err(Error::UnsupportedOrder(5))));
        assert!(matches!(gamma_weight(0, 1.0), Err(Error::UnsupportedOrder(0))));
        assert!(gamma_weight_extended(6, 3.0).is_ok());
    }

    #[test]
    fn gamma_weight_is_second_derivative() {
        for p in 1..=6u32 {
            for &k in &[0.3, 1.7, 2000.0] {
                let f = |k: f64| k.ln().powi(p as i32);
                let h = 1e-4 * k;
                let fd = (f(k + h) - 2.0 * f(k) + f(k - h)) / (h * h);
                let g = gamma_weight_extended(p, k).unwrap();
                assert!((fd - g).abs() <= 1e-5 * g.abs().max(1.0 / (k * k)), "p={p} k={k}");
            }
        }
    }

    #[test]
    fn black_scholes_moments() {
        let (sigma, days) = (0.2, 30);
        let g = bs_grid(sigma, days, 2000);
        let v = sigma * sigma * days as f64 / 365.0;
        let x = 2000.0_f64.ln() - v / 2.0;
        let x1 = price_power_log_contract(&g, 1).unwrap();
        let x2 = price_power_log_contract(&g, 2).unwrap();
        assert!((x1 - x).abs() < 1e-4);
        assert!((x2 - (x * x + v)).abs() < 1e-4);
        assert!((conventional_variance_rate(&g).unwrap() - 0.003288).abs() < 1e-5);
        let oracle = 2.0
            * normal_expectation(|z| {
                let y = -v / 2.0 + v.sqrt() * z;
                y * y.exp() - y.exp() + 1.0
            });
        assert!((price_entropy_contract(&g).unwrap() - oracle).abs() < 1e-4);
    }

    #[test]
    fn zero_volatility_grid_prices_powers_of_log_forward() {
        let mut g = bs_grid(0.2, 30, 200);
        g.otm_prices.iter_mut().for_each(|q| *q = 0.0);
        for p in 1..=4 {
            assert_eq!(price_power_log_contract(&g, p).unwrap(), 2000.0_f64.ln().powi(p as i32));
        }
        assert_eq!(price_entropy_contract(&g).unwrap(), 0.0);
        assert_eq!(conventional_variance_rate(&g).unwrap(), 0.0);
    }

    #[test]
    fn linearity_and_truncation() {
        let g = bs_grid(0.3, 60, 500);
        let mut doubled = g.clone();
        doubled.otm_prices.iter_mut().for_each(|q| *q *= 2.0);
        let v = price_entropy_contract(&g).unwrap();
        assert!((price_entropy_contract(&doubled).unwrap() - 2.0 * v).abs() < 1e-15);
        let x = 2000.0_f64.ln();
        let a = price_power_log_contract(&g, 3).unwrap() - x.powi(3);
        let b = price_power_log_contract(&doubled, 3).unwrap() - x.powi(3);
        assert!((b - 2.0 * a).abs() < 1e-10 * a.abs());

        let half = g.len() / 2;
        let upper = StrikeGrid {
            strikes: g.strikes[half..].to_vec(),
            otm_prices: g.otm_prices[half..].to_vec(),
            ..g.clone()
        };
        assert!(conventional_variance_rate(&upper).unwrap() < conventional_variance_rate(&g).unwrap());
    }

    #[test]
    fn refuses_invalid_grid() {
        let mut g = bs_grid(0.2, 30, 50);
        g.otm_prices[3] = -1.0;
        assert!(matches!(price_power_log_contract(&g, 1), Err(Error::InvalidGrid(_))));
        assert!(matches!(conventional_variance_rate(&g), Err(Error::InvalidGrid(_))));
    }

    #[test]
    fn panel_moments_match_gaussian_and_centred_replication() {
        let g = bs_grid(0.4, 180, 2000);
        let p = build_panel(&g, Quadrature::Riemann).unwrap();
        let v = 0.16 * 180.0 / 365.0;
        let m = p.implied_moments();
        assert!((m.variance - v).abs() < 1e-4);
        assert!(m.third.abs() < 1e-5);
        assert!((m.fourth - 3.0 * v * v).abs() < 1e-6, "{}", m.fourth - 3.0 * v * v);
        let c2 = price_centred_power(&g, 2, Quadrature::Riemann).unwrap();
        let c1 = price_centred_power(&g, 1, Quadrature::Riemann).unwrap();
        assert!(((c2 - c1 * c1) - m.variance).abs() < 1e-10);
        assert!(p.check(1e-12).is_empty());
    }

    #[test]
    fn quadrature_converges() {
        let coarse = bs_grid(0.2, 90, 2000);
        let fine = bs_grid(0.2, 90, 4000);
        for p in 1..=4 {
            let a = price_power_log_contract(&coarse, p).unwrap();
            let b = price_power_log_contract(&fine, p).unwrap();
            assert!((a - b).abs() < 1e-5 * b.abs(), "p={p}");
        }
        let a = price_entropy_contract(&coarse).unwrap();
        let b = price_entropy_contract(&fine).unwrap();
        assert!((a - b).abs() < 1e-5 * b);
        let t = conventional_variance_rate_with(&fine, Quadrature::Trapezoid).unwrap();
        assert!((t - conventional_variance_rate(&fine).unwrap()).abs() < 1e-8);
    }

    #[test]
    fn panel_store_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let panels: Vec<ContractPanel> = [30, 60]
            .iter()
            .map(|&days| build_panel(&bs_grid(0.2, days, 300), Quadrature::Riemann).unwrap())
            .collect();
        let files = write_panel_store(dir.path(), &panels).unwrap();
        assert_eq!(files.len(), 1);
        let header = fs::read_to_string(&files[0]).unwrap();
        assert!(header.starts_with(&PANEL_STORE_COLUMNS.join(",")));
        assert_eq!(read_panel_store(dir.path()).unwrap(), panels);
    }

    proptest::proptest! {
        #[test]
        fn replication_is_linear_in_prices(scale in 0.0f64..5.0, p in 1u32..=4) {
            let g = bs_grid(0.25, 45, 200);
            let mut s = g.clone();
            s.otm_prices.iter_mut().for_each(|q| *q *= scale);
            let x = 2000.0_f64.ln().powi(p as i32);
            let base = price_power_log_contract(&g, p).unwrap() - x;
            let scaled = price_power_log_contract(&s, p).unwrap() - x;
            proptest::prop_assert!((scaled - scale * base).abs() <= 1e-9 * base.abs().max(1e-12));
        }
    }
}
