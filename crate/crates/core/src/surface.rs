//! Arbitrage-free smoothing of OTM option prices onto a dense strike grid.
//!
//! Each maturity is fitted as a cubic smoothing spline on call-equivalent prices
//! `C(k) = q(k) + (F - k)+`. The spline is written as
//!
//! ```text
//! C(u) = a + b u + sum_i gamma_i Phi_i(u),   u = (k - k_min) / (k_max - k_min)
//! ```
//!
//! where `Phi_i` is the double integral of the i-th hat function on the knots.
//! `C''` is then the piecewise-linear interpolant of the `gamma_i`, so `gamma >= 0`
//! makes the curve convex everywhere, not only at the knots. Slope bounds
//! `-1 <= C' <= 0` and the price band `(F - k)+ <= C <= F` are imposed as linear
//! constraints of a quadratic program. Outside the quoted range the implied
//! volatility is held flat at the nearest quoted strike.
//!
//! Within a trade date the maturities are then repaired in expiry order so that
//! normalised call prices `C(mF)/F` never decrease with maturity.

use std::cmp::Ordering;
use std::fs;
use std::path::{Path, PathBuf};

use chrono::NaiveDate;
use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::black;
use crate::error::{Error, Result};
use crate::market_data::{store_files, year_fraction, RawOtmCurve};
use crate::qp::{QpError, QpProblem};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum RangeMode {
    /// `[F e^{-n s}, F e^{+n s}]`
    Multiplicative,
    /// `[F (1 - n s), F (1 + n s)]`, clipped above zero.
    Arithmetic,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SurfaceConfig {
    pub grid_points: usize,
    pub sigma_range: f64,
    pub range_mode: RangeMode,
    /// Scale the range volatility by sqrt(tau).
    pub maturity_scaled: bool,
    /// Roughness weight relative to the number of quotes.
    pub smoothing: f64,
    /// Knots beyond this count are thinned; all quotes still enter the fit.
    pub max_knots: usize,
    pub tolerance: f64,
}

impl Default for SurfaceConfig {
    fn default() -> Self {
        Self {
            grid_points: 2000,
            sigma_range: 6.0,
            range_mode: RangeMode::Multiplicative,
            maturity_scaled: true,
            smoothing: 1e-9,
            max_knots: 120,
            tolerance: 1e-10,
        }
    }
}

/// One maturity's OTM prices on an equally spaced strike grid.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StrikeGrid {
    pub trade_date: NaiveDate,
    pub expiry: NaiveDate,
    pub forward: f64,
    pub avg_implied_vol: f64,
    pub strikes: Vec<f64>,
    pub otm_prices: Vec<f64>,
}

impl StrikeGrid {
    pub fn tau(&self) -> f64 {
        year_fraction(self.trade_date, self.expiry)
    }

    pub fn len(&self) -> usize {
        self.strikes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.strikes.is_empty()
    }

    /// Builds a grid by sampling an OTM price function on the configured strike range.
    pub fn from_otm_fn(
        trade_date: NaiveDate,
        expiry: NaiveDate,
        forward: f64,
        avg_implied_vol: f64,
        cfg: &SurfaceConfig,
        price: impl Fn(f64) -> f64,
    ) -> Self {
        let tau = year_fraction(trade_date, expiry);
        let strikes = grid_strikes(forward, avg_implied_vol, tau, cfg);
        let otm_prices = strikes.iter().map(|&k| price(k)).collect();
        Self {
            trade_date,
            expiry,
            forward,
            avg_implied_vol,
            strikes,
            otm_prices,
        }
    }

    /// Put-call-parity call prices `q(k) + (F - k)+`.
    pub fn call_prices(&self) -> Vec<f64> {
        self.strikes
            .iter()
            .zip(&self.otm_prices)
            .map(|(&k, &q)| q + (self.forward - k).max(0.0))
            .collect()
    }

    /// Structural checks required before replication.
    pub fn validate(&self) -> Result<()> {
        if !(self.forward.is_finite() && self.forward > 0.0) {
            return Err(Error::InvalidGrid(format!("forward {} not positive", self.forward)));
        }
        if self.strikes.len() < 2 || self.strikes.len() != self.otm_prices.len() {
            return Err(Error::InvalidGrid(format!(
                "{} strikes vs {} prices",
                self.strikes.len(),
                self.otm_prices.len()
            )));
        }
        if self.strikes[0] <= 0.0 || !self.strikes.windows(2).all(|w| w[1] > w[0]) {
            return Err(Error::InvalidGrid("strikes must be positive and increasing".into()));
        }
        let span = self.strikes[self.strikes.len() - 1] - self.strikes[0];
        let step = span / (self.strikes.len() - 1) as f64;
        let uneven = self
            .strikes
            .windows(2)
            .any(|w| ((w[1] - w[0]) - step).abs() > 1e-9 * span.max(1.0));
        if uneven {
            return Err(Error::InvalidGrid("strikes are not equally spaced".into()));
        }
        if let Some(p) = self.otm_prices.iter().find(|p| !(p.is_finite() && **p >= 0.0)) {
            return Err(Error::InvalidGrid(format!("negative or non-finite price {p}")));
        }
        Ok(())
    }
}

/// The equally spaced strikes spanning the configured sigma range around the forward.
pub fn grid_strikes(forward: f64, sigma: f64, tau: f64, cfg: &SurfaceConfig) -> Vec<f64> {
    let width = cfg.sigma_range * sigma * if cfg.maturity_scaled { tau.sqrt() } else { 1.0 };
    let (lo, hi) = match cfg.range_mode {
        RangeMode::Multiplicative => (forward * (-width).exp(), forward * width.exp()),
        RangeMode::Arithmetic => ((forward * (1.0 - width)).max(forward * 1e-6), forward * (1.0 + width)),
    };
    let n = cfg.grid_points.max(2);
    let step = (hi - lo) / (n - 1) as f64;
    (0..n)
        .map(|j| if j == n - 1 { hi } else { lo + step * j as f64 })
        .collect()
}

/// A fitted maturity: spline inside the quoted range, flat-vol Black wings outside.
#[derive(Debug, Clone, PartialEq)]
pub struct FittedSlice {
    pub trade_date: NaiveDate,
    pub expiry: NaiveDate,
    pub forward: f64,
    pub avg_implied_vol: f64,
    origin: f64,
    length: f64,
    knots: Vec<f64>,
    intercept: f64,
    slope: f64,
    gamma: Vec<f64>,
    left_total_vol: f64,
    right_total_vol: f64,
}

impl FittedSlice {
    pub fn strike_range(&self) -> (f64, f64) {
        (self.origin, self.origin + self.length)
    }

    pub fn call_price(&self, strike: f64) -> f64 {
        let (lo, hi) = self.strike_range();
        if strike < lo {
            black::call(self.forward, strike, self.left_total_vol)
        } else if strike > hi {
            black::call(self.forward, strike, self.right_total_vol)
        } else {
            self.length * self.spline((strike - self.origin) / self.length)
        }
    }

    pub fn otm_price(&self, strike: f64) -> f64 {
        (self.call_price(strike) - (self.forward - strike).max(0.0)).max(0.0)
    }

    fn spline(&self, u: f64) -> f64 {
        let basis = SplineBasis::new(&self.knots);
        self.intercept
            + self.slope * u
            + self
                .gamma
                .iter()
                .enumerate()
                .map(|(i, g)| g * basis.phi(i, u))
                .sum::<f64>()
    }

    fn wing_total_vol(&self, strike: f64) -> f64 {
        if strike < self.origin {
            self.left_total_vol
        } else {
            self.right_total_vol
        }
    }
}

/// Double integrals of hat functions on normalised knots `0 = u_0 < ... < u_{n-1} = 1`.
struct SplineBasis<'a> {
    knots: &'a [f64],
}

fn cube(x: f64) -> f64 {
    if x > 0.0 {
        x * x * x / 6.0
    } else {
        0.0
    }
}

fn square(x: f64) -> f64 {
    if x > 0.0 {
        x * x / 2.0
    } else {
        0.0
    }
}

impl<'a> SplineBasis<'a> {
    fn new(knots: &'a [f64]) -> Self {
        Self { knots }
    }

    fn len(&self) -> usize {
        self.knots.len()
    }

    fn ramp_pair(&self, f: fn(f64) -> f64, u: f64, from: usize, to: usize) -> f64 {
        let (l, r) = (self.knots[from], self.knots[to]);
        (f(u - l) - f(u - r)) / (r - l)
    }

    fn phi(&self, i: usize, u: f64) -> f64 {
        self.eval(i, u, cube, |d| 0.5 * d * d)
    }

    fn phi_slope(&self, i: usize, u: f64) -> f64 {
        self.eval(i, u, square, |d| d)
    }

    fn eval(&self, i: usize, u: f64, ramp: fn(f64) -> f64, step: impl Fn(f64) -> f64) -> f64 {
        let n = self.len();
        let rising = if i > 0 { self.ramp_pair(ramp, u, i - 1, i) } else { 0.0 };
        let falling = if i + 1 < n { self.ramp_pair(ramp, u, i, i + 1) } else { 0.0 };
        if i == 0 {
            let d = (u - self.knots[0]).max(0.0);
            step(d) - falling
        } else {
            rising - falling
        }
    }

    /// Gram matrix of the hat functions: integral of gamma(u)^2 is g' M g.
    fn mass(&self) -> DMatrix<f64> {
        let n = self.len();
        let mut m = DMatrix::zeros(n, n);
        for i in 0..n - 1 {
            let h = self.knots[i + 1] - self.knots[i];
            m[(i, i)] += h / 3.0;
            m[(i + 1, i + 1)] += h / 3.0;
            m[(i, i + 1)] += h / 6.0;
            m[(i + 1, i)] += h / 6.0;
        }
        m
    }
}

fn choose_knots(strikes: &[f64], max_knots: usize) -> Vec<f64> {
    let n = strikes.len();
    if n <= max_knots.max(3) {
        return strikes.to_vec();
    }
    let m = max_knots.max(3);
    (0..m)
        .map(|j| strikes[(j * (n - 1) + (m - 1) / 2) / (m - 1)])
        .collect::<Vec<_>>()
        .into_iter()
        .fold(Vec::new(), |mut acc, k| {
            if acc.last() != Some(&k) {
                acc.push(k);
            }
            acc
        })
}

const CONSTRAINT_NAMES: [&str; 5] = [
    "left slope >= -1 (vertical spread)",
    "right slope <= 0 (vertical spread)",
    "left price >= intrinsic",
    "right price >= 0",
    "left price <= forward",
];

/// Fits one maturity's raw OTM curve.
pub fn fit_slice(curve: &RawOtmCurve, cfg: &SurfaceConfig) -> Result<FittedSlice> {
    let fail = |constraint: String| Error::SurfaceFit {
        expiry: curve.expiry,
        constraint,
    };
    let forward = curve.forward;
    if !(forward.is_finite() && forward > 0.0) {
        return Err(fail(format!("forward {forward} must be positive")));
    }
    if curve.points.len() < 3 {
        return Err(fail(format!("{} quotes, need 3", curve.points.len())));
    }
    let strikes: Vec<f64> = curve.strikes().collect();
    let origin = strikes[0];
    let length = strikes[strikes.len() - 1] - origin;
    let norm = |k: f64| (k - origin) / length;

    let knots: Vec<f64> = choose_knots(&strikes, cfg.max_knots)
        .into_iter()
        .map(norm)
        .collect();
    let basis = SplineBasis::new(&knots);
    let nk = basis.len();
    let nv = nk + 2;

    let design = DMatrix::from_fn(strikes.len(), nv, |r, c| {
        let u = norm(strikes[r]);
        match c {
            0 => 1.0,
            1 => u,
            _ => basis.phi(c - 2, u),
        }
    });
    let target = DVector::from_iterator(
        strikes.len(),
        curve
            .points
            .iter()
            .map(|&(k, q)| (q + (forward - k).max(0.0)) / length),
    );

    let lambda = cfg.smoothing * strikes.len() as f64;
    let mut hessian = 2.0 * design.transpose() * &design;
    let mass = basis.mass();
    hessian
        .view_mut((2, 2), (nk, nk))
        .zip_apply(&mass, |h, m| *h += 2.0 * lambda * m);
    let ridge = 1e-12 * hessian.diagonal().amax().max(1.0);
    for i in 0..nv {
        hessian[(i, i)] += ridge;
    }
    let linear = -2.0 * design.transpose() * &target;

    let general = CONSTRAINT_NAMES.len();
    let mut a = DMatrix::zeros(general + nk, nv);
    let mut b = DVector::zeros(general + nk);
    // b >= -1
    a[(0, 1)] = 1.0;
    b[0] = -1.0;
    // -(b + sum gamma_i phi_i'(1)) >= 0
    a[(1, 1)] = -1.0;
    for i in 0..nk {
        a[(1, 2 + i)] = -basis.phi_slope(i, 1.0);
    }
    // a >= (F - k0)+ / L
    a[(2, 0)] = 1.0;
    b[2] = (forward - origin).max(0.0) / length;
    // C(1) >= (F - k_max)+ / L
    a[(3, 0)] = 1.0;
    a[(3, 1)] = 1.0;
    for i in 0..nk {
        a[(3, 2 + i)] = basis.phi(i, 1.0);
    }
    b[3] = (forward - (origin + length)).max(0.0) / length;
    // -a >= -F / L
    a[(4, 0)] = -1.0;
    b[4] = -forward / length;
    for i in 0..nk {
        a[(general + i, 2 + i)] = 1.0;
    }

    let mut start = DVector::zeros(nv);
    start[0] = forward / length;
    let problem = QpProblem {
        hessian,
        linear,
        constraints: a,
        bounds: b,
    };
    let solution = problem.solve(start).map_err(|e| match e {
        QpError::Infeasible { constraint, violation } => fail(format!(
            "{} violated by {violation:.3e}",
            CONSTRAINT_NAMES
                .get(constraint)
                .copied()
                .unwrap_or("convexity (gamma >= 0)")
        )),
        QpError::Singular => fail("singular KKT system".into()),
        QpError::IterationLimit => fail("active-set iteration limit".into()),
    })?;
    let x = solution.x;
    let gamma: Vec<f64> = x.rows(2, nk).iter().map(|g| g.max(0.0)).collect();

    let mut slice = FittedSlice {
        trade_date: curve.trade_date,
        expiry: curve.expiry,
        forward,
        avg_implied_vol: curve.avg_implied_vol,
        origin,
        length,
        knots,
        intercept: x[0],
        slope: x[1],
        gamma,
        left_total_vol: 0.0,
        right_total_vol: 0.0,
    };
    let (lo, hi) = slice.strike_range();
    slice.left_total_vol = black::implied_total_vol(forward, lo, slice.call_price(lo)).unwrap_or(0.0);
    slice.right_total_vol = black::implied_total_vol(forward, hi, slice.call_price(hi)).unwrap_or(0.0);
    Ok(slice)
}

/// Greatest convex minorant of `(x_j, y_j)` evaluated back at every `x_j`.
fn lower_convex_envelope(x: &[f64], y: &[f64]) -> Vec<f64> {
    let mut hull: Vec<usize> = Vec::with_capacity(x.len());
    for j in 0..x.len() {
        while hull.len() >= 2 {
            let (p, q) = (hull[hull.len() - 2], hull[hull.len() - 1]);
            // keep q only if it lies strictly below the chord p -> j
            let cross = (x[q] - x[p]) * (y[j] - y[p]) - (y[q] - y[p]) * (x[j] - x[p]);
            if cross <= 0.0 {
                hull.pop();
            } else {
                break;
            }
        }
        hull.push(j);
    }
    let mut out = Vec::with_capacity(x.len());
    let mut seg = 0;
    for j in 0..x.len() {
        while seg + 1 < hull.len() && hull[seg + 1] < j {
            seg += 1;
        }
        if hull[seg] == j || seg + 1 == hull.len() {
            out.push(y[j]);
            continue;
        }
        let (p, q) = (hull[seg], hull[seg + 1]);
        if q == j {
            out.push(y[j]);
        } else {
            let w = (x[j] - x[p]) / (x[q] - x[p]);
            out.push(y[p] + w * (y[q] - y[p]));
        }
    }
    out
}

/// Normalised call price `C(mF)/F` read off a grid, by linear interpolation.
/// `None` outside the grid's moneyness range.
fn normalised_call_on_grid(grid: &StrikeGrid, calls: &[f64], moneyness: f64) -> Option<f64> {
    let k = moneyness * grid.forward;
    let (first, last) = (grid.strikes[0], grid.strikes[grid.len() - 1]);
    if k < first || k > last {
        return None;
    }
    let step = (last - first) / (grid.len() - 1) as f64;
    let j = (((k - first) / step).floor() as usize).min(grid.len() - 2);
    let w = ((k - grid.strikes[j]) / (grid.strikes[j + 1] - grid.strikes[j])).clamp(0.0, 1.0);
    Some((calls[j] + w * (calls[j + 1] - calls[j])) / grid.forward)
}

fn sample_slice(slice: &FittedSlice, cfg: &SurfaceConfig) -> (StrikeGrid, Vec<f64>) {
    let tau = year_fraction(slice.trade_date, slice.expiry);
    let strikes = grid_strikes(slice.forward, slice.avg_implied_vol, tau, cfg);
    let raw: Vec<f64> = strikes.iter().map(|&k| slice.call_price(k)).collect();
    let calls: Vec<f64> = lower_convex_envelope(&strikes, &raw)
        .into_iter()
        .zip(&strikes)
        .map(|(c, &k)| c.max((slice.forward - k).max(0.0)))
        .collect();
    let grid = StrikeGrid {
        trade_date: slice.trade_date,
        expiry: slice.expiry,
        forward: slice.forward,
        avg_implied_vol: slice.avg_implied_vol,
        otm_prices: otm_from_calls(slice.forward, &strikes, &calls),
        strikes,
    };
    (grid, calls)
}

fn otm_from_calls(forward: f64, strikes: &[f64], calls: &[f64]) -> Vec<f64> {
    strikes
        .iter()
        .zip(calls)
        .map(|(&k, &c)| c - (forward - k).max(0.0))
        .collect()
}

/// Fits every maturity of one trade date and returns grids sorted by expiry.
pub fn fit_surface(curves: &[RawOtmCurve], cfg: &SurfaceConfig) -> Result<Vec<StrikeGrid>> {
    Ok(fit_surface_slices(curves, cfg)?.0)
}

/// Like [`fit_surface`], also returning the fitted slice functions.
pub fn fit_surface_slices(
    curves: &[RawOtmCurve],
    cfg: &SurfaceConfig,
) -> Result<(Vec<StrikeGrid>, Vec<FittedSlice>)> {
    if curves.is_empty() {
        return Err(Error::Insufficient("no OTM curves to fit".into()));
    }
    if let Some(c) = curves.iter().find(|c| c.trade_date != curves[0].trade_date) {
        return Err(Error::Dataset(format!(
            "fit_surface expects one trade date, got {} and {}",
            curves[0].trade_date, c.trade_date
        )));
    }
    let mut slices = curves
        .iter()
        .map(|c| fit_slice(c, cfg))
        .collect::<Result<Vec<_>>>()?;
    slices.sort_by_key(|s| s.expiry);

    let mut grids: Vec<StrikeGrid> = Vec::with_capacity(slices.len());
    let mut previous: Option<(StrikeGrid, Vec<f64>, &FittedSlice)> = None;
    for slice in &slices {
        let (mut grid, mut calls) = sample_slice(slice, cfg);
        if let Some((prev_grid, prev_calls, prev_slice)) = &previous {
            for (j, &k) in grid.strikes.iter().enumerate() {
                let m = k / grid.forward;
                let floor = normalised_call_on_grid(prev_grid, prev_calls, m).unwrap_or_else(|| {
                    let kp = m * prev_slice.forward;
                    black::call(prev_slice.forward, kp, prev_slice.wing_total_vol(kp))
                        / prev_slice.forward
                }) * grid.forward;
                if floor > calls[j] {
                    calls[j] = floor;
                }
            }
            grid.otm_prices = otm_from_calls(grid.forward, &grid.strikes, &calls);
        }
        grids.push(grid.clone());
        previous = Some((grid, calls, slice));
    }
    Ok((grids, slices))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Violation {
    pub trade_date: NaiveDate,
    pub expiry: NaiveDate,
    pub strike: f64,
    pub value: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ArbitrageReport {
    pub tolerance: f64,
    /// Smallest second difference of call-equivalent prices over all grids.
    pub min_butterfly: f64,
    /// Smallest calendar spread at common moneyness; `None` when no date has two maturities.
    pub min_calendar: Option<f64>,
    pub butterfly_violations: Vec<Violation>,
    pub calendar_violations: Vec<Violation>,
    pub notes: Vec<String>,
}

impl ArbitrageReport {
    pub fn violation_count(&self) -> usize {
        self.butterfly_violations.len() + self.calendar_violations.len()
    }

    pub fn is_clean(&self) -> bool {
        self.violation_count() == 0
    }
}

/// Butterfly and calendar checks on call-equivalent prices.
///
/// Butterflies are taken on `C(k) = q(k) + (F - k)+`: the OTM curve itself has a
/// kink at the forward and its second differences are not sign-definite there.
pub fn check_static_arbitrage(grids: &[StrikeGrid], tolerance: f64) -> ArbitrageReport {
    let mut report = ArbitrageReport {
        tolerance,
        min_butterfly: f64::INFINITY,
        min_calendar: None,
        butterfly_violations: Vec::new(),
        calendar_violations: Vec::new(),
        notes: Vec::new(),
    };
    let calls: Vec<Vec<f64>> = grids.iter().map(StrikeGrid::call_prices).collect();
    for (grid, c) in grids.iter().zip(&calls) {
        for j in 1..c.len().saturating_sub(1) {
            let fly = c[j - 1] - 2.0 * c[j] + c[j + 1];
            report.min_butterfly = report.min_butterfly.min(fly);
            if fly < -tolerance {
                report.butterfly_violations.push(Violation {
                    trade_date: grid.trade_date,
                    expiry: grid.expiry,
                    strike: grid.strikes[j],
                    value: fly,
                });
            }
        }
    }

    let mut order: Vec<usize> = (0..grids.len()).collect();
    order.sort_by(|&a, &b| {
        grids[a]
            .trade_date
            .cmp(&grids[b].trade_date)
            .then(grids[a].expiry.cmp(&grids[b].expiry))
    });
    let mut compared = false;
    for pair in order.windows(2) {
        let (p, n) = (pair[0], pair[1]);
        let (prev, next) = (&grids[p], &grids[n]);
        if prev.trade_date != next.trade_date || prev.expiry == next.expiry {
            continue;
        }
        compared = true;
        for (j, &k) in next.strikes.iter().enumerate() {
            let Some(floor) = normalised_call_on_grid(prev, &calls[p], k / next.forward) else {
                continue;
            };
            let spread = calls[n][j] / next.forward - floor;
            report.min_calendar = Some(report.min_calendar.map_or(spread, |m: f64| m.min(spread)));
            if spread * next.forward < -tolerance {
                report.calendar_violations.push(Violation {
                    trade_date: next.trade_date,
                    expiry: next.expiry,
                    strike: k,
                    value: spread * next.forward,
                });
            }
        }
    }
    if !compared {
        report
            .notes
            .push("calendar checks n/a: no trade date has two maturities".into());
    }
    if report.min_butterfly == f64::INFINITY {
        report.min_butterfly = 0.0;
        report.notes.push("butterfly checks n/a: grids have fewer than 3 strikes".into());
    }
    report
}

/// RMSE of a fitted surface against the raw OTM quotes it was built from.
pub fn reprice_rmse(slices: &[FittedSlice], grids: &[StrikeGrid], curves: &[RawOtmCurve]) -> f64 {
    let mut sse = 0.0;
    let mut n = 0usize;
    for curve in curves {
        let Some(grid) = grids.iter().find(|g| g.expiry == curve.expiry) else {
            continue;
        };
        let slice = slices.iter().find(|s| s.expiry == curve.expiry);
        for &(k, q) in &curve.points {
            let fitted = interpolate_otm(grid, k).or_else(|| slice.map(|s| s.otm_price(k)));
            if let Some(f) = fitted {
                sse += (f - q) * (f - q);
                n += 1;
            }
        }
    }
    if n == 0 {
        0.0
    } else {
        (sse / n as f64).sqrt()
    }
}

/// Linear interpolation of the grid's call-equivalent prices, returned as an OTM price.
pub fn interpolate_otm(grid: &StrikeGrid, strike: f64) -> Option<f64> {
    let calls = grid.call_prices();
    normalised_call_on_grid(grid, &calls, strike / grid.forward)
        .map(|c| (c * grid.forward - (grid.forward - strike).max(0.0)).max(0.0))
}

pub fn grid_file_name(trade_date: NaiveDate, expiry: NaiveDate) -> String {
    format!("grid_{trade_date}_{expiry}.csv")
}

/// Writes `grid_<date>_<expiry>.csv` files (columns `strike,otm_price`) plus an
/// `index.csv` carrying forward and range volatility per file.
pub fn write_grid_store(dir: &Path, grids: &[StrikeGrid]) -> Result<Vec<PathBuf>> {
    fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    let mut written = Vec::new();
    let index_path = dir.join("index.csv");
    let mut index = csv::Writer::from_path(&index_path).map_err(|e| Error::csv(&index_path, e))?;
    index
        .write_record(["trade_date", "expiry", "forward", "avg_implied_vol", "file"])
        .map_err(|e| Error::csv(&index_path, e))?;
    let mut sorted: Vec<&StrikeGrid> = grids.iter().collect();
    sorted.sort_by(|a, b| (a.trade_date, a.expiry).cmp(&(b.trade_date, b.expiry)));
    for g in sorted {
        let name = grid_file_name(g.trade_date, g.expiry);
        let path = dir.join(&name);
        let mut w = csv::Writer::from_path(&path).map_err(|e| Error::csv(&path, e))?;
        w.write_record(["strike", "otm_price"]).map_err(|e| Error::csv(&path, e))?;
        for (k, q) in g.strikes.iter().zip(&g.otm_prices) {
            w.write_record([k.to_string(), q.to_string()])
                .map_err(|e| Error::csv(&path, e))?;
        }
        w.flush().map_err(|e| Error::io(&path, e))?;
        index
            .write_record([
                g.trade_date.to_string(),
                g.expiry.to_string(),
                g.forward.to_string(),
                g.avg_implied_vol.to_string(),
                name,
            ])
            .map_err(|e| Error::csv(&index_path, e))?;
        written.push(path);
    }
    index.flush().map_err(|e| Error::io(&index_path, e))?;
    written.push(index_path);
    Ok(written)
}

#[derive(Deserialize)]
struct IndexRow {
    trade_date: NaiveDate,
    expiry: NaiveDate,
    forward: f64,
    avg_implied_vol: f64,
    file: String,
}

#[derive(Deserialize)]
struct GridRow {
    strike: f64,
    otm_price: f64,
}

pub fn read_grid_store(dir: &Path) -> Result<Vec<StrikeGrid>> {
    let index_path = dir.join("index.csv");
    if !index_path.is_file() {
        // fall back to an explicit missing-store error naming the directory
        store_files(dir, "grid_")?;
        return Err(Error::MissingStore(index_path));
    }
    let mut reader = csv::Reader::from_path(&index_path).map_err(|e| Error::csv(&index_path, e))?;
    let mut grids = Vec::new();
    for row in reader.deserialize::<IndexRow>() {
        let row = row.map_err(|e| Error::csv(&index_path, e))?;
        let path = dir.join(&row.file);
        let mut gr = csv::Reader::from_path(&path).map_err(|e| Error::csv(&path, e))?;
        let mut strikes = Vec::new();
        let mut otm_prices = Vec::new();
        for r in gr.deserialize::<GridRow>() {
            let r = r.map_err(|e| Error::csv(&path, e))?;
            strikes.push(r.strike);
            otm_prices.push(r.otm_price);
        }
        grids.push(StrikeGrid {
            trade_date: row.trade_date,
            expiry: row.expiry,
            forward: row.forward,
            avg_implied_vol: row.avg_implied_vol,
            strikes,
            otm_prices,
        });
    }
    grids.sort_by(|a, b| match a.trade_date.cmp(&b.trade_date) {
        Ordering::Equal => a.expiry.cmp(&b.expiry),
        o => o,
    });
    Ok(grids)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn d(s: &str) -> NaiveDate {
        NaiveDate::parse_from_str(s, "%Y-%m-%d").unwrap()
    }

    fn bs_curve(sigma: f64, days: i64, step: f64) -> RawOtmCurve {
        let td = d("2024-01-02");
        let expiry = td + chrono::Duration::days(days);
        let f = 2000.0;
        let tv = sigma * (days as f64 / 365.0).sqrt();
        let lo = (f * (-2.5 * tv).exp() / step).ceil() * step;
        let hi = (f * (2.5 * tv).exp() / step).floor() * step;
        let mut points = Vec::new();
        let mut k = lo;
        while k <= hi {
            points.push((k, black::otm(f, k, tv)));
            k += step;
        }
        RawOtmCurve {
            trade_date: td,
            expiry,
            forward: f,
            avg_implied_vol: sigma,
            points,
        }
    }

    #[test]
    fn basis_second_derivative_is_hat_interpolant() {
        let knots = [0.0, 0.3, 0.5, 1.0];
        let b = SplineBasis::new(&knots);
        let h = 1e-4;
        for i in 0..4 {
            for &u in &[0.1, 0.35, 0.45, 0.7, 0.95] {
                let fd = (b.phi(i, u + h) - 2.0 * b.phi(i, u) + b.phi(i, u - h)) / (h * h);
                let hat = {
                    let c = knots[i];
                    if u <= c {
                        if i == 0 { 0.0 } else { ((u - knots[i - 1]) / (c - knots[i - 1])).max(0.0) }
                    } else if i + 1 < 4 {
                        ((knots[i + 1] - u) / (knots[i + 1] - c)).max(0.0)
                    } else {
                        0.0
                    }
                };
                assert!((fd - hat).abs() < 1e-5, "i={i} u={u} fd={fd} hat={hat}");
                let sd = (b.phi(i, u + h) - b.phi(i, u - h)) / (2.0 * h);
                assert!((sd - b.phi_slope(i, u)).abs() < 1e-7);
            }
        }
    }

    #[test]
    fn mass_matrix_integrates_products() {
        let knots = [0.0, 0.25, 1.0];
        let m = SplineBasis::new(&knots).mass();
        // gamma = 1 everywhere -> integral 1
        let ones = DVector::from_element(3, 1.0);
        assert!(((ones.transpose() * &m * &ones)[0] - 1.0).abs() < 1e-14);
    }

    #[test]
    fn black_scholes_input_is_reproduced() {
        let curve = bs_curve(0.2, 30, 5.0);
        let cfg = SurfaceConfig::default();
        let grids = fit_surface(std::slice::from_ref(&curve), &cfg).unwrap();
        let g = &grids[0];
        let tv = 0.2 * (30.0_f64 / 365.0).sqrt();
        let (lo, hi) = (curve.points[0].0, curve.points.last().unwrap().0);
        let mut worst: f64 = 0.0;
        for (&k, &q) in g.strikes.iter().zip(&g.otm_prices) {
            if k > lo + 0.2 * (hi - lo) && k < hi - 0.2 * (hi - lo) {
                let model = black::otm(2000.0, k, tv);
                worst = worst.max((q - model).abs() / model);
            }
        }
        assert!(worst < 1e-4, "worst relative error {worst}");
    }

    #[test]
    fn negative_butterfly_is_removed() {
        let mut curve = bs_curve(0.2, 45, 10.0);
        let mid = curve.points.len() / 2;
        curve.points[mid].1 += 8.0;
        let grids = fit_surface(&[curve], &SurfaceConfig::default()).unwrap();
        let report = check_static_arbitrage(&grids, 1e-10);
        assert!(report.butterfly_violations.is_empty(), "{:?}", report.min_butterfly);
    }

    #[test]
    fn equal_total_variance_has_no_calendar_arbitrage() {
        let a = bs_curve(0.2, 30, 5.0);
        let mut b = bs_curve(0.2 * (30.0_f64 / 60.0).sqrt(), 60, 5.0);
        b.avg_implied_vol = 0.2 * (30.0_f64 / 60.0).sqrt();
        let grids = fit_surface(&[a, b], &SurfaceConfig::default()).unwrap();
        let report = check_static_arbitrage(&grids, 1e-10);
        assert!(report.is_clean(), "{report:?}");
        assert!(report.min_calendar.unwrap() >= -1e-10);
    }

    #[test]
    fn concave_triple_is_flagged() {
        let g = StrikeGrid {
            trade_date: d("2024-01-02"),
            expiry: d("2024-02-02"),
            forward: 100.0,
            avg_implied_vol: 0.2,
            strikes: vec![110.0, 120.0, 130.0],
            otm_prices: vec![1.0, 3.0, 1.0],
        };
        let report = check_static_arbitrage(&[g], 1e-10);
        assert_eq!(report.butterfly_violations.len(), 1);
        assert!(report.notes.iter().any(|n| n.contains("calendar checks n/a")));
        assert!(report.min_calendar.is_none());
    }

    #[test]
    fn grid_spans_six_sigma_multiplicatively() {
        let cfg = SurfaceConfig::default();
        let tau = 30.0 / 365.0;
        let s = grid_strikes(2000.0, 0.2, tau, &cfg);
        assert_eq!(s.len(), 2000);
        let w = 6.0 * 0.2 * tau.sqrt();
        assert!((s[0] - 2000.0 * (-w).exp()).abs() < 1e-9);
        assert!((s[1999] - 2000.0 * w.exp()).abs() < 1e-9);
        let arith = grid_strikes(
            2000.0,
            0.8,
            2.0,
            &SurfaceConfig {
                range_mode: RangeMode::Arithmetic,
                ..cfg
            },
        );
        assert!(arith[0] > 0.0);
    }

    #[test]
    fn convex_envelope_of_convex_data_is_identity() {
        let x: Vec<f64> = (0..20).map(f64::from).collect();
        let y: Vec<f64> = x.iter().map(|v| (v - 7.0) * (v - 7.0)).collect();
        assert_eq!(lower_convex_envelope(&x, &y), y);
        let mut bumped = y.clone();
        bumped[7] = 5.0;
        let env = lower_convex_envelope(&x, &bumped);
        assert!((env[7] - 1.0).abs() < 1e-12);
    }

    #[test]
    fn grid_store_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let grids = fit_surface(&[bs_curve(0.2, 30, 10.0)], &SurfaceConfig::default()).unwrap();
        write_grid_store(dir.path(), &grids).unwrap();
        assert_eq!(read_grid_store(dir.path()).unwrap(), grids);
    }
}
