//! Discretisation-invariant swap algebra.
//!
//! A DI payoff on the increment `x̂` of a martingale state vector is
//! `phi(x̂) = alpha'x̂ + x̂'Omega x̂`. Its fair swap rate is `tr(Omega (Sigma - x x'))`
//! with `Sigma = E^Q[x_T x_T']`, the same for every monitoring partition. Marking the
//! swap to market each period gives the increment
//!
//! ```text
//! pi = alpha'x̂ + tr(Omega (Sigma_hat - 2 x_prev x̂'))  =  phi(x̂) + s_hat
//! ```
//!
//! whose realised part is `phi(x̂)` and whose implied part is the change in swap rate.

use std::fmt;

use chrono::NaiveDate;
use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::contracts::ContractPanel;
use crate::error::{Error, Result};

/// Contract prices `X^(1..=n)` and, when known, `Sigma = E^Q[x_T x_T']`.
#[derive(Debug, Clone, PartialEq)]
pub struct StateVector {
    pub names: Vec<String>,
    pub values: DVector<f64>,
    pub sigma: Option<DMatrix<f64>>,
}

pub(crate) fn power_names(dim: usize) -> Vec<String> {
    (1..=dim)
        .map(|p| if p == 1 { "X".to_string() } else { format!("X{p}") })
        .collect()
}

impl StateVector {
    /// State `[X, X2, ..]` of dimension `dim` with the implied second-moment matrix
    /// `Sigma_ab = X^(a+b)`: the terminal contract values are powers of `x_T`.
    pub fn from_panel(panel: &ContractPanel, dim: usize) -> Result<Self> {
        Self::from_powers(&panel.powers, dim)
    }

    /// Same construction from a slice of power prices `X^(1), X^(2), ..`.
    pub fn from_powers(powers: &[f64], dim: usize) -> Result<Self> {
        if dim == 0 || 2 * dim > powers.len() {
            return Err(Error::Dimension(format!(
                "state of dimension {dim} needs powers up to {}, have {}",
                2 * dim,
                powers.len()
            )));
        }
        Ok(Self {
            names: power_names(dim),
            values: DVector::from_fn(dim, |i, _| powers[i]),
            sigma: Some(DMatrix::from_fn(dim, dim, |a, b| powers[a + b + 1])),
        })
    }

    /// State at maturity, where every contract pays a power of the terminal log price.
    pub fn terminal(log_price: f64, dim: usize) -> Self {
        let values = DVector::from_fn(dim, |i, _| log_price.powi(i as i32 + 1));
        let sigma = &values * values.transpose();
        Self {
            names: power_names(dim),
            values,
            sigma: Some(sigma),
        }
    }

    pub fn dim(&self) -> usize {
        self.values.len()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum SwapLabel {
    Variance,
    Third,
    Fourth,
    Custom,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SwapSpec {
    pub label: SwapLabel,
    pub state: Vec<String>,
    pub alpha: DVector<f64>,
    pub omega: DMatrix<f64>,
    /// Log-contract price at inception, which parametrises Omega.
    pub x0: f64,
}

impl SwapSpec {
    /// Arbitrary DI payoff; `omega` is symmetrised.
    pub fn custom(state: Vec<String>, alpha: DVector<f64>, omega: DMatrix<f64>) -> Result<Self> {
        let n = state.len();
        if alpha.len() != n || omega.nrows() != n || omega.ncols() != n {
            return Err(Error::Dimension(format!(
                "state {n}, alpha {}, omega {}x{}",
                alpha.len(),
                omega.nrows(),
                omega.ncols()
            )));
        }
        Ok(Self {
            label: SwapLabel::Custom,
            state,
            alpha,
            omega: symmetric_part(&omega),
            x0: f64::NAN,
        })
    }

    pub fn dim(&self) -> usize {
        self.state.len()
    }

    /// `alpha'x̂ + x̂'Omega x̂`.
    pub fn payoff(&self, x_hat: &DVector<f64>) -> f64 {
        self.alpha.dot(x_hat) + (x_hat.transpose() * &self.omega * x_hat)[0]
    }
}

fn symmetric_part(m: &DMatrix<f64>) -> DMatrix<f64> {
    (m + m.transpose()) * 0.5
}

pub fn make_variance_swap(x0: f64) -> SwapSpec {
    SwapSpec {
        label: SwapLabel::Variance,
        state: power_names(1),
        alpha: DVector::zeros(1),
        omega: DMatrix::from_element(1, 1, 1.0),
        x0,
    }
}

pub fn make_third_moment_swap(x0: f64) -> SwapSpec {
    SwapSpec {
        label: SwapLabel::Third,
        state: power_names(2),
        alpha: DVector::zeros(2),
        omega: DMatrix::from_row_slice(2, 2, &[-2.0 * x0, 0.5, 0.5, 0.0]),
        x0,
    }
}

pub fn make_fourth_moment_swap(x0: f64) -> SwapSpec {
    let c = -1.5 * x0;
    SwapSpec {
        label: SwapLabel::Fourth,
        state: power_names(3),
        alpha: DVector::zeros(3),
        omega: DMatrix::from_row_slice(
            3,
            3,
            &[3.0 * x0 * x0, c, 0.5, c, 0.0, 0.0, 0.5, 0.0, 0.0],
        ),
        x0,
    }
}

/// Log-contract position: alpha = e1, Omega = 0.
pub fn make_erp_swap() -> SwapSpec {
    SwapSpec {
        label: SwapLabel::Custom,
        state: power_names(1),
        alpha: DVector::from_element(1, 1.0),
        omega: DMatrix::zeros(1, 1),
        x0: f64::NAN,
    }
}

fn check_dim(spec: &SwapSpec, what: &str, len: usize) -> Result<()> {
    if len != spec.dim() {
        return Err(Error::Dimension(format!(
            "{what} has dimension {len}, swap state has {}",
            spec.dim()
        )));
    }
    Ok(())
}

fn check_square(spec: &SwapSpec, what: &str, m: &DMatrix<f64>) -> Result<()> {
    if m.nrows() != spec.dim() || m.ncols() != spec.dim() {
        return Err(Error::Dimension(format!(
            "{what} is {}x{}, swap state has {}",
            m.nrows(),
            m.ncols(),
            spec.dim()
        )));
    }
    Ok(())
}

/// `tr(Omega (Sigma - x x'))`.
pub fn swap_rate(spec: &SwapSpec, state: &StateVector) -> Result<f64> {
    check_dim(spec, "state", state.dim())?;
    let sigma = state
        .sigma
        .as_ref()
        .ok_or_else(|| Error::Dimension("state carries no second-moment matrix".into()))?;
    check_square(spec, "sigma", sigma)?;
    let x = &state.values;
    let omega = symmetric_part(&spec.omega);
    Ok((omega * (sigma - x * x.transpose())).trace())
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PnlIncrement {
    pub date: Option<NaiveDate>,
    pub value: f64,
    pub realised_part: f64,
    pub implied_part: f64,
}

impl PnlIncrement {
    pub fn new(realised_part: f64, implied_part: f64) -> Self {
        Self {
            date: None,
            value: realised_part + implied_part,
            realised_part,
            implied_part,
        }
    }

    pub fn scaled(self, factor: f64) -> Self {
        Self {
            value: self.value * factor,
            realised_part: self.realised_part * factor,
            implied_part: self.implied_part * factor,
            ..self
        }
    }
}

/// One marking-to-market increment of a DI swap.
pub fn incremental_pnl(
    spec: &SwapSpec,
    x_prev: &DVector<f64>,
    x_hat: &DVector<f64>,
    sigma_hat: &DMatrix<f64>,
) -> Result<PnlIncrement> {
    check_dim(spec, "x_prev", x_prev.len())?;
    check_dim(spec, "x_hat", x_hat.len())?;
    check_square(spec, "sigma_hat", sigma_hat)?;
    let omega = symmetric_part(&spec.omega);
    let value =
        spec.alpha.dot(x_hat) + (&omega * (sigma_hat - 2.0 * x_prev * x_hat.transpose())).trace();
    let realised = spec.alpha.dot(x_hat) + (x_hat.transpose() * &omega * x_hat)[0];
    Ok(PnlIncrement {
        date: None,
        value,
        realised_part: realised,
        implied_part: value - realised,
    })
}

/// Increment between two marked states of the same fixed-expiry contracts.
pub fn state_increment(spec: &SwapSpec, prev: &StateVector, next: &StateVector) -> Result<PnlIncrement> {
    let missing = || Error::Dimension("state carries no second-moment matrix".into());
    let sp = prev.sigma.as_ref().ok_or_else(missing)?;
    let sn = next.sigma.as_ref().ok_or_else(missing)?;
    if sp.shape() != sn.shape() {
        return Err(Error::Dimension("sigma shapes differ between marks".into()));
    }
    incremental_pnl(spec, &prev.values, &(&next.values - &prev.values), &(sn - sp))
}

/// Hedge ratios `(h1, h2)` of the third-moment swap:
/// `pi = X̂3 - h2 X̂2 - h1 X̂` with `h2 = 2 X0 + X_prev`, `h1 = X2_prev - 4 X0 X_prev`.
pub fn third_moment_hedge(x0: f64, x_prev: f64, x2_prev: f64) -> (f64, f64) {
    (x2_prev - 4.0 * x0 * x_prev, 2.0 * x0 + x_prev)
}

/// Hedge ratios `(h1, h2, h3)` of the fourth-moment swap:
/// `pi = X̂4 - h3 X̂3 - h2 X̂2 - h1 X̂`.
pub fn fourth_moment_hedge(x0: f64, x_prev: f64, x2_prev: f64, x3_prev: f64) -> (f64, f64, f64) {
    (
        x3_prev - 3.0 * x0 * x2_prev + 6.0 * x0 * x0 * x_prev,
        -3.0 * x0 * x0 - 3.0 * x0 * x_prev,
        3.0 * x0 + x_prev,
    )
}

/// Divides a moment-swap P&L by implied variance to the power `n/2`.
pub fn standardise_moment_pnl(pnl: f64, x0: f64, x20: f64, n: u32) -> Result<f64> {
    let variance = x20 - x0 * x0;
    if !(variance > 0.0) {
        return Err(Error::NonPositiveVariance(variance));
    }
    if !(n == 3 || n == 4) {
        return Err(Error::UnsupportedOrder(n));
    }
    Ok(pnl * variance.powf(-f64::from(n) / 2.0))
}

pub fn realised_variance(increments: &[f64]) -> f64 {
    increments.iter().map(|x| x * x).sum()
}

/// `2 (e^x - 1 - x)`, evaluated without cancellation for small `x`.
pub fn log_variance_term(x: f64) -> f64 {
    2.0 * (x.exp_m1() - x)
}

pub fn log_variance(increments: &[f64]) -> f64 {
    increments.iter().map(|&x| log_variance_term(x)).sum()
}

/// `6 (x e^x - 2 e^x + x + 2)`; behaves like `x^3` near zero.
pub fn psi_tilde(x: f64) -> f64 {
    if x.abs() < 1e-3 {
        // series x^3 + x^4/4 + x^5/20 + x^6/120
        let x3 = x * x * x;
        return x3 * (1.0 + x * (0.25 + x * (0.05 + x / 120.0)));
    }
    6.0 * (x * x.exp() - 2.0 * x.exp_m1() + x)
}

/// Skew payoff `3 v̂ (e^x̂ - 1) + psi_tilde(x̂)` on log-price and entropy-variance increments.
pub fn neuberger_skew_payoff(x_hat: f64, v_eta_hat: f64) -> f64 {
    3.0 * v_eta_hat * x_hat.exp_m1() + psi_tilde(x_hat)
}

/// ERP estimator `x_T - X_t`.
pub fn erp_estimator(x_terminal: f64, log_contract: f64) -> f64 {
    x_terminal - log_contract
}

/// The swap families traded on a contract panel.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum SwapKind {
    Variance,
    Third,
    Fourth,
    /// Third-moment swap standardised by implied variance^(3/2).
    Skew,
    /// Fourth-moment swap standardised by implied variance^2.
    Kurtosis,
    /// Log variance against the conventional rate.
    Lv,
    /// Squared log returns against the conventional rate.
    Rv,
    /// Entropy-variance skew payoff.
    Psi,
    /// Log contract.
    Erp,
}

impl SwapKind {
    pub const ALL: [SwapKind; 9] = [
        SwapKind::Variance,
        SwapKind::Third,
        SwapKind::Fourth,
        SwapKind::Skew,
        SwapKind::Kurtosis,
        SwapKind::Lv,
        SwapKind::Rv,
        SwapKind::Psi,
        SwapKind::Erp,
    ];

    pub fn parse(raw: &str) -> Option<Self> {
        Self::ALL.into_iter().find(|k| k.to_string() == raw.trim().to_ascii_lowercase())
    }

    fn di_spec(self, x0: f64) -> Option<SwapSpec> {
        match self {
            SwapKind::Variance => Some(make_variance_swap(x0)),
            SwapKind::Third | SwapKind::Skew => Some(make_third_moment_swap(x0)),
            SwapKind::Fourth | SwapKind::Kurtosis => Some(make_fourth_moment_swap(x0)),
            SwapKind::Erp => Some(make_erp_swap()),
            _ => None,
        }
    }

    /// Factor applied to every P&L of a swap struck on `inception`.
    pub fn standardisation(self, inception: &ContractPanel) -> Result<f64> {
        let n = match self {
            SwapKind::Skew => 3,
            SwapKind::Kurtosis => 4,
            _ => return Ok(1.0),
        };
        standardise_moment_pnl(1.0, inception.power(1), inception.power(2), n)
    }

    /// Fair rate of a swap struck on `panel` with inception log-contract price `x0`.
    pub fn rate(self, panel: &ContractPanel, x0: f64) -> Result<f64> {
        let x = panel.log_forward();
        match self.di_spec(x0) {
            Some(spec) => swap_rate(&spec, &StateVector::from_panel(panel, spec.dim())?),
            None => Ok(match self {
                SwapKind::Lv | SwapKind::Rv => panel.conv_var_rate,
                SwapKind::Psi => 3.0 * panel.v_eta + 6.0 * (panel.power(1) - x),
                _ => unreachable!("DI kinds handled above"),
            }),
        }
    }

    /// Mark-to-market increment of a swap on one fixed expiry between two panel dates,
    /// for a position initiated at `inception` (which fixes `X0` and the standardisation).
    pub fn fixed_expiry_increment(
        self,
        inception: &ContractPanel,
        prev: &ContractPanel,
        next: &ContractPanel,
    ) -> Result<PnlIncrement> {
        if prev.expiry != next.expiry || inception.expiry != prev.expiry {
            return Err(Error::Dataset(format!(
                "increment mixes expiries {} and {}",
                prev.expiry, next.expiry
            )));
        }
        let x0 = inception.power(1);
        let inc = match self.di_spec(x0) {
            Some(spec) => {
                let a = StateVector::from_panel(prev, spec.dim())?;
                let b = StateVector::from_panel(next, spec.dim())?;
                state_increment(&spec, &a, &b)?
            }
            None => {
                let x_hat = next.log_forward() - prev.log_forward();
                let realised = match self {
                    SwapKind::Lv => log_variance_term(x_hat),
                    SwapKind::Rv => x_hat * x_hat,
                    SwapKind::Psi => neuberger_skew_payoff(x_hat, next.v_eta - prev.v_eta),
                    _ => unreachable!("DI kinds handled above"),
                };
                PnlIncrement::new(realised, self.rate(next, x0)? - self.rate(prev, x0)?)
            }
        };
        Ok(inc.scaled(self.standardisation(inception)?))
    }

    /// Realised characteristic on an increment of marked states (used for realised legs).
    pub fn realised(self, x0: f64, prev: &ContractPanel, next: &ContractPanel) -> Result<f64> {
        let x_hat = next.log_forward() - prev.log_forward();
        Ok(match self.di_spec(x0) {
            Some(spec) => {
                let a = StateVector::from_panel(prev, spec.dim())?;
                let b = StateVector::from_panel(next, spec.dim())?;
                spec.payoff(&(&b.values - &a.values))
            }
            None => match self {
                SwapKind::Lv => log_variance_term(x_hat),
                SwapKind::Rv => x_hat * x_hat,
                SwapKind::Psi => neuberger_skew_payoff(x_hat, next.v_eta - prev.v_eta),
                _ => unreachable!(),
            },
        })
    }
}

impl fmt::Display for SwapKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let s = match self {
            SwapKind::Variance => "variance",
            SwapKind::Third => "third",
            SwapKind::Fourth => "fourth",
            SwapKind::Skew => "skew",
            SwapKind::Kurtosis => "kurtosis",
            SwapKind::Lv => "lv",
            SwapKind::Rv => "rv",
            SwapKind::Psi => "psi",
            SwapKind::Erp => "erp",
        };
        f.write_str(s)
    }
}
