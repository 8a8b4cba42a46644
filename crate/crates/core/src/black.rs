//! Undiscounted Black-76 prices on the forward, and implied-volatility inversion.

use statrs::function::erf::erfc;

pub fn norm_cdf(x: f64) -> f64 {
    0.5 * erfc(-x / std::f64::consts::SQRT_2)
}

pub fn norm_pdf(x: f64) -> f64 {
    (-0.5 * x * x).exp() / (2.0 * std::f64::consts::PI).sqrt()
}

fn d1_d2(forward: f64, strike: f64, total_vol: f64) -> (f64, f64) {
    let d1 = ((forward / strike).ln() + 0.5 * total_vol * total_vol) / total_vol;
    (d1, d1 - total_vol)
}

/// Forward call price; `total_vol` is sigma * sqrt(tau).
pub fn call(forward: f64, strike: f64, total_vol: f64) -> f64 {
    if total_vol <= 0.0 {
        return (forward - strike).max(0.0);
    }
    let (d1, d2) = d1_d2(forward, strike, total_vol);
    forward * norm_cdf(d1) - strike * norm_cdf(d2)
}

pub fn put(forward: f64, strike: f64, total_vol: f64) -> f64 {
    if total_vol <= 0.0 {
        return (strike - forward).max(0.0);
    }
    let (d1, d2) = d1_d2(forward, strike, total_vol);
    strike * norm_cdf(-d2) - forward * norm_cdf(-d1)
}

/// Put below the forward, call at or above it.
pub fn otm(forward: f64, strike: f64, total_vol: f64) -> f64 {
    if strike < forward {
        put(forward, strike, total_vol)
    } else {
        call(forward, strike, total_vol)
    }
}

/// dC/dk = -N(d2).
pub fn call_strike_slope(forward: f64, strike: f64, total_vol: f64) -> f64 {
    if total_vol <= 0.0 {
        return if strike < forward { -1.0 } else { 0.0 };
    }
    -norm_cdf(d1_d2(forward, strike, total_vol).1)
}

/// Total volatility sigma * sqrt(tau) that reproduces a forward call price.
///
/// Returns `None` when the price lies outside the no-arbitrage band
/// `[(F-k)+, F]`. Bisection on a monotone function, polished with Newton steps.
pub fn implied_total_vol(forward: f64, strike: f64, call_price: f64) -> Option<f64> {
    let intrinsic = (forward - strike).max(0.0);
    if !(call_price.is_finite() && call_price >= intrinsic && call_price < forward) {
        return None;
    }
    if call_price - intrinsic <= f64::MIN_POSITIVE {
        return Some(0.0);
    }
    let (mut lo, mut hi) = (0.0_f64, 1.0_f64);
    while call(forward, strike, hi) < call_price {
        hi *= 2.0;
        if hi > 64.0 {
            return None;
        }
    }
    let mut v = 0.5 * (lo + hi);
    for _ in 0..200 {
        let diff = call(forward, strike, v) - call_price;
        if diff > 0.0 {
            hi = v;
        } else {
            lo = v;
        }
        let vega = forward * norm_pdf(d1_d2(forward, strike, v).0);
        let newton = v - diff / vega;
        v = if vega > 1e-300 && newton > lo && newton < hi {
            newton
        } else {
            0.5 * (lo + hi)
        };
        if (hi - lo) < 1e-15 * hi.max(1e-12) || diff.abs() < 1e-14 * forward {
            break;
        }
    }
    Some(v)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn parity_holds() {
        let (f, k, v) = (2000.0, 1900.0, 0.2 * (30.0_f64 / 365.0).sqrt());
        let c = call(f, k, v);
        let p = put(f, k, v);
        assert!((c - p - (f - k)).abs() < 1e-10);
    }

    #[test]
    fn implied_vol_round_trip() {
        for &k in &[1200.0, 1800.0, 2000.0, 2300.0, 3000.0] {
            let v = 0.25 * 0.5_f64.sqrt();
            let c = call(2000.0, k, v);
            let back = implied_total_vol(2000.0, k, c).unwrap();
            assert!((back - v).abs() < 1e-8, "k={k} back={back}");
        }
    }

    #[test]
    fn implied_vol_rejects_arbitrage_prices() {
        assert!(implied_total_vol(2000.0, 1900.0, 50.0).is_none());
        assert!(implied_total_vol(2000.0, 1900.0, 2000.0).is_none());
    }

    #[test]
    fn slope_matches_finite_difference() {
        let (f, k, v) = (2000.0, 2050.0, 0.1);
        let h = 1e-3;
        let fd = (call(f, k + h, v) - call(f, k - h, v)) / (2.0 * h);
        assert!((fd - call_strike_slope(f, k, v)).abs() < 1e-7);
    }
}
