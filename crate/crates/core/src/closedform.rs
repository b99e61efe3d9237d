//! Perpetual (infinite horizon) values in the Black-Scholes market.

use crate::error::{Error, Result};
use crate::sim::MarketParams;

/// Bisection tolerance on `y = k*/K`.
pub const KSTAR_TOLERANCE: f64 = 1e-10;

/// Constants shared by the perpetual put formulas.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PerpetualParams {
    /// `r / vol^2 + 1/2`.
    pub gamma_exp: f64,
    /// Perpetual American put value at the strike; above this penalty the
    /// cancellation right is worthless.
    pub delta_star: f64,
    /// Root `k*` of the smooth-fit equation, when `penalty < delta_star`.
    pub k_star: Option<f64>,
}

impl PerpetualParams {
    pub fn new(params: &MarketParams) -> Result<Self> {
        check(params)?;
        let delta_star = perpetual_american_put(params, params.strike);
        let k_star = if params.penalty < delta_star {
            Some(solve_kstar(params)?)
        } else {
            None
        };
        Ok(Self {
            gamma_exp: gamma_exp(params),
            delta_star,
            k_star,
        })
    }
}

fn check(params: &MarketParams) -> Result<()> {
    params
        .validate_for_pricing()
        .map_err(|e| Error::Domain(e.to_string()))
}

fn gamma_exp(params: &MarketParams) -> f64 {
    params.rate / (params.vol * params.vol) + 0.5
}

/// Perpetual cancellable call at `s0`: `penalty * s0 / K` up to the strike,
/// `s0 - K + penalty` above it.
pub fn perpetual_cancellable_call(params: &MarketParams) -> f64 {
    let (s, k, delta) = (params.s0, params.strike, params.penalty);
    if s <= k {
        delta * s / k
    } else {
        s - k + delta
    }
}

/// Perpetual American put at price `s`.
///
/// With `beta = 2r / vol^2` the optimal exercise level is
/// `S* = beta K / (beta + 1)`; the value is `K - s` below it and
/// `(K - S*) (s / S*)^(-beta)` above.
pub fn perpetual_american_put(params: &MarketParams, s: f64) -> f64 {
    let beta = 2.0 * params.rate / (params.vol * params.vol);
    let k = params.strike;
    let boundary = beta * k / (beta + 1.0);
    if s <= boundary {
        k - s
    } else {
        (k - boundary) * (s / boundary).powf(-beta)
    }
}

/// `y^(2g) + 2g - 1 - 2g (1 + penalty/K) y`.
pub fn kstar_residual(params: &MarketParams, y: f64) -> f64 {
    let g2 = 2.0 * gamma_exp(params);
    y.powf(g2) + g2 - 1.0 - g2 * (1.0 + params.penalty / params.strike) * y
}

/// Smooth-fit level `k*` of the perpetual cancellable put, found by bisection
/// for `k*/K` in (0, 1). Only defined when the penalty is below `delta*`.
pub fn solve_kstar(params: &MarketParams) -> Result<f64> {
    check(params)?;
    let delta_star = perpetual_american_put(params, params.strike);
    if params.penalty >= delta_star {
        return Err(Error::Domain(format!(
            "penalty {} >= delta* {delta_star}: cancellation is never optimal, no k*",
            params.penalty
        )));
    }
    // f(0+) = 2g - 1 > 0 and f(1) = -2g penalty/K < 0
    let (mut lo, mut hi) = (0.0_f64, 1.0_f64);
    while hi - lo > KSTAR_TOLERANCE * 1e-2 {
        let mid = 0.5 * (lo + hi);
        if kstar_residual(params, mid) > 0.0 {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    Ok(params.strike * 0.5 * (lo + hi))
}

/// Perpetual cancellable put at `params.s0`.
pub fn perpetual_cancellable_put(params: &MarketParams) -> Result<f64> {
    perpetual_cancellable_put_at(params, params.s0)
}

/// Perpetual cancellable put as a function of the spot price.
pub fn perpetual_cancellable_put_at(params: &MarketParams, s: f64) -> Result<f64> {
    let pp = PerpetualParams::new(params)?;
    let Some(k_star) = pp.k_star else {
        return Ok(perpetual_american_put(params, s));
    };
    let (k, delta, g) = (params.strike, params.penalty, pp.gamma_exp);
    Ok(if s <= k_star {
        k - s
    } else if s < k {
        let denom = (k_star / k).powf(g) - (k_star / k).powf(-g);
        let exercise_part = (k - k_star) * (s / k_star).powf(-(g - 1.0))
            * ((s / k).powf(g) - (s / k).powf(-g))
            / denom;
        let cancel_part = delta * (s / k).powf(-(g - 1.0))
            * ((s / k_star).powf(-g) - (s / k_star).powf(g))
            / denom;
        exercise_part + cancel_part
    } else {
        delta * (s / k).powf(-(2.0 * g - 1.0))
    })
}
