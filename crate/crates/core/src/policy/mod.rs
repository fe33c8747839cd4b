//! The transmit-or-wait stopping rule.
//!
//! A coding node observes `d`, the degree of the best coding option available
//! for its head-of-line packet, at every transmission opportunity. Waiting
//! lets `d` grow (a Poisson process with rate `lambda_d` per time unit) but
//! discounts the eventual reward by `exp(-L * delta * T)` per inter-opportunity
//! interval `T ~ Exp(lambda_t)`. For a linear stop reward `c * d + b` the
//! one-stage look-ahead set is upward closed and reduces to a single real
//! threshold:
//!
//! ```text
//! d* = lambda_d * lambda_t / (delta * L * (delta * L + lambda_t)) - b / c
//! ```
//!
//! and the optimal rule is "send iff `d >= d*`". This module provides the
//! closed forms together with two independent numeric routes to the same
//! boundary: direct evaluation of the look-ahead integral
//! ([`lookahead_rhs`], [`in_stopping_set`]) and value iteration on the full
//! optimality recursion ([`value_iteration`]).

mod numeric;
mod value_iteration;

use std::fmt;

use thiserror::Error;

use crate::quadrature::QuadratureError;

pub use numeric::{
    expected_discount_numeric, expected_weighted_discount_numeric, in_stopping_set,
    in_stopping_set_with, lookahead_rhs, lookahead_rhs_with, poisson_pmf, transition_prob,
};
pub use value_iteration::{value_iteration, value_iteration_with, ValueSolution};

/// Absolute tolerance on the `d >= d*` comparison.
pub const BOUNDARY_TOLERANCE: f64 = 1e-9;
/// Absolute tolerance requested from the adaptive quadrature.
pub const QUADRATURE_TOLERANCE: f64 = 1e-10;
/// Neglected exponential tail mass when truncating `[0, inf)`.
pub const TAIL_MASS: f64 = 1e-14;
/// Neglected Poisson mass when truncating the degree-increment series.
pub const SERIES_TAIL: f64 = 1e-12;
/// Default iteration cap for [`value_iteration`].
pub const DEFAULT_MAX_ITERATIONS: usize = 100_000;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum PolicyError {
    #[error("parameter `{name}` = {value} is out of domain: {reason}")]
    Domain {
        name: &'static str,
        value: f64,
        reason: &'static str,
    },
    #[error("unsupported: {0}")]
    Unsupported(&'static str),
    #[error("numeric failure: {0}")]
    Numeric(#[from] QuadratureError),
    #[error("value iteration did not converge after {iterations} sweeps (residual {residual:e})")]
    NotConverged { iterations: usize, residual: f64 },
}

fn domain(name: &'static str, value: f64, reason: &'static str) -> PolicyError {
    PolicyError::Domain {
        name,
        value,
        reason,
    }
}

/// Parameters of the stopping problem.
///
/// Rates are per time unit. `delta` is the delay discount per buffer slot and
/// time unit; the effective discount rate is `delta * buffer_size`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PolicyParams {
    lambda_d: f64,
    lambda_t: f64,
    delta: f64,
    buffer_size: u32,
    gain_slope: f64,
    gain_intercept: f64,
}

impl PolicyParams {
    pub fn new(
        lambda_d: f64,
        lambda_t: f64,
        delta: f64,
        buffer_size: u32,
        gain_slope: f64,
        gain_intercept: f64,
    ) -> Result<Self, PolicyError> {
        if !(lambda_d >= 0.0 && lambda_d.is_finite()) {
            return Err(domain("lambda_d", lambda_d, "must be finite and >= 0"));
        }
        if !(lambda_t > 0.0 && lambda_t.is_finite()) {
            return Err(domain("lambda_t", lambda_t, "must be finite and > 0"));
        }
        if !(delta > 0.0 && delta.is_finite()) {
            return Err(domain("delta", delta, "must be finite and > 0"));
        }
        if buffer_size == 0 {
            return Err(domain("buffer_size", 0.0, "must be >= 1"));
        }
        if !(gain_slope > 0.0 && gain_slope.is_finite()) {
            return Err(domain("gain_slope", gain_slope, "must be finite and > 0"));
        }
        if !gain_intercept.is_finite() {
            return Err(domain("gain_intercept", gain_intercept, "must be finite"));
        }
        Ok(Self {
            lambda_d,
            lambda_t,
            delta,
            buffer_size,
            gain_slope,
            gain_intercept,
        })
    }

    /// Unit-slope, zero-intercept gain (`b = 0`, `c = 1`).
    pub fn with_unit_gain(
        lambda_d: f64,
        lambda_t: f64,
        delta: f64,
        buffer_size: u32,
    ) -> Result<Self, PolicyError> {
        Self::new(lambda_d, lambda_t, delta, buffer_size, 1.0, 0.0)
    }

    /// Same parameters with refreshed rate estimates.
    pub fn with_rates(self, lambda_d: f64, lambda_t: f64) -> Result<Self, PolicyError> {
        Self::new(
            lambda_d,
            lambda_t,
            self.delta,
            self.buffer_size,
            self.gain_slope,
            self.gain_intercept,
        )
    }

    pub fn lambda_d(&self) -> f64 {
        self.lambda_d
    }

    pub fn lambda_t(&self) -> f64 {
        self.lambda_t
    }

    pub fn delta(&self) -> f64 {
        self.delta
    }

    pub fn buffer_size(&self) -> u32 {
        self.buffer_size
    }

    pub fn gain_slope(&self) -> f64 {
        self.gain_slope
    }

    pub fn gain_intercept(&self) -> f64 {
        self.gain_intercept
    }

    /// `delta * L`, the discount rate applied per unit of waiting time.
    pub fn discount_rate(&self) -> f64 {
        self.delta * f64::from(self.buffer_size)
    }

    pub fn gain(&self) -> LinearGain {
        LinearGain {
            slope: self.gain_slope,
            intercept: self.gain_intercept,
        }
    }
}

/// Outcome of the stopping rule at one transmission opportunity.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Decision {
    Wait,
    Send,
}

impl fmt::Display for Decision {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Decision::Wait => f.write_str("wait"),
            Decision::Send => f.write_str("send"),
        }
    }
}

/// Degree of the best coding option; a native packet alone has degree 1.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct StateDegree(u32);

impl StateDegree {
    pub const NATIVE: StateDegree = StateDegree(1);

    pub fn new(d: u32) -> Result<Self, PolicyError> {
        if d == 0 {
            return Err(domain("d", 0.0, "degree must be >= 1"));
        }
        Ok(Self(d))
    }

    pub fn get(self) -> u32 {
        self.0
    }
}

/// Reward collected by transmitting while the best option has degree `d`.
pub trait StopReward {
    fn reward(&self, d: u32) -> f64;

    /// The linear form of this reward, if it has one.
    fn as_linear(&self) -> Option<LinearGain> {
        None
    }
}

/// `reward(d) = slope * d + intercept`.
///
/// With `slope = 1, intercept = -1` this counts the transmissions saved by
/// sending a degree-`d` option (`d - 1`); with `intercept = 0` it counts the
/// natives carried.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LinearGain {
    pub slope: f64,
    pub intercept: f64,
}

impl LinearGain {
    pub fn saved_transmissions() -> Self {
        Self {
            slope: 1.0,
            intercept: -1.0,
        }
    }
}

impl StopReward for LinearGain {
    fn reward(&self, d: u32) -> f64 {
        self.slope * f64::from(d) + self.intercept
    }

    fn as_linear(&self) -> Option<LinearGain> {
        Some(*self)
    }
}

/// Arbitrary reward given by a closure over the state degree.
pub struct FnReward<F>(pub F);

impl<F: Fn(u32) -> f64> StopReward for FnReward<F> {
    fn reward(&self, d: u32) -> f64 {
        (self.0)(d)
    }
}

/// Overall growth rate of the best coding degree,
/// `lambda_r * p_r + lambda_p * p_p`.
pub fn compose_degree_growth_rate(
    lambda_r: f64,
    p_r: f64,
    lambda_p: f64,
    p_p: f64,
) -> Result<f64, PolicyError> {
    if !(lambda_r >= 0.0 && lambda_r.is_finite()) {
        return Err(domain("lambda_r", lambda_r, "must be finite and >= 0"));
    }
    if !(lambda_p >= 0.0 && lambda_p.is_finite()) {
        return Err(domain("lambda_p", lambda_p, "must be finite and >= 0"));
    }
    if !(0.0..=1.0).contains(&p_r) {
        return Err(domain("p_r", p_r, "must be a probability"));
    }
    if !(0.0..=1.0).contains(&p_p) {
        return Err(domain("p_p", p_p, "must be a probability"));
    }
    Ok(lambda_r * p_r + lambda_p * p_p)
}

/// `E[exp(-delta L T)]` for `T ~ Exp(lambda_t)`: `lambda_t / (delta L + lambda_t)`.
pub fn expected_discount(params: &PolicyParams) -> f64 {
    params.lambda_t / (params.discount_rate() + params.lambda_t)
}

/// `E[T exp(-delta L T)]` for `T ~ Exp(lambda_t)`: `lambda_t / (delta L + lambda_t)^2`.
pub fn expected_weighted_discount(params: &PolicyParams) -> f64 {
    let s = params.discount_rate() + params.lambda_t;
    params.lambda_t / (s * s)
}

/// The real-valued stopping threshold `d*` for the parameters' linear gain.
///
/// May be `<= 1`, in which case every reachable state is a send state.
pub fn threshold(params: &PolicyParams) -> f64 {
    let rate = params.discount_rate();
    params.lambda_d * params.lambda_t / (rate * (rate + params.lambda_t))
        - params.gain_intercept / params.gain_slope
}

/// Threshold for an explicit reward; only linear rewards have a closed form.
pub fn threshold_for(params: &PolicyParams, reward: &dyn StopReward) -> Result<f64, PolicyError> {
    let linear = reward.as_linear().ok_or(PolicyError::Unsupported(
        "closed-form threshold requires a linear gain",
    ))?;
    if !(linear.slope > 0.0) {
        return Err(domain("gain_slope", linear.slope, "must be > 0"));
    }
    let rate = params.discount_rate();
    Ok(
        params.lambda_d * params.lambda_t / (rate * (rate + params.lambda_t))
            - linear.intercept / linear.slope,
    )
}

/// Send iff `d >= d*` (up to [`BOUNDARY_TOLERANCE`]).
pub fn decide(d: StateDegree, params: &PolicyParams) -> Decision {
    decide_against(d, threshold(params))
}

/// Applies the threshold rule to a precomputed `d*`.
pub fn decide_against(d: StateDegree, d_star: f64) -> Decision {
    if f64::from(d.get()) >= d_star - BOUNDARY_TOLERANCE {
        Decision::Send
    } else {
        Decision::Wait
    }
}

/// Smallest integer degree `>= 1` at which [`decide`] sends.
pub fn send_boundary(params: &PolicyParams) -> u32 {
    let d_star = threshold(params);
    if d_star <= 1.0 + BOUNDARY_TOLERANCE {
        return 1;
    }
    let nearest = d_star.round();
    if (d_star - nearest).abs() <= BOUNDARY_TOLERANCE {
        nearest as u32
    } else {
        d_star.ceil() as u32
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn reference(lambda_d: f64, lambda_t: f64) -> PolicyParams {
        PolicyParams::with_unit_gain(lambda_d, lambda_t, 0.05, 40).unwrap()
    }

    #[test]
    fn degree_growth_rate_examples() {
        assert_eq!(compose_degree_growth_rate(0.0, 0.5, 0.0, 0.5).unwrap(), 0.0);
        assert_eq!(
            compose_degree_growth_rate(2.0, 0.25, 4.0, 0.125).unwrap(),
            1.0
        );
        assert_eq!(
            compose_degree_growth_rate(10.0, 1.0, 0.0, 1.0).unwrap(),
            10.0
        );
    }

    #[test]
    fn degree_growth_rate_rejects_bad_inputs() {
        assert!(compose_degree_growth_rate(-1.0, 0.5, 0.0, 0.5).is_err());
        assert!(compose_degree_growth_rate(1.0, 1.5, 0.0, 0.5).is_err());
        assert!(compose_degree_growth_rate(1.0, 0.5, 1.0, -0.1).is_err());
    }

    #[test]
    fn params_validation() {
        assert!(PolicyParams::new(-0.1, 1.0, 0.05, 40, 1.0, 0.0).is_err());
        assert!(PolicyParams::new(1.0, 0.0, 0.05, 40, 1.0, 0.0).is_err());
        assert!(PolicyParams::new(1.0, 1.0, 0.0, 40, 1.0, 0.0).is_err());
        assert!(PolicyParams::new(1.0, 1.0, 0.05, 0, 1.0, 0.0).is_err());
        assert!(PolicyParams::new(1.0, 1.0, 0.05, 40, 0.0, 0.0).is_err());
        assert!(StateDegree::new(0).is_err());
    }

    #[test]
    fn discount_closed_forms() {
        assert!((expected_discount(&reference(10.0, 5.0)) - 5.0 / 7.0).abs() < 1e-15);
        assert!((expected_discount(&reference(10.0, 1.0)) - 1.0 / 3.0).abs() < 1e-15);
        assert!((expected_weighted_discount(&reference(10.0, 5.0)) - 5.0 / 49.0).abs() < 1e-15);
        assert!((expected_weighted_discount(&reference(10.0, 1.0)) - 1.0 / 9.0).abs() < 1e-15);

        let tiny = PolicyParams::with_unit_gain(1.0, 5.0, 1e-15, 1).unwrap();
        assert!((expected_discount(&tiny) - 1.0).abs() < 1e-14);
        let fast = reference(1.0, 1e12);
        assert!(expected_weighted_discount(&fast) < 1e-11);
    }

    #[test]
    fn threshold_examples() {
        assert!((threshold(&reference(10.0, 5.0)) - 50.0 / 14.0).abs() < 1e-12);
        assert_eq!(threshold(&reference(0.0, 5.0)), 0.0);
        assert!((threshold(&reference(2.0, 1.0)) - 1.0 / 3.0).abs() < 1e-12);
    }

    #[test]
    fn threshold_shifts_with_intercept() {
        let p = PolicyParams::new(10.0, 5.0, 0.05, 40, 2.0, 1.0).unwrap();
        assert!((threshold(&p) - (50.0 / 14.0 - 0.5)).abs() < 1e-12);
    }

    #[test]
    fn threshold_for_refuses_nonlinear_gain() {
        let p = reference(10.0, 5.0);
        let quadratic = FnReward(|d: u32| f64::from(d * d));
        assert!(matches!(
            threshold_for(&p, &quadratic),
            Err(PolicyError::Unsupported(_))
        ));
        let saved = threshold_for(&p, &LinearGain::saved_transmissions()).unwrap();
        assert!((saved - (50.0 / 14.0 + 1.0)).abs() < 1e-12);
    }

    #[test]
    fn decide_examples() {
        let low = reference(2.0, 1.0);
        assert_eq!(decide(StateDegree::NATIVE, &low), Decision::Send);
        let high = reference(10.0, 5.0);
        assert_eq!(decide(StateDegree::new(3).unwrap(), &high), Decision::Wait);
        assert_eq!(decide(StateDegree::new(4).unwrap(), &high), Decision::Send);
        assert_eq!(send_boundary(&high), 4);
        assert_eq!(send_boundary(&low), 1);
    }

    #[test]
    fn boundary_ties_resolve_to_send() {
        // 8.4 * 5 / (2 * 7) = 3 up to rounding.
        let p = PolicyParams::with_unit_gain(8.4, 5.0, 0.05, 40).unwrap();
        let d_star = threshold(&p);
        assert!((d_star - 3.0).abs() < 1e-9, "{d_star}");
        assert_eq!(decide(StateDegree::new(3).unwrap(), &p), Decision::Send);
        assert_eq!(send_boundary(&p), 3);
    }
}
