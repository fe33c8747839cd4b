//! Numeric routes: Poisson transition kernel, quadrature of the discount
//! expectations, and direct evaluation of the one-stage look-ahead integral.

use super::{
    domain, PolicyError, PolicyParams, StateDegree, StopReward, BOUNDARY_TOLERANCE,
    QUADRATURE_TOLERANCE, SERIES_TAIL, TAIL_MASS,
};
use crate::quadrature::{exponential_cutoff, integrate};

/// Poisson probability mass `P[N = k]` for `N ~ Poisson(mean)`, evaluated in
/// log space so large means do not underflow.
pub fn poisson_pmf(k: u32, mean: f64) -> f64 {
    if mean == 0.0 {
        return if k == 0 { 1.0 } else { 0.0 };
    }
    poisson_pmf_with(k, mean, ln_factorial(k))
}

pub(crate) fn ln_factorial(k: u32) -> f64 {
    (2..=k).map(|i| f64::from(i).ln()).sum()
}

/// [`poisson_pmf`] with `ln(k!)` supplied by the caller.
pub(crate) fn poisson_pmf_with(k: u32, mean: f64, ln_fact: f64) -> f64 {
    if mean == 0.0 {
        return if k == 0 { 1.0 } else { 0.0 };
    }
    (f64::from(k) * mean.ln() - mean - ln_fact).exp()
}

/// Calls `visit(k, P[N = k])` for `N ~ Poisson(mean)` in increasing `k`,
/// stopping once the visited mass reaches `1 - SERIES_TAIL`.
pub(crate) fn poisson_series(mean: f64, mut visit: impl FnMut(u32, f64)) {
    if mean == 0.0 {
        visit(0, 1.0);
        return;
    }
    let ln_mean = mean.ln();
    let hard_stop = mean + 60.0 * mean.sqrt() + 60.0;
    let mut ln_p = -mean;
    let mut mass = 0.0;
    let mut k = 0u32;
    loop {
        let p = ln_p.exp();
        if p > 0.0 {
            visit(k, p);
            mass += p;
        }
        if mass >= 1.0 - SERIES_TAIL || f64::from(k) > hard_stop {
            return;
        }
        k += 1;
        ln_p += ln_mean - f64::from(k).ln();
    }
}

/// Probability of moving from degree `i` to degree `j` while waiting one
/// stage of length `t0`. Degrees never decrease while waiting.
pub fn transition_prob(
    i: StateDegree,
    j: StateDegree,
    t0: f64,
    lambda_d: f64,
) -> Result<f64, PolicyError> {
    if !(t0 >= 0.0 && t0.is_finite()) {
        return Err(domain("t0", t0, "must be finite and >= 0"));
    }
    if !(lambda_d >= 0.0 && lambda_d.is_finite()) {
        return Err(domain("lambda_d", lambda_d, "must be finite and >= 0"));
    }
    if j < i {
        return Ok(0.0);
    }
    Ok(poisson_pmf(j.get() - i.get(), lambda_d * t0))
}

fn discount_integral<F: Fn(f64) -> f64>(
    params: &PolicyParams,
    weight: F,
) -> Result<f64, PolicyError> {
    let lambda_t = params.lambda_t();
    let rate = params.discount_rate();
    let integrand = |t: f64| weight(t) * (-rate * t).exp() * lambda_t * (-lambda_t * t).exp();
    let cut = exponential_cutoff(rate + lambda_t, TAIL_MASS, |t| {
        (1.0 + weight(t).abs()) * lambda_t * (-(rate + lambda_t) * t).exp()
    });
    Ok(integrate(integrand, 0.0, cut, QUADRATURE_TOLERANCE)?.value)
}

/// Quadrature of `E[exp(-delta L T)]`, independent of the closed form.
pub fn expected_discount_numeric(params: &PolicyParams) -> Result<f64, PolicyError> {
    discount_integral(params, |_| 1.0)
}

/// Quadrature of `E[T exp(-delta L T)]`, independent of the closed form.
pub fn expected_weighted_discount_numeric(params: &PolicyParams) -> Result<f64, PolicyError> {
    discount_integral(params, |t| t)
}

/// Expected reward of waiting exactly one more stage from degree `d` and
/// then sending, using the parameters' linear gain.
pub fn lookahead_rhs(d: StateDegree, params: &PolicyParams) -> Result<f64, PolicyError> {
    lookahead_rhs_with(d, params, &params.gain())
}

/// As [`lookahead_rhs`] with an arbitrary stop reward.
///
/// Evaluated as a truncated Poisson series inside an adaptive quadrature over
/// the exponential inter-opportunity density; no closed form is used.
pub fn lookahead_rhs_with(
    d: StateDegree,
    params: &PolicyParams,
    reward: &dyn StopReward,
) -> Result<f64, PolicyError> {
    let lambda_t = params.lambda_t();
    let lambda_d = params.lambda_d();
    let decay = params.discount_rate() + lambda_t;
    let base = d.get();

    let integrand = |t: f64| {
        let envelope = lambda_t * (-decay * t).exp();
        if envelope == 0.0 {
            return 0.0;
        }
        let mut expected = 0.0;
        poisson_series(lambda_d * t, |k, p| expected += p * reward.reward(base + k));
        envelope * expected
    };
    let cut = exponential_cutoff(decay, TAIL_MASS, |t| integrand(t).abs() + TAIL_MASS * 1e-3);
    Ok(integrate(integrand, 0.0, cut, QUADRATURE_TOLERANCE)?.value)
}

/// Whether stopping at `d` is at least as good as waiting one stage.
pub fn in_stopping_set(d: StateDegree, params: &PolicyParams) -> Result<bool, PolicyError> {
    in_stopping_set_with(d, params, &params.gain())
}

pub fn in_stopping_set_with(
    d: StateDegree,
    params: &PolicyParams,
    reward: &dyn StopReward,
) -> Result<bool, PolicyError> {
    let rhs = lookahead_rhs_with(d, params, reward)?;
    Ok(reward.reward(d.get()) >= rhs - BOUNDARY_TOLERANCE)
}

#[cfg(test)]
mod tests {
    use super::super::{expected_discount, expected_weighted_discount, threshold, LinearGain};
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn deg(d: u32) -> StateDegree {
        StateDegree::new(d).unwrap()
    }

    fn reference(lambda_d: f64, lambda_t: f64) -> PolicyParams {
        PolicyParams::with_unit_gain(lambda_d, lambda_t, 0.05, 40).unwrap()
    }

    #[test]
    fn transition_below_is_zero() {
        assert_eq!(transition_prob(deg(5), deg(3), 0.7, 2.0).unwrap(), 0.0);
    }

    #[test]
    fn transition_stay_matches_poisson_zero() {
        let p = transition_prob(deg(2), deg(2), 0.5, 2.0).unwrap();
        assert!((p - (-1.0f64).exp()).abs() < 1e-15);
    }

    #[test]
    fn transition_stay_matches_monte_carlo() {
        // Count increments of a Poisson process with rate 2 over t0 = 0.5
        // by summing exponential gaps.
        let mut rng = ChaCha8Rng::seed_from_u64(17);
        let trials = 200_000;
        let mut stayed = 0;
        for _ in 0..trials {
            let gap = -(1.0 - rng.random::<f64>()).ln() / 2.0;
            if gap > 0.5 {
                stayed += 1;
            }
        }
        let freq = f64::from(stayed) / f64::from(trials);
        let p = transition_prob(deg(2), deg(2), 0.5, 2.0).unwrap();
        let sigma = (p * (1.0 - p) / f64::from(trials)).sqrt();
        assert!((freq - p).abs() < 4.0 * sigma, "{freq} vs {p}");
    }

    #[test]
    fn transition_row_is_normalized() {
        for &(t0, lambda_d) in &[(0.3, 1.0), (2.0, 7.5), (10.0, 40.0)] {
            let total: f64 = (3..3 + 2000)
                .map(|j| transition_prob(deg(3), deg(j), t0, lambda_d).unwrap())
                .sum();
            // Large means lose a few ulps in the log-space exponent.
            assert!((total - 1.0).abs() < 1e-10, "{total}");
        }
    }

    #[test]
    fn transition_rejects_negative_time() {
        assert!(transition_prob(deg(1), deg(1), -1.0, 1.0).is_err());
    }

    #[test]
    fn series_handles_large_means() {
        let mut mass = 0.0;
        let mut first = 0.0;
        poisson_series(5000.0, |k, p| {
            mass += p;
            first += f64::from(k) * p;
        });
        assert!((mass - 1.0).abs() < 1e-11);
        assert!((first - 5000.0).abs() < 1e-6);
    }

    #[test]
    fn discount_quadrature_examples() {
        let p = reference(10.0, 5.0);
        assert!((expected_discount_numeric(&p).unwrap() - 5.0 / 7.0).abs() < 1e-9);
        assert!((expected_weighted_discount_numeric(&p).unwrap() - 5.0 / 49.0).abs() < 1e-9);
        let p = reference(10.0, 1.0);
        assert!((expected_discount_numeric(&p).unwrap() - 1.0 / 3.0).abs() < 1e-9);
        assert!((expected_weighted_discount_numeric(&p).unwrap() - 1.0 / 9.0).abs() < 1e-9);
    }

    #[test]
    fn discount_quadrature_matches_closed_form_on_grid() {
        for &lambda_t in &[0.1, 1.0, 5.0, 10.0, 100.0] {
            for &rate in &[0.02, 0.2, 2.0, 10.0] {
                let p = PolicyParams::with_unit_gain(1.0, lambda_t, rate / 40.0, 40).unwrap();
                let e1 = expected_discount_numeric(&p).unwrap();
                let e2 = expected_weighted_discount_numeric(&p).unwrap();
                assert!(
                    (e1 - expected_discount(&p)).abs() < 1e-9,
                    "{lambda_t} {rate}"
                );
                assert!(
                    (e2 - expected_weighted_discount(&p)).abs() < 1e-9,
                    "{lambda_t} {rate}"
                );
            }
        }
    }

    #[test]
    fn lookahead_zero_growth_saved_transmissions() {
        let p = reference(0.0, 5.0);
        let rhs = lookahead_rhs_with(deg(1), &p, &LinearGain::saved_transmissions()).unwrap();
        assert!(rhs.abs() < 1e-12);
    }

    #[test]
    fn lookahead_saved_transmission_examples() {
        // Reward d - 1: rhs(d) = (d - 1) E[e^{-δLT}] + λ_d E[T e^{-δLT}].
        let p = reference(10.0, 5.0);
        let saved = LinearGain::saved_transmissions();
        let at4 = lookahead_rhs_with(deg(4), &p, &saved).unwrap();
        let at3 = lookahead_rhs_with(deg(3), &p, &saved).unwrap();
        assert!(
            (at4 - (3.0 * 5.0 / 7.0 + 10.0 * 5.0 / 49.0)).abs() < 1e-9,
            "{at4}"
        );
        assert!(
            (at3 - (2.0 * 5.0 / 7.0 + 10.0 * 5.0 / 49.0)).abs() < 1e-9,
            "{at3}"
        );
        assert!(at3 > 2.0);
        // Under this reward the numeric boundary sits one degree above the
        // closed form evaluated with intercept 0.
        assert!(at4 > 3.0);
    }

    #[test]
    fn lookahead_state_reward_examples() {
        // Reward d: rhs(d) = d E[e^{-δLT}] + λ_d E[T e^{-δLT}].
        let p = reference(10.0, 5.0);
        let at4 = lookahead_rhs(deg(4), &p).unwrap();
        let at3 = lookahead_rhs(deg(3), &p).unwrap();
        assert!((at4 - (4.0 * 5.0 / 7.0 + 50.0 / 49.0)).abs() < 1e-9);
        assert!((at3 - (3.0 * 5.0 / 7.0 + 50.0 / 49.0)).abs() < 1e-9);
    }

    #[test]
    fn stopping_set_examples() {
        let p = reference(10.0, 5.0);
        assert!(in_stopping_set(deg(4), &p).unwrap());
        assert!(!in_stopping_set(deg(3), &p).unwrap());
        assert!(in_stopping_set(deg(1), &reference(0.0, 5.0)).unwrap());
        let steep = reference(200.0, 5.0);
        assert!(threshold(&steep) > 60.0);
        assert!(!in_stopping_set(deg(10), &steep).unwrap());
    }

    #[test]
    fn nonlinear_reward_is_accepted() {
        let p = reference(1.0, 5.0);
        let sqrt_gain = super::super::FnReward(|d: u32| f64::from(d).sqrt());
        let rhs = lookahead_rhs_with(deg(4), &p, &sqrt_gain).unwrap();
        assert!(rhs > 0.0 && rhs < 2.0 * 5.0 / 7.0 + 1.0);
    }
}
