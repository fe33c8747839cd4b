//! Value iteration on the full optimality recursion
//!
//! ```text
//! v(d) = max { E_T[ sum_{j >= d} P(j - d; lambda_d T) v(j) exp(-delta L T) ], reward(d) }
//! ```
//!
//! on degrees `1..=d_max`, with `v(1) = 0` pinned (the state entered right
//! after a transmission) and degrees above `d_max` treated as send states.
//! The per-increment weights `E_T[P(k; lambda_d T) exp(-delta L T)]` are
//! obtained by quadrature, so the result is independent of the closed-form
//! threshold.

use super::numeric::{ln_factorial, poisson_pmf_with};
use super::{
    domain, threshold_for, Decision, PolicyError, PolicyParams, StopReward, BOUNDARY_TOLERANCE,
    DEFAULT_MAX_ITERATIONS, QUADRATURE_TOLERANCE, TAIL_MASS,
};
use crate::quadrature::{exponential_cutoff, integrate};

/// Fixed point of the optimality recursion.
///
/// `values[0]` and `policy[0]` correspond to degree 1.
#[derive(Debug, Clone, PartialEq)]
pub struct ValueSolution {
    pub values: Vec<f64>,
    pub policy: Vec<Decision>,
    /// Smallest degree whose greedy action is `Send` (`d_max + 1` if none).
    pub threshold_state: u32,
    pub iterations: usize,
}

impl ValueSolution {
    pub fn value(&self, d: u32) -> f64 {
        self.values[(d - 1) as usize]
    }

    pub fn action(&self, d: u32) -> Decision {
        self.policy[(d - 1) as usize]
    }

    /// Whether the policy waits below `threshold_state` and sends at and
    /// above it.
    pub fn is_threshold_type(&self) -> bool {
        self.policy.iter().enumerate().all(|(i, &a)| {
            let d = i as u32 + 1;
            (a == Decision::Send) == (d >= self.threshold_state)
        })
    }
}

/// Solves the recursion with the parameters' linear gain.
///
/// Requires `d_max >= ceil(d*) + 10`.
pub fn value_iteration(
    params: &PolicyParams,
    d_max: u32,
    tol: f64,
) -> Result<ValueSolution, PolicyError> {
    let gain = params.gain();
    let d_star = threshold_for(params, &gain)?;
    let needed = d_star.max(1.0).ceil() + 10.0;
    if f64::from(d_max) < needed {
        return Err(domain(
            "d_max",
            f64::from(d_max),
            "must be at least ceil(d*) + 10",
        ));
    }
    value_iteration_with(params, &gain, d_max, tol, DEFAULT_MAX_ITERATIONS)
}

/// Per-stage weights `w[k] = E_T[P(k; lambda_d T) exp(-delta L T)]`.
fn increment_weights(params: &PolicyParams) -> Result<Vec<f64>, PolicyError> {
    let lambda_t = params.lambda_t();
    let lambda_d = params.lambda_d();
    let decay = params.discount_rate() + lambda_t;
    let mut weights = Vec::new();
    let mut previous = f64::INFINITY;
    for k in 0u32.. {
        let ln_fact = ln_factorial(k);
        let integrand =
            |t: f64| lambda_t * (-decay * t).exp() * poisson_pmf_with(k, lambda_d * t, ln_fact);
        // The Poisson factor peaks near t = k / lambda_d; start the tail
        // search beyond it.
        let peak = if lambda_d > 0.0 {
            f64::from(k) / lambda_d
        } else {
            0.0
        };
        let cut =
            exponential_cutoff(decay, TAIL_MASS, |t| integrand(t + peak) + TAIL_MASS * 1e-3) + peak;
        let w = integrate(integrand, 0.0, cut, QUADRATURE_TOLERANCE * 1e-2)?.value;
        weights.push(w);
        if lambda_d == 0.0 || (w < previous && w < 1e-17) {
            break;
        }
        previous = w;
        if k > 1_000_000 {
            return Err(domain(
                "lambda_d",
                lambda_d,
                "increment distribution too heavy",
            ));
        }
    }
    Ok(weights)
}

/// As [`value_iteration`] with an arbitrary stop reward and iteration cap.
///
/// Sweeps run from `d_max` down to 2 updating in place; iteration stops when
/// the sup-norm change of a sweep falls below `tol`.
pub fn value_iteration_with(
    params: &PolicyParams,
    reward: &dyn StopReward,
    d_max: u32,
    tol: f64,
    max_iterations: usize,
) -> Result<ValueSolution, PolicyError> {
    if d_max < 2 {
        return Err(domain("d_max", f64::from(d_max), "must be >= 2"));
    }
    if !(tol > 0.0) {
        return Err(domain("tol", tol, "must be > 0"));
    }
    let weights = increment_weights(params)?;
    let n = d_max as usize;
    let mut values: Vec<f64> = (1..=d_max).map(|d| reward.reward(d)).collect();
    values[0] = 0.0;

    // Value of degree `d` (1-based), using the send reward above d_max.
    let continuation = |values: &[f64], d: u32| -> f64 {
        weights
            .iter()
            .enumerate()
            .map(|(k, w)| {
                let j = d + k as u32;
                let v = if j <= d_max {
                    values[(j - 1) as usize]
                } else {
                    reward.reward(j)
                };
                w * v
            })
            .sum()
    };

    let mut iterations = 0;
    loop {
        iterations += 1;
        let mut change: f64 = 0.0;
        for d in (2..=d_max).rev() {
            let idx = (d - 1) as usize;
            let updated = reward.reward(d).max(continuation(&values, d));
            change = change.max((updated - values[idx]).abs());
            values[idx] = updated;
        }
        if change < tol {
            break;
        }
        if iterations >= max_iterations {
            return Err(PolicyError::NotConverged {
                iterations,
                residual: change,
            });
        }
    }

    // Degree 1 keeps its pinned value, so its waiting value is solved from
    // the self-loop instead of read from the table.
    let waiting = |d: u32| -> f64 {
        if d == 1 {
            (continuation(&values, 1) - weights[0] * values[0]) / (1.0 - weights[0])
        } else {
            continuation(&values, d)
        }
    };
    let policy: Vec<Decision> = (1..=d_max)
        .map(|d| {
            if reward.reward(d) >= waiting(d) - BOUNDARY_TOLERANCE {
                Decision::Send
            } else {
                Decision::Wait
            }
        })
        .collect();
    let threshold_state = policy
        .iter()
        .position(|&a| a == Decision::Send)
        .map_or(d_max + 1, |i| i as u32 + 1);
    debug_assert_eq!(values.len(), n);

    Ok(ValueSolution {
        values,
        policy,
        threshold_state,
        iterations,
    })
}
