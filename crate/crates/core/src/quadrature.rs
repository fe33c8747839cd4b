//! Adaptive Gauss–Kronrod (7/15) quadrature.
//!
//! Used as the independent numeric route for every closed form in
//! [`crate::policy`]. The scheme bisects the subinterval with the largest
//! error estimate until the summed estimate drops below the requested
//! absolute tolerance.

use std::cmp::Ordering;
use std::collections::BinaryHeap;

use thiserror::Error;

/// Kronrod abscissae on [-1, 1], nonnegative half, descending.
#[allow(clippy::excessive_precision)]
const XGK: [f64; 8] = [
    0.991_455_371_120_812_639_206_854_697_526_329,
    0.949_107_912_342_758_524_526_189_684_047_851,
    0.864_864_423_359_769_072_789_712_788_640_926,
    0.741_531_185_599_394_439_863_864_773_280_788,
    0.586_087_235_467_691_130_294_144_845_693_013,
    0.405_845_151_377_397_166_906_606_412_076_961,
    0.207_784_955_007_898_467_600_689_403_773_245,
    0.000_000_000_000_000_000_000_000_000_000_000,
];

/// Kronrod weights matching [`XGK`].
#[allow(clippy::excessive_precision)]
const WGK: [f64; 8] = [
    0.022_935_322_010_529_224_963_732_008_058_970,
    0.063_092_092_629_978_553_290_700_663_189_204,
    0.104_790_010_322_250_183_839_876_322_541_518,
    0.140_653_259_715_525_918_745_189_590_510_238,
    0.169_004_726_639_267_902_826_583_426_598_550,
    0.190_350_578_064_785_409_913_256_402_421_014,
    0.204_432_940_075_298_892_414_161_999_234_649,
    0.209_482_141_084_727_828_012_999_174_891_714,
];

/// Gauss weights for the 7-point rule (odd Kronrod abscissae plus center).
#[allow(clippy::excessive_precision)]
const WG: [f64; 4] = [
    0.129_484_966_168_869_693_270_611_432_679_082,
    0.279_705_391_489_276_667_901_467_771_423_780,
    0.381_830_050_505_118_944_950_369_775_488_975,
    0.417_959_183_673_469_387_755_102_040_816_327,
];

/// Default cap on the number of subintervals.
pub const DEFAULT_MAX_INTERVALS: usize = 4096;

#[derive(Debug, Clone, Copy, PartialEq, Error)]
pub enum QuadratureError {
    #[error("quadrature did not converge: error estimate {achieved:e} > tolerance {requested:e} after {intervals} subintervals")]
    NotConverged {
        achieved: f64,
        requested: f64,
        intervals: usize,
    },
    #[error("integrand produced a non-finite value at t = {at}")]
    NonFinite { at: f64 },
}

/// Result of an adaptive integration.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Integral {
    pub value: f64,
    pub error_estimate: f64,
    pub intervals: usize,
}

#[derive(Debug, Clone, Copy)]
struct Segment {
    lo: f64,
    hi: f64,
    value: f64,
    error: f64,
}

impl PartialEq for Segment {
    fn eq(&self, other: &Self) -> bool {
        self.error.total_cmp(&other.error) == Ordering::Equal
    }
}

impl Eq for Segment {}

impl PartialOrd for Segment {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}

impl Ord for Segment {
    fn cmp(&self, other: &Self) -> Ordering {
        self.error.total_cmp(&other.error)
    }
}

fn kronrod<F: Fn(f64) -> f64>(f: &F, lo: f64, hi: f64) -> Result<Segment, QuadratureError> {
    let center = 0.5 * (lo + hi);
    let half = 0.5 * (hi - lo);
    let eval = |t: f64| {
        let y = f(t);
        if y.is_finite() {
            Ok(y)
        } else {
            Err(QuadratureError::NonFinite { at: t })
        }
    };

    let fc = eval(center)?;
    let mut kronrod_sum = WGK[7] * fc;
    let mut gauss_sum = WG[3] * fc;
    for (j, (&x, &w)) in XGK.iter().zip(WGK.iter()).take(7).enumerate() {
        let dx = half * x;
        let pair = eval(center - dx)? + eval(center + dx)?;
        kronrod_sum += w * pair;
        if j % 2 == 1 {
            gauss_sum += WG[j / 2] * pair;
        }
    }
    let value = kronrod_sum * half;
    let raw_error = ((kronrod_sum - gauss_sum) * half).abs();
    // Below this the Gauss/Kronrod difference is rounding noise.
    let roundoff = 50.0 * f64::EPSILON * value.abs();
    Ok(Segment {
        lo,
        hi,
        value,
        error: raw_error.max(roundoff),
    })
}

/// Integrates `f` over `[lo, hi]` to absolute tolerance `abs_tol`.
pub fn integrate<F: Fn(f64) -> f64>(
    f: F,
    lo: f64,
    hi: f64,
    abs_tol: f64,
) -> Result<Integral, QuadratureError> {
    integrate_with_limit(f, lo, hi, abs_tol, DEFAULT_MAX_INTERVALS)
}

pub fn integrate_with_limit<F: Fn(f64) -> f64>(
    f: F,
    lo: f64,
    hi: f64,
    abs_tol: f64,
    max_intervals: usize,
) -> Result<Integral, QuadratureError> {
    if lo == hi {
        return Ok(Integral {
            value: 0.0,
            error_estimate: 0.0,
            intervals: 0,
        });
    }
    let mut heap = BinaryHeap::new();
    let first = kronrod(&f, lo, hi)?;
    let mut total_error = first.error;
    heap.push(first);

    while total_error > abs_tol {
        if heap.len() >= max_intervals {
            return Err(QuadratureError::NotConverged {
                achieved: total_error,
                requested: abs_tol,
                intervals: heap.len(),
            });
        }
        let worst = heap.pop().expect("heap is never empty");
        let mid = 0.5 * (worst.lo + worst.hi);
        if mid <= worst.lo || mid >= worst.hi {
            // Interval collapsed to adjacent floats; cannot refine further.
            heap.push(worst);
            return Err(QuadratureError::NotConverged {
                achieved: total_error,
                requested: abs_tol,
                intervals: heap.len(),
            });
        }
        let left = kronrod(&f, worst.lo, mid)?;
        let right = kronrod(&f, mid, worst.hi)?;
        total_error += left.error + right.error - worst.error;
        heap.push(left);
        heap.push(right);
        // Re-sum occasionally to stop drift in the running total.
        if heap.len() % 64 == 0 {
            total_error = heap.iter().map(|s| s.error).sum();
        }
    }

    let value = heap.iter().map(|s| s.value).sum();
    let error_estimate = heap.iter().map(|s| s.error).sum();
    Ok(Integral {
        value,
        error_estimate,
        intervals: heap.len(),
    })
}

/// Upper integration limit for an integrand decaying like `exp(-rate * t)`.
///
/// `magnitude(t)` bounds the integrand at `t`; the returned cut-off `T`
/// satisfies `magnitude(T) * 2 / rate < tail_mass`, which bounds the
/// neglected tail whenever the decay is at least exponential with `rate`
/// beyond `T`.
pub fn exponential_cutoff<F: Fn(f64) -> f64>(rate: f64, tail_mass: f64, magnitude: F) -> f64 {
    let mut t = 32.0 / rate;
    for _ in 0..200 {
        if magnitude(t).abs() * 2.0 / rate < tail_mass {
            return t;
        }
        t *= 1.25;
    }
    t
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn polynomial_is_exact() {
        let r = integrate(|x| 3.0 * x * x - 2.0 * x + 1.0, 0.0, 2.0, 1e-12).unwrap();
        assert!((r.value - 6.0).abs() < 1e-13);
    }

    #[test]
    fn exponential_density_integrates_to_one() {
        let rate = 0.3;
        let cut = exponential_cutoff(rate, 1e-14, |t| rate * (-rate * t).exp());
        let r = integrate(|t| rate * (-rate * t).exp(), 0.0, cut, 1e-12).unwrap();
        assert!((r.value - 1.0).abs() < 1e-12, "{}", r.value);
    }

    #[test]
    fn oscillatory_integrand() {
        let pi = std::f64::consts::PI;
        let r = integrate(|x| (-x).exp() * (20.0 * x).sin(), 0.0, pi, 1e-12).unwrap();
        let exact = 20.0 * (1.0 - (-pi).exp()) / 401.0;
        assert!((r.value - exact).abs() < 1e-12);
        assert!(r.intervals > 1);
    }

    #[test]
    fn reports_non_convergence() {
        let err = integrate_with_limit(|x| (1.0 / x).sin(), 1e-9, 1.0, 1e-15, 8).unwrap_err();
        assert!(matches!(
            err,
            QuadratureError::NotConverged { intervals: 8, .. }
        ));
    }

    #[test]
    fn rejects_nan() {
        let err = integrate(|_| f64::NAN, 0.0, 1.0, 1e-9).unwrap_err();
        assert!(matches!(err, QuadratureError::NonFinite { .. }));
    }
}
