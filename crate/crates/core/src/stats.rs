//! Goodness of fit against an exponential distribution: Kolmogorov–Smirnov
//! statistic and quantile–quantile points.

pub fn exponential_cdf(x: f64, rate: f64) -> f64 {
    if x <= 0.0 {
        0.0
    } else {
        -(-rate * x).exp_m1()
    }
}

pub fn exponential_quantile(p: f64, rate: f64) -> f64 {
    -(-p).ln_1p() / rate
}

/// One-sample KS statistic `sup |F_n - F|` against `Exp(rate)`.
pub fn ks_statistic_exponential(samples: &[f64], rate: f64) -> f64 {
    let mut sorted = samples.to_vec();
    sorted.sort_by(f64::total_cmp);
    let n = sorted.len() as f64;
    sorted
        .iter()
        .enumerate()
        .map(|(i, &x)| {
            let f = exponential_cdf(x, rate);
            let above = (i + 1) as f64 / n - f;
            let below = f - i as f64 / n;
            above.max(below)
        })
        .fold(0.0, f64::max)
}

/// Asymptotic 5% critical value with the small-sample correction
/// `1.358 / (sqrt(n) + 0.12 + 0.11 / sqrt(n))`.
pub fn ks_critical_5pct(n: usize) -> f64 {
    let r = (n as f64).sqrt();
    1.358 / (r + 0.12 + 0.11 / r)
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct KsOutcome {
    pub n: usize,
    pub statistic: f64,
    pub critical: f64,
}

impl KsOutcome {
    pub fn passes(&self) -> bool {
        self.statistic < self.critical
    }
}

pub fn ks_test_exponential(samples: &[f64], rate: f64) -> KsOutcome {
    KsOutcome {
        n: samples.len(),
        statistic: ks_statistic_exponential(samples, rate),
        critical: ks_critical_5pct(samples.len()),
    }
}

/// `(theoretical, empirical)` quantile pairs.
///
/// With `n <= max_points` every order statistic is paired with the level
/// `(i - 0.5) / n`. Otherwise `max_points` evenly spaced levels are used and
/// the empirical quantile is interpolated between order statistics at
/// position `p n + 0.5`.
pub fn qq_points(samples: &[f64], rate: f64, max_points: usize) -> Vec<(f64, f64)> {
    let mut sorted = samples.to_vec();
    sorted.sort_by(f64::total_cmp);
    let n = sorted.len();
    if n == 0 || max_points == 0 {
        return Vec::new();
    }
    let m = n.min(max_points);
    (1..=m)
        .map(|k| {
            let p = (k as f64 - 0.5) / m as f64;
            let empirical = if m == n {
                sorted[k - 1]
            } else {
                let pos = (p * n as f64 + 0.5).clamp(1.0, n as f64);
                let lo = pos.floor() as usize;
                let frac = pos - lo as f64;
                let hi = (lo + 1).min(n);
                sorted[lo - 1] + frac * (sorted[hi - 1] - sorted[lo - 1])
            };
            (exponential_quantile(p, rate), empirical)
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn grid(n: usize, rate: f64) -> Vec<f64> {
        (1..=n)
            .map(|i| exponential_quantile((i as f64 - 0.5) / n as f64, rate))
            .collect()
    }

    #[test]
    fn quantile_inverts_cdf() {
        for p in [0.001, 0.3, 0.5, 0.99] {
            assert!((exponential_cdf(exponential_quantile(p, 2.5), 2.5) - p).abs() < 1e-14);
        }
    }

    #[test]
    fn grid_samples_lie_on_diagonal() {
        let pts = qq_points(&grid(100, 3.0), 3.0, 100);
        assert_eq!(pts.len(), 100);
        for (t, e) in pts {
            assert!((t - e).abs() < 1e-12);
        }
    }

    #[test]
    fn grid_has_minimal_ks() {
        // Midpoint grid puts every jump exactly 1/(2n) away from the CDF.
        let d = ks_statistic_exponential(&grid(200, 1.0), 1.0);
        assert!((d - 0.5 / 200.0).abs() < 1e-12);
    }

    #[test]
    fn critical_value_examples() {
        assert!((ks_critical_5pct(10_000) - 0.013_563).abs() < 1e-5);
        assert!((ks_critical_5pct(100) - 0.134_0).abs() < 1e-3);
    }

    #[test]
    fn detects_wrong_rate() {
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        let xs: Vec<f64> = (0..5000)
            .map(|_| exponential_quantile(rng.random(), 2.0))
            .collect();
        assert!(ks_test_exponential(&xs, 2.0).passes());
        assert!(!ks_test_exponential(&xs, 2.4).passes());
    }

    #[test]
    fn thinned_points_interpolate() {
        let pts = qq_points(&grid(10_000, 1.0), 1.0, 100);
        assert_eq!(pts.len(), 100);
        for (t, e) in pts {
            assert!((t - e).abs() < 1e-3 * (1.0 + t), "{t} {e}");
        }
    }
}
