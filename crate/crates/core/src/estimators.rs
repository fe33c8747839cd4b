//! Online estimators for the two rates the stopping rule needs.
//!
//! `lambda_t` is a plain opportunity counter divided by elapsed time.
//! `lambda_d` is predicted one observation window ahead by an LMS adaptive
//! filter fed with per-window degree-growth measurements.

use std::collections::VecDeque;

use thiserror::Error;

#[derive(Debug, Clone, Copy, PartialEq, Error)]
pub enum EstimatorError {
    #[error("clock regression: event at {now} precedes counter start {start}")]
    ClockRegression { now: f64, start: f64 },
    #[error("elapsed time undefined: now {now} is not after counter start {start}")]
    UndefinedElapsed { now: f64, start: f64 },
    #[error("invalid LMS configuration: {0}")]
    InvalidFilter(&'static str),
}

/// Least-mean-squares one-step predictor.
#[derive(Debug, Clone, PartialEq)]
pub struct LmsFilter {
    weights: Vec<f64>,
    /// Most recent observation first.
    history: VecDeque<f64>,
    step: f64,
    observed: u64,
    running_sum: f64,
}

impl LmsFilter {
    /// Filter with `taps` coefficients initialised to a moving average.
    pub fn new(taps: usize, step: f64) -> Result<Self, EstimatorError> {
        if taps == 0 {
            return Err(EstimatorError::InvalidFilter("tap count must be >= 1"));
        }
        Self::with_weights(vec![1.0 / taps as f64; taps], step)
    }

    pub fn with_weights(weights: Vec<f64>, step: f64) -> Result<Self, EstimatorError> {
        if weights.is_empty() {
            return Err(EstimatorError::InvalidFilter("tap count must be >= 1"));
        }
        if !(step > 0.0 && step.is_finite()) {
            return Err(EstimatorError::InvalidFilter("step size must be > 0"));
        }
        Ok(Self {
            history: VecDeque::with_capacity(weights.len()),
            weights,
            step,
            observed: 0,
            running_sum: 0.0,
        })
    }

    /// Filter whose history is already primed, most recent value first.
    pub fn primed(weights: Vec<f64>, history: &[f64], step: f64) -> Result<Self, EstimatorError> {
        if history.len() != weights.len() {
            return Err(EstimatorError::InvalidFilter(
                "history length must equal tap count",
            ));
        }
        let mut filter = Self::with_weights(weights, step)?;
        filter.history.extend(history.iter().copied());
        filter.observed = history.len() as u64;
        filter.running_sum = history.iter().sum();
        Ok(filter)
    }

    pub fn taps(&self) -> usize {
        self.weights.len()
    }

    pub fn weights(&self) -> &[f64] {
        &self.weights
    }

    pub fn step(&self) -> f64 {
        self.step
    }

    pub fn is_primed(&self) -> bool {
        self.history.len() == self.weights.len()
    }

    /// Prediction of the next observation. Before the history holds `taps`
    /// values this is the mean of what has been seen (0 when nothing has).
    pub fn predict(&self) -> f64 {
        if !self.is_primed() {
            if self.observed == 0 {
                return 0.0;
            }
            return self.running_sum / self.observed as f64;
        }
        self.weights
            .iter()
            .zip(&self.history)
            .map(|(w, u)| w * u)
            .sum()
    }

    /// Feeds the newest observation. Returns the prediction error.
    pub fn update(&mut self, observed: f64) -> f64 {
        let error = observed - self.predict();
        if self.is_primed() && error != 0.0 {
            let scale = self.step * error;
            for (w, u) in self.weights.iter_mut().zip(&self.history) {
                *w += scale * u;
            }
        }
        if self.is_primed() {
            self.history.pop_back();
        }
        self.history.push_front(observed);
        self.observed += 1;
        self.running_sum += observed;
        error
    }
}

/// Counts events since `start` (transmission opportunities, in practice).
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RateCounter {
    count: u64,
    start: f64,
}

impl RateCounter {
    pub fn new(start: f64) -> Self {
        Self { count: 0, start }
    }

    pub fn count(&self) -> u64 {
        self.count
    }

    pub fn start(&self) -> f64 {
        self.start
    }

    pub fn record(&mut self, now: f64) -> Result<(), EstimatorError> {
        if now < self.start {
            return Err(EstimatorError::ClockRegression {
                now,
                start: self.start,
            });
        }
        self.count += 1;
        Ok(())
    }

    /// Events per time unit since `start`; zero before the first event.
    pub fn estimate(&self, now: f64) -> Result<f64, EstimatorError> {
        if !(now > self.start) {
            return Err(EstimatorError::UndefinedElapsed {
                now,
                start: self.start,
            });
        }
        if self.count == 0 {
            return Ok(0.0);
        }
        Ok(self.count as f64 / (now - self.start))
    }
}

/// Measured probabilities that a data arrival (`p_p`) or a reception report
/// (`p_r`) raised the best coding degree during one window.
#[derive(Debug, Clone, Copy, Default, PartialEq)]
pub struct DegreeGrowthStats {
    pub data_events: u64,
    pub data_increments: u64,
    pub report_events: u64,
    pub report_increments: u64,
}

impl DegreeGrowthStats {
    fn ratio(increments: u64, events: u64) -> f64 {
        if events == 0 {
            0.0
        } else {
            (increments as f64 / events as f64).min(1.0)
        }
    }

    pub fn observed_p_p(&self) -> f64 {
        Self::ratio(self.data_increments, self.data_events)
    }

    pub fn observed_p_r(&self) -> f64 {
        Self::ratio(self.report_increments, self.report_events)
    }

    pub fn merge(&mut self, other: &DegreeGrowthStats) {
        self.data_events += other.data_events;
        self.data_increments += other.data_increments;
        self.report_events += other.report_events;
        self.report_increments += other.report_increments;
    }
}

/// `lambda_r * p_r + lambda_p * p_p` with the probabilities taken from
/// measured counts.
pub fn degree_growth_estimate(stats: &DegreeGrowthStats, lambda_p: f64, lambda_r: f64) -> f64 {
    lambda_r * stats.observed_p_r() + lambda_p * stats.observed_p_p()
}

/// LMS predictor over per-window `lambda_d` observations, normalised by the
/// running maximum so the step size stays inside the stability region
/// regardless of the rate's scale.
#[derive(Debug, Clone, PartialEq)]
pub struct DegreeRateEstimator {
    filter: LmsFilter,
    scale: f64,
}

impl DegreeRateEstimator {
    pub fn new(taps: usize, step: f64) -> Result<Self, EstimatorError> {
        Ok(Self {
            filter: LmsFilter::new(taps, step)?,
            scale: 0.0,
        })
    }

    pub fn observe(&mut self, lambda_d: f64) {
        self.scale = self.scale.max(lambda_d);
        let normalized = if self.scale > 0.0 {
            lambda_d / self.scale
        } else {
            0.0
        };
        self.filter.update(normalized);
    }

    /// Predicted `lambda_d` for the next window, never negative.
    pub fn predict(&self) -> f64 {
        (self.filter.predict() * self.scale).max(0.0)
    }

    pub fn filter(&self) -> &LmsFilter {
        &self.filter
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn predict_examples() {
        let f = LmsFilter::primed(vec![1.0, 0.0, 0.0, 0.0], &[7.0, 1.0, 2.0, 3.0], 0.01).unwrap();
        assert_eq!(f.predict(), 7.0);
        let f = LmsFilter::primed(vec![0.0; 4], &[7.0, 1.0, 2.0, 3.0], 0.01).unwrap();
        assert_eq!(f.predict(), 0.0);
        let f = LmsFilter::primed(vec![0.25; 4], &[4.0; 4], 0.01).unwrap();
        assert_eq!(f.predict(), 4.0);
    }

    #[test]
    fn cold_start_uses_running_mean() {
        let mut f = LmsFilter::new(4, 0.01).unwrap();
        assert_eq!(f.predict(), 0.0);
        f.update(2.0);
        f.update(4.0);
        assert_eq!(f.predict(), 3.0);
        assert!(!f.is_primed());
    }

    #[test]
    fn update_example() {
        let mut f = LmsFilter::primed(vec![0.0; 4], &[1.0; 4], 0.1).unwrap();
        let err = f.update(1.0);
        assert_eq!(err, 1.0);
        for w in f.weights() {
            assert!((w - 0.1).abs() < 1e-15);
        }
    }

    #[test]
    fn zero_error_leaves_weights_bitwise() {
        let mut f = LmsFilter::primed(vec![0.25; 4], &[4.0; 4], 0.01).unwrap();
        let before: Vec<u64> = f.weights().iter().map(|w| w.to_bits()).collect();
        for _ in 0..100 {
            assert_eq!(f.update(4.0), 0.0);
        }
        let after: Vec<u64> = f.weights().iter().map(|w| w.to_bits()).collect();
        assert_eq!(before, after);
    }

    #[test]
    fn converges_on_constant_stream_from_zero_weights() {
        let u = 0.8;
        let mut f = LmsFilter::primed(vec![0.0; 4], &[u; 4], 0.01).unwrap();
        for _ in 0..500 {
            f.update(u);
        }
        assert!((f.predict() - u).abs() / u < 0.1, "{}", f.predict());
    }

    #[test]
    fn normalised_estimator_tracks_large_rates() {
        let mut est = DegreeRateEstimator::new(4, 0.01).unwrap();
        for _ in 0..500 {
            est.observe(37.5);
        }
        assert!((est.predict() - 37.5).abs() / 37.5 < 0.1);
    }

    #[test]
    fn rejects_bad_configuration() {
        assert!(LmsFilter::new(0, 0.01).is_err());
        assert!(LmsFilter::new(4, 0.0).is_err());
        assert!(LmsFilter::primed(vec![0.0; 4], &[1.0; 3], 0.01).is_err());
    }

    #[test]
    fn counter_examples() {
        let mut c = RateCounter::new(0.0);
        c.record(0.5).unwrap();
        assert_eq!(c.count(), 1);
        for i in 0..9 {
            c.record(0.6 + f64::from(i) * 0.1).unwrap();
        }
        assert_eq!(c.count(), 10);
        assert_eq!(c.estimate(2.0).unwrap(), 5.0);
        assert_eq!(RateCounter::new(0.0).estimate(3.0).unwrap(), 0.0);
    }

    #[test]
    fn counter_fixture_near_measured_magnitude() {
        let mut c = RateCounter::new(0.0);
        for i in 0..58 {
            c.record(f64::from(i) * 0.017).unwrap();
        }
        let rate = c.estimate(0.9967).unwrap();
        assert!((rate - 58.19).abs() < 0.01, "{rate}");
    }

    #[test]
    fn counter_errors() {
        let mut c = RateCounter::new(5.0);
        assert!(matches!(
            c.record(4.0),
            Err(EstimatorError::ClockRegression { .. })
        ));
        assert!(matches!(
            c.estimate(5.0),
            Err(EstimatorError::UndefinedElapsed { .. })
        ));
    }

    #[test]
    fn growth_estimate_examples() {
        assert_eq!(
            degree_growth_estimate(&DegreeGrowthStats::default(), 3.0, 4.0),
            0.0
        );
        let stats = DegreeGrowthStats {
            data_events: 8,
            data_increments: 1,
            report_events: 4,
            report_increments: 1,
        };
        assert_eq!(degree_growth_estimate(&stats, 4.0, 2.0), 1.0);
        let stats = DegreeGrowthStats {
            data_events: 10,
            data_increments: 3,
            ..Default::default()
        };
        assert!((degree_growth_estimate(&stats, 10.0, 0.0) - 3.0).abs() < 1e-12);
    }

    #[test]
    fn stable_over_a_million_bounded_updates() {
        use rand::{Rng, SeedableRng};
        let u_max = 20.0;
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(3);
        let mut f = LmsFilter::new(4, 0.01 / (u_max * u_max)).unwrap();
        for _ in 0..1_000_000 {
            f.update(rng.random::<f64>() * u_max);
        }
        assert!(f.weights().iter().all(|w| w.is_finite() && w.abs() < 10.0));
    }

    proptest! {
        #[test]
        fn weights_stay_finite_for_bounded_inputs(
            u_max in 0.1f64..50.0,
            inputs in proptest::collection::vec(0.0f64..1.0, 1..400),
        ) {
            let step = 0.01 / (u_max * u_max);
            let mut f = LmsFilter::new(4, step).unwrap();
            for (i, x) in inputs.iter().cycle().take(20_000).enumerate() {
                f.update(x * u_max * ((i % 7) as f64 / 6.0));
            }
            prop_assert!(f.weights().iter().all(|w| w.is_finite() && w.abs() < 1e3));
        }

        #[test]
        fn counter_rate_is_exact(n in 1u64..5000, elapsed in 0.01f64..1e4) {
            let mut c = RateCounter::new(1.0);
            for _ in 0..n {
                c.record(1.0).unwrap();
            }
            prop_assert_eq!(c.estimate(1.0 + elapsed).unwrap(), n as f64 / ((1.0 + elapsed) - 1.0));
        }
    }
}
