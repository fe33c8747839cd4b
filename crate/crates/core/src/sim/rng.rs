//! Seed derivation and exponential sampling.
//!
//! Every random stream in a run is a ChaCha8 generator seeded from
//! `mix(mix(run_seed, stream), index)`, so streams are independent of each
//! other and of the order in which the engine consumes them.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::SimError;

/// Name of the generator, recorded in every report.
pub const RNG_ALGORITHM: &str = "ChaCha8";

/// One round of the splitmix64 finaliser.
pub fn splitmix64(x: u64) -> u64 {
    let mut z = x.wrapping_add(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Combines two words into a well-mixed seed.
pub fn mix(a: u64, b: u64) -> u64 {
    splitmix64(a ^ splitmix64(b))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
#[repr(u64)]
pub enum Stream {
    Topology = 1,
    Flows = 2,
    Arrivals = 3,
    Opportunities = 4,
    Reports = 5,
    Loss = 6,
    Payload = 7,
}

pub fn stream_rng(seed: u64, stream: Stream, index: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(mix(mix(seed, stream as u64), index))
}

/// Inversion `-ln(u) / rate` for `u` in `(0, 1]`.
pub fn interval_from_uniform(u: f64, rate: f64) -> f64 {
    -u.ln() / rate
}

/// Exponential inter-event time with the given rate.
pub fn sample_interval<R: Rng + ?Sized>(rate: f64, rng: &mut R) -> Result<f64, SimError> {
    if !(rate > 0.0 && rate.is_finite()) {
        return Err(SimError::Rate(rate));
    }
    // random() is in [0, 1); flip it so ln never sees zero.
    let u = 1.0 - rng.random::<f64>();
    Ok(interval_from_uniform(u, rate))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn inversion_identity() {
        let r = 4.0;
        assert!((interval_from_uniform((-1.0f64).exp(), r) - 1.0 / r).abs() < 1e-15);
    }

    #[test]
    fn sample_mean_within_three_sigma() {
        let mut rng = stream_rng(5, Stream::Opportunities, 0);
        let n = 10_000;
        let rate = 5.0;
        let mean: f64 = (0..n)
            .map(|_| sample_interval(rate, &mut rng).unwrap())
            .sum::<f64>()
            / n as f64;
        // The exponential's standard deviation equals its mean.
        let sigma = (1.0 / rate) / (n as f64).sqrt();
        assert!((mean - 0.2).abs() < 3.0 * sigma, "{mean}");
    }

    #[test]
    fn same_seed_same_sequence() {
        let draw = |seed| {
            let mut rng = stream_rng(seed, Stream::Arrivals, 3);
            (0..5)
                .map(|_| sample_interval(1.0, &mut rng).unwrap())
                .collect::<Vec<_>>()
        };
        assert_eq!(draw(11), draw(11));
        assert_ne!(draw(11), draw(12));
    }

    #[test]
    fn rejects_nonpositive_rate() {
        let mut rng = stream_rng(0, Stream::Loss, 0);
        assert!(matches!(
            sample_interval(0.0, &mut rng),
            Err(SimError::Rate(_))
        ));
        assert!(matches!(
            sample_interval(-1.0, &mut rng),
            Err(SimError::Rate(_))
        ));
    }

    #[test]
    fn streams_differ() {
        let a: u64 = stream_rng(1, Stream::Arrivals, 0).random();
        let b: u64 = stream_rng(1, Stream::Reports, 0).random();
        let c: u64 = stream_rng(1, Stream::Arrivals, 1).random();
        assert!(a != b && a != c && b != c);
    }
}
