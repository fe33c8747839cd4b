use copestop::policy::{
    decide, in_stopping_set, send_boundary, threshold, Decision, PolicyParams, StateDegree,
};
use proptest::prelude::*;

fn params() -> impl Strategy<Value = PolicyParams> {
    (0.0f64..50.0, 0.1f64..100.0, 0.001f64..0.5, 1u32..80)
        .prop_map(|(ld, lt, delta, l)| PolicyParams::with_unit_gain(ld, lt, delta, l).unwrap())
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn stopping_set_is_upward_closed(p in params(), d in 1u32..40) {
        let here = in_stopping_set(StateDegree::new(d).unwrap(), &p).unwrap();
        let next = in_stopping_set(StateDegree::new(d + 1).unwrap(), &p).unwrap();
        prop_assert!(!here || next);
    }

    #[test]
    fn decide_matches_boundary(p in params(), d in 1u32..200) {
        let expected = if d >= send_boundary(&p) { Decision::Send } else { Decision::Wait };
        prop_assert_eq!(decide(StateDegree::new(d).unwrap(), &p), expected);
    }

    #[test]
    fn threshold_moves_the_right_way(p in params(), bump in 1.01f64..3.0) {
        let d = threshold(&p);
        let with = |ld: f64, lt: f64, delta: f64, l: u32| {
            threshold(&PolicyParams::with_unit_gain(ld, lt, delta, l).unwrap())
        };
        let (ld, lt, delta, l) = (p.lambda_d(), p.lambda_t(), p.delta(), p.buffer_size());
        prop_assert!(with(ld * bump, lt, delta, l) >= d);
        prop_assert!(with(ld, lt * bump, delta, l) >= d);
        prop_assert!(with(ld, lt, delta * bump, l) <= d);
        prop_assert!(with(ld, lt, delta, l + 1) <= d);
    }
}
