//! The acceptance suite as library functions, shared by the `verify`
//! subcommand and the `acceptance` test target.

use std::time::Instant;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::coding::{
    decode, encode, exhaustive_best_option, find_best_coding_option, is_decodable,
    NeighborKnowledge, Packet, PacketHeader, PacketSource, PayloadPool, PayloadTag,
};
use crate::config::{PolicyKind, ScenarioConfig};
use crate::estimators::{DegreeRateEstimator, LmsFilter, RateCounter};
use crate::experiment::{run_matrix, summarize, write_csv, CellSummary, RunRecord};
use crate::ids::{FlowId, NodeId, PacketId};
use crate::policy::{
    expected_discount, expected_discount_numeric, expected_weighted_discount,
    expected_weighted_discount_numeric, in_stopping_set, send_boundary, threshold, value_iteration,
    PolicyParams, StateDegree,
};
use crate::sim::rng::{sample_interval, stream_rng, Stream};
use crate::sim::{Flow, Injection, MetricsReport, Mode, Simulator, Topology};
use crate::stats::{ks_test_exponential, qq_points};

/// Loads of the desk matrix.
pub const DESK_LOADS: [usize; 4] = [4, 8, 16, 32];
/// Seeds of the desk matrix.
pub const DESK_SEEDS: [u64; 5] = [1, 2, 3, 4, 5];
/// Policies compared in the desk matrix.
pub const DESK_POLICIES: [PolicyKind; 2] = [PolicyKind::OptimalStopping, PolicyKind::ImmediateSend];

const GRID_LAMBDA_T: [f64; 5] = [0.1, 1.0, 5.0, 10.0, 100.0];
const GRID_DISCOUNT: [f64; 4] = [0.02, 0.2, 2.0, 10.0];
const BUFFER: u32 = 40;

#[derive(Debug, Clone, PartialEq)]
pub struct CriterionResult {
    pub id: u8,
    pub title: &'static str,
    pub passed: bool,
    pub detail: String,
    pub seconds: f64,
}

impl CriterionResult {
    /// `criterion 3 PASS value iteration oracle (0.41 s): ...`
    pub fn line(&self) -> String {
        format!(
            "criterion {:>2} {} {} ({:.2} s): {}",
            self.id,
            if self.passed { "PASS" } else { "FAIL" },
            self.title,
            self.seconds,
            self.detail
        )
    }
}

fn timed(id: u8, title: &'static str, f: impl FnOnce() -> (bool, String)) -> CriterionResult {
    let start = Instant::now();
    let (passed, detail) = f();
    CriterionResult {
        id,
        title,
        passed,
        detail,
        seconds: start.elapsed().as_secs_f64(),
    }
}

/// Params with discount rate `delta * L` equal to `discount`.
fn grid_params(lambda_d: f64, lambda_t: f64, discount: f64) -> PolicyParams {
    PolicyParams::with_unit_gain(lambda_d, lambda_t, discount / f64::from(BUFFER), BUFFER)
        .expect("grid parameters are valid")
}

/// `lambda_d` that puts `d*` at `target` for unit gain.
fn lambda_d_for(target: f64, lambda_t: f64, discount: f64) -> f64 {
    target * discount * (discount + lambda_t) / lambda_t
}

/// Closed-form discount moments against quadrature over the rate grid.
pub fn closed_form_identities() -> CriterionResult {
    timed(1, "closed-form integral identities", || {
        let mut worst: f64 = 0.0;
        for lt in GRID_LAMBDA_T {
            for dl in GRID_DISCOUNT {
                let p = grid_params(1.0, lt, dl);
                let (Ok(e1), Ok(e2)) = (
                    expected_discount_numeric(&p),
                    expected_weighted_discount_numeric(&p),
                ) else {
                    return (false, format!("quadrature failed at lambda_t={lt} dL={dl}"));
                };
                worst = worst
                    .max((expected_discount(&p) - e1).abs())
                    .max((expected_weighted_discount(&p) - e2).abs());
            }
        }
        (
            worst < 1e-9,
            format!("max deviation {worst:.2e} over 20 grid points"),
        )
    })
}

/// Smallest stopping-set member against `ceil(d*)`.
pub fn threshold_equivalence() -> CriterionResult {
    timed(2, "threshold / stopping-set equivalence", || {
        let mut checked = 0;
        for lt in GRID_LAMBDA_T {
            for dl in GRID_DISCOUNT {
                for target in [0.4, 2.5, 7.3, 15.6] {
                    let p = grid_params(lambda_d_for(target, lt, dl), lt, dl);
                    let boundary = send_boundary(&p);
                    let member = |d: u32| in_stopping_set(StateDegree::new(d).unwrap(), &p);
                    // The set is upward closed, so the boundary pair decides
                    // the smallest member; low states are checked as well.
                    let below_ok = (1..boundary).all(|d| matches!(member(d), Ok(false)));
                    let at_ok = matches!(member(boundary), Ok(true));
                    let above_ok = matches!(member(boundary + 1), Ok(true));
                    if !(below_ok && at_ok && above_ok) {
                        return (
                            false,
                            format!(
                                "lambda_t={lt} dL={dl} d*={:.6}: boundary {boundary} disagrees",
                                threshold(&p)
                            ),
                        );
                    }
                    checked += 1;
                }
            }
        }
        (true, format!("{checked} parameter sets agree"))
    })
}

/// Value iteration against the closed-form send boundary.
pub fn value_iteration_oracle() -> CriterionResult {
    timed(3, "value iteration oracle", || {
        let cases = [
            (1.5, 5.0, 2.0),
            (2.2, 10.0, 2.0),
            (3.7, 1.0, 0.2),
            (5.0, 5.0, 0.5),
            (6.5, 20.0, 2.0),
            (8.1, 2.0, 1.0),
            (10.4, 10.0, 4.0),
            (13.0, 0.5, 0.1),
            (16.6, 50.0, 2.0),
            (20.0, 3.0, 1.5),
        ];
        for (target, lt, dl) in cases {
            let p = grid_params(lambda_d_for(target, lt, dl), lt, dl);
            let d_max = threshold(&p).ceil() as u32 + 50;
            let sol = match value_iteration(&p, d_max, 1e-10) {
                Ok(s) => s,
                Err(e) => return (false, format!("d*={target}: {e}")),
            };
            let expected = send_boundary(&p);
            if !sol.is_threshold_type() || sol.threshold_state != expected || sol.value(1) != 0.0 {
                return (
                    false,
                    format!(
                        "d*={target}: threshold_state {} vs boundary {expected}",
                        sol.threshold_state
                    ),
                );
            }
        }
        (
            true,
            "10 parameter sets, d* from 1.5 to 20, v(1) = 0".to_string(),
        )
    })
}

/// Desk config with a horizon long enough for the opportunity fit.
pub fn opportunity_fit_config() -> ScenarioConfig {
    ScenarioConfig {
        flow_count: 8,
        horizon: 300.0,
        ..ScenarioConfig::desk()
    }
}

/// Pooled per-node opportunity gaps from one desk run.
pub fn opportunity_samples(config: &ScenarioConfig, seed: u64) -> Vec<f64> {
    let mut sim = Simulator::new(config, seed).expect("desk config is valid");
    sim.record_intervals();
    sim.run_until(config.horizon).expect("desk run");
    sim.opportunity_intervals().to_vec()
}

/// Largest QQ deviation as a fraction of the sample range.
pub fn qq_max_deviation(samples: &[f64], rate: f64) -> f64 {
    let (lo, hi) = samples
        .iter()
        .fold((f64::INFINITY, f64::NEG_INFINITY), |(l, h), &x| {
            (l.min(x), h.max(x))
        });
    let worst = qq_points(samples, rate, crate::experiment::QQ_POINTS)
        .iter()
        .map(|(t, e)| (t - e).abs())
        .fold(0.0, f64::max);
    worst / (hi - lo)
}

/// KS and QQ fit of simulated opportunity gaps.
pub fn opportunity_fit() -> CriterionResult {
    timed(4, "opportunity inter-arrivals are exponential", || {
        let cfg = opportunity_fit_config();
        let samples = opportunity_samples(&cfg, 1);
        let ks = ks_test_exponential(&samples, cfg.opportunity_rate);
        let qq = qq_max_deviation(&samples, cfg.opportunity_rate);
        (
            samples.len() >= 10_000 && ks.passes() && qq < 0.05,
            format!(
                "n={} KS {:.5} < {:.5}, max QQ deviation {:.2}% of range",
                ks.n,
                ks.statistic,
                ks.critical,
                qq * 100.0
            ),
        )
    })
}

/// Two end nodes exchanging packets through a relay: N1 at 0 m, relay at
/// 150 m, N2 at 300 m, range 200 m.
pub fn relay_exchange(policy: PolicyKind, pairs: usize) -> MetricsReport {
    let topology = Topology::from_positions(vec![(0.0, 0.0), (150.0, 0.0), (300.0, 0.0)], 200.0);
    let flow = |id, source, destination| Flow {
        id: FlowId(id),
        source: NodeId(source),
        destination: NodeId(destination),
        packet_rate: 1.0,
    };
    let flows = vec![flow(0, 0, 2), flow(1, 2, 0)];
    let config = ScenarioConfig {
        node_count: 3,
        flow_count: 2,
        policy,
        horizon: 10.0 * pairs as f64,
        ..ScenarioConfig::desk()
    };
    let mut sim =
        Simulator::with_parts(&config, topology, flows, 0, Mode::Scripted).expect("valid parts");
    for i in 0..pairs {
        let t = 10.0 * i as f64;
        let script = [
            (t, Injection::Arrival(FlowId(0))),
            (t, Injection::Arrival(FlowId(1))),
            (t + 1.0, Injection::Opportunity(NodeId(0))),
            (t + 2.0, Injection::Opportunity(NodeId(2))),
            (t + 3.0, Injection::Opportunity(NodeId(1))),
            (t + 4.0, Injection::Opportunity(NodeId(1))),
        ];
        for (at, what) in script {
            sim.schedule(at, what).expect("future event");
        }
    }
    sim.run_until(config.horizon).expect("scripted run");
    sim.report(config.horizon).expect("report")
}

pub fn relay_micro_scenario() -> CriterionResult {
    timed(5, "relay exchange costs 3 transmissions per pair", || {
        let pairs = 10;
        let coded = relay_exchange(PolicyKind::ImmediateSend, pairs);
        let plain = relay_exchange(PolicyKind::NoCoding, pairs);
        let ok = coded.delivered == 2 * pairs as u64
            && plain.delivered == 2 * pairs as u64
            && coded.transmissions == 3 * pairs as u64
            && plain.transmissions == 4 * pairs as u64
            && coded.coding_gain == 4.0 / 3.0
            && plain.coding_gain == 1.0;
        (
            ok,
            format!(
                "{pairs} pairs: {} coded vs {} native transmissions, gain {:.6}",
                coded.transmissions, plain.transmissions, coded.coding_gain
            ),
        )
    })
}

/// Desk scenario for the trend criteria.
pub fn desk_config() -> ScenarioConfig {
    ScenarioConfig::desk()
}

pub fn run_desk_matrix() -> Vec<RunRecord> {
    run_matrix(&desk_config(), &DESK_POLICIES, &DESK_LOADS, &DESK_SEEDS).expect("desk matrix")
}

fn summary_for(s: &[CellSummary], policy: PolicyKind, load: usize) -> &CellSummary {
    s.iter()
        .find(|c| c.policy == policy && c.load == load)
        .expect("cell present")
}

/// Coding gain, delay and monotonicity trends.
pub fn desk_trends(records: &[RunRecord], seconds: f64) -> CriterionResult {
    let start = Instant::now();
    let s = summarize(records);
    let stop = |load| summary_for(&s, PolicyKind::OptimalStopping, load);
    let imm = |load| summary_for(&s, PolicyKind::ImmediateSend, load);
    let gain_ok = DESK_LOADS.iter().enumerate().all(|(i, &l)| {
        let (a, b) = (stop(l).coding_gain, imm(l).coding_gain);
        if i >= DESK_LOADS.len() - 2 {
            a > b
        } else {
            a >= b
        }
    });
    let delay_ok = DESK_LOADS
        .iter()
        .all(|&l| stop(l).mean_e2e_delay >= imm(l).mean_e2e_delay);
    let monotone = DESK_LOADS
        .windows(2)
        .all(|w| stop(w[1]).coding_gain >= stop(w[0]).coding_gain);
    let detail = DESK_LOADS
        .iter()
        .map(|&l| {
            format!(
                "{l}f gain {:.4}/{:.4} delay {:.4}/{:.4}",
                stop(l).coding_gain,
                imm(l).coding_gain,
                stop(l).mean_e2e_delay,
                imm(l).mean_e2e_delay
            )
        })
        .collect::<Vec<_>>()
        .join("; ");
    CriterionResult {
        id: 6,
        title: "desk trends: gain, delay, monotone gain (stopping/immediate)",
        passed: gain_ok && delay_ok && monotone,
        detail: format!("gain={gain_ok} delay={delay_ok} monotone={monotone}; {detail}"),
        seconds: seconds + start.elapsed().as_secs_f64(),
    }
}

/// Energy per delivered packet at the two highest loads.
pub fn desk_energy(records: &[RunRecord]) -> CriterionResult {
    timed(
        7,
        "desk energy per delivered packet (stopping/immediate)",
        || {
            let s = summarize(records);
            let mut ok = true;
            let mut parts = Vec::new();
            for &l in &DESK_LOADS[DESK_LOADS.len() - 2..] {
                let a = summary_for(&s, PolicyKind::OptimalStopping, l).energy_per_delivered;
                let b = summary_for(&s, PolicyKind::ImmediateSend, l).energy_per_delivered;
                ok &= a < b;
                parts.push(format!("{l}f {a:.4}/{b:.4} mJ"));
            }
            (ok, parts.join("; "))
        },
    )
}

/// LMS convergence, opportunity counting and zero-error updates.
pub fn estimator_suite() -> CriterionResult {
    timed(8, "estimators", || {
        // Stationary degree-growth stream with 5% uniform noise.
        let truth = 6.0;
        let mut rng = ChaCha8Rng::seed_from_u64(8);
        let mut lms = DegreeRateEstimator::new(4, 0.01).expect("valid filter");
        let mut converged_at = None;
        for i in 1..=500 {
            lms.observe(truth * (1.0 + 0.05 * (2.0 * rng.random::<f64>() - 1.0)));
            let rel = (lms.predict() - truth).abs() / truth;
            if rel < 0.1 && converged_at.is_none() {
                converged_at = Some(i);
            }
        }
        let final_rel = (lms.predict() - truth).abs() / truth;
        let lms_ok = converged_at.is_some() && final_rel < 0.1;

        // Opportunity counting at rate 15 over 2000 draws.
        let rate = 15.0;
        let mut counter = RateCounter::new(0.0);
        let mut t = 0.0;
        let mut opp_rng = stream_rng(8, Stream::Opportunities, 0);
        for _ in 0..2000 {
            t += sample_interval(rate, &mut opp_rng).expect("positive rate");
            counter.record(t).expect("monotone time");
        }
        let counted = counter.estimate(t).expect("elapsed > 0");
        let counter_ok = (counted - rate).abs() / rate < 0.05;

        // Exact prediction leaves weights untouched.
        let mut filter = LmsFilter::primed(vec![0.5, 0.25, 0.25, 0.0], &[4.0, 4.0, 4.0, 4.0], 0.01)
            .expect("filter");
        let before: Vec<u64> = filter.weights().iter().map(|w| w.to_bits()).collect();
        let err = filter.update(4.0);
        let after: Vec<u64> = filter.weights().iter().map(|w| w.to_bits()).collect();
        let zero_ok = err == 0.0 && before == after;

        (
            lms_ok && counter_ok && zero_ok,
            format!(
                "LMS within 10% after {} obs (final {:.2}%), counter {counted:.3} vs {rate}, zero-error update bitwise={zero_ok}",
                converged_at.map_or("never".to_string(), |i| i.to_string()),
                final_rel * 100.0
            ),
        )
    })
}

fn random_packet(rng: &mut ChaCha8Rng, id: u64, hops: u32) -> Packet {
    let next_hop = NodeId(rng.random_range(1..=hops));
    Packet {
        header: PacketHeader {
            id: PacketId(id),
            flow: FlowId(0),
            source: NodeId(0),
            destination: next_hop,
            next_hop,
            size_bytes: 1000,
            created_at: 0.0,
        },
        payload: PayloadTag(rng.random()),
    }
}

/// A random queue and knowledge where each next hop holds each foreign
/// packet with probability `p`.
pub fn random_coding_instance(
    rng: &mut ChaCha8Rng,
    len: usize,
    hops: u32,
    p: f64,
) -> (Vec<Packet>, NeighborKnowledge) {
    let queue: Vec<Packet> = (0..len as u64)
        .map(|i| random_packet(rng, i, hops))
        .collect();
    let mut knowledge = NeighborKnowledge::new((1..=hops).map(NodeId));
    for hop in 1..=hops {
        let held: Vec<PacketId> = queue
            .iter()
            .filter(|q| q.next_hop() != NodeId(hop) && rng.random_bool(p))
            .map(Packet::id)
            .collect();
        knowledge
            .apply_reception_report(NodeId(hop), held)
            .expect("hop is a neighbor");
    }
    (queue, knowledge)
}

/// Encode/decode round trips and greedy-vs-exhaustive dominance.
pub fn coding_algebra() -> CriterionResult {
    timed(9, "coding algebra", || {
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        let mut round_trips = 0;
        let mut higher_degree = 0;
        while round_trips < 1000 {
            let (queue, k) = random_coding_instance(&mut rng, 10, 6, 0.8);
            let option = find_best_coding_option(&queue, &k).expect("nonempty");
            if !matches!(is_decodable(&option, &k, &queue), Ok(true)) {
                return (false, "greedy returned an undecodable option".into());
            }
            let Ok(coded) = encode(&option, &k, &queue) else {
                return (false, "encode rejected a decodable option".into());
            };
            for &member in &option.members {
                let p = queue.packet(member).expect("member in queue");
                let pool: std::collections::HashMap<PacketId, PayloadTag> = option
                    .members
                    .iter()
                    .filter(|&&m| m != member)
                    .map(|&m| (m, queue.payload(m).expect("member in queue")))
                    .collect();
                if decode(&coded, p.next_hop(), &pool).as_ref() != Ok(p) {
                    return (false, format!("round trip failed for {member}"));
                }
            }
            higher_degree += usize::from(option.degree() > 1);
            round_trips += 1;
        }
        let mut equal = 0;
        for _ in 0..1000 {
            let (queue, k) = random_coding_instance(&mut rng, 6, 5, 0.7);
            let g = find_best_coding_option(&queue, &k)
                .expect("nonempty")
                .degree();
            let e = exhaustive_best_option(&queue, &k)
                .expect("small queue")
                .degree();
            if g < 1 || g > e {
                return (false, format!("greedy {g} vs exhaustive {e}"));
            }
            equal += usize::from(g == e);
        }
        (
            true,
            format!(
                "1000 round trips ({higher_degree} coded), 1000 queues, greedy optimal in {equal}"
            ),
        )
    })
}

/// Serialises a matrix to CSV bytes.
pub fn csv_bytes(records: &[RunRecord]) -> Vec<u8> {
    let mut buf = Vec::new();
    write_csv(records, &mut buf).expect("nonempty records");
    buf
}

pub fn determinism(first: &[RunRecord], seconds: f64) -> CriterionResult {
    let start = Instant::now();
    let a = csv_bytes(first);
    let b = csv_bytes(&run_desk_matrix());
    CriterionResult {
        id: 10,
        title: "desk matrix CSV is byte-identical across runs",
        passed: a == b,
        detail: format!("{} bytes, identical={}", a.len(), a == b),
        seconds: seconds + start.elapsed().as_secs_f64(),
    }
}

/// Runs every criterion in order, reusing one desk matrix for 6 and 7.
pub fn run_all(mut progress: impl FnMut(&CriterionResult)) -> Vec<CriterionResult> {
    let mut results = Vec::new();
    let mut push = |r: CriterionResult, results: &mut Vec<CriterionResult>| {
        progress(&r);
        results.push(r);
    };
    push(closed_form_identities(), &mut results);
    push(threshold_equivalence(), &mut results);
    push(value_iteration_oracle(), &mut results);
    push(opportunity_fit(), &mut results);
    push(relay_micro_scenario(), &mut results);
    let start = Instant::now();
    let records = run_desk_matrix();
    let matrix_seconds = start.elapsed().as_secs_f64();
    push(desk_trends(&records, matrix_seconds), &mut results);
    push(desk_energy(&records), &mut results);
    push(estimator_suite(), &mut results);
    push(coding_algebra(), &mut results);
    push(determinism(&records, matrix_seconds), &mut results);
    results
}

/// Fixed-width pass/fail table.
pub fn format_table(results: &[CriterionResult]) -> String {
    let mut out = format!(
        "{:<4} {:<6} {:>9}  {}\n",
        "id", "result", "seconds", "criterion"
    );
    for r in results {
        out.push_str(&format!(
            "{:<4} {:<6} {:>9.2}  {}\n",
            r.id,
            if r.passed { "PASS" } else { "FAIL" },
            r.seconds,
            r.title
        ));
    }
    let passed = results.iter().filter(|r| r.passed).count();
    out.push_str(&format!("{passed}/{} passed\n", results.len()));
    out
}
