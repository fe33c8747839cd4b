//! Scenario matrices (policy x load x seed), results CSV and QQ data.
//!
//! # Results CSV columns
//!
//! `scenario, policy, load, seed, coding_gain, mean_e2e_delay, throughput,
//! energy_per_node_mj, energy_per_delivered_mj, transmissions,
//! successful_transmissions, retransmissions, generated, delivered,
//! in_flight, drops, unroutable, decode_failures, opportunities, lambda_t,
//! lambda_d, p_p, p_r, degree_histogram, rng`
//!
//! Absent values (delay or energy per packet without deliveries) are empty
//! fields. `degree_histogram` is `degree:count` pairs joined by `;`.
//!
//! # Seeds
//!
//! A cell's run seed is `mix(master_seed, seed)`. The policy is not mixed
//! in, so every policy in a row sees the same topology, flows and arrival
//! times.

use std::io::Write;
use std::path::{Path, PathBuf};

use rayon::prelude::*;
use thiserror::Error;

use crate::config::{PolicyKind, ScenarioConfig};
use crate::sim::rng::mix;
use crate::sim::{run, MetricsReport, SimError};
use crate::stats::{ks_test_exponential, qq_points, KsOutcome};

/// Environment variable capping the number of cells run in parallel.
pub const THREADS_ENV: &str = "COPESTOP_THREADS";
/// Fewest samples accepted by [`emit_qq_data`].
pub const MIN_QQ_SAMPLES: usize = 100;
/// Quantile levels written by [`emit_qq_data`].
pub const QQ_POINTS: usize = 100;

pub const CSV_COLUMNS: [&str; 25] = [
    "scenario",
    "policy",
    "load",
    "seed",
    "coding_gain",
    "mean_e2e_delay",
    "throughput",
    "energy_per_node_mj",
    "energy_per_delivered_mj",
    "transmissions",
    "successful_transmissions",
    "retransmissions",
    "generated",
    "delivered",
    "in_flight",
    "drops",
    "unroutable",
    "decode_failures",
    "opportunities",
    "lambda_t",
    "lambda_d",
    "p_p",
    "p_r",
    "degree_histogram",
    "rng",
];

#[derive(Debug, Error)]
pub enum ExperimentError {
    #[error("`{0}` list is empty")]
    EmptyList(&'static str),
    #[error("cell policy={policy} load={load} seed={seed} failed: {source}")]
    Cell {
        policy: PolicyKind,
        load: usize,
        seed: u64,
        source: SimError,
    },
    #[error("refusing to write an empty results file")]
    NoRecords,
    #[error("need at least {need} samples, got {got}")]
    TooFewSamples { got: usize, need: usize },
    #[error("rate must be finite and > 0, got {0}")]
    Rate(f64),
    #[error("cannot write {path}: {source}")]
    Io {
        path: PathBuf,
        source: std::io::Error,
    },
    #[error(transparent)]
    Csv(#[from] csv::Error),
    #[error("thread pool: {0}")]
    Pool(#[from] rayon::ThreadPoolBuildError),
}

/// One matrix cell's outcome.
#[derive(Debug, Clone, PartialEq)]
pub struct RunRecord {
    pub scenario: String,
    pub policy: PolicyKind,
    pub load: usize,
    pub seed: u64,
    pub metrics: MetricsReport,
}

/// Seed actually passed to the simulator for a cell.
pub fn cell_seed(master: u64, seed: u64) -> u64 {
    mix(master, seed)
}

/// Runs every (policy, load, seed) cell and returns the records sorted by
/// load, seed, then policy.
pub fn run_matrix(
    config: &ScenarioConfig,
    policies: &[PolicyKind],
    loads: &[usize],
    seeds: &[u64],
) -> Result<Vec<RunRecord>, ExperimentError> {
    if policies.is_empty() {
        return Err(ExperimentError::EmptyList("policies"));
    }
    if loads.is_empty() {
        return Err(ExperimentError::EmptyList("loads"));
    }
    if seeds.is_empty() {
        return Err(ExperimentError::EmptyList("seeds"));
    }
    let cells: Vec<(PolicyKind, usize, u64)> = loads
        .iter()
        .flat_map(|&load| {
            seeds
                .iter()
                .flat_map(move |&seed| policies.iter().map(move |&p| (p, load, seed)))
        })
        .collect();
    let run_cell = |&(policy, load, seed): &(PolicyKind, usize, u64)| {
        let cfg = ScenarioConfig {
            policy,
            flow_count: load,
            ..config.clone()
        };
        run(&cfg, cell_seed(config.seed, seed))
            .map(|metrics| RunRecord {
                scenario: format!("{}n-{}f", cfg.node_count, load),
                policy,
                load,
                seed,
                metrics,
            })
            .map_err(|source| ExperimentError::Cell {
                policy,
                load,
                seed,
                source,
            })
    };
    let threads = std::env::var(THREADS_ENV)
        .ok()
        .and_then(|v| v.parse::<usize>().ok())
        .filter(|&n| n > 0);
    let results: Vec<Result<RunRecord, ExperimentError>> = match threads {
        Some(n) => rayon::ThreadPoolBuilder::new()
            .num_threads(n)
            .build()?
            .install(|| cells.par_iter().map(run_cell).collect()),
        None => cells.par_iter().map(run_cell).collect(),
    };
    let mut records = results.into_iter().collect::<Result<Vec<_>, _>>()?;
    records.sort_by_key(|r| (r.load, r.seed, r.policy));
    Ok(records)
}

fn opt(v: Option<f64>) -> String {
    v.map(|x| x.to_string()).unwrap_or_default()
}

/// Writes the results CSV to any writer.
pub fn write_csv<W: Write>(records: &[RunRecord], out: W) -> Result<(), ExperimentError> {
    if records.is_empty() {
        return Err(ExperimentError::NoRecords);
    }
    let mut w = csv::Writer::from_writer(out);
    w.write_record(CSV_COLUMNS)?;
    for r in records {
        let m = &r.metrics;
        let histogram = m
            .degree_histogram
            .iter()
            .map(|(d, c)| format!("{d}:{c}"))
            .collect::<Vec<_>>()
            .join(";");
        w.write_record([
            r.scenario.clone(),
            r.policy.to_string(),
            r.load.to_string(),
            r.seed.to_string(),
            m.coding_gain.to_string(),
            opt(m.mean_e2e_delay),
            m.throughput.to_string(),
            m.energy_per_node.to_string(),
            opt(m.energy_per_delivered),
            m.transmissions.to_string(),
            m.successful_transmissions.to_string(),
            m.retransmissions.to_string(),
            m.generated.to_string(),
            m.delivered.to_string(),
            m.in_flight.to_string(),
            m.drops.to_string(),
            m.unroutable.to_string(),
            m.decode_failures.to_string(),
            m.opportunities.to_string(),
            m.final_estimates.lambda_t.to_string(),
            m.final_estimates.lambda_d.to_string(),
            m.final_estimates.p_p.to_string(),
            m.final_estimates.p_r.to_string(),
            histogram,
            m.rng_algorithm.to_string(),
        ])?;
    }
    w.flush().map_err(csv::Error::from)?;
    Ok(())
}

/// Writes the results CSV to `path`. Nothing is created for an empty list.
pub fn emit_csv(records: &[RunRecord], path: impl AsRef<Path>) -> Result<(), ExperimentError> {
    if records.is_empty() {
        return Err(ExperimentError::NoRecords);
    }
    let path = path.as_ref();
    let file = std::fs::File::create(path).map_err(|source| ExperimentError::Io {
        path: path.to_path_buf(),
        source,
    })?;
    write_csv(records, std::io::BufWriter::new(file))
}

/// Writes `theoretical,empirical` quantile pairs against `Exp(rate)` and a
/// trailing `#` line with the KS statistic. Returns the KS outcome.
pub fn write_qq_data<W: Write>(
    samples: &[f64],
    rate: f64,
    mut out: W,
) -> Result<KsOutcome, ExperimentError> {
    if samples.len() < MIN_QQ_SAMPLES {
        return Err(ExperimentError::TooFewSamples {
            got: samples.len(),
            need: MIN_QQ_SAMPLES,
        });
    }
    if !(rate > 0.0 && rate.is_finite()) {
        return Err(ExperimentError::Rate(rate));
    }
    let ks = ks_test_exponential(samples, rate);
    {
        let mut w = csv::Writer::from_writer(&mut out);
        w.write_record(["theoretical", "empirical"])?;
        for (t, e) in qq_points(samples, rate, QQ_POINTS) {
            w.write_record([t.to_string(), e.to_string()])?;
        }
        w.flush().map_err(csv::Error::from)?;
    }
    writeln!(
        out,
        "# ks_statistic={} critical_5pct={} n={}",
        ks.statistic, ks.critical, ks.n
    )
    .map_err(csv::Error::from)?;
    Ok(ks)
}

pub fn emit_qq_data(
    samples: &[f64],
    rate: f64,
    path: impl AsRef<Path>,
) -> Result<KsOutcome, ExperimentError> {
    if samples.len() < MIN_QQ_SAMPLES {
        return Err(ExperimentError::TooFewSamples {
            got: samples.len(),
            need: MIN_QQ_SAMPLES,
        });
    }
    let path = path.as_ref();
    let file = std::fs::File::create(path).map_err(|source| ExperimentError::Io {
        path: path.to_path_buf(),
        source,
    })?;
    write_qq_data(samples, rate, std::io::BufWriter::new(file))
}

/// Per (policy, load) means over seeds.
#[derive(Debug, Clone, PartialEq)]
pub struct CellSummary {
    pub policy: PolicyKind,
    pub load: usize,
    pub runs: usize,
    pub coding_gain: f64,
    pub mean_e2e_delay: f64,
    pub energy_per_delivered: f64,
    pub drops: f64,
}

/// Averages records over seeds, sorted by policy then load. Runs without
/// deliveries contribute zero delay and energy per packet.
pub fn summarize(records: &[RunRecord]) -> Vec<CellSummary> {
    let mut keys: Vec<(PolicyKind, usize)> = records.iter().map(|r| (r.policy, r.load)).collect();
    keys.sort();
    keys.dedup();
    keys.into_iter()
        .map(|(policy, load)| {
            let rows: Vec<&RunRecord> = records
                .iter()
                .filter(|r| r.policy == policy && r.load == load)
                .collect();
            let n = rows.len() as f64;
            let mean = |f: &dyn Fn(&MetricsReport) -> f64| -> f64 {
                rows.iter().map(|r| f(&r.metrics)).sum::<f64>() / n
            };
            CellSummary {
                policy,
                load,
                runs: rows.len(),
                coding_gain: mean(&|m| m.coding_gain),
                mean_e2e_delay: mean(&|m| m.mean_e2e_delay.unwrap_or(0.0)),
                energy_per_delivered: mean(&|m| m.energy_per_delivered.unwrap_or(0.0)),
                drops: mean(&|m| m.drops as f64),
            }
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    fn small() -> ScenarioConfig {
        ScenarioConfig {
            node_count: 12,
            field_width: 400.0,
            field_height: 400.0,
            horizon: 20.0,
            ..ScenarioConfig::desk()
        }
    }

    #[test]
    fn single_cell() {
        let recs = run_matrix(&small(), &[PolicyKind::ImmediateSend], &[2], &[1]).unwrap();
        assert_eq!(recs.len(), 1);
        assert!(recs[0].metrics.is_conserved());
    }

    #[test]
    fn product_count_and_order() {
        let recs = run_matrix(&small(), &PolicyKind::ALL, &[1, 2, 3, 4], &[1, 2, 3, 4, 5]).unwrap();
        assert_eq!(recs.len(), 60);
        assert!(recs
            .windows(2)
            .all(|w| (w[0].load, w[0].seed, w[0].policy) < (w[1].load, w[1].seed, w[1].policy)));
    }

    #[test]
    fn empty_lists_rejected() {
        assert!(matches!(
            run_matrix(&small(), &[], &[1], &[1]),
            Err(ExperimentError::EmptyList("policies"))
        ));
        assert!(matches!(
            run_matrix(&small(), &PolicyKind::ALL, &[1], &[]),
            Err(ExperimentError::EmptyList("seeds"))
        ));
    }

    #[test]
    fn csv_shape() {
        let recs = run_matrix(&small(), &PolicyKind::ALL, &[2], &[1, 2]).unwrap();
        let mut buf = Vec::new();
        write_csv(&recs, &mut buf).unwrap();
        let text = String::from_utf8(buf).unwrap();
        assert_eq!(text.lines().count(), 7);
        assert_eq!(text.lines().next().unwrap(), CSV_COLUMNS.join(","));
        assert!(matches!(
            write_csv(&[], Vec::new()),
            Err(ExperimentError::NoRecords)
        ));
    }

    #[test]
    fn qq_requires_samples() {
        let err = write_qq_data(&[1.0; 50], 1.0, Vec::new()).unwrap_err();
        assert!(matches!(
            err,
            ExperimentError::TooFewSamples { got: 50, need: 100 }
        ));
    }

    #[test]
    fn qq_trailer() {
        let xs: Vec<f64> = (1..=200)
            .map(|i| crate::stats::exponential_quantile((i as f64 - 0.5) / 200.0, 2.0))
            .collect();
        let mut buf = Vec::new();
        let ks = write_qq_data(&xs, 2.0, &mut buf).unwrap();
        let text = String::from_utf8(buf).unwrap();
        assert_eq!(text.lines().count(), 1 + 100 + 1);
        assert!(text.lines().last().unwrap().starts_with("# ks_statistic="));
        assert!(ks.passes());
    }
}
