//! `copestop` command-line driver.

use std::path::PathBuf;
use std::process::ExitCode;

use anyhow::{Context, Result};
use clap::{Parser, Subcommand};
use copestop::config::{load_config, PolicyKind, ScenarioConfig};
use copestop::experiment::{emit_csv, emit_qq_data, run_matrix, summarize};
use copestop::verify::{format_table, opportunity_samples, run_all};

#[derive(Parser)]
#[command(
    name = "copestop",
    version,
    about = "Send-or-wait network coding experiments"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run a policy x load x seed matrix and write the results CSV.
    Run {
        /// Scenario file; the desk scenario when omitted.
        #[arg(short, long)]
        config: Option<PathBuf>,
        #[arg(short, long, default_value = "results.csv")]
        output: PathBuf,
        #[arg(long, value_delimiter = ',', default_value = "1,2,3,4,5")]
        seeds: Vec<u64>,
        #[arg(long, value_delimiter = ',', default_value = "stopping,immediate")]
        policies: Vec<PolicyKind>,
        /// Flow counts; the config's flow_count when omitted.
        #[arg(long, value_delimiter = ',')]
        loads: Vec<usize>,
    },
    /// Run the acceptance suite and print a pass/fail table.
    Verify,
    /// Write QQ data for pooled opportunity gaps against the configured rate.
    Qq {
        #[arg(short, long)]
        config: Option<PathBuf>,
        #[arg(short, long, default_value = "qq.csv")]
        output: PathBuf,
        #[arg(long, default_value_t = 1)]
        seed: u64,
    },
}

fn config_from(path: Option<&PathBuf>) -> Result<ScenarioConfig> {
    match path {
        Some(p) => load_config(p).with_context(|| format!("loading {}", p.display())),
        None => Ok(ScenarioConfig::desk()),
    }
}

fn run(
    config: Option<PathBuf>,
    output: PathBuf,
    seeds: Vec<u64>,
    policies: Vec<PolicyKind>,
    loads: Vec<usize>,
) -> Result<()> {
    let cfg = config_from(config.as_ref())?;
    let loads = if loads.is_empty() {
        vec![cfg.flow_count]
    } else {
        loads
    };
    eprintln!("# effective config\n{}", cfg.to_text());
    let records = run_matrix(&cfg, &policies, &loads, &seeds)?;
    emit_csv(&records, &output)?;
    println!(
        "{:<10} {:>5} {:>4} {:>10} {:>10} {:>12} {:>8}",
        "policy", "load", "runs", "gain", "delay", "mJ/packet", "drops"
    );
    for s in summarize(&records) {
        println!(
            "{:<10} {:>5} {:>4} {:>10.4} {:>10.4} {:>12.4} {:>8.1}",
            s.policy.to_string(),
            s.load,
            s.runs,
            s.coding_gain,
            s.mean_e2e_delay,
            s.energy_per_delivered,
            s.drops
        );
    }
    println!("wrote {} rows to {}", records.len(), output.display());
    Ok(())
}

fn qq(config: Option<PathBuf>, output: PathBuf, seed: u64) -> Result<()> {
    let cfg = config_from(config.as_ref())?;
    cfg.validate()?;
    let samples = opportunity_samples(&cfg, seed);
    let ks = emit_qq_data(&samples, cfg.opportunity_rate, &output)?;
    println!(
        "n={} ks={:.5} critical_5pct={:.5} {} -> {}",
        ks.n,
        ks.statistic,
        ks.critical,
        if ks.passes() { "pass" } else { "reject" },
        output.display()
    );
    Ok(())
}

fn main() -> ExitCode {
    let outcome = match Cli::parse().command {
        Command::Run {
            config,
            output,
            seeds,
            policies,
            loads,
        } => run(config, output, seeds, policies, loads),
        Command::Verify => {
            let results = run_all(|r| eprintln!("{}", r.line()));
            print!("{}", format_table(&results));
            if results.iter().all(|r| r.passed) {
                Ok(())
            } else {
                Err(anyhow::anyhow!("acceptance suite failed"))
            }
        }
        Command::Qq {
            config,
            output,
            seed,
        } => qq(config, output, seed),
    };
    match outcome {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::FAILURE
        }
    }
}
