//! Seeded discrete-event simulation of a multi-hop wireless network running
//! XOR coding under a configurable transmission policy.
//!
//! Nodes receive transmission opportunities, reception reports and packet
//! arrivals as independent exponential processes. At each opportunity the
//! node looks at the best coding option for its head-of-line packet and
//! either sends it or waits, according to the configured [`PolicyKind`].
//!
//! [`PolicyKind`]: crate::config::PolicyKind

pub mod energy;
mod engine;
pub mod metrics;
pub mod rng;
pub mod topology;

use thiserror::Error;

pub use energy::{account_energy, EnergyBreakdown, PowerModel};
pub use engine::{run, Injection, Mode, NodeState, Simulator, TraceRecord};
pub use metrics::{coding_gain, FinalEstimates, MetricsReport};
pub use rng::{sample_interval, RNG_ALGORITHM};
pub use topology::{
    build_flows, build_topology, greedy_path, route_next_hop, Flow, Topology, TopologyError,
};

use crate::coding::CodingError;
use crate::config::ConfigError;
use crate::estimators::EstimatorError;
use crate::policy::PolicyError;

#[derive(Debug, Error)]
pub enum SimError {
    #[error(transparent)]
    Config(#[from] ConfigError),
    #[error(transparent)]
    Topology(#[from] TopologyError),
    #[error("coding invariant broken: {0}")]
    Coding(#[from] CodingError),
    #[error(transparent)]
    Policy(#[from] PolicyError),
    #[error(transparent)]
    Estimator(#[from] EstimatorError),
    #[error("rate must be finite and > 0, got {0}")]
    Rate(f64),
    #[error("cannot schedule at {at} before the current time {now}")]
    Past { at: f64, now: f64 },
}
