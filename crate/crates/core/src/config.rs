//! Scenario configuration in a flat `key = value` text format.
//!
//! ```text
//! # comments start with '#'
//! node_count = 30
//! field_width = 600
//! field_height = 600
//! rho = 200
//! flow_count = 8
//! packet_rate = 0.5
//! opportunity_rate = 15
//! horizon = 3000
//! policy = stopping
//! ```
//!
//! Required keys: `node_count`, `field_width`, `field_height`, `rho`,
//! `flow_count`, `packet_rate`, `opportunity_rate`, `horizon`, `policy`.
//! Every other key is optional; see [`ScenarioConfig::to_text`] for the full
//! list with defaults. Unknown and repeated keys are errors.

use std::collections::BTreeMap;
use std::fmt;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use thiserror::Error;

#[derive(Debug, Error)]
pub enum ConfigError {
    #[error("cannot read {path}: {source}")]
    Io {
        path: PathBuf,
        source: std::io::Error,
    },
    #[error("line {line}: {reason}")]
    Syntax { line: usize, reason: String },
    #[error("line {line}: unknown key `{key}`")]
    UnknownKey { line: usize, key: String },
    #[error("line {line}: key `{key}` given twice")]
    Duplicate { line: usize, key: String },
    #[error("missing required key `{0}`")]
    Missing(&'static str),
    #[error("invalid `{key}` = {value}: {reason}")]
    Invalid {
        key: &'static str,
        value: String,
        reason: &'static str,
    },
}

fn invalid(key: &'static str, value: impl fmt::Display, reason: &'static str) -> ConfigError {
    ConfigError::Invalid {
        key,
        value: value.to_string(),
        reason,
    }
}

/// Transmission policy run by every node.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum PolicyKind {
    /// Send once the best coding degree reaches the threshold `d*`.
    OptimalStopping,
    /// Send the best available option at every opportunity.
    ImmediateSend,
    /// Forward the head of line natively at every opportunity.
    NoCoding,
}

impl PolicyKind {
    pub const ALL: [PolicyKind; 3] = [
        PolicyKind::OptimalStopping,
        PolicyKind::ImmediateSend,
        PolicyKind::NoCoding,
    ];

    pub fn name(self) -> &'static str {
        match self {
            PolicyKind::OptimalStopping => "stopping",
            PolicyKind::ImmediateSend => "immediate",
            PolicyKind::NoCoding => "no-coding",
        }
    }
}

impl fmt::Display for PolicyKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for PolicyKind {
    type Err = ConfigError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "stopping" | "optimal-stopping" => Ok(PolicyKind::OptimalStopping),
            "immediate" | "immediate-send" => Ok(PolicyKind::ImmediateSend),
            "no-coding" | "native" => Ok(PolicyKind::NoCoding),
            other => Err(invalid(
                "policy",
                other,
                "expected stopping, immediate or no-coding",
            )),
        }
    }
}

/// A validated scenario. Construct through [`parse_config`] or by editing a
/// preset and calling [`ScenarioConfig::validate`].
#[derive(Debug, Clone, PartialEq)]
pub struct ScenarioConfig {
    pub node_count: usize,
    pub field_width: f64,
    pub field_height: f64,
    pub rho: f64,
    pub seed: u64,
    pub flow_count: usize,
    /// Per-flow packet generation rate.
    pub packet_rate: f64,
    /// Per-node transmission opportunity rate.
    pub opportunity_rate: f64,
    /// Per-node reception report rate.
    pub report_rate: f64,
    pub policy: PolicyKind,
    pub delta: f64,
    pub buffer_size: u32,
    pub gain_slope: f64,
    pub gain_intercept: f64,
    pub lms_taps: usize,
    pub lms_step: f64,
    /// Estimator refresh period.
    pub tick: f64,
    pub loss_prob: f64,
    pub horizon: f64,
    /// Link bitrate in bits per time unit.
    pub bitrate: f64,
    pub packet_size: u32,
    /// Retransmission timeout in mean opportunity intervals.
    pub ack_timeout_factor: f64,
    /// Minimum hop count of a generated flow's route.
    pub min_route_hops: u32,
}

const REQUIRED: [&str; 9] = [
    "node_count",
    "field_width",
    "field_height",
    "rho",
    "flow_count",
    "packet_rate",
    "opportunity_rate",
    "horizon",
    "policy",
];

const OPTIONAL: [&str; 14] = [
    "seed",
    "report_rate",
    "delta",
    "buffer_size",
    "gain_slope",
    "gain_intercept",
    "lms_taps",
    "lms_step",
    "tick",
    "loss_prob",
    "bitrate",
    "packet_size",
    "ack_timeout_factor",
    "min_route_hops",
];

impl ScenarioConfig {
    /// The 30-node desk scenario used by the acceptance trends.
    pub fn desk() -> Self {
        Self {
            node_count: 30,
            field_width: 600.0,
            field_height: 600.0,
            rho: 200.0,
            seed: 1,
            flow_count: 8,
            packet_rate: 0.5,
            opportunity_rate: 15.0,
            report_rate: 10.0,
            policy: PolicyKind::OptimalStopping,
            delta: 0.05,
            buffer_size: 40,
            gain_slope: 1.0,
            gain_intercept: 0.0,
            lms_taps: 4,
            lms_step: 0.01,
            tick: 1.0,
            loss_prob: 0.0,
            horizon: 3000.0,
            bitrate: 1e6,
            packet_size: 1000,
            ack_timeout_factor: 5.0,
            min_route_hops: 2,
        }
    }

    /// 200 nodes on 1100 x 1100 m with a 200 m range.
    pub fn reference() -> Self {
        Self {
            node_count: 200,
            field_width: 1100.0,
            field_height: 1100.0,
            ..Self::desk()
        }
    }

    pub fn validate(&self) -> Result<(), ConfigError> {
        fn positive(key: &'static str, v: f64) -> Result<(), ConfigError> {
            if v.is_finite() && v > 0.0 {
                Ok(())
            } else {
                Err(invalid(key, v, "must be a finite number > 0"))
            }
        }
        if self.node_count < 2 {
            return Err(invalid("node_count", self.node_count, "must be >= 2"));
        }
        positive("field_width", self.field_width)?;
        positive("field_height", self.field_height)?;
        positive("rho", self.rho)?;
        positive("packet_rate", self.packet_rate)?;
        positive("opportunity_rate", self.opportunity_rate)?;
        positive("report_rate", self.report_rate)?;
        positive("delta", self.delta)?;
        positive("gain_slope", self.gain_slope)?;
        if !self.gain_intercept.is_finite() {
            return Err(invalid(
                "gain_intercept",
                self.gain_intercept,
                "must be finite",
            ));
        }
        if self.buffer_size == 0 {
            return Err(invalid("buffer_size", self.buffer_size, "must be >= 1"));
        }
        if self.lms_taps == 0 {
            return Err(invalid("lms_taps", self.lms_taps, "must be >= 1"));
        }
        positive("lms_step", self.lms_step)?;
        positive("tick", self.tick)?;
        if !(0.0..1.0).contains(&self.loss_prob) {
            return Err(invalid("loss_prob", self.loss_prob, "must lie in [0, 1)"));
        }
        positive("horizon", self.horizon)?;
        positive("bitrate", self.bitrate)?;
        if self.packet_size == 0 {
            return Err(invalid("packet_size", self.packet_size, "must be >= 1"));
        }
        positive("ack_timeout_factor", self.ack_timeout_factor)?;
        if self.min_route_hops == 0 {
            return Err(invalid(
                "min_route_hops",
                self.min_route_hops,
                "must be >= 1",
            ));
        }
        Ok(())
    }

    /// Airtime of one packet.
    pub fn airtime(&self) -> f64 {
        f64::from(self.packet_size) * 8.0 / self.bitrate
    }

    pub fn ack_timeout(&self) -> f64 {
        self.ack_timeout_factor / self.opportunity_rate
    }

    /// Every key with its effective value, in the input format.
    pub fn to_text(&self) -> String {
        let rows: [(&str, String); 23] = [
            ("node_count", self.node_count.to_string()),
            ("field_width", self.field_width.to_string()),
            ("field_height", self.field_height.to_string()),
            ("rho", self.rho.to_string()),
            ("seed", self.seed.to_string()),
            ("flow_count", self.flow_count.to_string()),
            ("packet_rate", self.packet_rate.to_string()),
            ("opportunity_rate", self.opportunity_rate.to_string()),
            ("report_rate", self.report_rate.to_string()),
            ("policy", self.policy.to_string()),
            ("delta", self.delta.to_string()),
            ("buffer_size", self.buffer_size.to_string()),
            ("gain_slope", self.gain_slope.to_string()),
            ("gain_intercept", self.gain_intercept.to_string()),
            ("lms_taps", self.lms_taps.to_string()),
            ("lms_step", self.lms_step.to_string()),
            ("tick", self.tick.to_string()),
            ("loss_prob", self.loss_prob.to_string()),
            ("horizon", self.horizon.to_string()),
            ("bitrate", self.bitrate.to_string()),
            ("packet_size", self.packet_size.to_string()),
            ("ack_timeout_factor", self.ack_timeout_factor.to_string()),
            ("min_route_hops", self.min_route_hops.to_string()),
        ];
        rows.iter().map(|(k, v)| format!("{k} = {v}\n")).collect()
    }
}

fn parse_value<T: FromStr>(key: &'static str, raw: &str) -> Result<T, ConfigError> {
    raw.parse()
        .map_err(|_| invalid(key, raw, "not a valid number"))
}

/// Parses and validates a scenario from text.
pub fn parse_config(text: &str) -> Result<ScenarioConfig, ConfigError> {
    let mut entries: BTreeMap<&'static str, (usize, String)> = BTreeMap::new();
    for (i, raw_line) in text.lines().enumerate() {
        let line_no = i + 1;
        let line = raw_line.split('#').next().unwrap_or("").trim();
        if line.is_empty() {
            continue;
        }
        let (key, value) = line.split_once('=').ok_or_else(|| ConfigError::Syntax {
            line: line_no,
            reason: format!("expected `key = value`, found `{line}`"),
        })?;
        let key = key.trim();
        let value = value.trim();
        let known = REQUIRED
            .iter()
            .chain(OPTIONAL.iter())
            .find(|k| **k == key)
            .ok_or_else(|| ConfigError::UnknownKey {
                line: line_no,
                key: key.to_string(),
            })?;
        if value.is_empty() {
            return Err(ConfigError::Syntax {
                line: line_no,
                reason: format!("key `{key}` has no value"),
            });
        }
        if entries
            .insert(known, (line_no, value.to_string()))
            .is_some()
        {
            return Err(ConfigError::Duplicate {
                line: line_no,
                key: key.to_string(),
            });
        }
    }
    for key in REQUIRED {
        if !entries.contains_key(key) {
            return Err(ConfigError::Missing(key));
        }
    }

    let mut cfg = ScenarioConfig::desk();
    for (&key, (_, raw)) in &entries {
        let raw = raw.as_str();
        match key {
            "node_count" => cfg.node_count = parse_value(key, raw)?,
            "field_width" => cfg.field_width = parse_value(key, raw)?,
            "field_height" => cfg.field_height = parse_value(key, raw)?,
            "rho" => cfg.rho = parse_value(key, raw)?,
            "seed" => cfg.seed = parse_value(key, raw)?,
            "flow_count" => cfg.flow_count = parse_value(key, raw)?,
            "packet_rate" => cfg.packet_rate = parse_value(key, raw)?,
            "opportunity_rate" => cfg.opportunity_rate = parse_value(key, raw)?,
            "report_rate" => cfg.report_rate = parse_value(key, raw)?,
            "policy" => cfg.policy = raw.parse()?,
            "delta" => cfg.delta = parse_value(key, raw)?,
            "buffer_size" => cfg.buffer_size = parse_value(key, raw)?,
            "gain_slope" => cfg.gain_slope = parse_value(key, raw)?,
            "gain_intercept" => cfg.gain_intercept = parse_value(key, raw)?,
            "lms_taps" => cfg.lms_taps = parse_value(key, raw)?,
            "lms_step" => cfg.lms_step = parse_value(key, raw)?,
            "tick" => cfg.tick = parse_value(key, raw)?,
            "loss_prob" => cfg.loss_prob = parse_value(key, raw)?,
            "horizon" => cfg.horizon = parse_value(key, raw)?,
            "bitrate" => cfg.bitrate = parse_value(key, raw)?,
            "packet_size" => cfg.packet_size = parse_value(key, raw)?,
            "ack_timeout_factor" => cfg.ack_timeout_factor = parse_value(key, raw)?,
            "min_route_hops" => cfg.min_route_hops = parse_value(key, raw)?,
            _ => {}
        }
    }
    cfg.validate()?;
    Ok(cfg)
}

/// Reads and parses a config file.
pub fn load_config(path: impl AsRef<Path>) -> Result<ScenarioConfig, ConfigError> {
    let path = path.as_ref();
    let text = std::fs::read_to_string(path).map_err(|source| ConfigError::Io {
        path: path.to_path_buf(),
        source,
    })?;
    parse_config(&text)
}
