//! Run-level metrics.

use std::collections::BTreeMap;

use super::energy::EnergyBreakdown;

/// Rate and probability estimates averaged over nodes at the horizon.
#[derive(Debug, Clone, Copy, Default, PartialEq)]
pub struct FinalEstimates {
    pub lambda_t: f64,
    pub lambda_d: f64,
    pub p_p: f64,
    pub p_r: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct MetricsReport {
    /// Natives delivered per successful transmission; 1.0 when nothing was
    /// sent.
    pub coding_gain: f64,
    /// Mean creation-to-delivery time; `None` without deliveries.
    pub mean_e2e_delay: Option<f64>,
    /// Delivered packets per time unit.
    pub throughput: f64,
    /// Mean node energy in mJ.
    pub energy_per_node: f64,
    /// Network energy divided by delivered packets, in mJ.
    pub energy_per_delivered: Option<f64>,
    /// Transmissions attempted, including ones nobody decoded.
    pub transmissions: u64,
    /// Transmissions where at least one next hop decoded its native.
    pub successful_transmissions: u64,
    pub retransmissions: u64,
    pub degree_histogram: BTreeMap<u32, u64>,
    pub generated: u64,
    pub delivered: u64,
    pub in_flight: u64,
    /// Overflow drops.
    pub drops: u64,
    pub unroutable: u64,
    pub decode_failures: u64,
    pub opportunities: u64,
    pub final_estimates: FinalEstimates,
    pub node_energy: Vec<EnergyBreakdown>,
    pub node_lambda_t: Vec<f64>,
    pub rng_algorithm: &'static str,
}

impl MetricsReport {
    pub fn is_idle(&self) -> bool {
        self.transmissions == 0
    }

    /// Conservation of packets at the horizon.
    pub fn is_conserved(&self) -> bool {
        self.generated == self.delivered + self.in_flight + self.drops + self.unroutable
    }
}

/// Sum of decoded natives over the number of transmissions that decoded at
/// least one; 1.0 when there are none.
pub fn coding_gain(decoded_per_transmission: &[u32]) -> f64 {
    let successful = decoded_per_transmission.iter().filter(|&&d| d > 0).count();
    if successful == 0 {
        return 1.0;
    }
    let natives: u64 = decoded_per_transmission.iter().map(|&d| u64::from(d)).sum();
    natives as f64 / successful as f64
}
