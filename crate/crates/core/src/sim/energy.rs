//! Radio energy model: transmit, receive and idle power plus a constant
//! circuit draw. Powers are in mW, times in seconds, energy in mJ.

/// Power draw per radio mode.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PowerModel {
    pub transmit_mw: f64,
    pub receive_mw: f64,
    pub idle_mw: f64,
    pub circuit_mw: f64,
}

impl Default for PowerModel {
    fn default() -> Self {
        Self {
            transmit_mw: 70.0,
            receive_mw: 50.0,
            idle_mw: 25.0,
            circuit_mw: 10.0,
        }
    }
}

#[derive(Debug, Clone, Copy, Default, PartialEq)]
pub struct EnergyBreakdown {
    pub transmit_mj: f64,
    pub receive_mj: f64,
    pub idle_mj: f64,
    pub circuit_mj: f64,
    pub total_mj: f64,
}

/// Energy of one node over `horizon` given the bits it sent and received.
///
/// Idle time is whatever is left of the horizon, clamped at zero.
pub fn account_energy(
    tx_bits: u64,
    rx_bits: u64,
    horizon: f64,
    bitrate: f64,
    model: &PowerModel,
) -> EnergyBreakdown {
    if horizon <= 0.0 {
        return EnergyBreakdown::default();
    }
    let t_tx = tx_bits as f64 / bitrate;
    let t_rx = rx_bits as f64 / bitrate;
    let t_idle = (horizon - t_tx - t_rx).max(0.0);
    let transmit_mj = model.transmit_mw * t_tx;
    let receive_mj = model.receive_mw * t_rx;
    let idle_mj = model.idle_mw * t_idle;
    let circuit_mj = model.circuit_mw * horizon;
    EnergyBreakdown {
        transmit_mj,
        receive_mj,
        idle_mj,
        circuit_mj,
        total_mj: transmit_mj + receive_mj + idle_mj + circuit_mj,
    }
}
