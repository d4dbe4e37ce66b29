//! Static link model: received power, SINR, capture under overshadowing and
//! capacity-based throughput.

use serde::{Deserialize, Serialize};

use crate::time::PowerDbm;

pub const CAPTURE_MARGIN_DB: f64 = 3.0;
pub const SENSITIVITY_DBM: f64 = -110.0;
pub const OVERHEAD_FACTOR: f64 = 0.7;
pub const MAX_SPECTRAL_EFFICIENCY: f64 = 7.4;
pub const RB_BANDWIDTH_HZ: f64 = 180_000.0;
pub const THERMAL_NOISE_DBM_PER_HZ: f64 = -174.0;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LinkBudget {
    pub tx_power: PowerDbm,
    pub path_loss_db: f64,
}

impl LinkBudget {
    pub fn new(tx_power: PowerDbm, path_loss_db: f64) -> Self {
        Self { tx_power, path_loss_db }
    }

    pub fn rx_power_dbm(&self) -> PowerDbm {
        PowerDbm(self.tx_power.0 - self.path_loss_db)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SinrSample {
    pub signal_dbm: f64,
    pub interference_plus_noise_dbm: f64,
    pub sinr_db: f64,
}

pub fn sinr(target_rx: PowerDbm, interferers: &[PowerDbm], noise_dbm: f64) -> SinrSample {
    // Sum smallest first so the result does not depend on list order.
    let mut lin: Vec<f64> = interferers.iter().map(|p| p.milliwatts()).collect();
    lin.push(PowerDbm(noise_dbm).milliwatts());
    lin.sort_by(f64::total_cmp);
    let ipn = 10.0 * lin.iter().sum::<f64>().log10();
    SinrSample { signal_dbm: target_rx.0, interference_plus_noise_dbm: ipn, sinr_db: target_rx.0 - ipn }
}

/// Thermal noise over `num_rb` resource blocks plus a receiver noise figure.
pub fn noise_dbm(num_rb: u16, mu: u8, noise_figure_db: f64) -> f64 {
    let bw = f64::from(num_rb) * RB_BANDWIDTH_HZ * f64::from(1u32 << mu);
    THERMAL_NOISE_DBM_PER_HZ + 10.0 * bw.log10() + noise_figure_db
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum DecodeOutcome {
    LegitDecoded,
    SpoofDecoded,
    Collision,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CaptureModel {
    pub margin_db: f64,
    pub sensitivity_dbm: f64,
}

impl Default for CaptureModel {
    fn default() -> Self {
        Self { margin_db: CAPTURE_MARGIN_DB, sensitivity_dbm: SENSITIVITY_DBM }
    }
}

impl CaptureModel {
    /// Which copy the receiver decodes. `occupied` says whether the
    /// legitimate transmitter uses the resource; a lone spoof only decodes
    /// on a free one.
    pub fn decode_outcome(
        &self,
        legit_rx: Option<PowerDbm>,
        spoof_rx: Option<PowerDbm>,
        occupied: bool,
    ) -> DecodeOutcome {
        let audible = |p: PowerDbm| p.0 >= self.sensitivity_dbm;
        match (legit_rx, spoof_rx) {
            (Some(l), Some(s)) => {
                if s.0 >= l.0 + self.margin_db && audible(s) {
                    DecodeOutcome::SpoofDecoded
                } else if l.0 >= s.0 + self.margin_db && audible(l) {
                    DecodeOutcome::LegitDecoded
                } else {
                    DecodeOutcome::Collision
                }
            }
            (Some(l), None) if audible(l) => DecodeOutcome::LegitDecoded,
            (None, Some(s)) if audible(s) && !occupied => DecodeOutcome::SpoofDecoded,
            _ => DecodeOutcome::Collision,
        }
    }
}

pub fn decode_outcome(legit_rx: Option<PowerDbm>, spoof_rx: Option<PowerDbm>, occupied: bool) -> DecodeOutcome {
    CaptureModel::default().decode_outcome(legit_rx, spoof_rx, occupied)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CapacityModel {
    pub overhead_factor: f64,
    pub max_spectral_efficiency: f64,
}

impl Default for CapacityModel {
    fn default() -> Self {
        Self { overhead_factor: OVERHEAD_FACTOR, max_spectral_efficiency: MAX_SPECTRAL_EFFICIENCY }
    }
}

impl CapacityModel {
    pub fn spectral_efficiency(&self, sinr_db: f64) -> f64 {
        if sinr_db == f64::NEG_INFINITY {
            return 0.0;
        }
        (1.0 + 10f64.powf(sinr_db / 10.0)).log2().min(self.max_spectral_efficiency)
    }

    /// Mbit/s carried by `num_rb` blocks at numerology `mu`.
    pub fn throughput_mbps(&self, num_rb: u16, mu: u8, sinr_db: f64) -> f64 {
        let hz = f64::from(num_rb) * RB_BANDWIDTH_HZ * f64::from(1u32 << mu);
        hz * self.spectral_efficiency(sinr_db) * self.overhead_factor / 1e6
    }

    /// Bits carried in one slot (one slot lasts 1/2^mu ms).
    pub fn bits_per_slot(&self, num_rb: u16, mu: u8, sinr_db: f64) -> f64 {
        self.throughput_mbps(num_rb, mu, sinr_db) * 1e3 / f64::from(1u32 << mu)
    }
}

pub fn throughput_mbps(num_rb: u16, mu: u8, sinr_db: f64) -> f64 {
    CapacityModel::default().throughput_mbps(num_rb, mu, sinr_db)
}
