//! Scenario configuration, loaded from JSON.

use std::collections::BTreeSet;
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::profiles::Profile;
use super::SimError;
use crate::attacker::AttackerConfig;
use crate::channel::{CapacityModel, CaptureModel};
use crate::codec::dci::{encode_dci, DciLayout};
use crate::codec::sib::SibRaConfig;
use crate::procedures::{BsConfig, CsiSchedule, RaTiming, Traffic};
use crate::time::{Rnti, MAX_MU};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct CellConfig {
    /// RBs per carrier.
    pub bandwidth_rb: u16,
    pub mu: u8,
    pub sib: SibRaConfig,
    /// Secondary carriers configured per UE.
    pub scell_count: u8,
    /// `null` means the timer never runs.
    pub scell_deactivation_timer_ms: Option<u32>,
    pub csi_period_ms: u32,
    pub bs_tx_dbm: f64,
    pub noise_figure_db: f64,
    pub sib_period_ms: u32,
    pub ra_timing: RaTiming,
    /// Upper end of the uniform per-UE delay before unsolicited grants are
    /// acted on.
    pub grant_onset_jitter_ms: u32,
    /// Idle time after radio link failure before the UE attempts access.
    pub reconnect_delay_ms: u32,
    pub capture: CaptureModel,
    pub capacity: CapacityModel,
    /// Seed material for the per-UE physical-layer keys.
    pub cell_secret: String,
}

impl Default for CellConfig {
    fn default() -> Self {
        Self {
            bandwidth_rb: 25,
            mu: 0,
            sib: SibRaConfig::operator_default(),
            scell_count: 0,
            scell_deactivation_timer_ms: None,
            csi_period_ms: 20,
            bs_tx_dbm: 46.0,
            noise_figure_db: 7.0,
            sib_period_ms: 80,
            ra_timing: RaTiming::default(),
            grant_onset_jitter_ms: 640,
            reconnect_delay_ms: 3000,
            capture: CaptureModel::default(),
            capacity: CapacityModel::default(),
            cell_secret: "cell-secret".into(),
        }
    }
}

fn default_true() -> bool {
    true
}

fn default_current() -> f64 {
    1.0
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct UeSpec {
    pub rnti: Rnti,
    #[serde(default)]
    pub distance_m: f64,
    pub path_loss_db: f64,
    #[serde(default)]
    pub traffic: Traffic,
    #[serde(default)]
    pub beam_idx: u8,
    /// SCells active (at both ends) when the run starts.
    #[serde(default)]
    pub active_scells: Vec<u8>,
    /// Overrides the cell-wide periodic CSI setting.
    #[serde(default)]
    pub csi: Option<CsiSchedule>,
    #[serde(default = "default_true")]
    pub connected: bool,
    #[serde(default = "default_current")]
    pub base_current: f64,
}

impl UeSpec {
    pub fn new(rnti: u16, path_loss_db: f64, traffic: Traffic) -> Self {
        Self {
            rnti: Rnti(rnti),
            distance_m: 0.0,
            path_loss_db,
            traffic,
            beam_idx: 0,
            active_scells: Vec::new(),
            csi: None,
            connected: true,
            base_current: 1.0,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScenarioConfig {
    #[serde(default)]
    pub name: String,
    /// Named operator profile applied over `cell`.
    #[serde(default)]
    pub profile: Option<String>,
    #[serde(default)]
    pub cell: CellConfig,
    #[serde(default)]
    pub bs: BsConfig,
    pub ues: Vec<UeSpec>,
    #[serde(default)]
    pub attacker: Option<AttackerConfig>,
    #[serde(default)]
    pub mitigation_enabled: bool,
    pub duration_ms: u64,
    #[serde(default)]
    pub seed: u64,
}

impl ScenarioConfig {
    pub fn from_json(text: &str) -> Result<Self, SimError> {
        let mut cfg: Self = serde_json::from_str(text).map_err(|e| SimError::ConfigInvalid(e.to_string()))?;
        cfg.apply_profile()?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Self, SimError> {
        let text = std::fs::read_to_string(path).map_err(|e| SimError::Io(format!("{}: {e}", path.display())))?;
        Self::from_json(&text)
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("config serializes")
    }

    pub fn apply_profile(&mut self) -> Result<(), SimError> {
        if let Some(name) = &self.profile {
            let p = Profile::by_name(name).ok_or_else(|| SimError::ConfigInvalid(format!("unknown profile {name}")))?;
            p.apply(&mut self.cell);
        }
        Ok(())
    }

    pub fn validate(&self) -> Result<(), SimError> {
        let bad = |m: String| Err(SimError::ConfigInvalid(m));
        if self.duration_ms == 0 {
            return bad("duration_ms must be positive".into());
        }
        let c = &self.cell;
        if c.mu > MAX_MU {
            return bad(format!("mu {} above {MAX_MU}", c.mu));
        }
        if c.bandwidth_rb == 0 || c.bandwidth_rb > 275 {
            return bad(format!("bandwidth_rb {} outside 1..=275", c.bandwidth_rb));
        }
        if c.scell_count > 7 {
            return bad("at most 7 SCells".into());
        }
        if c.sib_period_ms == 0 {
            return bad("sib_period_ms must be positive".into());
        }
        if self.bs.k1 > 7 || self.bs.k2 > 7 {
            return bad("k1 and k2 must fit in 3 bits".into());
        }
        let mut seen = BTreeSet::new();
        for u in &self.ues {
            if u.rnti.0 == 0 || u.rnti.0 == 0xFFFF {
                return bad(format!("RNTI {} is reserved", u.rnti.0));
            }
            if !seen.insert(u.rnti) {
                return bad(format!("duplicate RNTI {}", u.rnti.0));
            }
            if u.active_scells.iter().any(|&s| s == 0 || s > c.scell_count) {
                return bad(format!("UE {}: SCell index outside 1..={}", u.rnti.0, c.scell_count));
            }
        }
        if let Some(a) = &self.attacker {
            a.validate().map_err(|e| SimError::ConfigInvalid(e.to_string()))?;
            let layout = DciLayout::new(c.bandwidth_rb);
            for (i, act) in a.actions.iter().enumerate() {
                for inj in
                    crate::attacker::run_action(i, &act.action).map_err(|e| SimError::ConfigInvalid(e.to_string()))?
                {
                    if let crate::attacker::Injection::DlDci { dci, .. } = inj {
                        encode_dci(&dci, &layout).map_err(|e| SimError::ConfigInvalid(format!("action {i}: {e}")))?;
                    }
                }
            }
        }
        Ok(())
    }

    /// Same scenario with every attack action removed.
    pub fn baseline(&self) -> Self {
        let mut b = self.clone();
        if let Some(a) = &mut b.attacker {
            a.actions.clear();
        }
        b
    }

    pub fn has_attacks(&self) -> bool {
        self.attacker.as_ref().is_some_and(|a| !a.actions.is_empty())
    }

    pub fn slots(&self) -> u64 {
        self.duration_ms << self.cell.mu
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn minimal() -> &'static str {
        r#"{"ues": [{"rnti": 100, "path_loss_db": 120}], "duration_ms": 1000}"#
    }

    #[test]
    fn defaults_fill_in() {
        let c = ScenarioConfig::from_json(minimal()).unwrap();
        assert_eq!(c.cell.bandwidth_rb, 25);
        assert_eq!(c.cell.sib, SibRaConfig::operator_default());
        assert_eq!(c.bs.rlf_threshold_ms, 2000.0);
        assert!(c.ues[0].connected);
        assert_eq!(c.slots(), 1000);
    }

    #[test]
    fn rejects_invalid() {
        let dup = r#"{"ues": [{"rnti": 5, "path_loss_db": 1}, {"rnti": 5, "path_loss_db": 1}], "duration_ms": 10}"#;
        assert!(matches!(ScenarioConfig::from_json(dup), Err(SimError::ConfigInvalid(_))));
        let zero = r#"{"ues": [], "duration_ms": 0}"#;
        assert!(ScenarioConfig::from_json(zero).is_err());
        let prof = r#"{"profile": "MNO-Z9", "ues": [], "duration_ms": 5}"#;
        assert!(ScenarioConfig::from_json(prof).is_err());
        let over = r#"{"ues": [{"rnti": 5, "path_loss_db": 1}], "duration_ms": 10,
            "attacker": {"actions": [{"at_ms": 1, "action": {"type": "inject_dci", "dci": {"kind": "ul_grant", "rnti": 5, "tpc": 9, "alloc": {"start_rb": 0, "num_rb": 1, "slot_offset": 0}}}}]}}"#;
        assert!(ScenarioConfig::from_json(over).is_err());
    }

    #[test]
    fn profile_overlays_cell() {
        let j = r#"{"profile": "MNO-A2", "ues": [], "duration_ms": 5}"#;
        let c = ScenarioConfig::from_json(j).unwrap();
        assert_eq!(c.cell.scell_count, 3);
        assert_eq!(c.cell.sib.trans_max(), 5);
        assert_eq!(c.cell.scell_deactivation_timer_ms, None);
    }
}
