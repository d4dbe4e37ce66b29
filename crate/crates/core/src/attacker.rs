//! Scriptable adversary: scheduled injections and a passive sniffer view.

use std::collections::BTreeSet;
use std::io::Write;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::codec::dci::{DciAllocation, DciKind, DciMessage};
use crate::codec::mac::{encode_mac_pdu, MacElement, MacPdu};
use crate::codec::sib::SibRaConfig;
use crate::codec::CodecError;
use crate::time::Rnti;

pub const DEFAULT_ATTACKER_DBM: f64 = 23.0;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum AttackError {
    #[error("action {0}: repeat actions cannot nest")]
    NestedRepeat(usize),
    #[error("action {0}: repeat period must be at least one slot")]
    ZeroPeriod(usize),
    #[error("action {id}: {source}")]
    Codec { id: usize, source: CodecError },
}

fn default_power() -> f64 {
    DEFAULT_ATTACKER_DBM
}

/// DCI as written in a scenario file; unset fields default to zero.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DciSpec {
    pub kind: DciKind,
    pub rnti: Rnti,
    #[serde(default)]
    pub alloc: Option<DciAllocation>,
    #[serde(default)]
    pub tpc: u8,
    #[serde(default)]
    pub dai: u8,
    #[serde(default)]
    pub harq_feedback_timing: u8,
    #[serde(default)]
    pub bwp_indicator: u8,
    #[serde(default)]
    pub mcs: u8,
    #[serde(default)]
    pub ndi: u8,
    #[serde(default)]
    pub rv: u8,
    #[serde(default)]
    pub harq_pid: u8,
    /// PDCCH order only.
    #[serde(default)]
    pub preamble_index: Option<u8>,
}

impl DciSpec {
    pub fn to_message(&self) -> DciMessage {
        let mut d = DciMessage {
            rnti: self.rnti,
            kind: self.kind,
            alloc: self.alloc,
            tpc: self.tpc,
            dai: self.dai,
            harq_feedback_timing: self.harq_feedback_timing,
            bwp_indicator: self.bwp_indicator,
            mcs: self.mcs,
            ndi: self.ndi,
            rv: self.rv,
            harq_pid: self.harq_pid,
        };
        if self.kind == DciKind::PdcchOrder {
            d = DciMessage { tpc: self.tpc, ..DciMessage::pdcch_order(self.rnti, self.preamble_index.unwrap_or(0)) };
        }
        d
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case")]
pub enum AttackKind {
    InjectDci {
        dci: DciSpec,
        #[serde(default = "default_power")]
        tx_power_dbm: f64,
    },
    InjectMacCe {
        target: Rnti,
        element: MacElement,
        #[serde(default = "default_power")]
        tx_power_dbm: f64,
    },
    OvershadowSib {
        sib: SibRaConfig,
        #[serde(default = "default_power")]
        tx_power_dbm: f64,
    },
    InjectPaging {
        #[serde(default = "default_power")]
        tx_power_dbm: f64,
    },
    SpoofSr {
        target: Rnti,
        #[serde(default = "default_power")]
        tx_power_dbm: f64,
    },
    RepeatEvery {
        period_slots: u64,
        inner: Box<AttackKind>,
        until_ms: u64,
    },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AttackAction {
    pub at_ms: u64,
    pub action: AttackKind,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AttackerLink {
    pub rnti: Rnti,
    pub path_loss_db: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AttackerConfig {
    #[serde(default = "default_link_loss")]
    pub path_loss_db_to_bs: f64,
    #[serde(default = "default_link_loss")]
    pub default_path_loss_db: f64,
    #[serde(default)]
    pub path_loss_db_to_each: Vec<AttackerLink>,
    #[serde(default)]
    pub actions: Vec<AttackAction>,
}

fn default_link_loss() -> f64 {
    90.0
}

impl Default for AttackerConfig {
    fn default() -> Self {
        Self {
            path_loss_db_to_bs: default_link_loss(),
            default_path_loss_db: default_link_loss(),
            path_loss_db_to_each: Vec::new(),
            actions: Vec::new(),
        }
    }
}

impl AttackerConfig {
    pub fn path_loss_to(&self, rnti: Rnti) -> f64 {
        self.path_loss_db_to_each.iter().find(|l| l.rnti == rnti).map_or(self.default_path_loss_db, |l| l.path_loss_db)
    }

    pub fn validate(&self) -> Result<(), AttackError> {
        for (i, a) in self.actions.iter().enumerate() {
            if let AttackKind::RepeatEvery { period_slots, inner, .. } = &a.action {
                if *period_slots == 0 {
                    return Err(AttackError::ZeroPeriod(i));
                }
                if matches!(**inner, AttackKind::RepeatEvery { .. }) {
                    return Err(AttackError::NestedRepeat(i));
                }
            }
        }
        Ok(())
    }

    /// Actions firing at absolute slot `slot`, with their index in the script.
    pub fn due(&self, slot: u64, mu: u8) -> Vec<(usize, &AttackKind)> {
        let to_slot = |ms: u64| ms << mu;
        self.actions
            .iter()
            .enumerate()
            .filter_map(|(i, a)| {
                let start = to_slot(a.at_ms);
                match &a.action {
                    AttackKind::RepeatEvery { period_slots, inner, until_ms } => {
                        let fires =
                            slot >= start && slot <= to_slot(*until_ms) && (slot - start).is_multiple_of(*period_slots);
                        fires.then_some((i, inner.as_ref()))
                    }
                    k => (slot == start).then_some((i, k)),
                }
            })
            .collect()
    }
}

/// One transmission produced by the attacker in a slot.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Injection {
    /// PDCCH candidate plus an optional crafted PDSCH payload.
    DlDci {
        action_id: usize,
        dci: DciMessage,
        pdsch: Option<Vec<u8>>,
        tx_power_dbm: f64,
    },
    Sib {
        action_id: usize,
        sib: SibRaConfig,
        tx_power_dbm: f64,
    },
    Paging {
        action_id: usize,
        tx_power_dbm: f64,
    },
    Sr {
        action_id: usize,
        target: Rnti,
        tx_power_dbm: f64,
    },
    /// Uplink MAC PDU sent as if by `target` (beam failure recovery).
    UlMacPdu {
        action_id: usize,
        target: Rnti,
        pdu: Vec<u8>,
        tx_power_dbm: f64,
    },
}

impl Injection {
    pub fn action_id(&self) -> usize {
        match self {
            Injection::DlDci { action_id, .. }
            | Injection::Sib { action_id, .. }
            | Injection::Paging { action_id, .. }
            | Injection::Sr { action_id, .. }
            | Injection::UlMacPdu { action_id, .. } => *action_id,
        }
    }
}

/// Allocation used to carry a forged MAC PDU.
pub const CE_CARRIER_ALLOC: DciAllocation = DciAllocation { start_rb: 0, num_rb: 1, slot_offset: 0 };

/// Expand one action into the transmissions it puts on the air.
pub fn run_action(action_id: usize, kind: &AttackKind) -> Result<Vec<Injection>, AttackError> {
    let codec = |source| AttackError::Codec { id: action_id, source };
    Ok(match kind {
        AttackKind::InjectDci { dci, tx_power_dbm } => {
            vec![Injection::DlDci { action_id, dci: dci.to_message(), pdsch: None, tx_power_dbm: *tx_power_dbm }]
        }
        AttackKind::InjectMacCe { target, element, tx_power_dbm } => {
            let pdu = encode_mac_pdu(&MacPdu::new(vec![element.clone()])).map_err(codec)?;
            if matches!(element, MacElement::BeamFailureRecovery { .. }) {
                vec![Injection::UlMacPdu { action_id, target: *target, pdu, tx_power_dbm: *tx_power_dbm }]
            } else {
                let dci = DciMessage::dl_assignment(*target, CE_CARRIER_ALLOC, 0, 4);
                vec![Injection::DlDci { action_id, dci, pdsch: Some(pdu), tx_power_dbm: *tx_power_dbm }]
            }
        }
        AttackKind::OvershadowSib { sib, tx_power_dbm } => {
            vec![Injection::Sib { action_id, sib: *sib, tx_power_dbm: *tx_power_dbm }]
        }
        AttackKind::InjectPaging { tx_power_dbm } => vec![Injection::Paging { action_id, tx_power_dbm: *tx_power_dbm }],
        AttackKind::SpoofSr { target, tx_power_dbm } => {
            vec![Injection::Sr { action_id, target: *target, tx_power_dbm: *tx_power_dbm }]
        }
        AttackKind::RepeatEvery { inner, .. } => run_action(action_id, inner)?,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ObservedDci {
    pub t_ms: f64,
    pub rnti: Rnti,
    pub kind: DciKind,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ObservedCsi {
    pub t_ms: f64,
    pub rnti: Rnti,
    pub beam_idx: u8,
    pub rsrp_dbm: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ObservedRa {
    pub t_ms: f64,
    pub beam_idx: u8,
    pub ta: u32,
}

/// What a passive listener at the attacker position has decoded.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct SnifferView {
    pub observed_rntis: BTreeSet<Rnti>,
    pub observed_dcis: Vec<ObservedDci>,
    pub observed_csi_reports: Vec<ObservedCsi>,
    pub observed_ra_exchanges: Vec<ObservedRa>,
}

impl SnifferView {
    pub fn record_dci(&mut self, t_ms: f64, d: &DciMessage) {
        self.observed_rntis.insert(d.rnti);
        self.observed_dcis.push(ObservedDci { t_ms, rnti: d.rnti, kind: d.kind });
    }

    pub fn record_csi(&mut self, t_ms: f64, rnti: Rnti, beam_idx: u8, rsrp_dbm: f64) {
        self.observed_rntis.insert(rnti);
        self.observed_csi_reports.push(ObservedCsi { t_ms, rnti, beam_idx, rsrp_dbm });
    }

    pub fn record_ra(&mut self, t_ms: f64, beam_idx: u8, ta: u32) {
        self.observed_ra_exchanges.push(ObservedRa { t_ms, beam_idx, ta });
    }

    /// RA log in the `t_ms,beam_idx,ta` format.
    pub fn write_ra_csv(&self, w: impl Write) -> csv::Result<()> {
        let mut out = csv::Writer::from_writer(w);
        for r in &self.observed_ra_exchanges {
            out.serialize(r)?;
        }
        out.flush()?;
        Ok(())
    }

    /// CSI log in the `t_ms,rnti,beam_idx,rsrp_dbm` format.
    pub fn write_csi_csv(&self, w: impl Write) -> csv::Result<()> {
        let mut out = csv::Writer::from_writer(w);
        out.write_record(["t_ms", "rnti", "beam_idx", "rsrp_dbm"])?;
        for r in &self.observed_csi_reports {
            out.write_record([
                r.t_ms.to_string(),
                r.rnti.0.to_string(),
                r.beam_idx.to_string(),
                r.rsrp_dbm.to_string(),
            ])?;
        }
        out.flush()?;
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::codec::mac::{decode_mac_pdu, ScellBitmap};

    fn repeat(period: u64, until: u64) -> AttackAction {
        AttackAction {
            at_ms: 10,
            action: AttackKind::RepeatEvery {
                period_slots: period,
                inner: Box::new(AttackKind::InjectPaging { tx_power_dbm: 20.0 }),
                until_ms: until,
            },
        }
    }

    #[test]
    fn repeat_expands_per_period() {
        let cfg = AttackerConfig { actions: vec![repeat(4, 20)], ..AttackerConfig::default() };
        let fired: Vec<u64> = (0..40).filter(|s| !cfg.due(*s, 0).is_empty()).collect();
        assert_eq!(fired, vec![10, 14, 18]);
        let fired: Vec<u64> = (0..200).filter(|s| !cfg.due(*s, 3).is_empty()).collect();
        assert_eq!(fired.first(), Some(&80));
        assert_eq!(fired.last(), Some(&160));
    }

    #[test]
    fn nesting_rejected() {
        let nested = AttackAction {
            at_ms: 0,
            action: AttackKind::RepeatEvery { period_slots: 1, inner: Box::new(repeat(1, 5).action), until_ms: 5 },
        };
        let cfg = AttackerConfig { actions: vec![nested], ..AttackerConfig::default() };
        assert_eq!(cfg.validate(), Err(AttackError::NestedRepeat(0)));
        let cfg = AttackerConfig { actions: vec![repeat(0, 5)], ..AttackerConfig::default() };
        assert_eq!(cfg.validate(), Err(AttackError::ZeroPeriod(0)));
    }

    #[test]
    fn mac_ce_injection_carries_pdu() {
        let el = MacElement::ScellActDeact { bitmap: ScellBitmap(0) };
        let inj = run_action(3, &AttackKind::InjectMacCe { target: Rnti(7), element: el.clone(), tx_power_dbm: 20.0 })
            .unwrap();
        let Injection::DlDci { dci, pdsch: Some(p), action_id, .. } = &inj[0] else { panic!("{inj:?}") };
        assert_eq!(*action_id, 3);
        assert_eq!(dci.kind, DciKind::DlAssignment);
        assert_eq!(decode_mac_pdu(p).unwrap().elements, vec![el]);
        let bfr = MacElement::BeamFailureRecovery { new_beam_idx: 9 };
        let inj =
            run_action(0, &AttackKind::InjectMacCe { target: Rnti(7), element: bfr, tx_power_dbm: 20.0 }).unwrap();
        assert!(matches!(inj[0], Injection::UlMacPdu { .. }));
    }

    #[test]
    fn scenario_json_shape() {
        let j = r#"{"at_ms": 12000, "action": {"type": "inject_dci", "dci": {"kind": "pdcch_order", "rnti": 17921, "preamble_index": 17}}}"#;
        let a: AttackAction = serde_json::from_str(j).unwrap();
        let AttackKind::InjectDci { dci, tx_power_dbm } = a.action else { panic!() };
        assert_eq!(tx_power_dbm, DEFAULT_ATTACKER_DBM);
        let m = dci.to_message();
        assert_eq!(m.kind, DciKind::PdcchOrder);
        assert_eq!(m.po_preamble_index(), 17);
    }

    #[test]
    fn ra_csv_format() {
        let mut v = SnifferView::default();
        v.record_ra(1.5, 7, 3);
        let mut buf = Vec::new();
        v.write_ra_csv(&mut buf).unwrap();
        assert_eq!(String::from_utf8(buf).unwrap(), "t_ms,beam_idx,ta\n1.5,7,3\n");
    }
}
