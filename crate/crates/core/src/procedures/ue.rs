//! UE-side state and its reaction to DCIs and MAC control elements.

use std::collections::BTreeMap;

use rand::Rng;
use serde::{Deserialize, Serialize};

use super::harq::{harq_on_assignment, HarqTracker};
use super::ra::{ra_start, RaCause, RaEvent, RaState};
use crate::codec::dci::{DciKind, DciMessage};
use crate::codec::mac::MacElement;
use crate::codec::sib::SibRaConfig;
use crate::time::{Direction, PowerDbm, ResourceAllocation, Rnti, SlotTime, UE_MAX_TX_DBM};

/// Extra current per active SCell, relative to PCell-only operation.
pub const SCELL_CURRENT_FACTOR: f64 = 0.79;
/// TA command value meaning "no change".
pub const TA_CMD_NEUTRAL: i32 = 31;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Traffic {
    #[default]
    None,
    FullBufferUl,
    FullBufferDl,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "mode", rename_all = "snake_case")]
pub enum CsiSchedule {
    Off,
    Periodic { period_ms: u32 },
    SemiPersistent { period_ms: u32, active: bool },
}

impl CsiSchedule {
    pub fn active_period_ms(&self) -> Option<u32> {
        match *self {
            CsiSchedule::Off => None,
            CsiSchedule::Periodic { period_ms } => Some(period_ms),
            CsiSchedule::SemiPersistent { period_ms, active } => active.then_some(period_ms),
        }
    }
}

/// Static per-UE parameters.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct UeConfig {
    pub traffic: Traffic,
    pub scell_count: u8,
    /// `None` = never deactivates on its own.
    pub scell_deactivation_timer_ms: Option<u32>,
    pub max_tx_dbm: f64,
    pub base_current: f64,
    /// Delay before the UE starts acting on grants it did not ask for.
    pub grant_onset_delay_ms: u32,
    /// TA error (in steps) beyond which uplink is not received.
    pub ta_tolerance: i32,
}

impl Default for UeConfig {
    fn default() -> Self {
        Self {
            traffic: Traffic::None,
            scell_count: 0,
            scell_deactivation_timer_ms: None,
            max_tx_dbm: UE_MAX_TX_DBM,
            base_current: 1.0,
            grant_onset_delay_ms: 0,
            ta_tolerance: 2,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct UeState {
    pub rnti: Rnti,
    /// Attached to the cell (holds a valid C-RNTI).
    pub connected: bool,
    pub cfg: UeConfig,
    pub ra: RaState,
    /// One tracker per carrier, PCell first.
    pub harq: Vec<HarqTracker>,
    /// Active SCell index and its deactivation deadline (`None` = never).
    pub active_scells: BTreeMap<u8, Option<SlotTime>>,
    pub active_bwp: u8,
    pub csi_schedule: CsiSchedule,
    pub srs_semipersistent_active: bool,
    pub serving_beam_idx: u8,
    pub ta_value: i32,
    pub tx_power: PowerDbm,
    pub energy_units: f64,
    pub radio_link_failed: bool,
    /// Last decoded RA configuration.
    pub sib: SibRaConfig,
    /// Connected UEs re-read system information only after paging.
    pub sib_reread_pending: bool,
    pub ul_rate_cap_kbps: Option<u16>,
    pub sr_pending: bool,
    pub unsolicited_since: Option<SlotTime>,
}

/// Where a DCI was received and whether its PDSCH decoded.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct DciRx {
    pub carrier: u8,
    pub pdsch_ok: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "action", rename_all = "snake_case")]
pub enum UeAction {
    UlTx { alloc: ResourceAllocation, power: PowerDbm, padding_fraction: f64 },
    HarqRecorded { carrier: u8, feedback_at: SlotTime },
    Ra(RaEvent),
    BwpSwitched { from: u8, to: u8 },
    Ignored,
}

impl UeState {
    pub fn new(rnti: Rnti, cfg: UeConfig, serving_beam_idx: u8, ta_value: i32, sib: SibRaConfig) -> Self {
        Self {
            rnti,
            connected: true,
            cfg,
            ra: RaState::default(),
            harq: vec![HarqTracker::default(); usize::from(cfg.scell_count) + 1],
            active_scells: BTreeMap::new(),
            active_bwp: 0,
            csi_schedule: CsiSchedule::Off,
            srs_semipersistent_active: false,
            serving_beam_idx,
            ta_value,
            tx_power: PowerDbm(if cfg.traffic == Traffic::FullBufferUl { cfg.max_tx_dbm } else { 0.0 }),
            energy_units: 0.0,
            radio_link_failed: false,
            sib,
            sib_reread_pending: false,
            ul_rate_cap_kbps: None,
            sr_pending: false,
            unsolicited_since: None,
        }
    }

    /// Can exchange dedicated data with the cell right now.
    pub fn schedulable(&self) -> bool {
        self.connected && !self.radio_link_failed && !self.ra.in_progress()
    }

    pub fn scell_active(&self, carrier: u8) -> bool {
        carrier == 0 || self.active_scells.contains_key(&carrier)
    }

    pub fn ul_aligned(&self, true_ta: i32) -> bool {
        (self.ta_value - true_ta).abs() <= self.cfg.ta_tolerance
    }

    fn apply_tpc(&mut self, tpc: u8) {
        let p = match tpc {
            3 => self.cfg.max_tx_dbm,
            0 => self.tx_power.0 - 1.0,
            2 => self.tx_power.0 + 1.0,
            _ => self.tx_power.0,
        };
        self.tx_power = PowerDbm::ue_tx(p, self.cfg.max_tx_dbm);
    }

    /// Drop to idle, releasing all dedicated state.
    pub fn detach(&mut self, radio_link_failed: bool) {
        self.connected = false;
        self.radio_link_failed = radio_link_failed;
        self.active_scells.clear();
        self.harq.iter_mut().for_each(HarqTracker::reset);
        self.active_bwp = 0;
        self.sr_pending = false;
        self.unsolicited_since = None;
    }

    /// Attach after a completed access.
    pub fn attach(&mut self, serving_beam_idx: u8, ta_value: i32) {
        self.connected = true;
        self.radio_link_failed = false;
        self.serving_beam_idx = serving_beam_idx;
        self.ta_value = ta_value;
        self.harq.iter_mut().for_each(HarqTracker::reset);
        if self.cfg.traffic == Traffic::FullBufferUl {
            self.tx_power = PowerDbm(self.cfg.max_tx_dbm);
        }
    }
}

/// React to a DCI addressed to this UE.
pub fn ue_on_dci(ue: &mut UeState, d: &DciMessage, now: SlotTime, rx: DciRx, rng: &mut impl Rng) -> Vec<UeAction> {
    if !ue.connected || ue.radio_link_failed {
        return vec![UeAction::Ignored];
    }
    if ue.ra.in_progress() {
        return vec![UeAction::Ignored];
    }
    match d.kind {
        DciKind::UlGrant => {
            let Some(a) = d.alloc else { return vec![UeAction::Ignored] };
            let solicited = ue.cfg.traffic == Traffic::FullBufferUl || ue.sr_pending;
            if !solicited {
                let since = *ue.unsolicited_since.get_or_insert(now);
                let waited_ms = since.slots_until(&now) as f64 * now.slot_ms();
                if waited_ms < f64::from(ue.cfg.grant_onset_delay_ms) {
                    return vec![UeAction::Ignored];
                }
            }
            ue.sr_pending = false;
            ue.apply_tpc(d.tpc);
            let padding_fraction = if ue.cfg.traffic == Traffic::FullBufferUl { 0.0 } else { 1.0 };
            vec![UeAction::UlTx { alloc: a.resolve(now, Direction::Ul), power: ue.tx_power, padding_fraction }]
        }
        DciKind::DlAssignment => {
            let carrier = rx.carrier;
            if let Some(h) = ue.harq.get_mut(usize::from(carrier)) {
                harq_on_assignment(h, d, rx.pdsch_ok, now);
            } else {
                return vec![UeAction::Ignored];
            }
            if carrier != 0 {
                if let (Some(dl), Some(ms)) = (ue.active_scells.get_mut(&carrier), ue.cfg.scell_deactivation_timer_ms) {
                    *dl = Some(now.advance(u64::from(ms) << now.mu()));
                }
            }
            vec![UeAction::HarqRecorded { carrier, feedback_at: super::harq::feedback_slot(d, now) }]
        }
        DciKind::PdcchOrder => {
            let cause = RaCause::PdcchOrder { preamble_index: d.po_preamble_index() };
            let ev = ra_start(&mut ue.ra, ue.sib, cause, now, ue.tx_power, rng);
            ue.harq.iter_mut().for_each(HarqTracker::reset);
            vec![UeAction::Ra(ev)]
        }
        DciKind::BwpSwitch => {
            let from = ue.active_bwp;
            ue.active_bwp = d.bwp_indicator;
            vec![UeAction::BwpSwitched { from, to: d.bwp_indicator }]
        }
    }
}

/// Apply a MAC control element decoded from the downlink. The BS is never
/// told about the change.
pub fn apply_mac_ce(ue: &mut UeState, ce: &MacElement, now: SlotTime) {
    match ce {
        MacElement::ScellActDeact { bitmap } => {
            let deadline = ue.cfg.scell_deactivation_timer_ms.map(|ms| now.advance(u64::from(ms) << now.mu()));
            ue.active_scells = bitmap.indices().filter(|i| *i <= ue.cfg.scell_count).map(|i| (i, deadline)).collect();
        }
        MacElement::TimingAdvanceCmd { ta, .. } => ue.ta_value += i32::from(*ta) - TA_CMD_NEUTRAL,
        MacElement::SpSrsActDeact { active, .. } => ue.srs_semipersistent_active = *active,
        MacElement::CsiReportingActDeact { active } => {
            if let CsiSchedule::SemiPersistent { period_ms, .. } = ue.csi_schedule {
                ue.csi_schedule = CsiSchedule::SemiPersistent { period_ms, active: *active };
            }
        }
        MacElement::RecommendedBitRate { kbps } => ue.ul_rate_cap_kbps = Some(*kbps),
        MacElement::BeamFailureRecovery { .. } | MacElement::Sdu { .. } => {}
    }
}

/// Expire SCells whose deactivation timer ran out.
pub fn scell_timer_tick(ue: &mut UeState, now: SlotTime) -> Vec<u8> {
    let expired: Vec<u8> =
        ue.active_scells.iter().filter(|(_, d)| d.is_some_and(|d| now.has_reached(&d))).map(|(i, _)| *i).collect();
    for i in &expired {
        ue.active_scells.remove(i);
    }
    expired
}

/// Accumulate energy over `dt_ms` at the current SCell count.
pub fn energy_tick(ue: &mut UeState, dt_ms: f64) {
    debug_assert!(dt_ms > 0.0);
    ue.energy_units += dt_ms * ue.cfg.base_current * (1.0 + SCELL_CURRENT_FACTOR * ue.active_scells.len() as f64);
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::codec::dci::DciAllocation;
    use crate::codec::mac::ScellBitmap;
    use crate::procedures::ra::RaPhase;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn ue(cfg: UeConfig) -> UeState {
        UeState::new(Rnti(0x4601), cfg, 5, 10, SibRaConfig::default())
    }

    fn rng() -> ChaCha8Rng {
        ChaCha8Rng::seed_from_u64(1)
    }

    const RX: DciRx = DciRx { carrier: 0, pdsch_ok: true };

    #[test]
    fn ul_grant_fills_allocation_with_padding() {
        let mut u = ue(UeConfig::default());
        let mut d = DciMessage::ul_grant(u.rnti, DciAllocation::new(0, 50, 4));
        d.tpc = 3;
        let acts = ue_on_dci(&mut u, &d, SlotTime::zero(0), RX, &mut rng());
        match &acts[..] {
            [UeAction::UlTx { alloc, power, padding_fraction }] => {
                assert_eq!(alloc.num_rb, 50);
                assert_eq!(alloc.slot, SlotTime::zero(0).advance(4));
                assert_eq!(power.0, 23.0);
                assert_eq!(*padding_fraction, 1.0);
            }
            other => panic!("{other:?}"),
        }
    }

    #[test]
    fn onset_delay_applies_to_unsolicited_grants() {
        let mut u = ue(UeConfig { grant_onset_delay_ms: 3, ..UeConfig::default() });
        let d = DciMessage::ul_grant(u.rnti, DciAllocation::full_band(25));
        let mut r = rng();
        let out: Vec<bool> = (0..5)
            .map(|i| matches!(ue_on_dci(&mut u, &d, SlotTime::from_index(i, 0), RX, &mut r)[0], UeAction::UlTx { .. }))
            .collect();
        assert_eq!(out, vec![false, false, false, true, true]);
    }

    #[test]
    fn pdcch_order_starts_ra() {
        let mut u = ue(UeConfig::default());
        let d = DciMessage::pdcch_order(u.rnti, 12);
        ue_on_dci(&mut u, &d, SlotTime::zero(0), RX, &mut rng());
        assert!(matches!(u.ra.phase, RaPhase::WaitingRar { .. }));
        assert_eq!(u.ra.attempt, 1);
        assert_eq!(u.ra.preamble, 12);
        assert!(!u.schedulable());
    }

    #[test]
    fn bwp_switch() {
        let mut u = ue(UeConfig::default());
        let d = DciMessage::bwp_switch(u.rnti, 2);
        let acts = ue_on_dci(&mut u, &d, SlotTime::zero(0), RX, &mut rng());
        assert_eq!(acts, vec![UeAction::BwpSwitched { from: 0, to: 2 }]);
        assert_eq!(u.active_bwp, 2);
    }

    #[test]
    fn tpc_steps() {
        let mut u = ue(UeConfig::default());
        u.tx_power = PowerDbm(10.0);
        u.apply_tpc(0);
        assert_eq!(u.tx_power.0, 9.0);
        u.apply_tpc(2);
        u.apply_tpc(2);
        assert_eq!(u.tx_power.0, 11.0);
        u.apply_tpc(1);
        assert_eq!(u.tx_power.0, 11.0);
        u.apply_tpc(3);
        assert_eq!(u.tx_power.0, 23.0);
    }

    #[test]
    fn scell_activation_and_timer() {
        let mut u = ue(UeConfig { scell_count: 2, scell_deactivation_timer_ms: Some(20), ..UeConfig::default() });
        let t0 = SlotTime::zero(0);
        apply_mac_ce(&mut u, &MacElement::ScellActDeact { bitmap: ScellBitmap::from_indices([1]) }, t0);
        assert!(u.scell_active(1) && !u.scell_active(2));
        assert!(scell_timer_tick(&mut u, t0.advance(19)).is_empty());
        assert_eq!(scell_timer_tick(&mut u, t0.advance(20)), vec![1]);
        assert!(!u.scell_active(1));
    }

    #[test]
    fn infinite_timer_never_expires() {
        let mut u = ue(UeConfig { scell_count: 1, ..UeConfig::default() });
        apply_mac_ce(&mut u, &MacElement::ScellActDeact { bitmap: ScellBitmap::from_indices([1]) }, SlotTime::zero(0));
        for i in (0..100_000u64).step_by(997) {
            assert!(scell_timer_tick(&mut u, SlotTime::from_index(i, 0)).is_empty());
        }
        assert!(u.scell_active(1));
    }

    #[test]
    fn energy_per_scell() {
        for (n, want) in [(0u8, 1000.0), (1, 1790.0), (2, 2580.0)] {
            let mut u = ue(UeConfig { scell_count: 2, ..UeConfig::default() });
            let idx: Vec<u8> = (1..=n).collect();
            apply_mac_ce(
                &mut u,
                &MacElement::ScellActDeact { bitmap: ScellBitmap::from_indices(idx) },
                SlotTime::zero(0),
            );
            for _ in 0..1000 {
                energy_tick(&mut u, 1.0);
            }
            assert!((u.energy_units - want).abs() < 1e-6, "{n}: {}", u.energy_units);
        }
    }

    #[test]
    fn ta_command_adjusts() {
        let mut u = ue(UeConfig::default());
        apply_mac_ce(&mut u, &MacElement::TimingAdvanceCmd { tag_id: 0, ta: 31 }, SlotTime::zero(0));
        assert_eq!(u.ta_value, 10);
        apply_mac_ce(&mut u, &MacElement::TimingAdvanceCmd { tag_id: 0, ta: 63 }, SlotTime::zero(0));
        assert_eq!(u.ta_value, 42);
        assert!(!u.ul_aligned(10));
    }

    #[test]
    fn csi_and_srs_toggles() {
        let mut u = ue(UeConfig::default());
        u.csi_schedule = CsiSchedule::SemiPersistent { period_ms: 10, active: false };
        apply_mac_ce(&mut u, &MacElement::CsiReportingActDeact { active: true }, SlotTime::zero(0));
        assert_eq!(u.csi_schedule.active_period_ms(), Some(10));
        apply_mac_ce(&mut u, &MacElement::SpSrsActDeact { active: true, resource_id: 3 }, SlotTime::zero(0));
        assert!(u.srs_semipersistent_active);
        apply_mac_ce(&mut u, &MacElement::RecommendedBitRate { kbps: 64 }, SlotTime::zero(0));
        assert_eq!(u.ul_rate_cap_kbps, Some(64));
    }

    #[test]
    fn detached_ue_holds_no_scells() {
        let mut u = ue(UeConfig { scell_count: 2, ..UeConfig::default() });
        apply_mac_ce(
            &mut u,
            &MacElement::ScellActDeact { bitmap: ScellBitmap::from_indices([1, 2]) },
            SlotTime::zero(0),
        );
        u.detach(true);
        assert!(u.active_scells.is_empty());
        assert!(u.radio_link_failed);
    }
}
