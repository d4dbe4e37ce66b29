//! Slot-stepped engine binding the BS, the UEs, the attacker and the channel.
//!
//! Each slot runs in a fixed order: broadcast (SIB, paging), UE timers and
//! random access, RAR/Msg3/Msg4 handling, downlink scheduling and PDCCH
//! delivery, uplink reception (PUSCH, PUCCH, forged uplink), BS link
//! monitoring, then energy and divergence accounting. All randomness comes
//! from ChaCha substreams of the scenario seed, one per UE and one for the
//! BS; the attacker draws nothing.

use std::collections::BTreeMap;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::config::{ScenarioConfig, UeSpec};
use super::report::{
    CellMetrics, Event, EventKind, InjectionOutcome, MetricsReport, RaOutcomeRecord, RaResult, ReportMeta, UeMetrics,
};
use super::SimError;
use crate::attacker::{run_action, AttackerConfig, Injection, SnifferView};
use crate::channel::{noise_dbm, sinr, DecodeOutcome};
use crate::codec::bits::{from_bytes, Bits};
use crate::codec::crc::crc16;
use crate::codec::dci::{decode_dci, encode_dci, DciAllocation, DciKind, DciLayout, DciMessage};
use crate::codec::mac::{decode_mac_pdu, MacElement};
use crate::codec::scramble::{scramble_bytes, scramble_keyed, MitigationKeyContext, PhyKey};
use crate::codec::sib::{decode_sib_ra, encode_sib_ra, SibRaConfig};
use crate::codec::uci::{decode_uci, encode_uci, AckBitmap, CsiReport, Uci};
use crate::procedures::{
    apply_mac_ce, bs_inactive, bs_on_bfr, bs_on_feedback, bs_on_msg3, bs_on_preamble, bs_on_rar_sent, bs_on_sr,
    bs_resolve_contention, bs_rlf_due, energy_tick, ra_on_msg4, ra_on_rar, ra_start, ra_tick, round_robin,
    scell_timer_tick, ue_on_dci, BsState, CsiSchedule, DciRx, FeedbackResult, PendingTb, PreambleOutcome, RaCause,
    RaEvent, RarOutcome, Traffic, UeAction, UeConfig, UeState,
};
use crate::time::{ta_for_distance, PowerDbm, Rnti, SlotTime, UE_MAX_TX_DBM};

/// Substream of the BS generator; UE streams use their RNTI.
const BS_STREAM: u64 = 1 << 32;

/// Key-context RB tags that keep control channels off the data keystreams.
const PDCCH_TAG: u16 = 0xFF00;
const PUCCH_TAG: u16 = 0xFE00;

/// Per-slot observations not kept in the report.
#[derive(Debug, Clone, PartialEq)]
pub struct SlotStats {
    pub slot: u64,
    /// PDSCH bits each UE decoded this slot, all carriers, in config order.
    pub dl_decoded_bits: Vec<f64>,
    /// Data RBs scheduled per carrier.
    pub dl_rb: Vec<u16>,
    /// PCell RBs held for RARs and contention contexts.
    pub reserved_rb: u16,
}

#[derive(Debug, Clone, Copy, PartialEq)]
enum Scheduled {
    UlTx { ue: usize, start_rb: u16, num_rb: u16, power: PowerDbm, padding: f64 },
    Msg3 { ue: usize, rar_id: u64 },
    Reconnect { ue: usize },
}

/// Future work keyed by (slot, insertion ordinal).
#[derive(Debug, Default)]
struct EventQueue {
    items: BTreeMap<(u64, u64), Scheduled>,
    next: u64,
}

impl EventQueue {
    fn push(&mut self, slot: u64, ev: Scheduled) {
        self.items.insert((slot, self.next), ev);
        self.next += 1;
    }

    fn pop_due(&mut self, slot: u64) -> Vec<Scheduled> {
        let later = self.items.split_off(&(slot + 1, 0));
        let due = std::mem::replace(&mut self.items, later);
        due.into_values().collect()
    }
}

#[derive(Debug)]
struct UeAcc {
    dl_bits: Vec<f64>,
    ul_bits: Vec<f64>,
    ra_attempts: Vec<u32>,
    ra_outcomes: Vec<RaOutcomeRecord>,
    energy: Vec<f64>,
    harq_failures: Vec<u32>,
    rlf: Vec<f64>,
    bs_rlf: Vec<f64>,
    releases: Vec<f64>,
    csi_reports: u64,
    divergence_slots: u64,
}

impl UeAcc {
    fn new(n: usize) -> Self {
        Self {
            dl_bits: vec![0.0; n],
            ul_bits: vec![0.0; n],
            ra_attempts: vec![0; n],
            ra_outcomes: Vec::new(),
            energy: vec![0.0; n],
            harq_failures: vec![0; n],
            rlf: Vec::new(),
            bs_rlf: Vec::new(),
            releases: Vec::new(),
            csi_reports: 0,
            divergence_slots: 0,
        }
    }
}

#[derive(Debug)]
struct UeRt {
    st: UeState,
    spec: UeSpec,
    true_ta: i32,
    rng: ChaCha8Rng,
    key: PhyKey,
    dl_sinr_db: f64,
    /// RAR this UE's latest Msg1 is answered by.
    rar_wait: Option<u64>,
    acc: UeAcc,
}

#[derive(Debug)]
struct CellAcc {
    rach_load: Vec<u32>,
    cbra: Vec<u32>,
    rars: Vec<u32>,
    drops: Vec<u32>,
    violations: u64,
    peak_reserved: u16,
}

struct LegitDl {
    ue: usize,
    carrier: u8,
    dci: DciMessage,
    tb_bits: f64,
}

pub struct Simulation {
    cfg: ScenarioConfig,
    layout: DciLayout,
    bs: BsState,
    bs_rng: ChaCha8Rng,
    ues: Vec<UeRt>,
    index: BTreeMap<Rnti, usize>,
    attacker: AttackerConfig,
    sniffing: bool,
    queue: EventQueue,
    ul_expected: Vec<(u64, Rnti, u16, u16)>,
    slot: u64,
    seq: u64,
    events: Vec<Event>,
    sniffer: SnifferView,
    cell: CellAcc,
    noise_rb_dbm: f64,
    carriers: usize,
    all_rntis: Vec<Rnti>,
    n_seconds: usize,
}

fn tb_wrap(bytes: &[u8]) -> Vec<u8> {
    let mut out = bytes.to_vec();
    out.extend_from_slice(&crc16(&from_bytes(bytes)).to_be_bytes());
    out
}

fn tb_unwrap(bytes: &[u8]) -> Option<Vec<u8>> {
    let (body, crc) = bytes.split_at_checked(bytes.len().checked_sub(2)?)?;
    (crc16(&from_bytes(body)).to_be_bytes() == crc).then(|| body.to_vec())
}

impl Simulation {
    pub fn new(cfg: ScenarioConfig) -> Result<Self, SimError> {
        cfg.validate()?;
        let c = &cfg.cell;
        let mu = c.mu;
        let n_seconds = cfg.duration_ms.div_ceil(1000) as usize;
        let carriers = usize::from(c.scell_count) + 1;
        let noise_rb_dbm = noise_dbm(1, mu, c.noise_figure_db);
        let rb_psd = c.bs_tx_dbm - 10.0 * f64::from(c.bandwidth_rb).log10();
        let mut bs = BsState::new(cfg.bs, carriers);
        let mut ues = Vec::with_capacity(cfg.ues.len());
        let mut index = BTreeMap::new();
        let t0 = SlotTime::zero(mu);
        for (i, spec) in cfg.ues.iter().enumerate() {
            let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
            rng.set_stream(u64::from(spec.rnti.0));
            let onset = rng.random_range(0..=c.grant_onset_jitter_ms);
            let ucfg = UeConfig {
                traffic: spec.traffic,
                scell_count: c.scell_count,
                scell_deactivation_timer_ms: c.scell_deactivation_timer_ms,
                max_tx_dbm: UE_MAX_TX_DBM,
                base_current: spec.base_current,
                grant_onset_delay_ms: onset,
                ..UeConfig::default()
            };
            let true_ta = ta_for_distance(spec.distance_m, mu) as i32;
            let mut st = UeState::new(spec.rnti, ucfg, spec.beam_idx, true_ta, c.sib);
            st.csi_schedule = spec.csi.unwrap_or(if c.csi_period_ms > 0 {
                CsiSchedule::Periodic { period_ms: c.csi_period_ms }
            } else {
                CsiSchedule::Off
            });
            let deadline = c.scell_deactivation_timer_ms.map(|ms| t0.advance(u64::from(ms) << mu));
            st.active_scells = spec.active_scells.iter().map(|&s| (s, deadline)).collect();
            if spec.connected {
                let b = bs.connect(spec.rnti, spec.beam_idx, t0);
                b.scell_view = st.active_scells.clone();
            } else {
                st.detach(false);
            }
            ues.push(UeRt {
                st,
                spec: spec.clone(),
                true_ta,
                rng,
                key: PhyKey::derive(c.cell_secret.as_bytes(), spec.rnti),
                dl_sinr_db: rb_psd - spec.path_loss_db - noise_rb_dbm,
                rar_wait: None,
                acc: UeAcc::new(n_seconds),
            });
            index.insert(spec.rnti, i);
        }
        let mut bs_rng = ChaCha8Rng::seed_from_u64(cfg.seed);
        bs_rng.set_stream(BS_STREAM);
        let mut queue = EventQueue::default();
        for (i, u) in ues.iter().enumerate() {
            if !u.spec.connected {
                queue.push(0, Scheduled::Reconnect { ue: i });
            }
        }
        let all_rntis = index.keys().copied().collect();
        Ok(Self {
            layout: DciLayout::new(c.bandwidth_rb),
            bs,
            bs_rng,
            ues,
            index,
            attacker: cfg.attacker.clone().unwrap_or_default(),
            sniffing: cfg.attacker.is_some(),
            queue,
            ul_expected: Vec::new(),
            slot: 0,
            seq: 0,
            events: Vec::new(),
            sniffer: SnifferView::default(),
            cell: CellAcc {
                rach_load: vec![0; n_seconds],
                cbra: vec![0; n_seconds],
                rars: vec![0; n_seconds],
                drops: vec![0; n_seconds],
                violations: 0,
                peak_reserved: 0,
            },
            noise_rb_dbm,
            carriers,
            all_rntis,
            n_seconds,
            cfg,
        })
    }

    pub fn config(&self) -> &ScenarioConfig {
        &self.cfg
    }

    pub fn done(&self) -> bool {
        self.slot >= self.cfg.slots()
    }

    pub fn current_slot(&self) -> u64 {
        self.slot
    }

    fn mu(&self) -> u8 {
        self.cfg.cell.mu
    }

    fn t_ms(&self) -> f64 {
        self.slot as f64 / f64::from(1u32 << self.mu())
    }

    fn second(&self) -> usize {
        (((self.slot >> self.mu()) / 1000) as usize).min(self.n_seconds - 1)
    }

    fn ms_to_slots(&self, ms: u64) -> u64 {
        ms << self.mu()
    }

    fn log(&mut self, kind: EventKind) {
        let ev = Event { t_ms: self.t_ms(), slot: self.slot, seq: self.seq, kind };
        self.seq += 1;
        self.events.push(ev);
    }

    fn mitigation(&self) -> bool {
        self.cfg.mitigation_enabled
    }

    fn key_ctx(&self, key: PhyKey, now: SlotTime, start_rb: u16) -> MitigationKeyContext {
        MitigationKeyContext { key, sfn: now.sfn(), subframe: now.subframe(), start_rb }
    }

    /// Receiver side of keyed scrambling: a no-op without mitigation.
    fn descramble(&self, ue: usize, bits: &Bits, now: SlotTime, tag: u16) -> Bits {
        if self.mitigation() {
            scramble_keyed(bits, &self.key_ctx(self.ues[ue].key, now, tag))
        } else {
            bits.clone()
        }
    }

    fn descramble_bytes(&self, ue: usize, bytes: &[u8], now: SlotTime, start_rb: u16) -> Vec<u8> {
        if self.mitigation() {
            scramble_bytes(bytes, &self.key_ctx(self.ues[ue].key, now, start_rb))
        } else {
            bytes.to_vec()
        }
    }

    fn attacker_hears_bs(&self) -> bool {
        let rx = PowerDbm(self.cfg.cell.bs_tx_dbm - self.attacker.path_loss_db_to_bs);
        self.cfg.cell.capture.decode_outcome(Some(rx), None, false) == DecodeOutcome::LegitDecoded
    }

    fn attacker_hears_ue(&self, ue: usize) -> bool {
        let rx = PowerDbm(UE_MAX_TX_DBM - self.attacker.path_loss_to(self.ues[ue].spec.rnti));
        self.cfg.cell.capture.decode_outcome(Some(rx), None, false) == DecodeOutcome::LegitDecoded
    }

    /// Advance one slot.
    pub fn step(&mut self) -> SlotStats {
        let s = self.slot;
        let mu = self.mu();
        let now = SlotTime::from_index(s, mu);
        let mut stats = SlotStats {
            slot: s,
            dl_decoded_bits: vec![0.0; self.ues.len()],
            dl_rb: vec![0; self.carriers],
            reserved_rb: 0,
        };
        let due = self.queue.pop_due(s);
        let mut injections = Vec::new();
        for (id, kind) in self.attacker.due(s, mu) {
            injections.extend(run_action(id, kind).expect("validated with the config"));
        }

        self.broadcast(s, &injections);

        for ev in &due {
            if let Scheduled::Reconnect { ue } = *ev {
                self.reconnect(ue, now);
            }
        }
        for i in 0..self.ues.len() {
            for carrier in scell_timer_tick(&mut self.ues[i].st, now) {
                let rnti = self.ues[i].spec.rnti;
                self.log(EventKind::ScellExpired { rnti, carrier });
            }
            let max = self.ues[i].st.cfg.max_tx_dbm;
            let u = &mut self.ues[i];
            if let Some(ev) = ra_tick(&mut u.st.ra, now, &self.cfg.cell.ra_timing, &mut u.st.tx_power, max, &mut u.rng)
            {
                self.on_ra_event(i, ev, now);
            }
        }

        let pcell_rar_rb = self.random_access(now, &due);

        let reserved = pcell_rar_rb + self.bs.context_rb(now);
        stats.reserved_rb = reserved;
        self.cell.peak_reserved = self.cell.peak_reserved.max(reserved);
        let legit = self.schedule_dl(s, now, reserved, &mut stats);
        let ul_grants = self.schedule_ul(s, now);

        for l in &legit {
            self.deliver_legit(l, now, &mut stats);
        }
        for (rnti, dci) in ul_grants {
            let i = self.index[&rnti];
            self.deliver_dci(i, 0, &dci, None, now, &mut stats);
        }
        for inj in &injections {
            if let Injection::DlDci { action_id, dci, pdsch, tx_power_dbm } = inj {
                self.deliver_injected(*action_id, dci, pdsch.as_deref(), *tx_power_dbm, now);
            }
        }

        self.receive_pusch(s, &due);
        self.receive_pucch(now);
        for inj in &injections {
            match inj {
                Injection::Sr { action_id, target, tx_power_dbm } => {
                    self.forged_sr(*action_id, *target, *tx_power_dbm, now)
                }
                Injection::UlMacPdu { action_id, target, pdu, tx_power_dbm } => {
                    self.forged_ul_pdu(*action_id, *target, pdu, *tx_power_dbm, now)
                }
                _ => {}
            }
        }

        self.link_monitoring(now);

        let slot_ms = now.slot_ms();
        let sec = self.second();
        let end_of_second = (s + 1).is_multiple_of(self.ms_to_slots(1000)) || s + 1 == self.cfg.slots();
        for u in &mut self.ues {
            energy_tick(&mut u.st, slot_ms);
            if let Some(b) = self.bs.connected.get(&u.spec.rnti) {
                if u.st.connected && !u.st.active_scells.keys().eq(b.scell_view.keys()) {
                    u.acc.divergence_slots += 1;
                }
            }
            if end_of_second {
                u.acc.energy[sec] = u.st.energy_units;
            }
        }
        self.slot += 1;
        stats
    }

    fn broadcast(&mut self, s: u64, injections: &[Injection]) {
        let cap = self.cfg.cell.capture;
        let bs_tx = self.cfg.cell.bs_tx_dbm;
        let legit_rx = |pl: f64| PowerDbm(bs_tx - pl);
        for inj in injections {
            if let Injection::Paging { action_id, tx_power_dbm } = inj {
                let mut any = false;
                for i in 0..self.ues.len() {
                    let rx = PowerDbm(tx_power_dbm - self.attacker.path_loss_to(self.ues[i].spec.rnti));
                    if self.ues[i].st.connected
                        && cap.decode_outcome(None, Some(rx), false) == DecodeOutcome::SpoofDecoded
                    {
                        self.ues[i].st.sib_reread_pending = true;
                        any = true;
                    }
                }
                let outcome = if any { InjectionOutcome::Accepted } else { InjectionOutcome::NotReceived };
                self.log(EventKind::Injection {
                    action_id: *action_id,
                    target: None,
                    message: "paging".into(),
                    outcome,
                });
            }
        }
        if !s.is_multiple_of(self.ms_to_slots(u64::from(self.cfg.cell.sib_period_ms))) {
            for inj in injections {
                if let Injection::Sib { action_id, .. } = inj {
                    let ev = EventKind::Injection {
                        action_id: *action_id,
                        target: None,
                        message: "sib".into(),
                        outcome: InjectionOutcome::NotReceived,
                    };
                    self.log(ev);
                }
            }
            return;
        }
        let legit_bits = encode_sib_ra(&self.cfg.cell.sib).expect("enum-valued config encodes");
        let spoofs: Vec<(usize, SibRaConfig, f64)> = injections
            .iter()
            .filter_map(|inj| match inj {
                Injection::Sib { action_id, sib, tx_power_dbm } => Some((*action_id, *sib, *tx_power_dbm)),
                _ => None,
            })
            .collect();
        let mut accepted = vec![false; spoofs.len()];
        for i in 0..self.ues.len() {
            let st = &self.ues[i].st;
            if st.connected && !st.sib_reread_pending {
                continue;
            }
            let pl = self.ues[i].spec.path_loss_db;
            let lrx = legit_rx(pl);
            // Strongest spoof competes with the cell's own broadcast.
            let best = spoofs.iter().enumerate().max_by(|a, b| a.1 .2.total_cmp(&b.1 .2));
            let (bits, who) = match best {
                Some((k, (_, sib, p))) => {
                    let srx = PowerDbm(p - self.attacker.path_loss_to(self.ues[i].spec.rnti));
                    match cap.decode_outcome(Some(lrx), Some(srx), true) {
                        DecodeOutcome::SpoofDecoded => (Some(encode_sib_ra(sib).expect("enum-valued")), Some(k)),
                        DecodeOutcome::LegitDecoded => (Some(legit_bits.clone()), None),
                        DecodeOutcome::Collision => (None, None),
                    }
                }
                None => match cap.decode_outcome(Some(lrx), None, false) {
                    DecodeOutcome::LegitDecoded => (Some(legit_bits.clone()), None),
                    _ => (None, None),
                },
            };
            if let Some(Ok(sib)) = bits.map(|b| decode_sib_ra(&b)) {
                let st = &mut self.ues[i].st;
                st.sib = sib;
                st.sib_reread_pending = false;
                if let Some(k) = who {
                    accepted[k] = true;
                }
            }
        }
        for (k, (action_id, _, _)) in spoofs.iter().enumerate() {
            let outcome = if accepted[k] { InjectionOutcome::Accepted } else { InjectionOutcome::NotReceived };
            self.log(EventKind::Injection { action_id: *action_id, target: None, message: "sib".into(), outcome });
        }
    }

    fn reconnect(&mut self, i: usize, now: SlotTime) {
        let u = &mut self.ues[i];
        if u.st.connected || u.st.ra.in_progress() {
            return;
        }
        let ev = ra_start(&mut u.st.ra, u.st.sib, RaCause::InitialAccess, now, u.st.tx_power, &mut u.rng);
        self.on_ra_event(i, ev, now);
    }

    fn on_ra_event(&mut self, i: usize, ev: RaEvent, now: SlotTime) {
        let sec = self.second();
        let rnti = self.ues[i].spec.rnti;
        let cause = self.ues[i].st.ra.cause;
        match ev {
            RaEvent::Msg1 { preamble, attempt, contention_free, .. } => {
                if attempt == 1 {
                    self.log(EventKind::RaStarted { rnti, cause });
                }
                self.ues[i].acc.ra_attempts[sec] += 1;
                self.cell.rach_load[sec] += 1;
                if !contention_free {
                    self.cell.cbra[sec] += 1;
                }
                self.ues[i].rar_wait = None;
                let ta = self.ues[i].true_ta;
                match bs_on_preamble(&mut self.bs, preamble, contention_free, ta, now, &mut self.bs_rng) {
                    Ok(PreambleOutcome::RarScheduled(r)) => self.ues[i].rar_wait = Some(r.id),
                    Ok(PreambleOutcome::Merged { rar_id }) => self.ues[i].rar_wait = Some(rar_id),
                    Err(_) => {
                        self.cell.drops[sec] += 1;
                        self.log(EventKind::RachOverload { preamble });
                    }
                }
            }
            RaEvent::Retry { .. } => {}
            RaEvent::Failed { attempts } => {
                let t_ms = self.t_ms();
                self.ues[i].acc.ra_outcomes.push(RaOutcomeRecord { t_ms, result: RaResult::Failed, attempts, cause });
                self.log(EventKind::RaFailed { rnti, attempts });
                self.ue_rlf(i);
            }
            RaEvent::Completed { attempts } => {
                let t_ms = self.t_ms();
                self.ues[i].acc.ra_outcomes.push(RaOutcomeRecord {
                    t_ms,
                    result: RaResult::Completed,
                    attempts,
                    cause,
                });
                self.log(EventKind::RaCompleted { rnti, attempts });
                let u = &mut self.ues[i];
                if !u.st.connected {
                    u.st.attach(u.spec.beam_idx, u.true_ta);
                    let beam = u.spec.beam_idx;
                    self.bs.connect(rnti, beam, now);
                    self.log(EventKind::Connected { rnti });
                } else if !self.bs.connected.contains_key(&rnti) {
                    // Ordered access finished after the BS dropped the context.
                    self.ue_rlf(i);
                } else {
                    u.st.ta_value = u.true_ta;
                }
            }
        }
    }

    fn ue_rlf(&mut self, i: usize) {
        let t_ms = self.t_ms();
        let rnti = self.ues[i].spec.rnti;
        self.ues[i].st.detach(true);
        self.ues[i].st.ra = Default::default();
        self.ues[i].acc.rlf.push(t_ms);
        self.log(EventKind::UeRlf { rnti });
        let at = self.slot + self.ms_to_slots(u64::from(self.cfg.cell.reconnect_delay_ms));
        self.queue.push(at, Scheduled::Reconnect { ue: i });
    }

    /// RARs, Msg3 and contention resolution. Returns PCell RBs used by RARs.
    fn random_access(&mut self, now: SlotTime, due: &[Scheduled]) -> u16 {
        let bw = self.cfg.cell.bandwidth_rb;
        let sec = self.second();
        let timing = self.cfg.cell.ra_timing;
        let mut used = 0u16;
        let sniff_rar = self.sniffing && self.attacker_hears_bs();
        for r in self.bs.rars_due(now) {
            let need = self.cfg.bs.rar_rb + if r.contention_free { 0 } else { self.cfg.bs.ra_context_rb };
            if self.bs.context_rb(now) + used + need > bw {
                self.cell.drops[sec] += 1;
                self.log(EventKind::RarDropped { rar_id: r.id });
                continue;
            }
            used += self.cfg.bs.rar_rb;
            self.cell.rars[sec] += 1;
            bs_on_rar_sent(&mut self.bs, &r, now);
            for i in 0..self.ues.len() {
                if self.ues[i].rar_wait != Some(r.id) {
                    continue;
                }
                self.ues[i].rar_wait = None;
                if sniff_rar {
                    let t_ms = self.t_ms();
                    self.sniffer.record_ra(t_ms, self.ues[i].spec.beam_idx, r.ta.max(0) as u32);
                }
                match ra_on_rar(&mut self.ues[i].st.ra, r.preamble, now, &timing) {
                    RarOutcome::Ignored => {}
                    RarOutcome::Completed => {
                        let attempts = self.ues[i].st.ra.attempt;
                        self.on_ra_event(i, RaEvent::Completed { attempts }, now);
                    }
                    RarOutcome::SendMsg3 { at } => {
                        let at = self.slot + now.slots_until(&at).max(0) as u64;
                        self.queue.push(at, Scheduled::Msg3 { ue: i, rar_id: r.id });
                    }
                }
            }
        }
        for ev in due {
            if let Scheduled::Msg3 { ue, rar_id } = *ev {
                if matches!(self.ues[ue].st.ra.phase, crate::procedures::RaPhase::WaitingMsg4 { .. }) {
                    let rnti = self.ues[ue].spec.rnti;
                    bs_on_msg3(&mut self.bs, rar_id, rnti, now);
                }
            }
        }
        for m in bs_resolve_contention(&mut self.bs, now) {
            let outcomes = std::iter::once((m.winner, true)).chain(m.losers.iter().map(|l| (*l, false)));
            for (rnti, won) in outcomes {
                let i = self.index[&rnti];
                let max = self.ues[i].st.cfg.max_tx_dbm;
                let u = &mut self.ues[i];
                if let Some(ev) = ra_on_msg4(&mut u.st.ra, won, now, &timing, &mut u.st.tx_power, max) {
                    self.on_ra_event(i, ev, now);
                }
            }
        }
        self.bs.expire_contexts(now);
        used
    }

    fn schedule_dl(&mut self, s: u64, now: SlotTime, reserved: u16, stats: &mut SlotStats) -> Vec<LegitDl> {
        let bw = self.cfg.cell.bandwidth_rb;
        let k1 = self.cfg.bs.k1;
        let mu = self.mu();
        let mut out = Vec::new();
        for c in 0..self.carriers {
            let eligible: Vec<Rnti> = self
                .bs
                .connected
                .values()
                .filter(|b| c == 0 || b.scell_view.contains_key(&(c as u8)))
                .filter(|b| self.ues[self.index[&b.rnti]].spec.traffic == Traffic::FullBufferDl)
                .map(|b| b.rnti)
                .collect();
            let res = if c == 0 { reserved } else { 0 };
            let rotation = if eligible.is_empty() { 0 } else { (s % eligible.len() as u64) as usize };
            let allocs = round_robin(bw, res, &eligible, rotation);
            let data_rb: u16 = allocs.iter().map(|a| a.2).sum();
            if u32::from(data_rb) + u32::from(res) > u32::from(bw) {
                self.cell.violations += 1;
            }
            stats.dl_rb[c] = data_rb;
            for (rnti, start, len) in allocs {
                let ue = self.index[&rnti];
                let tb_bits = self.cfg.cell.capacity.bits_per_slot(len, mu, self.ues[ue].dl_sinr_db);
                let h = &mut self.bs.connected.get_mut(&rnti).expect("eligible").harq[c];
                let dai = h.on_assign(now.advance(u64::from(k1)), PendingTb { bits: tb_bits });
                let dci = DciMessage::dl_assignment(rnti, DciAllocation::new(start, len, 0), dai, k1);
                out.push(LegitDl { ue, carrier: c as u8, dci, tb_bits });
            }
        }
        out
    }

    fn schedule_ul(&mut self, s: u64, now: SlotTime) -> Vec<(Rnti, DciMessage)> {
        let k2 = self.cfg.bs.k2;
        let mut eligible = Vec::new();
        for b in self.bs.connected.values_mut() {
            let sr = b.sr_grant_at == Some(now);
            if sr {
                b.sr_grant_at = None;
            }
            if sr || self.ues[self.index[&b.rnti]].spec.traffic == Traffic::FullBufferUl {
                eligible.push(b.rnti);
            }
        }
        let rotation = if eligible.is_empty() { 0 } else { (s % eligible.len() as u64) as usize };
        let mut out = Vec::new();
        for (rnti, start, len) in round_robin(self.cfg.cell.bandwidth_rb, 0, &eligible, rotation) {
            self.ul_expected.push((s + u64::from(k2), rnti, start, len));
            out.push((rnti, DciMessage::ul_grant(rnti, DciAllocation::new(start, len, k2))));
        }
        out
    }

    fn deliver_legit(&mut self, l: &LegitDl, now: SlotTime, stats: &mut SlotStats) {
        let u = &self.ues[l.ue];
        let Some(b) = self.bs.connected.get(&u.spec.rnti) else { return };
        let hears =
            u.st.active_bwp == b.bwp_view && u.st.serving_beam_idx == b.beam_view && u.st.scell_active(l.carrier);
        if hears {
            self.deliver_dci(l.ue, l.carrier, &l.dci, Some(l.tb_bits), now, stats);
        }
    }

    /// PDCCH (and optional PDSCH) from the BS to UE `i`. Bits go through the
    /// full encode, scramble, descramble, decode chain; the sniffer sees
    /// what is on the air.
    fn deliver_dci(
        &mut self,
        i: usize,
        carrier: u8,
        d: &DciMessage,
        tb_bits: Option<f64>,
        now: SlotTime,
        stats: &mut SlotStats,
    ) {
        let clear = encode_dci(d, &self.layout).expect("scheduler emits valid DCIs");
        let on_air = if self.mitigation() {
            scramble_keyed(&clear, &self.key_ctx(self.ues[i].key, now, PDCCH_TAG + u16::from(carrier)))
        } else {
            clear
        };
        if self.sniffing && self.attacker_hears_bs() {
            if let Ok(seen) = decode_dci(&on_air, &self.all_rntis, &self.layout) {
                let t_ms = self.t_ms();
                self.sniffer.record_dci(t_ms, &seen);
            }
        }
        let bits = self.descramble(i, &on_air, now, PDCCH_TAG + u16::from(carrier));
        let Ok(rx) = decode_dci(&bits, &[self.ues[i].spec.rnti], &self.layout) else { return };
        let actions = {
            let u = &mut self.ues[i];
            ue_on_dci(&mut u.st, &rx, now, DciRx { carrier, pdsch_ok: true }, &mut u.rng)
        };
        if let (Some(bits), Some(UeAction::HarqRecorded { .. })) = (tb_bits, actions.first()) {
            stats.dl_decoded_bits[i] += bits;
        }
        self.apply_ue_actions(i, actions, now);
    }

    fn apply_ue_actions(&mut self, i: usize, actions: Vec<UeAction>, now: SlotTime) {
        for a in actions {
            match a {
                UeAction::UlTx { alloc, power, padding_fraction } => {
                    let at = self.slot + now.slots_until(&alloc.slot).max(0) as u64;
                    let ev = Scheduled::UlTx {
                        ue: i,
                        start_rb: alloc.start_rb,
                        num_rb: alloc.num_rb,
                        power,
                        padding: padding_fraction,
                    };
                    self.queue.push(at, ev);
                }
                UeAction::Ra(ev) => self.on_ra_event(i, ev, now),
                UeAction::HarqRecorded { .. } | UeAction::BwpSwitched { .. } | UeAction::Ignored => {}
            }
        }
    }

    fn deliver_injected(
        &mut self,
        action_id: usize,
        d: &DciMessage,
        pdsch: Option<&[u8]>,
        tx_power_dbm: f64,
        now: SlotTime,
    ) {
        let message = format!("{:?}", d.kind).to_lowercase();
        let target = Some(d.rnti);
        let Some(&i) = self.index.get(&d.rnti) else {
            self.log(EventKind::Injection { action_id, target, message, outcome: InjectionOutcome::NotReceived });
            return;
        };
        let rx = PowerDbm(tx_power_dbm - self.attacker.path_loss_to(d.rnti));
        let heard = self.cfg.cell.capture.decode_outcome(None, Some(rx), false) == DecodeOutcome::SpoofDecoded;
        if !heard || !self.ues[i].st.connected {
            self.log(EventKind::Injection { action_id, target, message, outcome: InjectionOutcome::NotReceived });
            return;
        }
        // The attacker cannot produce the keyed scrambling; the victim
        // descrambles whatever arrives.
        let on_air = encode_dci(d, &self.layout).expect("validated with the config");
        let bits = self.descramble(i, &on_air, now, PDCCH_TAG);
        let Ok(rx_dci) = decode_dci(&bits, &[self.ues[i].spec.rnti], &self.layout) else {
            self.log(EventKind::Injection { action_id, target, message, outcome: InjectionOutcome::Rejected });
            return;
        };
        let mut ces: Vec<MacElement> = Vec::new();
        let mut pdsch_ok = true;
        if let (Some(pdu), DciKind::DlAssignment) = (pdsch, rx_dci.kind) {
            let start_rb = rx_dci.alloc.map_or(0, |a| a.start_rb);
            let bytes = self.descramble_bytes(i, &tb_wrap(pdu), now, start_rb);
            match tb_unwrap(&bytes).and_then(|b| decode_mac_pdu(&b).ok()) {
                Some(p) => ces = p.elements,
                None => pdsch_ok = false,
            }
        }
        let actions = {
            let u = &mut self.ues[i];
            ue_on_dci(&mut u.st, &rx_dci, now, DciRx { carrier: 0, pdsch_ok }, &mut u.rng)
        };
        let acted = !matches!(actions.as_slice(), [UeAction::Ignored]);
        if acted {
            for ce in &ces {
                apply_mac_ce(&mut self.ues[i].st, ce, now);
            }
        }
        let message = match ces.first() {
            Some(ce) => format!("{message}+{:?}", ce.lcid()).to_lowercase(),
            None => message,
        };
        let outcome = if acted && pdsch_ok { InjectionOutcome::Accepted } else { InjectionOutcome::Rejected };
        self.log(EventKind::Injection { action_id, target, message, outcome });
        self.apply_ue_actions(i, actions, now);
    }

    fn receive_pusch(&mut self, s: u64, due: &[Scheduled]) {
        let mu = self.mu();
        let slot_ms = 1.0 / f64::from(1u32 << mu);
        let sec = self.second();
        // (ue, start, len, per-RB rx power)
        let txs: Vec<(usize, u16, u16, f64, f64)> = due
            .iter()
            .filter_map(|ev| match *ev {
                Scheduled::UlTx { ue, start_rb, num_rb, power, padding } if self.ues[ue].st.schedulable() => {
                    let rb_rx = power.0 - 10.0 * f64::from(num_rb).log10() - self.ues[ue].spec.path_loss_db;
                    Some((ue, start_rb, num_rb, rb_rx, padding))
                }
                _ => None,
            })
            .collect();
        let expected: Vec<(Rnti, u16, u16)> =
            self.ul_expected.iter().filter(|e| e.0 == s).map(|e| (e.1, e.2, e.3)).collect();
        self.ul_expected.retain(|e| e.0 > s);
        let cap = self.cfg.cell.capacity;
        for (k, &(ue, start, len, rb_rx, padding)) in txs.iter().enumerate() {
            let rnti = self.ues[ue].spec.rnti;
            if !expected.contains(&(rnti, start, len)) || !self.ues[ue].st.ul_aligned(self.ues[ue].true_ta) {
                continue;
            }
            let mut bits = 0.0;
            for rb in start..start + len {
                let interf: Vec<PowerDbm> = txs
                    .iter()
                    .enumerate()
                    .filter(|(j, t)| *j != k && t.1 <= rb && rb < t.1 + t.2)
                    .map(|(_, t)| PowerDbm(t.3))
                    .collect();
                let q = sinr(PowerDbm(rb_rx), &interf, self.noise_rb_dbm);
                bits += cap.bits_per_slot(1, mu, q.sinr_db);
            }
            let mut data = bits * (1.0 - padding);
            if let Some(kbps) = self.ues[ue].st.ul_rate_cap_kbps {
                data = data.min(f64::from(kbps) * slot_ms);
            }
            if data > 0.0 {
                self.ues[ue].acc.ul_bits[sec] += data;
                if let Some(b) = self.bs.connected.get_mut(&rnti) {
                    b.last_activity = SlotTime::from_index(s, mu);
                }
            }
        }
    }

    fn receive_pucch(&mut self, now: SlotTime) {
        let sec = self.second();
        let mut feedback: BTreeMap<(Rnti, usize), AckBitmap> = BTreeMap::new();
        let sniff = self.sniffing;
        for i in 0..self.ues.len() {
            let rnti = self.ues[i].spec.rnti;
            let uplink_ok = self.ues[i].st.schedulable() && self.ues[i].st.ul_aligned(self.ues[i].true_ta);
            for c in 0..self.carriers {
                let Some(bm) = self.ues[i].st.harq[c].take_feedback(now) else { continue };
                if !uplink_ok {
                    continue;
                }
                let tag = PUCCH_TAG + c as u16;
                let clear = encode_uci(&Uci::Ack { bits: bm.bits }, rnti).expect("bitmap fits");
                let on_air = self.scramble_ul(i, &clear, now, tag);
                let bits = self.descramble(i, &on_air, now, tag);
                if let Ok(Uci::Ack { bits }) = decode_uci(&bits, rnti) {
                    feedback.insert((rnti, c), AckBitmap { bits, t: now });
                }
            }
            let period = self.ues[i].st.csi_schedule.active_period_ms();
            if let (true, Some(p)) = (uplink_ok, period.filter(|p| *p > 0)) {
                if self.slot.is_multiple_of(self.ms_to_slots(u64::from(p))) {
                    self.csi_report(i, now, sniff);
                }
            }
        }
        let rntis: Vec<Rnti> = self.bs.connected.keys().copied().collect();
        for rnti in rntis {
            let Some(&i) = self.index.get(&rnti) else { continue };
            for c in 0..self.carriers {
                match bs_on_feedback(&mut self.bs, rnti, c, now, feedback.get(&(rnti, c))) {
                    Ok(Some(FeedbackResult::Matched { acked_bits })) => self.ues[i].acc.dl_bits[sec] += acked_bits,
                    Ok(Some(FeedbackResult::HarqFailure)) => self.ues[i].acc.harq_failures[sec] += 1,
                    _ => {}
                }
            }
        }
    }

    fn scramble_ul(&self, i: usize, bits: &Bits, now: SlotTime, tag: u16) -> Bits {
        self.descramble(i, bits, now, tag)
    }

    fn csi_report(&mut self, i: usize, now: SlotTime, sniff: bool) {
        let c = &self.cfg.cell;
        let rnti = self.ues[i].spec.rnti;
        let rsrp = c.bs_tx_dbm - 10.0 * (12.0 * f64::from(c.bandwidth_rb)).log10() - self.ues[i].spec.path_loss_db;
        let rep = CsiReport::new(rnti, self.ues[i].st.serving_beam_idx, rsrp, now);
        let clear = encode_uci(&Uci::Csi { beam_idx: rep.beam_idx, rsrp_dbm: rep.rsrp_dbm }, rnti).expect("CSI fits");
        let on_air = self.scramble_ul(i, &clear, now, PUCCH_TAG + 0x80);
        let at_bs = self.descramble(i, &on_air, now, PUCCH_TAG + 0x80);
        if decode_uci(&at_bs, rnti).is_ok() {
            self.ues[i].acc.csi_reports += 1;
        }
        if sniff && self.attacker_hears_ue(i) {
            let t_ms = self.t_ms();
            for cand in &self.all_rntis {
                if let Ok(Uci::Csi { beam_idx, rsrp_dbm }) = decode_uci(&on_air, *cand) {
                    self.sniffer.record_csi(t_ms, *cand, beam_idx, rsrp_dbm);
                    break;
                }
            }
        }
    }

    fn forged_heard_at_bs(&self, tx_power_dbm: f64) -> bool {
        let rx = PowerDbm(tx_power_dbm - self.attacker.path_loss_db_to_bs);
        self.cfg.cell.capture.decode_outcome(None, Some(rx), false) == DecodeOutcome::SpoofDecoded
    }

    fn forged_sr(&mut self, action_id: usize, target: Rnti, tx_power_dbm: f64, now: SlotTime) {
        let message = "scheduling_request".to_string();
        let (Some(&i), true) = (self.index.get(&target), self.forged_heard_at_bs(tx_power_dbm)) else {
            self.log(EventKind::Injection {
                action_id,
                target: Some(target),
                message,
                outcome: InjectionOutcome::NotReceived,
            });
            return;
        };
        let on_air = encode_uci(&Uci::SchedulingRequest, target).expect("SR encodes");
        let bits = self.descramble(i, &on_air, now, PUCCH_TAG + 0x40);
        let ok = matches!(decode_uci(&bits, target), Ok(Uci::SchedulingRequest))
            && bs_on_sr(&mut self.bs, target, now).is_ok();
        let outcome = if ok { InjectionOutcome::Accepted } else { InjectionOutcome::Rejected };
        self.log(EventKind::Injection { action_id, target: Some(target), message, outcome });
    }

    fn forged_ul_pdu(&mut self, action_id: usize, target: Rnti, pdu: &[u8], tx_power_dbm: f64, now: SlotTime) {
        let message = "ul_mac_pdu".to_string();
        let (Some(&i), true) = (self.index.get(&target), self.forged_heard_at_bs(tx_power_dbm)) else {
            self.log(EventKind::Injection {
                action_id,
                target: Some(target),
                message,
                outcome: InjectionOutcome::NotReceived,
            });
            return;
        };
        let bytes = self.descramble_bytes(i, &tb_wrap(pdu), now, 0);
        let mut ok = false;
        if let Some(p) = tb_unwrap(&bytes).and_then(|b| decode_mac_pdu(&b).ok()) {
            for el in p.elements {
                if let MacElement::BeamFailureRecovery { new_beam_idx } = el {
                    ok |= bs_on_bfr(&mut self.bs, target, new_beam_idx).is_ok();
                }
            }
        }
        let outcome = if ok { InjectionOutcome::Accepted } else { InjectionOutcome::Rejected };
        self.log(EventKind::Injection { action_id, target: Some(target), message, outcome });
    }

    fn link_monitoring(&mut self, now: SlotTime) {
        let rntis: Vec<Rnti> = self.bs.connected.keys().copied().collect();
        for rnti in rntis {
            if !bs_rlf_due(&self.bs, rnti, now) {
                continue;
            }
            self.bs.release(rnti);
            let t_ms = self.t_ms();
            self.log(EventKind::BsRlf { rnti });
            if let Some(&i) = self.index.get(&rnti) {
                self.ues[i].acc.bs_rlf.push(t_ms);
                // A UE in the middle of random access finds out on its own.
                if self.ues[i].st.connected && !self.ues[i].st.ra.in_progress() {
                    self.ue_rlf(i);
                }
            }
        }
        for rnti in bs_inactive(&self.bs, now) {
            self.bs.release(rnti);
            let t_ms = self.t_ms();
            self.log(EventKind::Released { rnti });
            if let Some(&i) = self.index.get(&rnti) {
                self.ues[i].acc.releases.push(t_ms);
                self.ues[i].st.detach(false);
            }
        }
    }

    /// Run to the end and build the report.
    pub fn run_to_end(mut self) -> MetricsReport {
        while !self.done() {
            self.step();
        }
        self.finish()
    }

    pub fn finish(self) -> MetricsReport {
        let c = &self.cfg;
        let secs = self.n_seconds;
        let slot_ms = 1.0 / f64::from(1u32 << c.cell.mu);
        let span_s: Vec<f64> = (0..secs)
            .map(|k| {
                let start = k as f64 * 1000.0;
                ((c.duration_ms as f64).min(start + 1000.0) - start) / 1000.0
            })
            .collect();
        let to_mbps = |bits: &[f64]| -> Vec<f64> { bits.iter().zip(&span_s).map(|(b, s)| b / 1e6 / s).collect() };
        let ues = self
            .ues
            .iter()
            .map(|u| {
                let dl = to_mbps(&u.acc.dl_bits);
                let ul = to_mbps(&u.acc.ul_bits);
                let b = self.bs.connected.get(&u.spec.rnti);
                UeMetrics {
                    rnti: u.spec.rnti,
                    throughput_mbps: dl.iter().zip(&ul).map(|(a, b)| a + b).collect(),
                    dl_mbps: dl,
                    ul_mbps: ul,
                    ra_attempts: u.acc.ra_attempts.clone(),
                    ra_outcomes: u.acc.ra_outcomes.clone(),
                    energy_units: u.acc.energy.clone(),
                    harq_failures: u.acc.harq_failures.clone(),
                    rlf_times_ms: u.acc.rlf.clone(),
                    bs_rlf_times_ms: u.acc.bs_rlf.clone(),
                    release_times_ms: u.acc.releases.clone(),
                    csi_reports: u.acc.csi_reports,
                    scell_divergence_ms: u.acc.divergence_slots as f64 * slot_ms,
                    final_active_scells: u.st.active_scells.keys().copied().collect(),
                    final_bs_scell_view: b.map(|b| b.scell_view.keys().copied().collect()).unwrap_or_default(),
                    connected_at_end: u.st.connected && b.is_some(),
                }
            })
            .collect();
        MetricsReport {
            meta: ReportMeta {
                scenario: c.name.clone(),
                seed: c.seed,
                duration_ms: c.duration_ms,
                mu: c.cell.mu,
                bandwidth_rb: c.cell.bandwidth_rb,
                mitigation_enabled: c.mitigation_enabled,
            },
            ues,
            cell: CellMetrics {
                rach_load: self.cell.rach_load,
                cbra_preambles: self.cell.cbra,
                rar_emissions: self.cell.rars,
                rach_overload_drops: self.cell.drops,
                conservation_violations: self.cell.violations,
                peak_reserved_rb: self.cell.peak_reserved,
            },
            events: self.events,
            sniffer: self.sniffing.then_some(self.sniffer),
        }
    }
}

/// Run a scenario to completion.
pub fn run(cfg: &ScenarioConfig) -> Result<MetricsReport, SimError> {
    Ok(Simulation::new(cfg.clone())?.run_to_end())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn queue_pops_in_order() {
        let mut q = EventQueue::default();
        q.push(5, Scheduled::Reconnect { ue: 1 });
        q.push(3, Scheduled::Reconnect { ue: 2 });
        q.push(5, Scheduled::Reconnect { ue: 0 });
        assert_eq!(q.pop_due(4), vec![Scheduled::Reconnect { ue: 2 }]);
        assert_eq!(q.pop_due(5), vec![Scheduled::Reconnect { ue: 1 }, Scheduled::Reconnect { ue: 0 }]);
        assert!(q.pop_due(100).is_empty());
    }

    #[test]
    fn transport_crc_detects_corruption() {
        let w = tb_wrap(&[0x3A, 0x01]);
        assert_eq!(tb_unwrap(&w), Some(vec![0x3A, 0x01]));
        let mut bad = w.clone();
        bad[0] ^= 0x10;
        assert_eq!(tb_unwrap(&bad), None);
        assert_eq!(tb_unwrap(&[1]), None);
    }
}
