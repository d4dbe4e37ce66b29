//! Base-station side: connected-UE contexts, random-access handling and the
//! round-robin scheduler.

use std::collections::BTreeMap;

use rand::Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use super::harq::{BsHarq, FeedbackResult};
use crate::codec::uci::AckBitmap;
use crate::time::{Rnti, SlotTime};

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum BsError {
    #[error("RNTI {0} is not connected")]
    UnknownRnti(Rnti),
    #[error("RACH capacity of {capacity} preambles per subframe exceeded")]
    RachOverload { capacity: u32 },
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "dist", rename_all = "snake_case")]
pub enum RttDist {
    Constant { ms: u32 },
    Uniform { lo_ms: u32, hi_ms: u32 },
}

impl RttDist {
    pub fn sample(&self, rng: &mut impl Rng) -> u32 {
        match *self {
            RttDist::Constant { ms } => ms,
            RttDist::Uniform { lo_ms, hi_ms } => rng.random_range(lo_ms..=hi_ms.max(lo_ms)),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct BsConfig {
    pub rar_rtt: RttDist,
    pub rach_capacity_per_sf: u32,
    /// DL RBs carrying one RAR.
    pub rar_rb: u16,
    /// PCell DL RBs held per contention-based access until it resolves.
    pub ra_context_rb: u16,
    pub contention_window_ms: u32,
    pub msg4_delay_ms: u32,
    pub rlf_threshold_ms: f64,
    pub sr_latency_ms: u32,
    pub inactivity_timeout_ms: Option<u32>,
    /// PDSCH to HARQ feedback delay, slots.
    pub k1: u8,
    /// UL grant to PUSCH delay, slots.
    pub k2: u8,
}

impl Default for BsConfig {
    fn default() -> Self {
        Self {
            rar_rtt: RttDist::Constant { ms: 7 },
            rach_capacity_per_sf: 64,
            rar_rb: 1,
            ra_context_rb: 0,
            contention_window_ms: 64,
            msg4_delay_ms: 4,
            rlf_threshold_ms: 2000.0,
            sr_latency_ms: 4,
            inactivity_timeout_ms: None,
            k1: 4,
            k2: 4,
        }
    }
}

/// Per-UE context at the BS.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BsUe {
    pub rnti: Rnti,
    /// One HARQ expectation per carrier, PCell first.
    pub harq: Vec<BsHarq>,
    /// SCells the BS believes are active.
    pub scell_view: BTreeMap<u8, Option<SlotTime>>,
    pub beam_view: u8,
    pub bwp_view: u8,
    pub last_activity: SlotTime,
    pub sr_grant_at: Option<SlotTime>,
}

impl BsUe {
    pub fn new(rnti: Rnti, carriers: usize, beam: u8, now: SlotTime) -> Self {
        Self {
            rnti,
            harq: vec![BsHarq::default(); carriers],
            scell_view: BTreeMap::new(),
            beam_view: beam,
            bwp_view: 0,
            last_activity: now,
            sr_grant_at: None,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct Rar {
    pub id: u64,
    pub preamble: u8,
    pub received_at: SlotTime,
    pub at: SlotTime,
    pub ta: i32,
    pub contention_free: bool,
}

/// DL resources held for an unresolved contention-based access.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct ContentionContext {
    pub rar_id: u64,
    pub from: SlotTime,
    pub until: SlotTime,
    pub rb: u16,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct Msg3 {
    pub rar_id: u64,
    pub rnti: Rnti,
    pub at: SlotTime,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BsState {
    pub cfg: BsConfig,
    pub carriers: usize,
    pub connected: BTreeMap<Rnti, BsUe>,
    pub pending_rars: Vec<Rar>,
    pub contexts: Vec<ContentionContext>,
    pub msg3s: Vec<Msg3>,
    next_rar_id: u64,
    preambles_slot: Option<SlotTime>,
    preambles_in_slot: u32,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "outcome", rename_all = "snake_case")]
pub enum PreambleOutcome {
    RarScheduled(Rar),
    /// Same preamble in the same occasion: one RAR answers both.
    Merged {
        rar_id: u64,
    },
}

/// Contention resolution for one RAR.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Msg4 {
    pub rar_id: u64,
    pub winner: Rnti,
    pub losers: Vec<Rnti>,
}

impl BsState {
    pub fn new(cfg: BsConfig, carriers: usize) -> Self {
        Self {
            cfg,
            carriers,
            connected: BTreeMap::new(),
            pending_rars: Vec::new(),
            contexts: Vec::new(),
            msg3s: Vec::new(),
            next_rar_id: 0,
            preambles_slot: None,
            preambles_in_slot: 0,
        }
    }

    pub fn connect(&mut self, rnti: Rnti, beam: u8, now: SlotTime) -> &mut BsUe {
        self.connected.insert(rnti, BsUe::new(rnti, self.carriers, beam, now));
        self.connected.get_mut(&rnti).expect("just inserted")
    }

    pub fn release(&mut self, rnti: Rnti) -> Option<BsUe> {
        self.connected.remove(&rnti)
    }

    pub fn ue_mut(&mut self, rnti: Rnti) -> Result<&mut BsUe, BsError> {
        self.connected.get_mut(&rnti).ok_or(BsError::UnknownRnti(rnti))
    }

    /// RBs held by contention contexts at `now`.
    pub fn context_rb(&self, now: SlotTime) -> u16 {
        self.contexts.iter().filter(|c| now.has_reached(&c.from) && !now.has_reached(&c.until)).map(|c| c.rb).sum()
    }

    /// Drop contexts that have run out.
    pub fn expire_contexts(&mut self, now: SlotTime) {
        self.contexts.retain(|c| !now.has_reached(&c.until));
    }

    pub fn rars_due(&mut self, now: SlotTime) -> Vec<Rar> {
        let (due, rest): (Vec<Rar>, Vec<Rar>) = self.pending_rars.iter().partition(|r| r.at == now);
        self.pending_rars = rest;
        due
    }
}

/// Preamble detected at `now`; schedules a RAR one RTT later.
pub fn bs_on_preamble(
    bs: &mut BsState,
    preamble: u8,
    contention_free: bool,
    ta: i32,
    now: SlotTime,
    rng: &mut impl Rng,
) -> Result<PreambleOutcome, BsError> {
    if bs.preambles_slot != Some(now) {
        bs.preambles_slot = Some(now);
        bs.preambles_in_slot = 0;
    }
    if let Some(r) = bs.pending_rars.iter().find(|r| r.received_at == now && r.preamble == preamble) {
        return Ok(PreambleOutcome::Merged { rar_id: r.id });
    }
    bs.preambles_in_slot += 1;
    if bs.preambles_in_slot > bs.cfg.rach_capacity_per_sf {
        return Err(BsError::RachOverload { capacity: bs.cfg.rach_capacity_per_sf });
    }
    let rtt = bs.cfg.rar_rtt.sample(rng);
    let rar = Rar {
        id: bs.next_rar_id,
        preamble,
        received_at: now,
        at: now.advance(u64::from(rtt) << now.mu()),
        ta,
        contention_free,
    };
    bs.next_rar_id += 1;
    bs.pending_rars.push(rar);
    Ok(PreambleOutcome::RarScheduled(rar))
}

/// A RAR was actually transmitted: contention-based accesses hold DL
/// resources until resolved or the contention window closes.
pub fn bs_on_rar_sent(bs: &mut BsState, rar: &Rar, now: SlotTime) {
    if !rar.contention_free && bs.cfg.ra_context_rb > 0 {
        let until = now.advance(u64::from(bs.cfg.contention_window_ms) << now.mu());
        bs.contexts.push(ContentionContext { rar_id: rar.id, from: now, until, rb: bs.cfg.ra_context_rb });
    }
}

pub fn bs_on_msg3(bs: &mut BsState, rar_id: u64, rnti: Rnti, now: SlotTime) {
    bs.msg3s.push(Msg3 { rar_id, rnti, at: now });
}

/// Resolve contention for RARs whose Msg4 is due at `now`. The earliest
/// Msg3 wins; ties go to the lowest RNTI.
pub fn bs_resolve_contention(bs: &mut BsState, now: SlotTime) -> Vec<Msg4> {
    let delay = u64::from(bs.cfg.msg4_delay_ms) << now.mu();
    let mut due: Vec<u64> = bs.msg3s.iter().filter(|m| m.at.advance(delay) == now).map(|m| m.rar_id).collect();
    due.sort_unstable();
    due.dedup();
    let mut out = Vec::new();
    for id in due {
        let mut group: Vec<Msg3> = bs.msg3s.iter().filter(|m| m.rar_id == id).copied().collect();
        group.sort_by(|a, b| a.at.wrapping_cmp(&b.at).then(a.rnti.cmp(&b.rnti)));
        bs.msg3s.retain(|m| m.rar_id != id);
        bs.contexts.retain(|c| c.rar_id != id);
        let winner = group[0].rnti;
        out.push(Msg4 { rar_id: id, winner, losers: group[1..].iter().map(|m| m.rnti).collect() });
    }
    out
}

/// Feedback evaluation for one carrier at `now`.
pub fn bs_on_feedback(
    bs: &mut BsState,
    rnti: Rnti,
    carrier: usize,
    now: SlotTime,
    bitmap: Option<&AckBitmap>,
) -> Result<Option<FeedbackResult>, BsError> {
    let ue = bs.ue_mut(rnti)?;
    let r = ue.harq.get_mut(carrier).and_then(|h| h.on_feedback(now, bitmap));
    if matches!(r, Some(FeedbackResult::Matched { .. })) {
        ue.last_activity = now;
    }
    Ok(r)
}

/// Bitmap received for the PCell.
pub fn bs_on_ack_bitmap(bs: &mut BsState, rnti: Rnti, bitmap: &AckBitmap) -> Result<super::harq::HarqVerdict, BsError> {
    let r = bs_on_feedback(bs, rnti, 0, bitmap.t, Some(bitmap))?;
    Ok(match r {
        Some(FeedbackResult::Matched { .. }) => super::harq::HarqVerdict::Matched,
        _ => super::harq::HarqVerdict::HarqFailure,
    })
}

/// `true` once PCell feedback has been failing for the RLF threshold.
pub fn bs_rlf_due(bs: &BsState, rnti: Rnti, now: SlotTime) -> bool {
    bs.connected.get(&rnti).is_some_and(|u| u.harq[0].failing_for_ms(now) >= bs.cfg.rlf_threshold_ms)
}

/// Scheduling request: grant after the scheduling latency; also counts as
/// activity for the inactivity timer.
pub fn bs_on_sr(bs: &mut BsState, rnti: Rnti, now: SlotTime) -> Result<SlotTime, BsError> {
    let latency = u64::from(bs.cfg.sr_latency_ms) << now.mu();
    let ue = bs.ue_mut(rnti)?;
    ue.last_activity = now;
    let at = now.advance(latency);
    ue.sr_grant_at = Some(at);
    Ok(at)
}

/// Beam failure recovery request: the BS moves its beam for this UE.
pub fn bs_on_bfr(bs: &mut BsState, rnti: Rnti, new_beam_idx: u8) -> Result<(), BsError> {
    bs.ue_mut(rnti)?.beam_view = new_beam_idx;
    Ok(())
}

/// UEs idle past the inactivity timeout.
pub fn bs_inactive(bs: &BsState, now: SlotTime) -> Vec<Rnti> {
    let Some(ms) = bs.cfg.inactivity_timeout_ms else { return Vec::new() };
    bs.connected
        .values()
        .filter(|u| u.last_activity.slots_until(&now) as f64 * now.slot_ms() >= f64::from(ms))
        .map(|u| u.rnti)
        .collect()
}

/// Contiguous allocation after `reserved` low RBs, split as evenly as
/// possible; the first `rotation` UEs in round-robin order get the extra RBs.
pub fn round_robin(bandwidth_rb: u16, reserved_rb: u16, ues: &[Rnti], rotation: usize) -> Vec<(Rnti, u16, u16)> {
    let avail = bandwidth_rb.saturating_sub(reserved_rb);
    if ues.is_empty() || avail == 0 {
        return Vec::new();
    }
    let n = ues.len();
    let base = avail / n as u16;
    let extra = (avail % n as u16) as usize;
    let mut start = reserved_rb.min(bandwidth_rb);
    let mut out = Vec::with_capacity(n);
    for k in 0..n {
        let ue = ues[(k + rotation) % n];
        let len = base + u16::from(k < extra);
        if len > 0 {
            out.push((ue, start, len));
            start += len;
        }
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn t(i: u64) -> SlotTime {
        SlotTime::from_index(i, 0)
    }

    #[test]
    fn rar_after_rtt() {
        let mut bs = BsState::new(BsConfig::default(), 1);
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        let out = bs_on_preamble(&mut bs, 3, false, 2, t(100), &mut rng).unwrap();
        let PreambleOutcome::RarScheduled(r) = out else { panic!() };
        assert_eq!(r.at, t(107));
        assert!(bs.rars_due(t(106)).is_empty());
        assert_eq!(bs.rars_due(t(107)).len(), 1);
    }

    #[test]
    fn no_preamble_no_rar() {
        let mut bs = BsState::new(BsConfig::default(), 1);
        for i in 0..50 {
            assert!(bs.rars_due(t(i)).is_empty());
        }
    }

    #[test]
    fn colliding_preambles_share_one_rar_and_one_wins() {
        let mut bs = BsState::new(BsConfig::default(), 1);
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        let a = bs_on_preamble(&mut bs, 9, false, 1, t(0), &mut rng).unwrap();
        let b = bs_on_preamble(&mut bs, 9, false, 1, t(0), &mut rng).unwrap();
        let PreambleOutcome::RarScheduled(r) = a else { panic!() };
        assert_eq!(b, PreambleOutcome::Merged { rar_id: r.id });
        assert_eq!(bs.pending_rars.len(), 1);
        bs_on_msg3(&mut bs, r.id, Rnti(20), t(10));
        bs_on_msg3(&mut bs, r.id, Rnti(10), t(10));
        let m = bs_resolve_contention(&mut bs, t(14));
        assert_eq!(m, vec![Msg4 { rar_id: r.id, winner: Rnti(10), losers: vec![Rnti(20)] }]);
    }

    #[test]
    fn rach_overload() {
        let cfg = BsConfig { rach_capacity_per_sf: 2, ..BsConfig::default() };
        let mut bs = BsState::new(cfg, 1);
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        assert!(bs_on_preamble(&mut bs, 1, false, 0, t(0), &mut rng).is_ok());
        assert!(bs_on_preamble(&mut bs, 2, false, 0, t(0), &mut rng).is_ok());
        assert_eq!(bs_on_preamble(&mut bs, 3, false, 0, t(0), &mut rng), Err(BsError::RachOverload { capacity: 2 }));
        assert!(bs_on_preamble(&mut bs, 3, false, 0, t(1), &mut rng).is_ok());
    }

    #[test]
    fn contexts_hold_resources() {
        let cfg = BsConfig { ra_context_rb: 3, ..BsConfig::default() };
        let mut bs = BsState::new(cfg, 1);
        let rar = Rar { id: 0, preamble: 0, received_at: t(0), at: t(7), ta: 0, contention_free: false };
        bs_on_rar_sent(&mut bs, &rar, t(7));
        assert_eq!(bs.context_rb(t(7)), 3);
        assert_eq!(bs.context_rb(t(70)), 3);
        assert_eq!(bs.context_rb(t(71)), 0);
        let cf = Rar { contention_free: true, id: 1, ..rar };
        bs_on_rar_sent(&mut bs, &cf, t(7));
        assert_eq!(bs.contexts.len(), 1);
    }

    #[test]
    fn sr_and_bfr() {
        let mut bs = BsState::new(BsConfig::default(), 1);
        assert_eq!(bs_on_sr(&mut bs, Rnti(5), t(0)), Err(BsError::UnknownRnti(Rnti(5))));
        bs.connect(Rnti(5), 3, t(0));
        assert_eq!(bs_on_sr(&mut bs, Rnti(5), t(10)).unwrap(), t(14));
        bs_on_bfr(&mut bs, Rnti(5), 7).unwrap();
        assert_eq!(bs.connected[&Rnti(5)].beam_view, 7);
    }

    #[test]
    fn inactivity_release() {
        let cfg = BsConfig { inactivity_timeout_ms: Some(100), ..BsConfig::default() };
        let mut bs = BsState::new(cfg, 1);
        bs.connect(Rnti(5), 0, t(0));
        assert!(bs_inactive(&bs, t(99)).is_empty());
        bs_on_sr(&mut bs, Rnti(5), t(50)).unwrap();
        assert!(bs_inactive(&bs, t(120)).is_empty());
        assert_eq!(bs_inactive(&bs, t(150)), vec![Rnti(5)]);
    }

    #[test]
    fn rlf_after_sustained_failure() {
        let mut bs = BsState::new(BsConfig::default(), 1);
        bs.connect(Rnti(1), 0, t(0));
        for s in 0..2100u64 {
            let now = t(s);
            let b = AckBitmap { bits: vec![crate::codec::uci::HarqBit::Ack; 3], t: now };
            bs.connected.get_mut(&Rnti(1)).unwrap().harq[0].on_assign(now, super::super::harq::PendingTb { bits: 1.0 });
            bs_on_ack_bitmap(&mut bs, Rnti(1), &b).unwrap();
            if bs_rlf_due(&bs, Rnti(1), now) {
                assert_eq!(s, 2000);
                return;
            }
        }
        panic!("no RLF");
    }

    proptest! {
        #[test]
        fn round_robin_conserves(bw in 1u16..275, reserved in 0u16..300, n in 0usize..8, rot in 0usize..8) {
            let ues: Vec<Rnti> = (0..n as u16).map(Rnti).collect();
            let out = round_robin(bw, reserved, &ues, rot);
            let total: u32 = out.iter().map(|(_, _, l)| u32::from(*l)).sum();
            prop_assert!(total + u32::from(reserved.min(bw)) <= u32::from(bw));
            for w in out.windows(2) {
                prop_assert_eq!(w[0].1 + w[0].2, w[1].1);
            }
            if n > 0 && reserved < bw {
                prop_assert_eq!(total + u32::from(reserved), u32::from(bw));
            }
        }
    }
}
