//! HARQ-ACK bookkeeping driven by the downlink assignment index.
//!
//! The UE keeps a running 2-bit counter. When an assignment arrives with a
//! DAI ahead of the counter by `g` (mod 4), `g` assignments were missed and
//! `g` NACKs are inserted in front of it, in the bitmap due at the received
//! assignment's feedback slot.
//!
//! The BS counts, per feedback slot, the assignments it sent there. Feedback
//! slots that pass without a bitmap (DTX) leave a backlog that the UE will
//! report as inferred NACKs with its next bitmap, so the expected length is
//! `assignments + backlog mod 4`.

use serde::{Deserialize, Serialize};

use crate::codec::dci::{DciKind, DciMessage};
use crate::codec::uci::{AckBitmap, HarqBit};
use crate::time::SlotTime;

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct HarqTracker {
    pub ue_dai_expected: u8,
    /// Bits waiting to be reported, keyed by feedback slot.
    pub pending: Vec<(SlotTime, Vec<HarqBit>)>,
}

impl HarqTracker {
    fn slot_entry(&mut self, at: SlotTime) -> &mut Vec<HarqBit> {
        let i = match self.pending.iter().position(|(t, _)| *t == at) {
            Some(i) => i,
            None => {
                self.pending.push((at, Vec::new()));
                self.pending.len() - 1
            }
        };
        &mut self.pending[i].1
    }

    /// Bitmap due at `now`, if any.
    pub fn take_feedback(&mut self, now: SlotTime) -> Option<AckBitmap> {
        let i = self.pending.iter().position(|(t, _)| *t == now)?;
        let (t, bits) = self.pending.remove(i);
        (!bits.is_empty()).then_some(AckBitmap { bits, t })
    }

    /// Forget everything (on reconnection or RA).
    pub fn reset(&mut self) {
        *self = Self::default();
    }
}

/// Feedback slot of an assignment received at `now`.
pub fn feedback_slot(d: &DciMessage, now: SlotTime) -> SlotTime {
    now.advance(u64::from(d.harq_feedback_timing))
}

/// Record a received DL assignment.
pub fn harq_on_assignment(h: &mut HarqTracker, d: &DciMessage, decode_ok: bool, now: SlotTime) {
    debug_assert_eq!(d.kind, DciKind::DlAssignment);
    let gap = (d.dai.wrapping_sub(h.ue_dai_expected)) & 0x3;
    let entry = h.slot_entry(feedback_slot(d, now));
    entry.extend(std::iter::repeat_n(HarqBit::Nack, usize::from(gap)));
    entry.push(if decode_ok { HarqBit::Ack } else { HarqBit::Nack });
    h.ue_dai_expected = (d.dai + 1) & 0x3;
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum HarqVerdict {
    Matched,
    HarqFailure,
}

/// One transport block awaiting feedback.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PendingTb {
    pub bits: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum FeedbackResult {
    /// Bitmap matched; `acked_bits` of transport blocks were delivered.
    Matched {
        acked_bits: f64,
    },
    HarqFailure,
    /// Feedback expected but absent.
    Dtx,
}

/// BS-side HARQ expectation for one UE on one carrier.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct BsHarq {
    pub dai_counter: u8,
    pub expected: Vec<(SlotTime, Vec<PendingTb>)>,
    pub dtx_backlog: u32,
    /// Start of the current run of failures or DTX.
    pub failing_since: Option<SlotTime>,
}

impl BsHarq {
    /// Register an assignment and return the DAI to put in its DCI.
    pub fn on_assign(&mut self, feedback_at: SlotTime, tb: PendingTb) -> u8 {
        let dai = self.dai_counter;
        self.dai_counter = (self.dai_counter + 1) & 0x3;
        match self.expected.iter_mut().find(|(t, _)| *t == feedback_at) {
            Some((_, v)) => v.push(tb),
            None => self.expected.push((feedback_at, vec![tb])),
        }
        dai
    }

    pub fn expected_bits(&self, at: SlotTime) -> usize {
        let n = self.expected.iter().find(|(t, _)| *t == at).map_or(0, |(_, v)| v.len());
        n + (self.dtx_backlog % 4) as usize
    }

    fn mark_failing(&mut self, now: SlotTime) {
        self.failing_since.get_or_insert(now);
    }

    /// Evaluate feedback for slot `now`; `bitmap` is what arrived (if any).
    /// Returns `None` when nothing was expected and nothing arrived, which
    /// also ends any failure run.
    pub fn on_feedback(&mut self, now: SlotTime, bitmap: Option<&AckBitmap>) -> Option<FeedbackResult> {
        let slot = self.expected.iter().position(|(t, _)| *t == now).map(|i| self.expected.remove(i).1);
        match (slot, bitmap) {
            (None, None) => {
                self.failing_since = None;
                None
            }
            (Some(tbs), None) => {
                self.dtx_backlog += tbs.len() as u32;
                self.mark_failing(now);
                Some(FeedbackResult::Dtx)
            }
            (tbs, Some(b)) => {
                let tbs = tbs.unwrap_or_default();
                let want = tbs.len() + (self.dtx_backlog % 4) as usize;
                self.dtx_backlog = 0;
                if tbs.is_empty() || b.bits.len() != want {
                    self.mark_failing(now);
                    return Some(FeedbackResult::HarqFailure);
                }
                self.failing_since = None;
                let own = &b.bits[b.bits.len() - tbs.len()..];
                let acked_bits = tbs.iter().zip(own).filter(|(_, a)| **a == HarqBit::Ack).map(|(tb, _)| tb.bits).sum();
                Some(FeedbackResult::Matched { acked_bits })
            }
        }
    }

    /// Milliseconds of uninterrupted failure at `now`.
    pub fn failing_for_ms(&self, now: SlotTime) -> f64 {
        self.failing_since.map_or(0.0, |s| s.slots_until(&now) as f64 * now.slot_ms())
    }

    pub fn reset(&mut self) {
        *self = Self::default();
    }
}

/// Match a bitmap against the expectation for its slot.
pub fn bs_verdict(h: &mut BsHarq, bitmap: &AckBitmap) -> HarqVerdict {
    match h.on_feedback(bitmap.t, Some(bitmap)) {
        Some(FeedbackResult::Matched { .. }) => HarqVerdict::Matched,
        _ => HarqVerdict::HarqFailure,
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::codec::dci::DciAllocation;
    use crate::time::Rnti;

    fn dl(dai: u8, k1: u8) -> DciMessage {
        DciMessage::dl_assignment(Rnti(0x4601), DciAllocation::new(0, 10, 0), dai, k1)
    }

    fn t(i: u64) -> SlotTime {
        SlotTime::from_index(i, 0)
    }

    #[test]
    fn in_order_single() {
        let mut h = HarqTracker::default();
        harq_on_assignment(&mut h, &dl(0, 4), true, t(0));
        assert_eq!(h.take_feedback(t(4)).unwrap().bits, vec![HarqBit::Ack]);
    }

    #[test]
    fn injected_dai_two() {
        let mut h = HarqTracker::default();
        harq_on_assignment(&mut h, &dl(2, 4), true, t(0));
        assert_eq!(h.take_feedback(t(4)).unwrap().bits, vec![HarqBit::Nack, HarqBit::Nack, HarqBit::Ack]);
    }

    #[test]
    fn leading_miss_same_slot() {
        let mut bs = BsHarq::default();
        let d0 = bs.on_assign(t(4), PendingTb { bits: 100.0 });
        let d1 = bs.on_assign(t(4), PendingTb { bits: 100.0 });
        assert_eq!((d0, d1), (0, 1));
        let mut ue = HarqTracker::default();
        harq_on_assignment(&mut ue, &dl(d1, 4), true, t(0));
        let b = ue.take_feedback(t(4)).unwrap();
        assert_eq!(b.bits, vec![HarqBit::Nack, HarqBit::Ack]);
        assert_eq!(bs.on_feedback(t(4), Some(&b)), Some(FeedbackResult::Matched { acked_bits: 100.0 }));
    }

    #[test]
    fn size_mismatch_is_failure() {
        let mut bs = BsHarq::default();
        bs.on_assign(t(4), PendingTb { bits: 1.0 });
        let b = AckBitmap { bits: vec![HarqBit::Nack, HarqBit::Nack, HarqBit::Ack], t: t(4) };
        assert_eq!(bs_verdict(&mut bs, &b), HarqVerdict::HarqFailure);
        let mut bs = BsHarq::default();
        bs.on_assign(t(4), PendingTb { bits: 1.0 });
        let b = AckBitmap { bits: vec![HarqBit::Ack], t: t(4) };
        assert_eq!(bs_verdict(&mut bs, &b), HarqVerdict::Matched);
    }

    #[test]
    fn unexpected_bitmap_is_failure() {
        let mut bs = BsHarq::default();
        let b = AckBitmap { bits: vec![HarqBit::Ack], t: t(9) };
        assert_eq!(bs.on_feedback(t(9), Some(&b)), Some(FeedbackResult::HarqFailure));
        assert_eq!(bs.failing_since, Some(t(9)));
    }

    /// Every loss pattern over six assignments, one per feedback slot.
    #[test]
    fn all_loss_patterns_match() {
        for mask in 0u32..64 {
            let mut bs = BsHarq::default();
            let mut ue = HarqTracker::default();
            for slot in 0..12u64 {
                let now = t(slot);
                if slot < 6 {
                    let dai = bs.on_assign(now.advance(4), PendingTb { bits: 1.0 });
                    if mask & (1 << slot) == 0 {
                        harq_on_assignment(&mut ue, &dl(dai, 4), true, now);
                    }
                }
                let fb = ue.take_feedback(now);
                if let Some(b) = &fb {
                    assert_eq!(b.bits.len(), bs.expected_bits(now), "mask {mask:06b} slot {slot}");
                }
                let r = bs.on_feedback(now, fb.as_ref());
                assert!(!matches!(r, Some(FeedbackResult::HarqFailure)), "mask {mask:06b}");
            }
        }
    }
}
