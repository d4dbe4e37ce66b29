//! Downlink control information.
//!
//! Layout, MSB first (N = carrier bandwidth in RBs):
//!
//! | field                | bits                          |
//! |----------------------|-------------------------------|
//! | header               | 2 (0 UL, 1 DL, 2 BWP switch)  |
//! | RIV                  | ceil(log2(N(N+1)/2 + 1))      |
//! | slot offset          | 3                             |
//! | tpc                  | 2                             |
//! | dai                  | 2                             |
//! | harq feedback timing | 3                             |
//! | bwp indicator        | 2                             |
//! | mcs                  | 5                             |
//! | ndi                  | 1                             |
//! | rv                   | 2                             |
//! | harq pid             | 4                             |
//!
//! followed by a 16-bit CRC XORed with the RNTI. With N = 106 the payload is
//! 39 bits. An all-ones RIV means "no allocation"; a DL header with no
//! allocation is a PDCCH order, whose preamble index rides in mcs|ndi.

use bitvec::prelude::*;
use serde::{Deserialize, Serialize};

use super::bits::{BitReader, BitWriter, Bits};
use super::crc::{masked_crc, CRC_BITS};
use super::CodecError;
use crate::time::{Direction, ResourceAllocation, Rnti, SlotTime};

/// Carrier bandwidth the reference UL grant is sized for.
pub const REFERENCE_BANDWIDTH_RB: u16 = 106;
/// Bits in every field except the RIV.
pub const FIXED_FIELD_BITS: usize = 2 + 3 + 2 + 2 + 3 + 2 + 5 + 1 + 2 + 4;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct DciLayout {
    pub bandwidth_rb: u16,
}

impl DciLayout {
    pub fn new(bandwidth_rb: u16) -> Self {
        Self { bandwidth_rb }
    }

    pub fn reference() -> Self {
        Self::new(REFERENCE_BANDWIDTH_RB)
    }

    pub fn riv_bits(&self) -> usize {
        let n = u64::from(self.bandwidth_rb);
        let states = n * (n + 1) / 2 + 1;
        (64 - (states - 1).leading_zeros()) as usize
    }

    /// Payload length before the CRC.
    pub fn payload_bits(&self) -> usize {
        FIXED_FIELD_BITS + self.riv_bits()
    }

    pub fn total_bits(&self) -> usize {
        self.payload_bits() + CRC_BITS
    }

    fn no_alloc_riv(&self) -> u64 {
        (1u64 << self.riv_bits()) - 1
    }
}

impl Default for DciLayout {
    fn default() -> Self {
        Self::reference()
    }
}

/// Resource indication value for a contiguous allocation.
pub fn riv_encode(start_rb: u16, num_rb: u16, bandwidth_rb: u16) -> u32 {
    let (n, s, l) = (u32::from(bandwidth_rb), u32::from(start_rb), u32::from(num_rb));
    if l - 1 <= n / 2 {
        n * (l - 1) + s
    } else {
        n * (n - l + 1) + (n - 1 - s)
    }
}

pub fn riv_decode(riv: u32, bandwidth_rb: u16) -> Option<(u16, u16)> {
    let n = u32::from(bandwidth_rb);
    if n == 0 || riv >= n * (n + 1) / 2 {
        return None;
    }
    let (q, r) = (riv / n, riv % n);
    let (start, len) = if q + r < n { (r, q + 1) } else { (n - 1 - r, n - q + 1) };
    (start + len <= n).then_some((start as u16, len as u16))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum DciKind {
    UlGrant,
    DlAssignment,
    PdcchOrder,
    BwpSwitch,
}

/// Frequency allocation plus the slot offset to the scheduled transmission.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct DciAllocation {
    pub start_rb: u16,
    pub num_rb: u16,
    pub slot_offset: u8,
}

impl DciAllocation {
    pub fn new(start_rb: u16, num_rb: u16, slot_offset: u8) -> Self {
        Self { start_rb, num_rb, slot_offset }
    }

    pub fn full_band(bandwidth_rb: u16) -> Self {
        Self::new(0, bandwidth_rb, 0)
    }

    /// Absolute allocation for a DCI received at `now`.
    pub fn resolve(&self, now: SlotTime, direction: Direction) -> ResourceAllocation {
        ResourceAllocation {
            start_rb: self.start_rb,
            num_rb: self.num_rb,
            slot: now.advance(u64::from(self.slot_offset)),
            direction,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct DciMessage {
    pub rnti: Rnti,
    pub kind: DciKind,
    pub alloc: Option<DciAllocation>,
    pub tpc: u8,
    pub dai: u8,
    pub harq_feedback_timing: u8,
    pub bwp_indicator: u8,
    pub mcs: u8,
    pub ndi: u8,
    pub rv: u8,
    pub harq_pid: u8,
}

impl DciMessage {
    fn blank(rnti: Rnti, kind: DciKind, alloc: Option<DciAllocation>) -> Self {
        Self {
            rnti,
            kind,
            alloc,
            tpc: 1,
            dai: 0,
            harq_feedback_timing: 0,
            bwp_indicator: 0,
            mcs: 0,
            ndi: 0,
            rv: 0,
            harq_pid: 0,
        }
    }

    pub fn ul_grant(rnti: Rnti, alloc: DciAllocation) -> Self {
        Self::blank(rnti, DciKind::UlGrant, Some(alloc))
    }

    pub fn dl_assignment(rnti: Rnti, alloc: DciAllocation, dai: u8, k1: u8) -> Self {
        Self { dai, harq_feedback_timing: k1, ..Self::blank(rnti, DciKind::DlAssignment, Some(alloc)) }
    }

    /// PDCCH order; `preamble_index` 0 asks for contention-based access.
    pub fn pdcch_order(rnti: Rnti, preamble_index: u8) -> Self {
        let mut d = Self::blank(rnti, DciKind::PdcchOrder, None);
        d.tpc = 0;
        d.mcs = (preamble_index >> 1) & 0x1F;
        d.ndi = preamble_index & 1;
        d
    }

    pub fn bwp_switch(rnti: Rnti, bwp: u8) -> Self {
        Self { bwp_indicator: bwp, ..Self::blank(rnti, DciKind::BwpSwitch, None) }
    }

    /// ra-PreambleIndex carried by a PDCCH order.
    pub fn po_preamble_index(&self) -> u8 {
        (self.mcs << 1) | (self.ndi & 1)
    }
}

pub fn encode_dci(d: &DciMessage, layout: &DciLayout) -> Result<Bits, CodecError> {
    let header = match d.kind {
        DciKind::UlGrant => 0,
        DciKind::DlAssignment | DciKind::PdcchOrder => 1,
        DciKind::BwpSwitch => 2,
    };
    let alloc = match (d.kind, d.alloc) {
        (DciKind::PdcchOrder, _) => None,
        (DciKind::UlGrant | DciKind::DlAssignment, None) => return Err(CodecError::MissingAllocation),
        (_, a) => a,
    };
    let mut w = BitWriter::new();
    w.put("header", header, 2)?;
    match alloc {
        Some(a) => {
            let fits = a.num_rb >= 1 && u32::from(a.start_rb) + u32::from(a.num_rb) <= u32::from(layout.bandwidth_rb);
            if !fits {
                return Err(CodecError::InvalidAllocation { start_rb: a.start_rb, num_rb: a.num_rb });
            }
            w.put("riv", riv_encode(a.start_rb, a.num_rb, layout.bandwidth_rb).into(), layout.riv_bits())?;
            w.put("slot_offset", a.slot_offset.into(), 3)?;
        }
        None => {
            w.put("riv", layout.no_alloc_riv(), layout.riv_bits())?;
            w.put("slot_offset", 0, 3)?;
        }
    }
    w.put("tpc", d.tpc.into(), 2)?;
    w.put("dai", d.dai.into(), 2)?;
    w.put("harq_feedback_timing", d.harq_feedback_timing.into(), 3)?;
    w.put("bwp_indicator", d.bwp_indicator.into(), 2)?;
    w.put("mcs", d.mcs.into(), 5)?;
    w.put("ndi", d.ndi.into(), 1)?;
    w.put("rv", d.rv.into(), 2)?;
    w.put("harq_pid", d.harq_pid.into(), 4)?;
    let payload = w.finish();
    let crc = masked_crc(&payload, d.rnti);
    let mut out = payload;
    out.extend_from_bitslice(crc.view_bits::<Msb0>());
    Ok(out)
}

/// Blind-decode `bits` against each candidate RNTI (ascending order).
///
/// The CRC mask can unmask under at most one RNTI, so the first match is
/// the only match.
pub fn decode_dci(
    bits: &BitSlice<u8, Msb0>,
    candidates: &[Rnti],
    layout: &DciLayout,
) -> Result<DciMessage, CodecError> {
    if bits.len() != layout.total_bits() {
        return Err(CodecError::NoMatch);
    }
    let (payload, crc_bits) = bits.split_at(layout.payload_bits());
    let rx_crc = crc_bits.load_be::<u16>();
    let mut sorted: Vec<Rnti> = candidates.to_vec();
    sorted.sort_unstable();
    sorted.dedup();
    let rnti = sorted.into_iter().find(|r| masked_crc(payload, *r) == rx_crc).ok_or(CodecError::NoMatch)?;
    parse_payload(payload, rnti, layout)
}

fn parse_payload(payload: &BitSlice<u8, Msb0>, rnti: Rnti, layout: &DciLayout) -> Result<DciMessage, CodecError> {
    let mut r = BitReader::new(payload);
    let header = r.take(2)?;
    let riv = r.take(layout.riv_bits())?;
    let slot_offset = r.take(3)? as u8;
    let tpc = r.take(2)? as u8;
    let dai = r.take(2)? as u8;
    let harq_feedback_timing = r.take(3)? as u8;
    let bwp_indicator = r.take(2)? as u8;
    let mcs = r.take(5)? as u8;
    let ndi = r.take(1)? as u8;
    let rv = r.take(2)? as u8;
    let harq_pid = r.take(4)? as u8;
    let alloc = if riv == layout.no_alloc_riv() {
        if slot_offset != 0 {
            return Err(CodecError::InvalidField { field: "slot_offset", value: slot_offset.into() });
        }
        None
    } else {
        let (start_rb, num_rb) =
            riv_decode(riv as u32, layout.bandwidth_rb).ok_or(CodecError::InvalidField { field: "riv", value: riv })?;
        Some(DciAllocation { start_rb, num_rb, slot_offset })
    };
    let kind = match (header, alloc.is_some()) {
        (0, true) => DciKind::UlGrant,
        (1, true) => DciKind::DlAssignment,
        (1, false) => DciKind::PdcchOrder,
        (2, _) => DciKind::BwpSwitch,
        (h, _) => return Err(CodecError::InvalidField { field: "header", value: h }),
    };
    Ok(DciMessage { rnti, kind, alloc, tpc, dai, harq_feedback_timing, bwp_indicator, mcs, ndi, rv, harq_pid })
}
