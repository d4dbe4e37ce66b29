//! Uplink control information: scheduling requests, HARQ-ACK bitmaps and
//! CSI reports.
//!
//! Layout: type (2 bits), body, then a 16-bit CRC XORed with the RNTI.
//!
//! * SR: empty body.
//! * ACK: length - 1 (4 bits), then one bit per entry (1 = ACK).
//! * CSI: RNTI (16 bits), beam index (7 bits), RSRP + 156 (7 bits).

use bitvec::prelude::*;
use serde::{Deserialize, Serialize};

use super::bits::{BitReader, BitWriter, Bits};
use super::crc::{masked_crc, CRC_BITS};
use super::CodecError;
use crate::time::{Rnti, SlotTime};

pub const RSRP_MIN_DBM: f64 = -156.0;
pub const RSRP_MAX_DBM: f64 = -31.0;
pub const MAX_ACK_BITS: usize = 16;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "UPPERCASE")]
pub enum HarqBit {
    Ack,
    Nack,
}

#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct AckBitmap {
    pub bits: Vec<HarqBit>,
    pub t: SlotTime,
}

impl AckBitmap {
    pub fn len(&self) -> usize {
        self.bits.len()
    }

    pub fn is_empty(&self) -> bool {
        self.bits.is_empty()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CsiReport {
    pub rnti: Rnti,
    pub beam_idx: u8,
    pub rsrp_dbm: f64,
    pub t: SlotTime,
}

impl CsiReport {
    /// RSRP clamped to the reportable range.
    pub fn new(rnti: Rnti, beam_idx: u8, rsrp_dbm: f64, t: SlotTime) -> Self {
        Self { rnti, beam_idx, rsrp_dbm: rsrp_dbm.clamp(RSRP_MIN_DBM, RSRP_MAX_DBM), t }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case")]
pub enum Uci {
    SchedulingRequest,
    Ack { bits: Vec<HarqBit> },
    Csi { beam_idx: u8, rsrp_dbm: f64 },
}

pub fn encode_uci(u: &Uci, rnti: Rnti) -> Result<Bits, CodecError> {
    let mut w = BitWriter::new();
    match u {
        Uci::SchedulingRequest => w.put("uci_type", 0, 2)?,
        Uci::Ack { bits } => {
            if bits.is_empty() || bits.len() > MAX_ACK_BITS {
                return Err(CodecError::FieldOverflow { field: "ack_length", value: bits.len() as u64, width: 4 });
            }
            w.put("uci_type", 1, 2)?;
            w.put("ack_length", bits.len() as u64 - 1, 4)?;
            for b in bits {
                w.put("ack", u64::from(*b == HarqBit::Ack), 1)?;
            }
        }
        Uci::Csi { beam_idx, rsrp_dbm } => {
            if !(RSRP_MIN_DBM..=RSRP_MAX_DBM).contains(rsrp_dbm) {
                return Err(CodecError::InvalidField { field: "rsrp", value: rsrp_dbm.to_bits() });
            }
            w.put("uci_type", 2, 2)?;
            w.put("rnti", rnti.0.into(), 16)?;
            w.put("beam_idx", (*beam_idx).into(), 7)?;
            w.put("rsrp", (rsrp_dbm - RSRP_MIN_DBM).round() as u64, 7)?;
        }
    }
    let payload = w.finish();
    let crc = masked_crc(&payload, rnti);
    let mut out = payload;
    out.extend_from_bitslice(crc.view_bits::<Msb0>());
    Ok(out)
}

/// Decode a UCI payload expected from `rnti` (the receiver knows which PUCCH
/// resource it is reading).
pub fn decode_uci(bits: &BitSlice<u8, Msb0>, rnti: Rnti) -> Result<Uci, CodecError> {
    if bits.len() < 2 + CRC_BITS {
        return Err(CodecError::Truncated { needed: 2 + CRC_BITS, available: bits.len() });
    }
    let (payload, crc_bits) = bits.split_at(bits.len() - CRC_BITS);
    if masked_crc(payload, rnti) != crc_bits.load_be::<u16>() {
        return Err(CodecError::NoMatch);
    }
    let mut r = BitReader::new(payload);
    let uci = match r.take(2)? {
        0 => Uci::SchedulingRequest,
        1 => {
            let n = r.take(4)? as usize + 1;
            let bits = (0..n)
                .map(|_| r.take(1).map(|b| if b == 1 { HarqBit::Ack } else { HarqBit::Nack }))
                .collect::<Result<Vec<_>, _>>()?;
            Uci::Ack { bits }
        }
        2 => {
            let carried = r.take(16)? as u16;
            if carried != rnti.0 {
                return Err(CodecError::NoMatch);
            }
            let beam_idx = r.take(7)? as u8;
            let idx = r.take(7)?;
            let rsrp_dbm = RSRP_MIN_DBM + idx as f64;
            if rsrp_dbm > RSRP_MAX_DBM {
                return Err(CodecError::InvalidField { field: "rsrp", value: idx });
            }
            Uci::Csi { beam_idx, rsrp_dbm }
        }
        t => return Err(CodecError::InvalidField { field: "uci_type", value: t }),
    };
    if r.remaining() != 0 {
        return Err(CodecError::InvalidField { field: "uci_length", value: r.remaining() as u64 });
    }
    Ok(uci)
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn dai_attack_bitmap_encodes() {
        let u = Uci::Ack { bits: vec![HarqBit::Nack, HarqBit::Nack, HarqBit::Ack] };
        let bits = encode_uci(&u, Rnti(0x4601)).unwrap();
        assert_eq!(bits.len(), 2 + 4 + 3 + 16);
        assert_eq!(decode_uci(&bits, Rnti(0x4601)).unwrap(), u);
        assert_eq!(decode_uci(&bits, Rnti(0x4602)), Err(CodecError::NoMatch));
    }

    #[test]
    fn csi_carries_rnti() {
        let u = Uci::Csi { beam_idx: 31, rsrp_dbm: -97.0 };
        let bits = encode_uci(&u, Rnti(0x1111)).unwrap();
        assert_eq!(decode_uci(&bits, Rnti(0x1111)).unwrap(), u);
        let carried = bits[2..18].load_be::<u16>();
        assert_eq!(carried, 0x1111);
    }

    #[test]
    fn rsrp_range_enforced() {
        assert!(encode_uci(&Uci::Csi { beam_idx: 0, rsrp_dbm: -20.0 }, Rnti(1)).is_err());
        assert_eq!(CsiReport::new(Rnti(1), 0, -200.0, SlotTime::zero(3)).rsrp_dbm, RSRP_MIN_DBM);
    }

    fn any_uci() -> impl Strategy<Value = Uci> {
        prop_oneof![
            Just(Uci::SchedulingRequest),
            prop::collection::vec(prop_oneof![Just(HarqBit::Ack), Just(HarqBit::Nack)], 1..=16)
                .prop_map(|bits| Uci::Ack { bits }),
            (0u8..128, -156i32..=-31).prop_map(|(beam_idx, r)| Uci::Csi { beam_idx, rsrp_dbm: f64::from(r) }),
        ]
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(2000))]
        #[test]
        fn round_trip(u in any_uci(), rnti in 1u16..) {
            let bits = encode_uci(&u, Rnti(rnti)).unwrap();
            prop_assert_eq!(decode_uci(&bits, Rnti(rnti)).unwrap(), u);
        }
    }
}
