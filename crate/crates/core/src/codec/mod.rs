//! Bit-exact codecs for the unprotected control messages.

pub mod bits;
pub mod crc;
pub mod dci;
pub mod hexdump;
pub mod mac;
pub mod scramble;
pub mod sib;
pub mod uci;

use thiserror::Error;

pub use bits::Bits;
pub use dci::{decode_dci, encode_dci, DciAllocation, DciKind, DciLayout, DciMessage};
pub use mac::{decode_mac_pdu, encode_mac_pdu, Lcid, MacElement, MacPdu, ScellBitmap};
pub use scramble::{scramble_bytes, scramble_keyed, MitigationKeyContext, PhyKey};
pub use sib::{decode_sib_ra, encode_sib_ra, PowerRampingStep, PreambleTransMax, RaWindow, SibRaConfig};
pub use uci::{decode_uci, encode_uci, AckBitmap, CsiReport, HarqBit, Uci};

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum CodecError {
    #[error("field {field}={value} does not fit in {width} bits")]
    FieldOverflow { field: &'static str, value: u64, width: usize },
    #[error("invalid value {value} for field {field}")]
    InvalidField { field: &'static str, value: u64 },
    #[error("allocation start={start_rb} len={num_rb} does not fit the carrier")]
    InvalidAllocation { start_rb: u16, num_rb: u16 },
    #[error("grant or assignment without a resource allocation")]
    MissingAllocation,
    #[error("bit string truncated: needed {needed} bits, have {available}")]
    Truncated { needed: usize, available: usize },
    #[error("CRC does not unmask under any candidate RNTI")]
    NoMatch,
    #[error("unknown LCID {0}")]
    UnknownLcid(u8),
    #[error("MAC PDU truncated at byte {offset}: {needed} more bytes needed")]
    TruncatedPdu { offset: usize, needed: usize },
    #[error("reserved bit set in element with LCID {lcid}")]
    ReservedBitSet { lcid: u8 },
    #[error("enum index {index} out of range for {field}")]
    IndexOutOfRange { field: &'static str, index: u8 },
    #[error("malformed hex line: {0}")]
    MalformedHex(String),
}
