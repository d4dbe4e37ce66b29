//! MAC PDUs: a sequence of LCID-tagged subheaders and elements.
//!
//! Subheader byte: `R F LCID(6)`. Only SDUs carry a length field (8 bits
//! when F=0, 16 bits when F=1); control elements have fixed sizes. A
//! padding subheader ends the PDU and is followed by zero bytes.
//!
//! | LCID | element                          | body                        |
//! |------|----------------------------------|-----------------------------|
//! | 1    | SDU                              | L bytes                     |
//! | 47   | Recommended bit rate             | 16-bit kbps                 |
//! | 50   | Beam failure recovery            | `R R beam(6)`               |
//! | 51   | SP SRS activation/deactivation   | `A R id(6)`                 |
//! | 54   | CSI reporting activation/deact.  | `A R(7)`                    |
//! | 58   | SCell activation/deactivation    | `C7 .. C1 R`                |
//! | 61   | Timing advance command           | `tag(2) ta(6)`              |
//! | 63   | Padding                          | zero bytes to end of PDU    |

use serde::{Deserialize, Serialize};

use super::CodecError;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[repr(u8)]
pub enum Lcid {
    Sdu = 1,
    RecommendedBitRate = 47,
    BeamFailureRecovery = 50,
    SpSrsActDeact = 51,
    CsiReportingActDeact = 54,
    ScellActDeact = 58,
    TimingAdvanceCmd = 61,
    Padding = 63,
}

impl Lcid {
    pub const ALL: [Lcid; 8] = [
        Lcid::Sdu,
        Lcid::RecommendedBitRate,
        Lcid::BeamFailureRecovery,
        Lcid::SpSrsActDeact,
        Lcid::CsiReportingActDeact,
        Lcid::ScellActDeact,
        Lcid::TimingAdvanceCmd,
        Lcid::Padding,
    ];

    pub fn from_u8(v: u8) -> Option<Self> {
        Self::ALL.into_iter().find(|l| *l as u8 == v)
    }
}

/// SCell bitmap, `C7 C6 .. C1 R` with R in the least significant bit.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Default, Serialize, Deserialize)]
#[serde(transparent)]
pub struct ScellBitmap(pub u8);

impl ScellBitmap {
    pub fn from_indices(indices: impl IntoIterator<Item = u8>) -> Self {
        Self(indices.into_iter().filter(|i| (1..=7).contains(i)).fold(0, |acc, i| acc | (1 << i)))
    }

    pub fn is_active(self, index: u8) -> bool {
        (1..=7).contains(&index) && self.0 & (1 << index) != 0
    }

    pub fn indices(self) -> impl Iterator<Item = u8> {
        (1..=7).filter(move |i| self.is_active(*i))
    }

    pub fn reserved_bit(self) -> bool {
        self.0 & 1 == 1
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case")]
pub enum MacElement {
    ScellActDeact { bitmap: ScellBitmap },
    TimingAdvanceCmd { tag_id: u8, ta: u8 },
    SpSrsActDeact { active: bool, resource_id: u8 },
    CsiReportingActDeact { active: bool },
    BeamFailureRecovery { new_beam_idx: u8 },
    RecommendedBitRate { kbps: u16 },
    Sdu { bytes: Vec<u8> },
}

impl MacElement {
    pub fn lcid(&self) -> Lcid {
        match self {
            MacElement::ScellActDeact { .. } => Lcid::ScellActDeact,
            MacElement::TimingAdvanceCmd { .. } => Lcid::TimingAdvanceCmd,
            MacElement::SpSrsActDeact { .. } => Lcid::SpSrsActDeact,
            MacElement::CsiReportingActDeact { .. } => Lcid::CsiReportingActDeact,
            MacElement::BeamFailureRecovery { .. } => Lcid::BeamFailureRecovery,
            MacElement::RecommendedBitRate { .. } => Lcid::RecommendedBitRate,
            MacElement::Sdu { .. } => Lcid::Sdu,
        }
    }

    pub fn is_control(&self) -> bool {
        !matches!(self, MacElement::Sdu { .. })
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Hash, Default, Serialize, Deserialize)]
pub struct MacPdu {
    pub elements: Vec<MacElement>,
    /// Bytes taken by padding, including its subheader (0 = no padding).
    pub padding_bytes: usize,
}

impl MacPdu {
    pub fn new(elements: Vec<MacElement>) -> Self {
        Self { elements, padding_bytes: 0 }
    }

    pub fn with_padding(mut self, padding_bytes: usize) -> Self {
        self.padding_bytes = padding_bytes;
        self
    }

    pub fn padding_bits(&self) -> usize {
        self.padding_bytes * 8
    }
}

fn check(field: &'static str, value: u64, width: usize) -> Result<u8, CodecError> {
    if value >> width != 0 {
        return Err(CodecError::FieldOverflow { field, value, width });
    }
    Ok(value as u8)
}

pub fn encode_mac_pdu(p: &MacPdu) -> Result<Vec<u8>, CodecError> {
    let mut out = Vec::new();
    for e in &p.elements {
        let lcid = e.lcid() as u8;
        match e {
            MacElement::Sdu { bytes } => {
                if bytes.len() > usize::from(u16::MAX) {
                    return Err(CodecError::FieldOverflow {
                        field: "sdu_length",
                        value: bytes.len() as u64,
                        width: 16,
                    });
                }
                if bytes.len() > 255 {
                    out.push(0x40 | lcid);
                    out.extend_from_slice(&(bytes.len() as u16).to_be_bytes());
                } else {
                    out.push(lcid);
                    out.push(bytes.len() as u8);
                }
                out.extend_from_slice(bytes);
            }
            MacElement::ScellActDeact { bitmap } => {
                if bitmap.reserved_bit() {
                    return Err(CodecError::ReservedBitSet { lcid });
                }
                out.extend_from_slice(&[lcid, bitmap.0]);
            }
            MacElement::TimingAdvanceCmd { tag_id, ta } => {
                let b = (check("tag_id", (*tag_id).into(), 2)? << 6) | check("ta", (*ta).into(), 6)?;
                out.extend_from_slice(&[lcid, b]);
            }
            MacElement::SpSrsActDeact { active, resource_id } => {
                let b = (u8::from(*active) << 7) | check("resource_id", (*resource_id).into(), 6)?;
                out.extend_from_slice(&[lcid, b]);
            }
            MacElement::CsiReportingActDeact { active } => out.extend_from_slice(&[lcid, u8::from(*active) << 7]),
            MacElement::BeamFailureRecovery { new_beam_idx } => {
                out.extend_from_slice(&[lcid, check("new_beam_idx", (*new_beam_idx).into(), 6)?]);
            }
            MacElement::RecommendedBitRate { kbps } => {
                out.push(lcid);
                out.extend_from_slice(&kbps.to_be_bytes());
            }
        }
    }
    if p.padding_bytes > 0 {
        out.push(Lcid::Padding as u8);
        out.resize(out.len() + p.padding_bytes - 1, 0);
    }
    Ok(out)
}

pub fn decode_mac_pdu(bytes: &[u8]) -> Result<MacPdu, CodecError> {
    let mut elements = Vec::new();
    let mut i = 0;
    let need = |i: usize, n: usize| -> Result<(), CodecError> {
        if i + n > bytes.len() {
            Err(CodecError::TruncatedPdu { offset: i, needed: n })
        } else {
            Ok(())
        }
    };
    while i < bytes.len() {
        let sub = bytes[i];
        let raw = sub & 0x3F;
        let lcid = Lcid::from_u8(raw).ok_or(CodecError::UnknownLcid(raw))?;
        if sub & 0x80 != 0 {
            return Err(CodecError::ReservedBitSet { lcid: raw });
        }
        let long = sub & 0x40 != 0;
        if long && lcid != Lcid::Sdu {
            return Err(CodecError::ReservedBitSet { lcid: raw });
        }
        i += 1;
        let element = match lcid {
            Lcid::Padding => {
                let padding_bytes = bytes.len() - i + 1;
                if bytes[i..].iter().any(|b| *b != 0) {
                    return Err(CodecError::ReservedBitSet { lcid: raw });
                }
                return Ok(MacPdu { elements, padding_bytes });
            }
            Lcid::Sdu => {
                let len = if long {
                    need(i, 2)?;
                    let l = usize::from(u16::from_be_bytes([bytes[i], bytes[i + 1]]));
                    i += 2;
                    l
                } else {
                    need(i, 1)?;
                    let l = usize::from(bytes[i]);
                    i += 1;
                    l
                };
                // 16-bit lengths are only used when 8 bits do not suffice.
                if long && len <= 255 {
                    return Err(CodecError::ReservedBitSet { lcid: raw });
                }
                need(i, len)?;
                let e = MacElement::Sdu { bytes: bytes[i..i + len].to_vec() };
                i += len;
                e
            }
            Lcid::RecommendedBitRate => {
                need(i, 2)?;
                let kbps = u16::from_be_bytes([bytes[i], bytes[i + 1]]);
                i += 2;
                MacElement::RecommendedBitRate { kbps }
            }
            _ => {
                need(i, 1)?;
                let b = bytes[i];
                i += 1;
                match lcid {
                    Lcid::ScellActDeact => {
                        let bitmap = ScellBitmap(b);
                        if bitmap.reserved_bit() {
                            return Err(CodecError::ReservedBitSet { lcid: raw });
                        }
                        MacElement::ScellActDeact { bitmap }
                    }
                    Lcid::TimingAdvanceCmd => MacElement::TimingAdvanceCmd { tag_id: b >> 6, ta: b & 0x3F },
                    Lcid::SpSrsActDeact => {
                        if b & 0x40 != 0 {
                            return Err(CodecError::ReservedBitSet { lcid: raw });
                        }
                        MacElement::SpSrsActDeact { active: b & 0x80 != 0, resource_id: b & 0x3F }
                    }
                    Lcid::CsiReportingActDeact => {
                        if b & 0x7F != 0 {
                            return Err(CodecError::ReservedBitSet { lcid: raw });
                        }
                        MacElement::CsiReportingActDeact { active: b & 0x80 != 0 }
                    }
                    Lcid::BeamFailureRecovery => {
                        if b & 0xC0 != 0 {
                            return Err(CodecError::ReservedBitSet { lcid: raw });
                        }
                        MacElement::BeamFailureRecovery { new_beam_idx: b }
                    }
                    _ => unreachable!("multi-byte LCIDs handled above"),
                }
            }
        };
        elements.push(element);
    }
    Ok(MacPdu { elements, padding_bytes: 0 })
}
