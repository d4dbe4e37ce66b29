//! Random-access parameters broadcast in system information.
//!
//! Encoded as enum indices: window (4 bits), preambleTransMax (4 bits),
//! power ramping step (2 bits), numberOfPreambles - 1 (6 bits).

use serde::{Deserialize, Serialize};

use super::bits::{BitReader, BitWriter, Bits};
use super::CodecError;
use bitvec::prelude::*;

pub const SIB_RA_BITS: usize = 16;

macro_rules! indexed_enum {
    ($(#[$m:meta])* $name:ident : $field:literal { $($var:ident = $val:literal => $tag:literal),+ $(,)? }) => {
        $(#[$m])*
        #[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
        pub enum $name {
            $(#[serde(rename = $tag)] $var),+
        }

        impl $name {
            pub const ALL: &'static [$name] = &[$($name::$var),+];

            pub fn value(self) -> u32 {
                match self { $($name::$var => $val),+ }
            }

            pub fn index(self) -> u8 {
                Self::ALL.iter().position(|v| *v == self).expect("variant listed in ALL") as u8
            }

            pub fn from_index(i: u8) -> Result<Self, CodecError> {
                Self::ALL.get(usize::from(i)).copied().ok_or(CodecError::IndexOutOfRange { field: $field, index: i })
            }

            pub fn from_value(v: u32) -> Option<Self> {
                Self::ALL.iter().copied().find(|x| x.value() == v)
            }
        }
    };
}

indexed_enum! {
    /// ra-ResponseWindowSize in subframes.
    RaWindow: "ra_response_window" {
        Sf2 = 2 => "sf2", Sf3 = 3 => "sf3", Sf4 = 4 => "sf4", Sf5 = 5 => "sf5", Sf6 = 6 => "sf6",
        Sf7 = 7 => "sf7", Sf8 = 8 => "sf8", Sf9 = 9 => "sf9", Sf10 = 10 => "sf10",
    }
}

indexed_enum! {
    PreambleTransMax: "preamble_trans_max" {
        N3 = 3 => "n3", N4 = 4 => "n4", N5 = 5 => "n5", N6 = 6 => "n6", N7 = 7 => "n7", N8 = 8 => "n8",
        N10 = 10 => "n10", N20 = 20 => "n20", N50 = 50 => "n50", N100 = 100 => "n100", N200 = 200 => "n200",
    }
}

indexed_enum! {
    /// powerRampingStep in dB.
    PowerRampingStep: "power_ramping_step" {
        Db0 = 0 => "db0", Db2 = 2 => "db2", Db4 = 4 => "db4", Db6 = 6 => "db6",
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct SibRaConfig {
    pub ra_response_window_sf: RaWindow,
    pub preamble_trans_max: PreambleTransMax,
    pub power_ramping_step_db: PowerRampingStep,
    #[serde(default = "default_num_preambles")]
    pub num_preambles: u8,
}

fn default_num_preambles() -> u8 {
    64
}

impl SibRaConfig {
    pub fn new(window: RaWindow, trans_max: PreambleTransMax, step: PowerRampingStep) -> Self {
        Self {
            ra_response_window_sf: window,
            preamble_trans_max: trans_max,
            power_ramping_step_db: step,
            num_preambles: default_num_preambles(),
        }
    }

    /// Operator default: sf10, n10, 2 dB.
    pub fn operator_default() -> Self {
        Self::new(RaWindow::Sf10, PreambleTransMax::N10, PowerRampingStep::Db2)
    }

    pub fn window_sf(&self) -> u32 {
        self.ra_response_window_sf.value()
    }

    pub fn trans_max(&self) -> u32 {
        self.preamble_trans_max.value()
    }

    pub fn ramp_db(&self) -> f64 {
        f64::from(self.power_ramping_step_db.value())
    }
}

impl Default for SibRaConfig {
    fn default() -> Self {
        Self::operator_default()
    }
}

pub fn encode_sib_ra(c: &SibRaConfig) -> Result<Bits, CodecError> {
    if !(1..=64).contains(&c.num_preambles) {
        return Err(CodecError::FieldOverflow { field: "num_preambles", value: c.num_preambles.into(), width: 6 });
    }
    let mut w = BitWriter::new();
    w.put("ra_response_window", c.ra_response_window_sf.index().into(), 4)?;
    w.put("preamble_trans_max", c.preamble_trans_max.index().into(), 4)?;
    w.put("power_ramping_step", c.power_ramping_step_db.index().into(), 2)?;
    w.put("num_preambles", u64::from(c.num_preambles - 1), 6)?;
    Ok(w.finish())
}

pub fn decode_sib_ra(bits: &BitSlice<u8, Msb0>) -> Result<SibRaConfig, CodecError> {
    if bits.len() != SIB_RA_BITS {
        return Err(CodecError::Truncated { needed: SIB_RA_BITS, available: bits.len() });
    }
    let mut r = BitReader::new(bits);
    Ok(SibRaConfig {
        ra_response_window_sf: RaWindow::from_index(r.take(4)? as u8)?,
        preamble_trans_max: PreambleTransMax::from_index(r.take(4)? as u8)?,
        power_ramping_step_db: PowerRampingStep::from_index(r.take(2)? as u8)?,
        num_preambles: r.take(6)? as u8 + 1,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn enum_sizes() {
        assert_eq!(RaWindow::ALL.len(), 9);
        assert_eq!(PreambleTransMax::ALL.len(), 11);
        assert_eq!(PowerRampingStep::ALL.len(), 4);
    }

    #[test]
    fn exhaustive_product_round_trips() {
        let mut n = 0;
        for w in RaWindow::ALL {
            for t in PreambleTransMax::ALL {
                for s in PowerRampingStep::ALL {
                    let c = SibRaConfig::new(*w, *t, *s);
                    let bits = encode_sib_ra(&c).unwrap();
                    assert_eq!(decode_sib_ra(&bits).unwrap(), c);
                    n += 1;
                }
            }
        }
        assert_eq!(n, 396);
    }

    #[test]
    fn operator_and_attacker_rows() {
        let op = SibRaConfig::new(RaWindow::Sf10, PreambleTransMax::N10, PowerRampingStep::Db2);
        assert_eq!(decode_sib_ra(&encode_sib_ra(&op).unwrap()).unwrap(), op);
        let atk = SibRaConfig::new(RaWindow::Sf2, PreambleTransMax::N200, PowerRampingStep::Db0);
        assert_eq!(decode_sib_ra(&encode_sib_ra(&atk).unwrap()).unwrap(), atk);
        assert_eq!(atk.window_sf(), 2);
        assert_eq!(atk.trans_max(), 200);
    }

    #[test]
    fn out_of_range_index_rejected() {
        let mut bits = encode_sib_ra(&SibRaConfig::default()).unwrap();
        bits[..4].store_be(9u8);
        assert_eq!(decode_sib_ra(&bits), Err(CodecError::IndexOutOfRange { field: "ra_response_window", index: 9 }));
        let mut bits = encode_sib_ra(&SibRaConfig::default()).unwrap();
        bits[4..8].store_be(11u8);
        assert!(matches!(decode_sib_ra(&bits), Err(CodecError::IndexOutOfRange { field: "preamble_trans_max", .. })));
    }

    #[test]
    fn all_preamble_counts_round_trip() {
        for n in 1..=64u8 {
            let c = SibRaConfig { num_preambles: n, ..SibRaConfig::default() };
            assert_eq!(decode_sib_ra(&encode_sib_ra(&c).unwrap()).unwrap(), c);
        }
        let c = SibRaConfig { num_preambles: 0, ..SibRaConfig::default() };
        assert!(encode_sib_ra(&c).is_err());
    }

    #[test]
    fn serde_tags() {
        let s = serde_json::to_string(&SibRaConfig::default()).unwrap();
        assert!(s.contains("\"sf10\"") && s.contains("\"n10\"") && s.contains("\"db2\""), "{s}");
    }
}
