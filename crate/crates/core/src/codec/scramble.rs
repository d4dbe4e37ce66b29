//! Keyed scrambling of control payloads.
//!
//! The keystream is HMAC-SHA256(K_PHY, sfn || sf || rb || counter) in
//! counter mode, so XORing twice with the same context restores the input.

use bitvec::prelude::*;
use hmac::{Hmac, Mac};
use serde::{Deserialize, Serialize};
use sha2::Sha256;

use super::bits::Bits;
use crate::time::Rnti;

type HmacSha256 = Hmac<Sha256>;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct PhyKey(pub [u8; 32]);

impl PhyKey {
    /// Per-UE key derived from a cell secret; stands in for the key
    /// hierarchy that would normally feed K_PHY.
    pub fn derive(cell_secret: &[u8], rnti: Rnti) -> Self {
        let mut mac = HmacSha256::new_from_slice(cell_secret).expect("HMAC accepts any key length");
        mac.update(b"k-phy");
        mac.update(&rnti.0.to_be_bytes());
        Self(mac.finalize().into_bytes().into())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct MitigationKeyContext {
    pub key: PhyKey,
    pub sfn: u16,
    pub subframe: u8,
    pub start_rb: u16,
}

/// Keystream of `n_bits` bits for `ctx`.
pub fn keystream(ctx: &MitigationKeyContext, n_bits: usize) -> Bits {
    let mut out = Bits::with_capacity(n_bits);
    let mut counter: u32 = 0;
    while out.len() < n_bits {
        let mut mac = HmacSha256::new_from_slice(&ctx.key.0).expect("HMAC accepts any key length");
        mac.update(&ctx.sfn.to_be_bytes());
        mac.update(&[ctx.subframe]);
        mac.update(&ctx.start_rb.to_be_bytes());
        mac.update(&counter.to_be_bytes());
        let block = mac.finalize().into_bytes();
        let need = (n_bits - out.len()).min(256);
        out.extend_from_bitslice(&block.view_bits::<Msb0>()[..need]);
        counter += 1;
    }
    out
}

pub fn scramble_keyed(bits: &BitSlice<u8, Msb0>, ctx: &MitigationKeyContext) -> Bits {
    let mut out = bits.to_bitvec();
    out ^= keystream(ctx, bits.len());
    out
}

pub fn scramble_bytes(bytes: &[u8], ctx: &MitigationKeyContext) -> Vec<u8> {
    let mut out = bytes.to_vec();
    let ks = keystream(ctx, bytes.len() * 8);
    out.view_bits_mut::<Msb0>().iter_mut().zip(ks.iter()).for_each(|(mut b, k)| *b ^= *k);
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::codec::dci::{decode_dci, encode_dci, DciAllocation, DciLayout, DciMessage};
    use crate::codec::CodecError;
    use std::collections::HashSet;

    fn ctx(sfn: u16, subframe: u8, start_rb: u16) -> MitigationKeyContext {
        MitigationKeyContext { key: PhyKey::derive(b"cell", Rnti(0x4601)), sfn, subframe, start_rb }
    }

    #[test]
    fn involution() {
        let x = Bits::from_slice(b"low layer payload");
        let c = ctx(5, 3, 12);
        assert_eq!(scramble_keyed(&scramble_keyed(&x, &c), &c), x);
        let b = b"abc".to_vec();
        assert_eq!(scramble_bytes(&scramble_bytes(&b, &c), &c), b);
    }

    #[test]
    fn keystream_distinct_across_contexts() {
        assert_ne!(keystream(&ctx(0, 0, 0), 64), keystream(&ctx(0, 1, 0), 64));
        let mut seen = HashSet::new();
        for sfn in 0..100u16 {
            for sf in 0..10u8 {
                for rb in 0..10u16 {
                    assert!(seen.insert(keystream(&ctx(sfn, sf, rb), 64).into_vec()));
                }
            }
        }
        assert_eq!(seen.len(), 10_000);
    }

    #[test]
    fn long_keystream_spans_blocks() {
        let ks = keystream(&ctx(1, 2, 3), 600);
        assert_eq!(ks.len(), 600);
        assert_ne!(ks[..256], ks[256..512]);
    }

    #[test]
    fn scrambled_dci_does_not_decode() {
        let layout = DciLayout::reference();
        let d = DciMessage::ul_grant(Rnti(0x4601), DciAllocation::full_band(106));
        let bits = encode_dci(&d, &layout).unwrap();
        let s = scramble_keyed(&bits, &ctx(7, 1, 0));
        assert_eq!(decode_dci(&s, &[Rnti(0x4601)], &layout), Err(CodecError::NoMatch));
        assert_eq!(decode_dci(&scramble_keyed(&s, &ctx(7, 1, 0)), &[Rnti(0x4601)], &layout).unwrap(), d);
    }

    #[test]
    fn keys_differ_per_ue() {
        assert_ne!(PhyKey::derive(b"cell", Rnti(1)), PhyKey::derive(b"cell", Rnti(2)));
    }
}
