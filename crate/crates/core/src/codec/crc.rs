//! CRC-16/CCITT-FALSE over arbitrary-length bit strings, masked by RNTI.

use bitvec::prelude::*;

use crate::time::Rnti;

pub const CRC_POLY: u16 = 0x1021;
pub const CRC_INIT: u16 = 0xFFFF;
pub const CRC_BITS: usize = 16;

/// Bitwise CRC-16 (poly 0x1021, init 0xFFFF, no reflection, no final XOR).
pub fn crc16(bits: &BitSlice<u8, Msb0>) -> u16 {
    let mut crc = CRC_INIT;
    for bit in bits.iter().by_vals() {
        let top = (crc >> 15) & 1 == 1;
        crc <<= 1;
        if top ^ bit {
            crc ^= CRC_POLY;
        }
    }
    crc
}

/// CRC with the addressed RNTI XORed in.
pub fn masked_crc(bits: &BitSlice<u8, Msb0>, rnti: Rnti) -> u16 {
    crc16(bits) ^ rnti.0
}

#[cfg(test)]
mod tests {
    use super::*;

    /// Table-driven byte CRC, an independent oracle for the bitwise version.
    fn crc16_table(data: &[u8]) -> u16 {
        let mut table = [0u16; 256];
        for (i, e) in table.iter_mut().enumerate() {
            let mut c = (i as u16) << 8;
            for _ in 0..8 {
                c = if c & 0x8000 != 0 { (c << 1) ^ CRC_POLY } else { c << 1 };
            }
            *e = c;
        }
        data.iter().fold(CRC_INIT, |crc, b| (crc << 8) ^ table[usize::from((crc >> 8) as u8 ^ b)])
    }

    #[test]
    fn standard_check_value() {
        assert_eq!(crc16(b"123456789".view_bits::<Msb0>()), 0x29B1);
    }

    #[test]
    fn matches_table_oracle() {
        let mut x: u32 = 12345;
        for len in 0..64 {
            let data: Vec<u8> = (0..len)
                .map(|_| {
                    x = x.wrapping_mul(1_103_515_245).wrapping_add(12345);
                    (x >> 16) as u8
                })
                .collect();
            assert_eq!(crc16(data.view_bits::<Msb0>()), crc16_table(&data));
        }
    }

    #[test]
    fn mask_is_xor() {
        let bits = bitvec![u8, Msb0; 1, 0, 1];
        assert_eq!(masked_crc(&bits, Rnti(0x4601)) ^ 0x4601, crc16(&bits));
    }
}
