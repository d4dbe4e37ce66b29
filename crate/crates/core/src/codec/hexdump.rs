//! `<label> <hex>` text lines for golden files. Bits are packed MSB-first
//! and the last byte is zero-padded.

use bitvec::prelude::*;

use super::bits::{to_bytes, Bits};
use super::CodecError;

pub fn hex_line(label: &str, bits: &BitSlice<u8, Msb0>) -> String {
    format!("{label} {}", hex::encode(to_bytes(bits)))
}

/// Parse one line into (label, bytes).
pub fn parse_hex_line(line: &str) -> Result<(String, Vec<u8>), CodecError> {
    let (label, hex_part) = line.trim_end().split_once(' ').ok_or(CodecError::MalformedHex(line.to_string()))?;
    let bytes = hex::decode(hex_part).map_err(|_| CodecError::MalformedHex(line.to_string()))?;
    Ok((label.to_string(), bytes))
}

/// Bits from the first `n_bits` of a parsed line.
pub fn bits_from_hex(bytes: &[u8], n_bits: usize) -> Bits {
    let mut b = Bits::from_slice(bytes);
    b.truncate(n_bits);
    b
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::codec::bits::parse_bit_string;

    #[test]
    fn pads_and_parses() {
        let bits = parse_bit_string("1111000010101").unwrap();
        let line = hex_line("x", &bits);
        assert_eq!(line, "x f0a8");
        let (label, bytes) = parse_hex_line(&line).unwrap();
        assert_eq!(label, "x");
        assert_eq!(bits_from_hex(&bytes, 13), bits);
        assert!(parse_hex_line("nolabel").is_err());
        assert!(parse_hex_line("x zz").is_err());
    }
}
