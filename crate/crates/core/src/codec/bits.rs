//! MSB-first bit strings and field packing helpers.

use bitvec::prelude::*;

use super::CodecError;

/// Bit string, most significant bit first.
pub type Bits = BitVec<u8, Msb0>;

/// Appends unsigned fields MSB-first.
#[derive(Debug, Default, Clone)]
pub struct BitWriter {
    bits: Bits,
}

impl BitWriter {
    pub fn new() -> Self {
        Self::default()
    }

    /// Append the low `width` bits of `value`; errors if it does not fit.
    pub fn put(&mut self, field: &'static str, value: u64, width: usize) -> Result<(), CodecError> {
        if width < 64 && value >> width != 0 {
            return Err(CodecError::FieldOverflow { field, value, width });
        }
        for i in (0..width).rev() {
            self.bits.push((value >> i) & 1 == 1);
        }
        Ok(())
    }

    pub fn put_bits(&mut self, bits: &BitSlice<u8, Msb0>) {
        self.bits.extend_from_bitslice(bits);
    }

    pub fn len(&self) -> usize {
        self.bits.len()
    }

    pub fn is_empty(&self) -> bool {
        self.bits.is_empty()
    }

    pub fn finish(self) -> Bits {
        self.bits
    }
}

/// Reads unsigned fields MSB-first.
#[derive(Debug, Clone)]
pub struct BitReader<'a> {
    bits: &'a BitSlice<u8, Msb0>,
    pos: usize,
}

impl<'a> BitReader<'a> {
    pub fn new(bits: &'a BitSlice<u8, Msb0>) -> Self {
        Self { bits, pos: 0 }
    }

    pub fn take(&mut self, width: usize) -> Result<u64, CodecError> {
        if self.pos + width > self.bits.len() {
            return Err(CodecError::Truncated { needed: self.pos + width, available: self.bits.len() });
        }
        let v = self.bits[self.pos..self.pos + width].iter().fold(0u64, |acc, b| (acc << 1) | u64::from(*b));
        self.pos += width;
        Ok(v)
    }

    pub fn remaining(&self) -> usize {
        self.bits.len() - self.pos
    }

    pub fn rest(&self) -> &'a BitSlice<u8, Msb0> {
        &self.bits[self.pos..]
    }
}

pub fn from_bytes(bytes: &[u8]) -> Bits {
    Bits::from_slice(bytes)
}

/// Pack into bytes, zero-padding the last byte at the low end.
pub fn to_bytes(bits: &BitSlice<u8, Msb0>) -> Vec<u8> {
    let mut v: Bits = bits.to_bitvec();
    v.set_uninitialized(false);
    v.into_vec()
}

/// Parse a string of `0`/`1` characters.
pub fn parse_bit_string(s: &str) -> Option<Bits> {
    s.chars()
        .map(|c| match c {
            '0' => Some(false),
            '1' => Some(true),
            _ => None,
        })
        .collect()
}

pub fn to_bit_string(bits: &BitSlice<u8, Msb0>) -> String {
    bits.iter().map(|b| if *b { '1' } else { '0' }).collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn writer_reader_round_trip() {
        let mut w = BitWriter::new();
        w.put("a", 0b101, 3).unwrap();
        w.put("b", 0xABCD, 16).unwrap();
        w.put("c", 0, 1).unwrap();
        let bits = w.finish();
        assert_eq!(bits.len(), 20);
        let mut r = BitReader::new(&bits);
        assert_eq!(r.take(3).unwrap(), 0b101);
        assert_eq!(r.take(16).unwrap(), 0xABCD);
        assert_eq!(r.take(1).unwrap(), 0);
        assert!(r.take(1).is_err());
    }

    #[test]
    fn overflow_rejected() {
        let mut w = BitWriter::new();
        assert!(matches!(w.put("tpc", 4, 2), Err(CodecError::FieldOverflow { .. })));
    }

    #[test]
    fn bytes_are_zero_padded() {
        let bits = parse_bit_string("1011").unwrap();
        assert_eq!(to_bytes(&bits), vec![0b1011_0000]);
        assert_eq!(to_bit_string(&from_bytes(&[0x81])), "10000001");
    }
}
