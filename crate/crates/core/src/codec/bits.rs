//! MSB-first bit streams.
//!
//! Code words are packed starting at the most significant bit of byte zero,
//! so the concatenated stream reads left to right exactly as the codes are
//! written on paper. Only the final byte may carry padding bits, and they
//! are always zero.

use alloc::vec::Vec;

// ── Writer ──────────────────────────────────────────────────────────────────

/// Append-only bit sink; bits land MSB-first within each byte.
#[derive(Debug, Default)]
pub struct BitWriter {
    bytes: Vec<u8>,
    len: u64,
}

impl BitWriter {
    /// An empty stream.
    pub fn new() -> Self {
        Self::default()
    }

    /// Number of bits written so far.
    pub fn len(&self) -> u64 {
        self.len
    }

    /// True when nothing has been written.
    pub fn is_empty(&self) -> bool {
        self.len == 0
    }

    /// Appends the low `len` bits of `code`, most significant first.
    pub fn push(&mut self, code: u128, len: u8) {
        debug_assert!(len <= 128);
        for i in (0..len).rev() {
            let bit = ((code >> i) & 1) as u8;
            let offset = (self.len % 8) as u8;
            if offset == 0 {
                self.bytes.push(0);
            }
            if bit == 1 {
                *self.bytes.last_mut().unwrap() |= 0x80 >> offset;
            }
            self.len += 1;
        }
    }

    /// Consumes the writer, returning the packed bytes and the bit count.
    pub fn finish(self) -> (Vec<u8>, u64) {
        (self.bytes, self.len)
    }
}

// ── Reader ──────────────────────────────────────────────────────────────────

/// Random-access view over a packed MSB-first bit stream.
#[derive(Debug, Clone, Copy)]
pub struct BitReader<'a> {
    bytes: &'a [u8],
}

impl<'a> BitReader<'a> {
    /// Wraps a byte slice; bit addresses run from 0 at byte 0's MSB.
    pub fn new(bytes: &'a [u8]) -> Self {
        Self { bytes }
    }

    /// Total bits addressable in the underlying bytes.
    pub fn bit_len(&self) -> u64 {
        self.bytes.len() as u64 * 8
    }

    /// Reads the bit at absolute position `pos`, or `None` past the end.
    pub fn bit(&self, pos: u64) -> Option<u8> {
        let byte = self.bytes.get((pos / 8) as usize)?;
        Some((byte >> (7 - (pos % 8) as u8)) & 1)
    }
}

// ── Tests ───────────────────────────────────────────────────────────────────

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn single_bits_pack_msb_first() {
        let mut w = BitWriter::new();
        w.push(1, 1);
        w.push(0, 1);
        w.push(1, 1);
        let (bytes, len) = w.finish();
        assert_eq!(len, 3);
        assert_eq!(bytes, &[0b1010_0000]);
    }

    #[test]
    fn multi_bit_codes_keep_their_msb_order() {
        let mut w = BitWriter::new();
        w.push(0b110, 3);
        w.push(0b01, 2);
        w.push(0b1111_1111, 8);
        let (bytes, len) = w.finish();
        assert_eq!(len, 13);
        assert_eq!(bytes, &[0b1100_1111, 0b1111_1000]);
    }

    #[test]
    fn reader_returns_exactly_the_written_bits() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        for _ in 0..200 {
            let mut w = BitWriter::new();
            let mut expect = std::vec::Vec::new();
            for _ in 0..rng.gen_range(0..300) {
                let len = rng.gen_range(1..=120u8);
                let code: u128 = rng.gen::<u128>() & (u128::MAX >> (128 - len));
                for i in (0..len).rev() {
                    expect.push(((code >> i) & 1) as u8);
                }
                w.push(code, len);
            }
            let (bytes, len) = w.finish();
            assert_eq!(len, expect.len() as u64);
            assert_eq!(bytes.len(), expect.len().div_ceil(8));
            let r = BitReader::new(&bytes);
            for (pos, &bit) in expect.iter().enumerate() {
                assert_eq!(r.bit(pos as u64), Some(bit));
            }
            // Padding bits in the trailing byte stay zero.
            for pos in len..r.bit_len() {
                assert_eq!(r.bit(pos), Some(0));
            }
            assert_eq!(r.bit(r.bit_len()), None);
        }
    }

    #[test]
    fn zero_length_push_writes_nothing() {
        let mut w = BitWriter::new();
        w.push(0b1111, 0);
        assert!(w.is_empty());
        let (bytes, len) = w.finish();
        assert!(bytes.is_empty());
        assert_eq!(len, 0);
    }

    #[test]
    fn widest_supported_code_survives() {
        let code = u128::MAX >> 8; // 120 bits of ones
        let mut w = BitWriter::new();
        w.push(code, 120);
        let (bytes, len) = w.finish();
        assert_eq!(len, 120);
        let r = BitReader::new(&bytes);
        for pos in 0..120 {
            assert_eq!(r.bit(pos), Some(1));
        }
    }
}
