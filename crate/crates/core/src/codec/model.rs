//! The `.cdni` container: a flat little-endian encoding of layer stacks.
//!
//! Layout: magic `CDNI`, format version (u16), layer count (u32), then each
//! layer as geometry (rows, cols, bh, bw: u32), k and r (u8), codebook
//! (count u16 + f32 centers), both Huffman tables (symbol count u16, then
//! id u16 + length u8 per symbol), `storage_rows + 1` row-pointer tuples
//! (two u64 bit offsets), the two byte-aligned streams, and a bias flag
//! byte followed by `rows` f32 values when set. Stream byte lengths are
//! derived from the final row-pointer tuple rather than stored.

use alloc::vec::Vec;

use super::huffman::HuffmanTable;
use super::layer::EncodedLayer;
use super::quant::Codebook;
use super::CodecError;

/// First four bytes of every serialized model.
pub const MAGIC: [u8; 4] = *b"CDNI";
/// The single format version this build reads and writes.
pub const FORMAT_VERSION: u16 = 1;

/// An ordered stack of compressed layers.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct CompressedModel {
    pub layers: Vec<EncodedLayer>,
}

// ── Writing ─────────────────────────────────────────────────────────────────

/// Encodes a model to bytes; `deserialize` inverts this bit-for-bit.
pub fn serialize(model: &CompressedModel) -> Vec<u8> {
    let mut out = Vec::new();
    out.extend_from_slice(&MAGIC);
    out.extend_from_slice(&FORMAT_VERSION.to_le_bytes());
    out.extend_from_slice(&(model.layers.len() as u32).to_le_bytes());
    for layer in &model.layers {
        out.extend_from_slice(&layer.rows.to_le_bytes());
        out.extend_from_slice(&layer.cols.to_le_bytes());
        out.extend_from_slice(&layer.block_h.to_le_bytes());
        out.extend_from_slice(&layer.block_w.to_le_bytes());
        out.push(layer.index_bits);
        out.push(layer.codebook.quant_bits);
        out.extend_from_slice(&(layer.codebook.centers.len() as u16).to_le_bytes());
        for &c in &layer.codebook.centers {
            out.extend_from_slice(&c.to_le_bytes());
        }
        write_table(&mut out, &layer.val_table);
        write_table(&mut out, &layer.col_table);
        for &(v, c) in &layer.row_ptr {
            out.extend_from_slice(&v.to_le_bytes());
            out.extend_from_slice(&c.to_le_bytes());
        }
        out.extend_from_slice(&layer.val_stream);
        out.extend_from_slice(&layer.col_stream);
        match &layer.bias {
            Some(bias) => {
                out.push(1);
                for &b in bias {
                    out.extend_from_slice(&b.to_le_bytes());
                }
            }
            None => out.push(0),
        }
    }
    out
}

fn write_table(out: &mut Vec<u8>, table: &HuffmanTable) {
    out.extend_from_slice(&(table.len() as u16).to_le_bytes());
    for (sym, len) in table.symbol_lengths() {
        out.extend_from_slice(&sym.to_le_bytes());
        out.push(len);
    }
}

// ── Reading ─────────────────────────────────────────────────────────────────

struct Cursor<'a> {
    bytes: &'a [u8],
    pos: usize,
}

impl<'a> Cursor<'a> {
    fn take(&mut self, n: usize) -> Result<&'a [u8], CodecError> {
        let end = self.pos.checked_add(n).ok_or(CodecError::Truncated)?;
        if end > self.bytes.len() {
            return Err(CodecError::Truncated);
        }
        let s = &self.bytes[self.pos..end];
        self.pos = end;
        Ok(s)
    }

    fn u8(&mut self) -> Result<u8, CodecError> {
        Ok(self.take(1)?[0])
    }

    fn u16(&mut self) -> Result<u16, CodecError> {
        Ok(u16::from_le_bytes(self.take(2)?.try_into().unwrap()))
    }

    fn u32(&mut self) -> Result<u32, CodecError> {
        Ok(u32::from_le_bytes(self.take(4)?.try_into().unwrap()))
    }

    fn u64(&mut self) -> Result<u64, CodecError> {
        Ok(u64::from_le_bytes(self.take(8)?.try_into().unwrap()))
    }

    fn f32(&mut self) -> Result<f32, CodecError> {
        Ok(f32::from_le_bytes(self.take(4)?.try_into().unwrap()))
    }

    fn remaining(&self) -> usize {
        self.bytes.len() - self.pos
    }
}

/// Decodes bytes produced by `serialize`, validating every layer.
pub fn deserialize(bytes: &[u8]) -> Result<CompressedModel, CodecError> {
    let mut cur = Cursor { bytes, pos: 0 };
    if cur.take(4)? != MAGIC {
        return Err(CodecError::BadMagic);
    }
    let version = cur.u16()?;
    if version != FORMAT_VERSION {
        return Err(CodecError::UnsupportedVersion(version));
    }
    let layer_count = cur.u32()? as usize;
    let mut layers = Vec::new();
    for _ in 0..layer_count {
        let layer = read_layer(&mut cur)?;
        layer.validate()?;
        layers.push(layer);
    }
    if cur.remaining() != 0 {
        return Err(CodecError::MalformedStream(
            "trailing bytes after the last layer".into(),
        ));
    }
    Ok(CompressedModel { layers })
}

fn read_layer(cur: &mut Cursor<'_>) -> Result<EncodedLayer, CodecError> {
    let rows = cur.u32()?;
    let cols = cur.u32()?;
    let block_h = cur.u32()?;
    let block_w = cur.u32()?;
    let index_bits = cur.u8()?;
    let quant_bits = cur.u8()?;
    if rows == 0 || cols == 0 || block_h == 0 || block_w == 0 {
        return Err(CodecError::MalformedStream(
            "layer geometry has a zero side".into(),
        ));
    }

    let center_count = cur.u16()? as usize;
    let mut centers = Vec::with_capacity(center_count);
    for _ in 0..center_count {
        centers.push(cur.f32()?);
    }
    let zero_index = centers
        .iter()
        .position(|&c| c == 0.0)
        .ok_or_else(|| CodecError::MalformedStream("codebook lacks a zero center".into()))?;
    let codebook = Codebook {
        quant_bits,
        centers,
        zero_index,
    };

    let val_table = read_table(cur)?;
    let col_table = read_table(cur)?;

    let grid_h = (rows as u64).div_ceil(block_h as u64);
    let grid_w = (cols as u64).div_ceil(block_w as u64);
    let storage_rows = grid_h
        .checked_mul(grid_w)
        .filter(|&n| n < usize::MAX as u64)
        .ok_or_else(|| CodecError::MalformedStream("storage row count overflows".into()))?
        as usize;
    let tuple_bytes = (storage_rows + 1)
        .checked_mul(16)
        .ok_or(CodecError::Truncated)?;
    if tuple_bytes > cur.remaining() {
        return Err(CodecError::Truncated);
    }
    let mut row_ptr = Vec::with_capacity(storage_rows + 1);
    for _ in 0..=storage_rows {
        let v = cur.u64()?;
        let c = cur.u64()?;
        row_ptr.push((v, c));
    }

    let (val_bits, col_bits) = *row_ptr.last().unwrap();
    let val_stream = cur.take(usize::try_from(val_bits.div_ceil(8)).map_err(|_| CodecError::Truncated)?)?.to_vec();
    let col_stream = cur.take(usize::try_from(col_bits.div_ceil(8)).map_err(|_| CodecError::Truncated)?)?.to_vec();

    let bias = match cur.u8()? {
        0 => None,
        1 => {
            let mut b = Vec::with_capacity(rows as usize);
            for _ in 0..rows {
                b.push(cur.f32()?);
            }
            Some(b)
        }
        flag => {
            return Err(CodecError::MalformedStream(alloc::format!(
                "bias flag must be 0 or 1, got {flag}"
            )))
        }
    };

    Ok(EncodedLayer {
        rows,
        cols,
        block_h,
        block_w,
        index_bits,
        codebook,
        val_table,
        col_table,
        row_ptr,
        val_stream,
        col_stream,
        bias,
    })
}

fn read_table(cur: &mut Cursor<'_>) -> Result<HuffmanTable, CodecError> {
    let count = cur.u16()? as usize;
    let mut pairs = Vec::with_capacity(count);
    for _ in 0..count {
        let sym = cur.u16()?;
        let len = cur.u8()?;
        pairs.push((sym, len));
    }
    HuffmanTable::from_lengths(&pairs)
}

// ── Tests ───────────────────────────────────────────────────────────────────

#[cfg(test)]
mod tests {
    use super::*;
    use crate::codec::{compress_layer, CompressionConfig, DenseMatrix};
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn random_model(rng: &mut ChaCha8Rng, layers: usize) -> CompressedModel {
        let mut model = CompressedModel::default();
        for _ in 0..layers {
            let rows = rng.gen_range(1..=24usize);
            let cols = rng.gen_range(1..=24usize);
            let data: alloc::vec::Vec<f32> = (0..rows * cols)
                .map(|_| {
                    if rng.gen_bool(0.4) {
                        rng.gen_range(-1.0f32..1.0)
                    } else {
                        0.0
                    }
                })
                .collect();
            let mut m = DenseMatrix::from_vec(rows, cols, data).unwrap();
            if rng.gen_bool(0.5) {
                m = m
                    .with_bias((0..rows).map(|_| rng.gen_range(-1.0f32..1.0)).collect())
                    .unwrap();
            }
            let config = CompressionConfig {
                prune_threshold: rng.gen_range(0.0..0.2),
                quant_bits: rng.gen_range(1..=8),
                index_bits: rng.gen_range(1..=8),
                block_h: rng.gen_range(1..=5),
                block_w: rng.gen_range(1..=5),
            };
            model.layers.push(compress_layer(&m, &config).unwrap());
        }
        model
    }

    #[test]
    fn empty_model_is_header_only_and_roundtrips() {
        let bytes = serialize(&CompressedModel::default());
        assert_eq!(bytes.len(), 4 + 2 + 4);
        assert_eq!(deserialize(&bytes).unwrap(), CompressedModel::default());
    }

    #[test]
    fn generated_models_roundtrip_bit_for_bit() {
        let mut rng = ChaCha8Rng::seed_from_u64(97);
        for _ in 0..40 {
            let layer_count = rng.gen_range(1..=4);
            let model = random_model(&mut rng, layer_count);
            let bytes = serialize(&model);
            let back = deserialize(&bytes).unwrap();
            assert_eq!(back, model);
            // Bit-for-bit: re-serializing reproduces the same bytes.
            assert_eq!(serialize(&back), bytes);
        }
    }

    #[test]
    fn every_proper_prefix_reports_truncation() {
        let mut rng = ChaCha8Rng::seed_from_u64(101);
        let bytes = serialize(&random_model(&mut rng, 2));
        for len in 0..bytes.len() {
            let err = deserialize(&bytes[..len]).unwrap_err();
            assert_eq!(err, CodecError::Truncated, "prefix {len}");
        }
    }

    #[test]
    fn foreign_magic_and_future_versions_are_rejected() {
        let mut bytes = serialize(&CompressedModel::default());
        let mut bad = bytes.clone();
        bad[0] = b'X';
        assert_eq!(deserialize(&bad), Err(CodecError::BadMagic));
        bytes[4] = 9;
        assert_eq!(deserialize(&bytes), Err(CodecError::UnsupportedVersion(9)));
    }

    #[test]
    fn trailing_garbage_is_a_malformed_stream() {
        let mut bytes = serialize(&CompressedModel::default());
        bytes.push(0);
        assert!(matches!(
            deserialize(&bytes),
            Err(CodecError::MalformedStream(_))
        ));
    }

    #[test]
    fn corrupted_codebook_bytes_fail_validation() {
        let mut rng = ChaCha8Rng::seed_from_u64(103);
        let model = random_model(&mut rng, 1);
        let bytes = serialize(&model);
        // The codebook's zero center sits right after the 20-byte geometry
        // header and the 2-byte count; overwrite it with a nonzero value.
        let mut bad = bytes.clone();
        let center0 = 4 + 2 + 4 + 16 + 2 + 2;
        bad[center0..center0 + 4].copy_from_slice(&1.5f32.to_le_bytes());
        assert!(matches!(
            deserialize(&bad),
            Err(CodecError::MalformedStream(_))
        ));
    }
}
