//! End-to-end layer compression: reorder, prune, quantize, gap-code, pack.
//!
//! An `EncodedLayer` is self-contained: geometry, codebook, both canonical
//! Huffman tables, the two bitstreams, and a row-pointer array of bit-offset
//! 2-tuples marking where each storage row starts in each stream. Decoding
//! any storage row touches exactly the bit range between two consecutive
//! tuples.

use alloc::collections::BTreeMap;
use alloc::format;
use alloc::vec::Vec;

use super::bits::{BitReader, BitWriter};
use super::csr::prune;
use super::dense::DenseMatrix;
use super::huffman::HuffmanTable;
use super::quant::{quantize, Codebook};
use super::relative::emit_row_relative;
use super::CodecError;

// ── Configuration ───────────────────────────────────────────────────────────

/// Per-layer compression knobs.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CompressionConfig {
    /// Magnitude threshold; entries with `|w| <= prune_threshold` drop.
    pub prune_threshold: f32,
    /// Codebook bits r: at most `2^r − 1` nonzero centers plus zero.
    pub quant_bits: u8,
    /// Gap bits k: relative column indices live in `[0, 2^k − 1]`.
    pub index_bits: u8,
    /// Block height; 1 for unblocked layers.
    pub block_h: usize,
    /// Block width; the full column count for unblocked layers.
    pub block_w: usize,
}

impl CompressionConfig {
    /// Checks every knob is in range.
    pub fn validate(&self) -> Result<(), CodecError> {
        if !self.prune_threshold.is_finite() || self.prune_threshold < 0.0 {
            return Err(CodecError::InvalidConfig(
                "prune_threshold must be finite and >= 0".into(),
            ));
        }
        if self.quant_bits < 1 || self.quant_bits > 15 {
            return Err(CodecError::InvalidConfig(
                "quant_bits must be in 1..=15".into(),
            ));
        }
        if self.index_bits < 1 || self.index_bits > 15 {
            return Err(CodecError::InvalidConfig(
                "index_bits must be in 1..=15".into(),
            ));
        }
        if self.block_h == 0 || self.block_w == 0 {
            return Err(CodecError::InvalidConfig("block dims must be nonzero".into()));
        }
        Ok(())
    }
}

// ── Encoded layer ───────────────────────────────────────────────────────────

/// A fully compressed weight matrix plus its optional bias.
#[derive(Debug, Clone, PartialEq)]
pub struct EncodedLayer {
    /// Logical row count of the weight matrix.
    pub rows: u32,
    /// Logical column count of the weight matrix.
    pub cols: u32,
    /// Block height the storage layout was built with.
    pub block_h: u32,
    /// Block width the storage layout was built with.
    pub block_w: u32,
    /// Gap bits k.
    pub index_bits: u8,
    /// Quantization codebook (carries its own bit width r).
    pub codebook: Codebook,
    /// Code for the value-index token stream.
    pub val_table: HuffmanTable,
    /// Code for the column-gap token stream.
    pub col_table: HuffmanTable,
    /// Per storage row: (val bit offset, col bit offset); length
    /// `storage_rows + 1`, last entry = total stream bit lengths.
    pub row_ptr: Vec<(u64, u64)>,
    /// Packed value-index stream, byte-aligned only at the end.
    pub val_stream: Vec<u8>,
    /// Packed column-gap stream, byte-aligned only at the end.
    pub col_stream: Vec<u8>,
    /// Optional bias, one entry per logical row.
    pub bias: Option<Vec<f32>>,
}

impl EncodedLayer {
    /// Row count after zero-padding up to a block multiple.
    pub fn padded_rows(&self) -> usize {
        (self.rows as usize).div_ceil(self.block_h as usize) * self.block_h as usize
    }

    /// Column count after zero-padding up to a block multiple.
    pub fn padded_cols(&self) -> usize {
        (self.cols as usize).div_ceil(self.block_w as usize) * self.block_w as usize
    }

    /// Blocks per grid column.
    pub fn grid_h(&self) -> usize {
        self.padded_rows() / self.block_h as usize
    }

    /// Blocks per grid row.
    pub fn grid_w(&self) -> usize {
        self.padded_cols() / self.block_w as usize
    }

    /// Rows in the block-contiguous storage layout, one per block.
    pub fn storage_rows(&self) -> usize {
        self.grid_h() * self.grid_w()
    }

    /// Entries per storage row.
    pub fn storage_cols(&self) -> usize {
        self.block_h as usize * self.block_w as usize
    }

    /// Checks structural invariants; decoding errors are caught separately.
    pub fn validate(&self) -> Result<(), CodecError> {
        if self.rows == 0 || self.cols == 0 {
            return Err(CodecError::MalformedStream(
                "layer geometry has a zero side".into(),
            ));
        }
        if self.block_h == 0 || self.block_w == 0 {
            return Err(CodecError::MalformedStream("block dims must be nonzero".into()));
        }
        if self.index_bits < 1 || self.index_bits > 15 {
            return Err(CodecError::MalformedStream(
                "index_bits must be in 1..=15".into(),
            ));
        }
        self.codebook.validate()?;
        if self.row_ptr.len() != self.storage_rows() + 1 {
            return Err(CodecError::MalformedStream(format!(
                "row_ptr length {} does not match {} storage rows",
                self.row_ptr.len(),
                self.storage_rows()
            )));
        }
        if self.row_ptr[0] != (0, 0) {
            return Err(CodecError::MalformedStream(
                "row_ptr must start at bit offset (0, 0)".into(),
            ));
        }
        if self
            .row_ptr
            .windows(2)
            .any(|w| w[0].0 > w[1].0 || w[0].1 > w[1].1)
        {
            return Err(CodecError::MalformedStream(
                "row_ptr offsets must be nondecreasing".into(),
            ));
        }
        let (val_bits, col_bits) = *self.row_ptr.last().unwrap();
        if self.val_stream.len() as u64 != val_bits.div_ceil(8)
            || self.col_stream.len() as u64 != col_bits.div_ceil(8)
        {
            return Err(CodecError::MalformedStream(
                "stream byte length does not match final row_ptr offsets".into(),
            ));
        }
        if let Some(bias) = &self.bias {
            if bias.len() != self.rows as usize {
                return Err(CodecError::MalformedStream(
                    "bias length does not match row count".into(),
                ));
            }
            if bias.iter().any(|v| !v.is_finite()) {
                return Err(CodecError::MalformedStream("bias must be finite".into()));
            }
        }
        Ok(())
    }
}

// ── Compression ─────────────────────────────────────────────────────────────

/// Runs the full pipeline on one dense weight matrix.
pub fn compress_layer(
    dense: &DenseMatrix,
    config: &CompressionConfig,
) -> Result<EncodedLayer, CodecError> {
    config.validate()?;
    if dense.rows() == 0 || dense.cols() == 0 {
        return Err(CodecError::Empty);
    }
    if dense.rows() > u32::MAX as usize || dense.cols() > u32::MAX as usize {
        return Err(CodecError::InvalidInput("matrix sides must fit in u32".into()));
    }

    let storage = dense.block_reorder(config.block_h, config.block_w)?;
    let csr = prune(&storage, config.prune_threshold);
    let (codebook, qidx) = quantize(csr.val(), config.quant_bits)?;

    // Token streams per storage row: a padding entry contributes the zero
    // center's index and the saturated gap; a real entry contributes its
    // quantized index and its gap.
    let storage_rows = csr.rows();
    let max_gap = (1u16 << config.index_bits) - 1;
    let mut val_tokens: Vec<u16> = Vec::with_capacity(csr.nnz());
    let mut col_tokens: Vec<u16> = Vec::with_capacity(csr.nnz());
    let mut row_counts: Vec<usize> = Vec::with_capacity(storage_rows);
    for r in 0..storage_rows {
        let (cols, _) = csr.row(r);
        let base = csr.row_ptr()[r];
        let before = val_tokens.len();
        emit_row_relative(cols, config.index_bits, |gap, source| {
            col_tokens.push(gap);
            val_tokens.push(match source {
                Some(j) => qidx[base + j],
                None => codebook.zero_index as u16,
            });
        });
        debug_assert!(col_tokens[before..].iter().all(|&g| g <= max_gap));
        row_counts.push(val_tokens.len() - before);
    }

    let val_table = build_table(&val_tokens)?;
    let col_table = build_table(&col_tokens)?;

    let mut val_writer = BitWriter::new();
    let mut col_writer = BitWriter::new();
    let mut row_ptr = Vec::with_capacity(storage_rows + 1);
    row_ptr.push((0u64, 0u64));
    let mut cursor = 0usize;
    for &count in &row_counts {
        for i in cursor..cursor + count {
            let (code, len) = val_table.encode_symbol(val_tokens[i]).unwrap();
            val_writer.push(code, len);
            let (code, len) = col_table.encode_symbol(col_tokens[i]).unwrap();
            col_writer.push(code, len);
        }
        cursor += count;
        row_ptr.push((val_writer.len(), col_writer.len()));
    }
    let (val_stream, _) = val_writer.finish();
    let (col_stream, _) = col_writer.finish();

    let layer = EncodedLayer {
        rows: dense.rows() as u32,
        cols: dense.cols() as u32,
        block_h: config.block_h as u32,
        block_w: config.block_w as u32,
        index_bits: config.index_bits,
        codebook,
        val_table,
        col_table,
        row_ptr,
        val_stream,
        col_stream,
        bias: dense.bias().map(|b| b.to_vec()),
    };
    debug_assert!(layer.validate().is_ok());
    Ok(layer)
}

/// Frequency-counts a token stream and builds its code; empty streams get
/// the empty table.
fn build_table(tokens: &[u16]) -> Result<HuffmanTable, CodecError> {
    if tokens.is_empty() {
        return Ok(HuffmanTable::empty());
    }
    let mut freqs: BTreeMap<u16, u64> = BTreeMap::new();
    for &t in tokens {
        *freqs.entry(t).or_insert(0) += 1;
    }
    let pairs: Vec<(u16, u64)> = freqs.into_iter().collect();
    HuffmanTable::build(&pairs)
}

// ── Decompression ───────────────────────────────────────────────────────────

/// Inverts the pipeline: the result is the pruned, quantized matrix with
/// block padding stripped and the bias reattached.
pub fn decompress_layer(layer: &EncodedLayer) -> Result<DenseMatrix, CodecError> {
    layer.validate()?;
    let storage_cols = layer.storage_cols();
    let mut storage = DenseMatrix::zeros(layer.storage_rows(), storage_cols);
    let val_reader = BitReader::new(&layer.val_stream);
    let col_reader = BitReader::new(&layer.col_stream);

    for r in 0..layer.storage_rows() {
        let (val_lo, col_lo) = layer.row_ptr[r];
        let (val_hi, col_hi) = layer.row_ptr[r + 1];
        let mut val_pos = val_lo;
        let mut col_pos = col_lo;
        let mut prev: i64 = -1;
        loop {
            if val_pos == val_hi && col_pos == col_hi {
                break;
            }
            if val_pos >= val_hi || col_pos >= col_hi {
                return Err(CodecError::MalformedStream(format!(
                    "val/col token counts disagree in storage row {r}"
                )));
            }
            let (val_sym, next_val) = layer.val_table.decode(&val_reader, val_pos)?;
            let (col_sym, next_col) = layer.col_table.decode(&col_reader, col_pos)?;
            if next_val > val_hi || next_col > col_hi {
                return Err(CodecError::MalformedStream(format!(
                    "code crosses the row boundary in storage row {r}"
                )));
            }
            val_pos = next_val;
            col_pos = next_col;
            let center = *layer
                .codebook
                .centers
                .get(val_sym as usize)
                .ok_or_else(|| {
                    CodecError::MalformedStream(format!(
                        "value token {val_sym} outside the codebook"
                    ))
                })?;
            let c = prev + col_sym as i64 + 1;
            if c >= storage_cols as i64 {
                return Err(CodecError::MalformedStream(format!(
                    "decoded column {c} exceeds storage row width {storage_cols}"
                )));
            }
            if center != 0.0 {
                storage.set(r, c as usize, center);
            }
            prev = c;
        }
    }

    let mut out = storage.block_restore(
        layer.block_h as usize,
        layer.block_w as usize,
        layer.rows as usize,
        layer.cols as usize,
    )?;
    if let Some(bias) = &layer.bias {
        out = out.with_bias(bias.clone())?;
    }
    Ok(out)
}

// ── Tests ───────────────────────────────────────────────────────────────────

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn config(t: f32, r: u8, k: u8, bh: usize, bw: usize) -> CompressionConfig {
        CompressionConfig {
            prune_threshold: t,
            quant_bits: r,
            index_bits: k,
            block_h: bh,
            block_w: bw,
        }
    }

    /// Reference pipeline: prune and quantize in row-major order, skipping
    /// the storage layout and bitstreams entirely.
    fn prune_quantize_oracle(m: &DenseMatrix, t: f32, r: u8) -> DenseMatrix {
        let mut kept: alloc::vec::Vec<f32> = alloc::vec::Vec::new();
        for &w in m.data() {
            if w.abs() > t {
                kept.push(w);
            }
        }
        let (cb, _) = quantize(&kept, r).unwrap();
        let mut out = DenseMatrix::zeros(m.rows(), m.cols());
        for row in 0..m.rows() {
            for col in 0..m.cols() {
                let w = m.get(row, col);
                if w.abs() > t {
                    out.set(row, col, cb.centers[cb.nearest_index(w)]);
                }
            }
        }
        out
    }

    fn random_matrix(rng: &mut ChaCha8Rng, rows: usize, cols: usize, density: f64) -> DenseMatrix {
        let data: alloc::vec::Vec<f32> = (0..rows * cols)
            .map(|_| {
                if rng.gen_bool(density) {
                    rng.gen_range(-1.0f32..1.0)
                } else {
                    0.0
                }
            })
            .collect();
        DenseMatrix::from_vec(rows, cols, data).unwrap()
    }

    #[test]
    fn worked_two_bit_row_roundtrips_and_packs_the_expected_bits() {
        let mut m = DenseMatrix::zeros(1, 12);
        m.set(0, 0, 0.5);
        m.set(0, 5, -0.3);
        m.set(0, 11, 0.9);
        let enc = compress_layer(&m, &config(0.0, 2, 2, 1, 12)).unwrap();
        // Tokens: col gaps [0,3,0,3,1]; val indices [c(0.5), 0, c(-0.3), 0, c(0.9)].
        // Stream lengths must equal Σ freq·len over each table.
        let col_bits: u64 = [(0u16, 2u64), (3, 2), (1, 1)]
            .iter()
            .map(|&(s, f)| f * enc.col_table.encode_symbol(s).unwrap().1 as u64)
            .sum();
        let zero = enc.codebook.zero_index as u16;
        let iv = |v: f32| enc.codebook.nearest_index(v) as u16;
        let val_bits: u64 = [(zero, 2u64), (iv(0.5), 1), (iv(-0.3), 1), (iv(0.9), 1)]
            .iter()
            .map(|&(s, f)| f * enc.val_table.encode_symbol(s).unwrap().1 as u64)
            .sum();
        assert_eq!(enc.row_ptr, &[(0, 0), (val_bits, col_bits)]);
        let back = decompress_layer(&enc).unwrap();
        // r=2 leaves room for all three values, so the roundtrip is exact.
        assert_eq!(back, m);
    }

    #[test]
    fn evenly_spaced_values_with_zero_threshold_roundtrip_exactly() {
        let mut rng = ChaCha8Rng::seed_from_u64(67);
        let vals = [-3.0f32, -2.0, -1.0, 1.0, 2.0, 3.0];
        let data: alloc::vec::Vec<f32> = (0..20 * 30)
            .map(|_| {
                if rng.gen_bool(0.3) {
                    vals[rng.gen_range(0..vals.len())]
                } else {
                    0.0
                }
            })
            .collect();
        let m = DenseMatrix::from_vec(20, 30, data).unwrap();
        for (bh, bw) in [(1, 30), (4, 4), (8, 16)] {
            let enc = compress_layer(&m, &config(0.0, 3, 4, bh, bw)).unwrap();
            assert_eq!(decompress_layer(&enc).unwrap(), m);
        }
    }

    #[test]
    fn sparse_random_matrix_matches_the_prune_quantize_oracle() {
        let mut rng = ChaCha8Rng::seed_from_u64(71);
        let m = random_matrix(&mut rng, 64, 64, 0.1);
        let enc = compress_layer(&m, &config(0.05, 5, 4, 1, 64)).unwrap();
        let got = decompress_layer(&enc).unwrap();
        let want = prune_quantize_oracle(&m, 0.05, 5);
        assert_eq!(got.data(), want.data());
    }

    #[test]
    fn blocked_layouts_agree_with_the_row_major_oracle() {
        let mut rng = ChaCha8Rng::seed_from_u64(73);
        for _ in 0..60 {
            let rows = rng.gen_range(1..=50usize);
            let cols = rng.gen_range(1..=50usize);
            let density = rng.gen_range(0.05..0.9);
            let m = random_matrix(&mut rng, rows, cols, density);
            let t = rng.gen_range(0.0..0.3f32);
            let r = [1u8, 2, 4, 5, 8][rng.gen_range(0..5)];
            let k = [2u8, 4, 5, 8][rng.gen_range(0..4)];
            let (bh, bw) = if rng.gen_bool(0.5) {
                (1, cols)
            } else {
                (rng.gen_range(1..=8), rng.gen_range(1..=8))
            };
            let enc = compress_layer(&m, &config(t, r, k, bh, bw)).unwrap();
            let got = decompress_layer(&enc).unwrap();
            let want = prune_quantize_oracle(&m, t, r);
            assert_eq!(got.data(), want.data(), "rows={rows} cols={cols} r={r} k={k} bh={bh} bw={bw}");
        }
    }

    #[test]
    fn fully_pruned_layer_has_empty_tables_and_decodes_to_zeros() {
        let m = random_matrix(&mut ChaCha8Rng::seed_from_u64(79), 6, 9, 0.5);
        let enc = compress_layer(&m, &config(10.0, 4, 4, 2, 3)).unwrap();
        assert!(enc.val_table.is_empty());
        assert!(enc.col_table.is_empty());
        assert!(enc.val_stream.is_empty());
        assert!(enc.row_ptr.iter().all(|&p| p == (0, 0)));
        assert_eq!(decompress_layer(&enc).unwrap(), DenseMatrix::zeros(6, 9));
    }

    #[test]
    fn bias_rides_along_unchanged() {
        let m = random_matrix(&mut ChaCha8Rng::seed_from_u64(83), 5, 7, 0.4)
            .with_bias(alloc::vec![1.0, -2.0, 0.5, 0.0, 3.0])
            .unwrap();
        let enc = compress_layer(&m, &config(0.01, 4, 4, 2, 2)).unwrap();
        let back = decompress_layer(&enc).unwrap();
        assert_eq!(back.bias(), Some(&[1.0f32, -2.0, 0.5, 0.0, 3.0][..]));
    }

    #[test]
    fn invalid_configs_and_empty_matrices_are_rejected() {
        let m = DenseMatrix::zeros(2, 2);
        assert!(compress_layer(&m, &config(-0.1, 4, 4, 1, 2)).is_err());
        assert!(compress_layer(&m, &config(f32::NAN, 4, 4, 1, 2)).is_err());
        assert!(compress_layer(&m, &config(0.0, 0, 4, 1, 2)).is_err());
        assert!(compress_layer(&m, &config(0.0, 4, 0, 1, 2)).is_err());
        assert!(compress_layer(&m, &config(0.0, 4, 16, 1, 2)).is_err());
        assert!(compress_layer(&m, &config(0.0, 4, 4, 0, 2)).is_err());
        assert_eq!(
            compress_layer(&DenseMatrix::zeros(0, 4), &config(0.0, 4, 4, 1, 4)),
            Err(CodecError::Empty)
        );
    }

    #[test]
    fn corrupted_streams_surface_as_malformed_errors() {
        let m = random_matrix(&mut ChaCha8Rng::seed_from_u64(89), 8, 8, 0.5);
        let good = compress_layer(&m, &config(0.0, 4, 2, 4, 4)).unwrap();

        // Offsets that stop mid-code.
        let mut bad = good.clone();
        if bad.row_ptr[1].0 > 0 {
            bad.row_ptr[1].0 -= 1;
            assert!(decompress_layer(&bad).is_err());
        }

        // A codebook whose zero slot went missing.
        let mut bad = good.clone();
        bad.codebook.centers[0] = 0.25;
        assert!(matches!(
            decompress_layer(&bad),
            Err(CodecError::MalformedStream(_))
        ));

        // Stream bytes trimmed below what row_ptr promises.
        let mut bad = good.clone();
        bad.val_stream.pop();
        assert!(matches!(
            decompress_layer(&bad),
            Err(CodecError::MalformedStream(_))
        ));
    }
}
