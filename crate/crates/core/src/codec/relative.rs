//! k-bit relative column indexing.
//!
//! Instead of absolute columns, each entry stores the zero gap `g`: the
//! number of zero columns between it and the previous stored entry (the
//! first entry of a row counts from the row start). Decoding is the scan
//! `c_j = c_{j−1} + g_j + 1` with `c_{−1} = −1`. A gap too wide for k bits
//! is bridged by padding entries — value exactly 0.0, gap `2^k − 1` — each
//! of which consumes `2^k` columns.

use alloc::format;
use alloc::vec;
use alloc::vec::Vec;

use super::csr::SparseCSR;
use super::CodecError;

/// CSR with gap-coded columns; includes the padding entries.
#[derive(Debug, Clone, PartialEq)]
pub struct RelativeIndexedCSR {
    rows: usize,
    cols: usize,
    index_bits: u8,
    row_ptr: Vec<usize>,
    rel_col: Vec<u16>,
    val: Vec<f32>,
}

impl RelativeIndexedCSR {
    /// Wraps pre-built streams, checking shape and gap width only.
    pub fn new(
        rows: usize,
        cols: usize,
        index_bits: u8,
        row_ptr: Vec<usize>,
        rel_col: Vec<u16>,
        val: Vec<f32>,
    ) -> Result<Self, CodecError> {
        if index_bits < 1 || index_bits > 15 {
            return Err(CodecError::InvalidConfig(
                "index_bits must be in 1..=15".into(),
            ));
        }
        if row_ptr.len() != rows + 1
            || row_ptr[0] != 0
            || row_ptr.windows(2).any(|w| w[0] > w[1])
            || *row_ptr.last().unwrap() != rel_col.len()
            || rel_col.len() != val.len()
        {
            return Err(CodecError::InvalidInput(
                "row_ptr/rel_col/val shapes are inconsistent".into(),
            ));
        }
        let max_gap = (1u16 << index_bits) - 1;
        if rel_col.iter().any(|&g| g > max_gap) {
            return Err(CodecError::InvalidInput(format!(
                "relative index exceeds {index_bits} bits"
            )));
        }
        Ok(Self {
            rows,
            cols,
            index_bits,
            row_ptr,
            rel_col,
            val,
        })
    }

    /// Row count.
    pub fn rows(&self) -> usize {
        self.rows
    }

    /// Column count.
    pub fn cols(&self) -> usize {
        self.cols
    }

    /// Bits per stored gap.
    pub fn index_bits(&self) -> u8 {
        self.index_bits
    }

    /// Entry-range boundaries, one past-the-end offset per row.
    pub fn row_ptr(&self) -> &[usize] {
        &self.row_ptr
    }

    /// Gap stream, padding entries included.
    pub fn rel_col(&self) -> &[u16] {
        &self.rel_col
    }

    /// Value stream, padding entries included (as exact 0.0).
    pub fn val(&self) -> &[f32] {
        &self.val
    }
}

/// Streams one CSR row as `(gap, source)` pairs, inserting padding.
///
/// `source` is `Some(j)` for the row's j-th real entry and `None` for a
/// padding entry. Padding advances the running position by `2^k` columns;
/// the loop repeats until the residual gap fits in `index_bits` bits.
pub(crate) fn emit_row_relative<F: FnMut(u16, Option<usize>)>(
    cols: &[u32],
    index_bits: u8,
    mut emit: F,
) {
    let max_gap = (1u32 << index_bits) - 1;
    let stride = 1i64 << index_bits;
    let mut prev: i64 = -1;
    for (j, &c) in cols.iter().enumerate() {
        let mut gap = c as i64 - prev - 1;
        while gap > max_gap as i64 {
            emit(max_gap as u16, None);
            prev += stride;
            gap = c as i64 - prev - 1;
        }
        emit(gap as u16, Some(j));
        prev = c as i64;
    }
}

/// Gap-codes a CSR, inserting padding entries where gaps overflow k bits.
pub fn encode_relative(csr: &SparseCSR, index_bits: u8) -> Result<RelativeIndexedCSR, CodecError> {
    if index_bits < 1 || index_bits > 15 {
        return Err(CodecError::InvalidConfig(
            "index_bits must be in 1..=15".into(),
        ));
    }
    let mut row_ptr = vec![0usize; csr.rows() + 1];
    let mut rel_col = Vec::with_capacity(csr.nnz());
    let mut val = Vec::with_capacity(csr.nnz());
    for r in 0..csr.rows() {
        let (cols, vals) = csr.row(r);
        emit_row_relative(cols, index_bits, |gap, source| {
            rel_col.push(gap);
            val.push(match source {
                Some(j) => vals[j],
                None => 0.0,
            });
        });
        row_ptr[r + 1] = val.len();
    }
    RelativeIndexedCSR::new(csr.rows(), csr.cols(), index_bits, row_ptr, rel_col, val)
}

/// Recovers absolute columns and drops padding (entries with val 0.0).
pub fn decode_relative(rel: &RelativeIndexedCSR) -> Result<SparseCSR, CodecError> {
    let mut row_ptr = vec![0usize; rel.rows() + 1];
    let mut col_idx = Vec::with_capacity(rel.val().len());
    let mut val = Vec::with_capacity(rel.val().len());
    for r in 0..rel.rows() {
        let (lo, hi) = (rel.row_ptr()[r], rel.row_ptr()[r + 1]);
        let mut prev: i64 = -1;
        for (&g, &v) in rel.rel_col()[lo..hi].iter().zip(&rel.val()[lo..hi]) {
            let c = prev + g as i64 + 1;
            if c >= rel.cols() as i64 {
                return Err(CodecError::MalformedStream(format!(
                    "decoded column {c} in row {r} exceeds {} columns",
                    rel.cols()
                )));
            }
            if v != 0.0 {
                col_idx.push(c as u32);
                val.push(v);
            }
            prev = c;
        }
        row_ptr[r + 1] = val.len();
    }
    Ok(SparseCSR::from_parts(
        rel.rows(),
        rel.cols(),
        row_ptr,
        col_idx,
        val,
    ))
}

// ── Tests ───────────────────────────────────────────────────────────────────

#[cfg(test)]
mod tests {
    use super::*;
    use crate::codec::{prune, DenseMatrix};
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn row_csr(cols: usize, entries: &[(u32, f32)]) -> SparseCSR {
        let mut m = DenseMatrix::zeros(1, cols);
        for &(c, v) in entries {
            m.set(0, c as usize, v);
        }
        prune(&m, 0.0)
    }

    #[test]
    fn two_bit_gaps_with_padding_match_the_worked_row() {
        let csr = row_csr(12, &[(0, 0.5), (5, -0.3), (11, 0.9)]);
        let rel = encode_relative(&csr, 2).unwrap();
        assert_eq!(rel.rel_col(), &[0, 3, 0, 3, 1]);
        assert_eq!(rel.val(), &[0.5, 0.0, -0.3, 0.0, 0.9]);
        assert_eq!(rel.row_ptr(), &[0, 5]);
        let back = decode_relative(&rel).unwrap();
        assert_eq!(back, csr);
    }

    #[test]
    fn first_entry_beyond_the_gap_limit_gets_a_leading_pad() {
        // With k=2 a first nonzero at column 4 needs a pad at column 3.
        let csr = row_csr(8, &[(4, 1.0)]);
        let rel = encode_relative(&csr, 2).unwrap();
        assert_eq!(rel.rel_col(), &[3, 0]);
        assert_eq!(rel.val(), &[0.0, 1.0]);
        assert_eq!(decode_relative(&rel).unwrap(), csr);
    }

    #[test]
    fn wide_index_rows_need_no_padding() {
        let csr = row_csr(300, &[(0, 1.0), (255, 2.0), (299, 3.0)]);
        let rel = encode_relative(&csr, 8).unwrap();
        assert_eq!(rel.rel_col(), &[0, 254, 43]);
        assert_eq!(rel.val(), &[1.0, 2.0, 3.0]);
    }

    #[test]
    fn empty_rows_stay_empty_through_both_directions() {
        let csr = prune(&DenseMatrix::zeros(3, 10), 0.0);
        let rel = encode_relative(&csr, 4).unwrap();
        assert_eq!(rel.row_ptr(), &[0, 0, 0, 0]);
        assert_eq!(decode_relative(&rel).unwrap(), csr);
    }

    #[test]
    fn column_overflowing_the_geometry_is_a_malformed_stream() {
        let rel = RelativeIndexedCSR::new(1, 2, 2, alloc::vec![0, 1], alloc::vec![2], alloc::vec![1.0])
            .unwrap();
        assert!(matches!(
            decode_relative(&rel),
            Err(CodecError::MalformedStream(_))
        ));
    }

    #[test]
    fn oversized_gaps_and_bad_shapes_are_rejected_at_construction() {
        assert!(RelativeIndexedCSR::new(1, 9, 2, alloc::vec![0, 1], alloc::vec![4], alloc::vec![1.0]).is_err());
        assert!(RelativeIndexedCSR::new(1, 9, 0, alloc::vec![0, 1], alloc::vec![0], alloc::vec![1.0]).is_err());
        assert!(RelativeIndexedCSR::new(2, 9, 2, alloc::vec![0, 1], alloc::vec![0], alloc::vec![1.0]).is_err());
        assert!(RelativeIndexedCSR::new(1, 9, 2, alloc::vec![0, 2], alloc::vec![0], alloc::vec![1.0]).is_err());
    }

    #[test]
    fn random_sparse_rows_roundtrip_for_every_index_width() {
        let mut rng = ChaCha8Rng::seed_from_u64(47);
        for _ in 0..300 {
            let rows = rng.gen_range(1..=8usize);
            let cols = rng.gen_range(1..=200usize);
            let k = [1u8, 2, 3, 4, 8, 15][rng.gen_range(0..6)];
            let mut m = DenseMatrix::zeros(rows, cols);
            for r in 0..rows {
                for c in 0..cols {
                    if rng.gen_bool(0.15) {
                        m.set(r, c, rng.gen_range(0.5..2.0));
                    }
                }
            }
            let csr = prune(&m, 0.0);
            let rel = encode_relative(&csr, k).unwrap();
            // Every gap fits; every padding entry is an exact zero.
            let max_gap = (1u16 << k) - 1;
            assert!(rel.rel_col().iter().all(|&g| g <= max_gap));
            assert_eq!(decode_relative(&rel).unwrap(), csr);
        }
    }
}
