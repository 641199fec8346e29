//! Row-major dense matrices and the block-contiguous layout.
//!
//! Blocked compression operates on a reordered copy of the weight matrix in
//! which each bh×bw block occupies one contiguous storage row; blocks are
//! ordered row-major over the block grid, and entries within a block are
//! row-major as well. Matrices whose sides are not block multiples are
//! zero-padded first — the padding prunes away during compression and is
//! stripped again on restore.

use alloc::format;
use alloc::vec;
use alloc::vec::Vec;

use super::CodecError;

/// A dense row-major matrix with an optional per-row bias vector.
#[derive(Debug, Clone, PartialEq)]
pub struct DenseMatrix {
    rows: usize,
    cols: usize,
    data: Vec<f32>,
    bias: Option<Vec<f32>>,
}

impl DenseMatrix {
    /// An all-zero matrix.
    pub fn zeros(rows: usize, cols: usize) -> Self {
        Self {
            rows,
            cols,
            data: vec![0.0; rows * cols],
            bias: None,
        }
    }

    /// Wraps row-major data; every entry must be finite.
    pub fn from_vec(rows: usize, cols: usize, data: Vec<f32>) -> Result<Self, CodecError> {
        if data.len() != rows * cols {
            return Err(CodecError::InvalidInput(format!(
                "data length {} does not match {rows}x{cols}",
                data.len()
            )));
        }
        if data.iter().any(|v| !v.is_finite()) {
            return Err(CodecError::InvalidInput(
                "matrix entries must be finite".into(),
            ));
        }
        Ok(Self {
            rows,
            cols,
            data,
            bias: None,
        })
    }

    /// Attaches a bias vector, one entry per row.
    pub fn with_bias(mut self, bias: Vec<f32>) -> Result<Self, CodecError> {
        if bias.len() != self.rows {
            return Err(CodecError::InvalidInput(format!(
                "bias length {} does not match {} rows",
                bias.len(),
                self.rows
            )));
        }
        if bias.iter().any(|v| !v.is_finite()) {
            return Err(CodecError::InvalidInput(
                "bias entries must be finite".into(),
            ));
        }
        self.bias = Some(bias);
        Ok(self)
    }

    /// Row count.
    pub fn rows(&self) -> usize {
        self.rows
    }

    /// Column count.
    pub fn cols(&self) -> usize {
        self.cols
    }

    /// The full row-major backing slice.
    pub fn data(&self) -> &[f32] {
        &self.data
    }

    /// The bias vector, if one is attached.
    pub fn bias(&self) -> Option<&[f32]> {
        self.bias.as_deref()
    }

    /// Entry at `(r, c)`.
    pub fn get(&self, r: usize, c: usize) -> f32 {
        debug_assert!(r < self.rows && c < self.cols);
        self.data[r * self.cols + c]
    }

    /// Overwrites the entry at `(r, c)`.
    pub fn set(&mut self, r: usize, c: usize, v: f32) {
        debug_assert!(r < self.rows && c < self.cols);
        debug_assert!(v.is_finite());
        self.data[r * self.cols + c] = v;
    }

    /// One row as a slice.
    pub fn row(&self, r: usize) -> &[f32] {
        debug_assert!(r < self.rows);
        &self.data[r * self.cols..(r + 1) * self.cols]
    }

    /// Rewrites the matrix so each `bh`×`bw` block is one storage row.
    ///
    /// Output geometry is `(rows/bh)·(cols/bw)` storage rows of `bh·bw`
    /// entries each, after zero-padding both sides up to block multiples.
    /// Any bias is dropped; it belongs to the logical rows, not the layout.
    pub fn block_reorder(&self, bh: usize, bw: usize) -> Result<DenseMatrix, CodecError> {
        if bh == 0 || bw == 0 {
            return Err(CodecError::InvalidConfig("block dims must be nonzero".into()));
        }
        let grid_h = self.rows.div_ceil(bh);
        let grid_w = self.cols.div_ceil(bw);
        let mut out = DenseMatrix::zeros(grid_h * grid_w, bh * bw);
        for gi in 0..grid_h {
            for gj in 0..grid_w {
                let storage_row = gi * grid_w + gj;
                for r in 0..bh {
                    let src_r = gi * bh + r;
                    if src_r >= self.rows {
                        break;
                    }
                    for c in 0..bw {
                        let src_c = gj * bw + c;
                        if src_c >= self.cols {
                            break;
                        }
                        out.data[storage_row * (bh * bw) + r * bw + c] =
                            self.data[src_r * self.cols + src_c];
                    }
                }
            }
        }
        Ok(out)
    }

    /// Inverts `block_reorder`, recovering a `rows`×`cols` matrix and
    /// discarding block padding.
    pub fn block_restore(
        &self,
        bh: usize,
        bw: usize,
        rows: usize,
        cols: usize,
    ) -> Result<DenseMatrix, CodecError> {
        if bh == 0 || bw == 0 {
            return Err(CodecError::InvalidConfig("block dims must be nonzero".into()));
        }
        let grid_h = rows.div_ceil(bh);
        let grid_w = cols.div_ceil(bw);
        if self.rows != grid_h * grid_w || self.cols != bh * bw {
            return Err(CodecError::InvalidInput(format!(
                "storage {}x{} does not hold a {rows}x{cols} matrix in {bh}x{bw} blocks",
                self.rows, self.cols
            )));
        }
        let mut out = DenseMatrix::zeros(rows, cols);
        for gi in 0..grid_h {
            for gj in 0..grid_w {
                let storage_row = gi * grid_w + gj;
                for r in 0..bh {
                    let dst_r = gi * bh + r;
                    if dst_r >= rows {
                        break;
                    }
                    for c in 0..bw {
                        let dst_c = gj * bw + c;
                        if dst_c >= cols {
                            break;
                        }
                        out.data[dst_r * cols + dst_c] =
                            self.data[storage_row * (bh * bw) + r * bw + c];
                    }
                }
            }
        }
        Ok(out)
    }
}

// ── Tests ───────────────────────────────────────────────────────────────────

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn counting(rows: usize, cols: usize) -> DenseMatrix {
        DenseMatrix::from_vec(rows, cols, (0..rows * cols).map(|i| i as f32).collect()).unwrap()
    }

    #[test]
    fn eight_square_in_four_blocks_becomes_4x16() {
        let m = counting(8, 8);
        let b = m.block_reorder(4, 4).unwrap();
        assert_eq!((b.rows(), b.cols()), (4, 16));
        // Storage row 0 holds original rows 0-3 × cols 0-3, row-major.
        let mut expect = alloc::vec::Vec::new();
        for r in 0..4 {
            for c in 0..4 {
                expect.push(m.get(r, c));
            }
        }
        assert_eq!(b.row(0), &expect[..]);
        // Blocks are ordered row-major over the grid: next is rows 0-3 × cols 4-7.
        assert_eq!(b.get(1, 0), m.get(0, 4));
        assert_eq!(b.get(2, 0), m.get(4, 0));
        assert_eq!(b.get(3, 15), m.get(7, 7));
    }

    #[test]
    fn single_row_blocks_spanning_all_columns_are_the_identity_layout() {
        let m = counting(5, 7);
        let b = m.block_reorder(1, 7).unwrap();
        assert_eq!((b.rows(), b.cols()), (5, 7));
        assert_eq!(b.data(), m.data());
    }

    #[test]
    fn non_divisible_sides_pad_with_zeros_and_restore_strips_them() {
        let m = counting(6, 6);
        let b = m.block_reorder(4, 4).unwrap();
        assert_eq!((b.rows(), b.cols()), (4, 16));
        // Bottom-right block holds only the 2×2 live corner; rest is padding.
        let br = b.row(3);
        assert_eq!(br[0], m.get(4, 4));
        assert_eq!(br[1], m.get(4, 5));
        assert_eq!(br[2], 0.0);
        assert_eq!(br[4], m.get(5, 4));
        assert_eq!(br[3 * 4], 0.0);
        let back = b.block_restore(4, 4, 6, 6).unwrap();
        assert_eq!(back, m);
    }

    #[test]
    fn reorder_then_restore_is_identity_for_random_geometry() {
        let mut rng = ChaCha8Rng::seed_from_u64(41);
        for _ in 0..200 {
            let rows = rng.gen_range(1..=40usize);
            let cols = rng.gen_range(1..=40usize);
            let bh = rng.gen_range(1..=10usize);
            let bw = rng.gen_range(1..=10usize);
            let data: alloc::vec::Vec<f32> =
                (0..rows * cols).map(|_| rng.gen_range(-2.0..2.0)).collect();
            let m = DenseMatrix::from_vec(rows, cols, data).unwrap();
            let b = m.block_reorder(bh, bw).unwrap();
            assert_eq!(b.cols(), bh * bw);
            assert_eq!(b.rows(), rows.div_ceil(bh) * cols.div_ceil(bw));
            assert_eq!(b.block_restore(bh, bw, rows, cols).unwrap(), m);
        }
    }

    #[test]
    fn invalid_construction_is_rejected() {
        assert!(DenseMatrix::from_vec(2, 2, alloc::vec![0.0; 3]).is_err());
        assert!(DenseMatrix::from_vec(1, 2, alloc::vec![f32::NAN, 0.0]).is_err());
        assert!(counting(2, 2).with_bias(alloc::vec![1.0]).is_err());
        assert!(counting(2, 2).with_bias(alloc::vec![1.0, f32::INFINITY]).is_err());
        assert!(counting(2, 2).block_reorder(0, 4).is_err());
        assert!(counting(4, 16).block_restore(4, 4, 9, 9).is_err());
    }
}
