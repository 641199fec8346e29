//! Compressed sparse row storage and magnitude pruning.

use alloc::vec;
use alloc::vec::Vec;

use super::dense::DenseMatrix;

/// A sparse matrix in CSR form: per-row runs of (column, value) pairs.
#[derive(Debug, Clone, PartialEq)]
pub struct SparseCSR {
    rows: usize,
    cols: usize,
    row_ptr: Vec<usize>,
    col_idx: Vec<u32>,
    val: Vec<f32>,
}

impl SparseCSR {
    pub(super) fn from_parts(
        rows: usize,
        cols: usize,
        row_ptr: Vec<usize>,
        col_idx: Vec<u32>,
        val: Vec<f32>,
    ) -> Self {
        debug_assert_eq!(row_ptr.len(), rows + 1);
        debug_assert_eq!(*row_ptr.last().unwrap_or(&0), col_idx.len());
        debug_assert_eq!(col_idx.len(), val.len());
        Self {
            rows,
            cols,
            row_ptr,
            col_idx,
            val,
        }
    }

    /// Row count.
    pub fn rows(&self) -> usize {
        self.rows
    }

    /// Column count.
    pub fn cols(&self) -> usize {
        self.cols
    }

    /// Number of stored entries.
    pub fn nnz(&self) -> usize {
        self.val.len()
    }

    /// Entry-range boundaries, one past-the-end offset per row.
    pub fn row_ptr(&self) -> &[usize] {
        &self.row_ptr
    }

    /// Column indices of all stored entries, row-major.
    pub fn col_idx(&self) -> &[u32] {
        &self.col_idx
    }

    /// Values of all stored entries, row-major.
    pub fn val(&self) -> &[f32] {
        &self.val
    }

    /// The `(columns, values)` slices of one row.
    pub fn row(&self, r: usize) -> (&[u32], &[f32]) {
        let (lo, hi) = (self.row_ptr[r], self.row_ptr[r + 1]);
        (&self.col_idx[lo..hi], &self.val[lo..hi])
    }

    /// Expands back to a dense matrix; unstored entries become 0.0.
    pub fn to_dense(&self) -> DenseMatrix {
        let mut out = DenseMatrix::zeros(self.rows, self.cols);
        for r in 0..self.rows {
            let (cols, vals) = self.row(r);
            for (&c, &v) in cols.iter().zip(vals) {
                out.set(r, c as usize, v);
            }
        }
        out
    }
}

/// Drops every entry with `|w| <= threshold`, keeping the rest in CSR form.
///
/// `threshold` is expected to be finite and ≥ 0; zero keeps all nonzeros
/// verbatim. An entirely pruned matrix is a valid (empty) result.
pub fn prune(dense: &DenseMatrix, threshold: f32) -> SparseCSR {
    debug_assert!(threshold >= 0.0 && threshold.is_finite());
    let mut row_ptr = vec![0usize; dense.rows() + 1];
    let mut col_idx = Vec::new();
    let mut val = Vec::new();
    for r in 0..dense.rows() {
        for (c, &w) in dense.row(r).iter().enumerate() {
            if w.abs() > threshold {
                col_idx.push(c as u32);
                val.push(w);
            }
        }
        row_ptr[r + 1] = val.len();
    }
    SparseCSR::from_parts(dense.rows(), dense.cols(), row_ptr, col_idx, val)
}

// ── Tests ───────────────────────────────────────────────────────────────────

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn threshold_drops_small_entries_and_keeps_the_rest_in_order() {
        let m = DenseMatrix::from_vec(2, 2, alloc::vec![0.5, 0.01, -0.4, 0.0]).unwrap();
        let s = prune(&m, 0.1);
        assert_eq!(s.val(), &[0.5, -0.4]);
        assert_eq!(s.col_idx(), &[0, 0]);
        assert_eq!(s.row_ptr(), &[0, 1, 2]);
    }

    #[test]
    fn zero_threshold_keeps_all_nonzeros_verbatim() {
        let m = DenseMatrix::from_vec(2, 3, alloc::vec![1.0, 0.0, -2.0, 0.0, 0.5, 0.0]).unwrap();
        let s = prune(&m, 0.0);
        assert_eq!(s.nnz(), 3);
        assert_eq!(s.to_dense(), m);
    }

    #[test]
    fn all_zero_matrix_prunes_to_an_empty_csr() {
        let s = prune(&DenseMatrix::zeros(3, 3), 0.1);
        assert_eq!(s.nnz(), 0);
        assert_eq!(s.row_ptr(), &[0, 0, 0, 0]);
    }

    #[test]
    fn entries_exactly_at_the_threshold_are_dropped() {
        let m = DenseMatrix::from_vec(1, 3, alloc::vec![0.1, -0.1, 0.100001]).unwrap();
        let s = prune(&m, 0.1);
        assert_eq!(s.val(), &[0.100001]);
        assert_eq!(s.col_idx(), &[2]);
    }

    #[test]
    fn pruned_dense_roundtrip_matches_a_direct_scan() {
        let mut rng = ChaCha8Rng::seed_from_u64(43);
        for _ in 0..200 {
            let rows = rng.gen_range(1..=20usize);
            let cols = rng.gen_range(1..=20usize);
            let t = rng.gen_range(0.0..0.5f32);
            let data: alloc::vec::Vec<f32> =
                (0..rows * cols).map(|_| rng.gen_range(-1.0..1.0)).collect();
            let m = DenseMatrix::from_vec(rows, cols, data).unwrap();
            let s = prune(&m, t);
            let d = s.to_dense();
            for r in 0..rows {
                for c in 0..cols {
                    let w = m.get(r, c);
                    let expect = if w.abs() > t { w } else { 0.0 };
                    assert_eq!(d.get(r, c), expect);
                }
            }
            // Columns strictly increase within each row.
            for r in 0..rows {
                let (cols_r, _) = s.row(r);
                assert!(cols_r.windows(2).all(|w| w[0] < w[1]));
            }
        }
    }
}
