//! Inference kernels that run directly on the compressed representation.
//!
//! The blocked path decodes each storage row into a `WorkBuffer` exactly
//! once per inference and multiplies the resulting block against every
//! activation column before moving on, so decode cost amortizes across the
//! batch. Blocks denser than 50% are expanded to a small dense panel;
//! sparser ones multiply straight from their coordinate form. Both forms
//! walk entries in identical order, so results agree exactly.
//!
//! Activations are column-major: one image's features are contiguous, and
//! a weight block touching features `col_id..col_id+bw` reads a contiguous
//! stripe of every column.

use alloc::format;
use alloc::string::String;
use alloc::vec;
use alloc::vec::Vec;
use core::fmt;
use core::ops::Range;

use crate::codec::bits::BitReader;
use crate::codec::{CodecError, EncodedLayer};

pub mod ops;

// ── Errors ──────────────────────────────────────────────────────────────────

/// Errors surfaced while running kernels.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum KernelError {
    /// Operand geometry does not line up.
    ShapeMismatch(String),
    /// The encoded layer does not decode consistently.
    MalformedStream(String),
}

impl fmt::Display for KernelError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            KernelError::ShapeMismatch(msg) => write!(f, "shape mismatch: {msg}"),
            KernelError::MalformedStream(msg) => write!(f, "malformed stream: {msg}"),
        }
    }
}

impl core::error::Error for KernelError {}

impl From<CodecError> for KernelError {
    fn from(e: CodecError) -> Self {
        KernelError::MalformedStream(format!("{e}"))
    }
}

// ── Activations ─────────────────────────────────────────────────────────────

/// A batch of activation vectors, column-major (`data[col · rows + row]`).
#[derive(Debug, Clone, PartialEq)]
pub struct ActivationMatrix {
    rows: usize,
    batch: usize,
    data: Vec<f32>,
}

impl ActivationMatrix {
    /// An all-zero batch.
    pub fn zeros(rows: usize, batch: usize) -> Self {
        Self {
            rows,
            batch,
            data: vec![0.0; rows * batch],
        }
    }

    /// Wraps column-major data; every entry must be finite.
    pub fn from_vec(rows: usize, batch: usize, data: Vec<f32>) -> Result<Self, KernelError> {
        if data.len() != rows * batch {
            return Err(KernelError::ShapeMismatch(format!(
                "data length {} does not match {rows} rows x {batch} columns",
                data.len()
            )));
        }
        if data.iter().any(|v| !v.is_finite()) {
            return Err(KernelError::ShapeMismatch(
                "activations must be finite".into(),
            ));
        }
        Ok(Self { rows, batch, data })
    }

    /// Feature count.
    pub fn rows(&self) -> usize {
        self.rows
    }

    /// Batch size (column count).
    pub fn batch(&self) -> usize {
        self.batch
    }

    /// The column-major backing slice.
    pub fn data(&self) -> &[f32] {
        &self.data
    }

    /// Mutable access to the backing slice.
    pub fn data_mut(&mut self) -> &mut [f32] {
        &mut self.data
    }

    /// One column (one image's features).
    pub fn column(&self, c: usize) -> &[f32] {
        &self.data[c * self.rows..(c + 1) * self.rows]
    }

    /// Entry at `(row, col)`.
    pub fn get(&self, row: usize, col: usize) -> f32 {
        self.data[col * self.rows + row]
    }

    /// Overwrites the entry at `(row, col)`.
    pub fn set(&mut self, row: usize, col: usize, v: f32) {
        self.data[col * self.rows + row] = v;
    }
}

/// Total columns across a sequence of activation segments.
pub fn total_batch(parts: &[&ActivationMatrix]) -> usize {
    parts.iter().map(|p| p.batch()).sum()
}

// ── Work buffer ─────────────────────────────────────────────────────────────

/// Reusable scratch for decoding one block; its size is the layer's
/// workspace footprint and depends only on block geometry, never on batch.
#[derive(Debug)]
pub struct WorkBuffer {
    rloc: Vec<u32>,
    cloc: Vec<u32>,
    values: Vec<f32>,
    dense: Vec<f32>,
    /// Number of storage-row decodes performed through this buffer.
    pub decode_calls: u64,
}

impl WorkBuffer {
    /// Scratch sized for one `bh`×`bw` block of the given layer.
    pub fn for_layer(layer: &EncodedLayer) -> Self {
        Self::for_block(layer.block_h as usize, layer.block_w as usize)
    }

    /// Scratch sized for one `bh`×`bw` block.
    pub fn for_block(bh: usize, bw: usize) -> Self {
        let cap = bh * bw;
        Self {
            rloc: Vec::with_capacity(cap),
            cloc: Vec::with_capacity(cap),
            values: Vec::with_capacity(cap),
            dense: vec![0.0; cap],
            decode_calls: 0,
        }
    }

    /// Workspace bytes held by the scratch arrays.
    pub fn size_bytes(&self) -> u64 {
        (self.rloc.capacity() * 4
            + self.cloc.capacity() * 4
            + self.values.capacity() * 4
            + self.dense.len() * 4) as u64
    }
}

/// One decoded storage row, borrowed out of a `WorkBuffer`.
///
/// `row_id`/`col_id` are the block's origin in the padded logical matrix:
/// `row_id = (index / grid_w) · bh`, `col_id = (index mod grid_w) · bw`.
#[derive(Debug)]
pub struct DecodedBlock<'a> {
    /// Storage row index this block came from.
    pub index: usize,
    /// First logical weight row the block covers.
    pub row_id: usize,
    /// First logical weight column the block covers.
    pub col_id: usize,
    /// In-block row of each stored entry.
    pub rloc: &'a [u32],
    /// In-block column of each stored entry.
    pub cloc: &'a [u32],
    /// Center value of each stored entry.
    pub values: &'a [f32],
    /// Dense `bh`×`bw` panel when the block crossed the density threshold.
    pub dense: Option<&'a [f32]>,
}

/// Fraction of block slots that must be occupied before densifying.
const DENSIFY_THRESHOLD_NUM: usize = 1;
const DENSIFY_THRESHOLD_DEN: usize = 2;

/// Decodes storage row `index` into `buf` and hands back views of it.
///
/// Entries whose center is exactly 0.0 (padding, or values quantized onto
/// the zero center) are skipped: they cannot affect any product.
pub fn decode_storage_row<'a>(
    layer: &EncodedLayer,
    index: usize,
    buf: &'a mut WorkBuffer,
) -> Result<DecodedBlock<'a>, KernelError> {
    let bh = layer.block_h as usize;
    let bw = layer.block_w as usize;
    let slots = bh * bw;
    let grid_w = layer.grid_w();
    if index >= layer.storage_rows() {
        return Err(KernelError::ShapeMismatch(format!(
            "storage row {index} out of {}",
            layer.storage_rows()
        )));
    }

    buf.rloc.clear();
    buf.cloc.clear();
    buf.values.clear();
    buf.decode_calls += 1;

    let val_reader = BitReader::new(&layer.val_stream);
    let col_reader = BitReader::new(&layer.col_stream);
    let (mut val_pos, mut col_pos) = layer.row_ptr[index];
    let (val_hi, col_hi) = layer.row_ptr[index + 1];
    let mut prev: i64 = -1;
    loop {
        if val_pos == val_hi && col_pos == col_hi {
            break;
        }
        if val_pos >= val_hi || col_pos >= col_hi {
            return Err(KernelError::MalformedStream(format!(
                "val/col token counts disagree in storage row {index}"
            )));
        }
        let (val_sym, next_val) = layer.val_table.decode(&val_reader, val_pos)?;
        let (col_sym, next_col) = layer.col_table.decode(&col_reader, col_pos)?;
        if next_val > val_hi || next_col > col_hi {
            return Err(KernelError::MalformedStream(format!(
                "code crosses the row boundary in storage row {index}"
            )));
        }
        val_pos = next_val;
        col_pos = next_col;
        let center = *layer
            .codebook
            .centers
            .get(val_sym as usize)
            .ok_or_else(|| {
                KernelError::MalformedStream(format!("value token {val_sym} outside the codebook"))
            })?;
        let pos = prev + col_sym as i64 + 1;
        if pos >= slots as i64 {
            return Err(KernelError::MalformedStream(format!(
                "decoded position {pos} exceeds block size {slots}"
            )));
        }
        prev = pos;
        if center != 0.0 {
            buf.rloc.push(pos as u32 / bw as u32);
            buf.cloc.push(pos as u32 % bw as u32);
            buf.values.push(center);
        }
    }

    let nnz = buf.values.len();
    let densify = nnz * DENSIFY_THRESHOLD_DEN > slots * DENSIFY_THRESHOLD_NUM;
    if densify {
        buf.dense.fill(0.0);
        for i in 0..nnz {
            buf.dense[(buf.rloc[i] * bw as u32 + buf.cloc[i]) as usize] = buf.values[i];
        }
    }

    Ok(DecodedBlock {
        index,
        row_id: index / grid_w * bh,
        col_id: index % grid_w * bw,
        rloc: &buf.rloc,
        cloc: &buf.cloc,
        values: &buf.values,
        dense: if densify { Some(&buf.dense) } else { None },
    })
}

// ── Block accumulation ──────────────────────────────────────────────────────

/// Raw output handle for disjoint row-band accumulation across threads.
///
/// Wraps the base pointer of a column-major output buffer. It is `Send` so
/// worker threads can each take a copy; soundness rests on the caller's
/// guarantee that concurrent users write disjoint row bands.
#[derive(Clone, Copy, Debug)]
pub struct OutPtr(pub *mut f32);

unsafe impl Send for OutPtr {}

/// Adds `block × activations` into the output columns.
///
/// `out` is column-major with `out_rows` (= logical layer rows) per column
/// and one column per activation column across all `parts`, in order.
fn accumulate_block_unchecked(
    block: &DecodedBlock<'_>,
    bh: usize,
    bw: usize,
    live_rows: usize,
    live_cols: usize,
    parts: &[&ActivationMatrix],
    out: OutPtr,
    out_rows: usize,
) {
    // Clamp to the block rectangle, then to the logical geometry: edge
    // blocks cover padding rows and columns that must not contribute.
    let r_max = bh.min(live_rows.saturating_sub(block.row_id));
    let c_max = bw.min(live_cols.saturating_sub(block.col_id));
    if r_max == 0 || c_max == 0 {
        return;
    }

    let mut col_base = 0usize;
    for part in parts {
        for local in 0..part.batch() {
            let a = part.column(local);
            let a = &a[block.col_id..block.col_id + c_max];
            // SAFETY: the caller promises out points at a column-major
            // buffer of out_rows × total columns, and that this thread owns
            // rows [row_id, row_id + r_max) of every column.
            let out_col = unsafe {
                core::slice::from_raw_parts_mut(
                    out.0.add((col_base + local) * out_rows + block.row_id),
                    r_max,
                )
            };
            match block.dense {
                Some(dense) => {
                    for r in 0..r_max {
                        let w = &dense[r * bw..r * bw + c_max];
                        let acc = &mut out_col[r];
                        for (c, &wv) in w.iter().enumerate() {
                            *acc += wv * a[c];
                        }
                    }
                }
                None => {
                    for ((&r, &c), &v) in block.rloc.iter().zip(block.cloc).zip(block.values) {
                        if (r as usize) < r_max && (c as usize) < c_max {
                            out_col[r as usize] += v * a[c as usize];
                        }
                    }
                }
            }
        }
        col_base += part.batch();
    }
}

/// Safe single-block accumulate: `out[row_id.., :] += block × a[col_id.., :]`.
pub fn accumulate_block(
    layer: &EncodedLayer,
    block: &DecodedBlock<'_>,
    parts: &[&ActivationMatrix],
    out: &mut [f32],
) -> Result<(), KernelError> {
    check_parts(layer, parts)?;
    let rows = layer.rows as usize;
    if out.len() != rows * total_batch(parts) {
        return Err(KernelError::ShapeMismatch(format!(
            "output length {} does not match {rows} rows x {} columns",
            out.len(),
            total_batch(parts)
        )));
    }
    accumulate_block_unchecked(
        block,
        layer.block_h as usize,
        layer.block_w as usize,
        rows,
        layer.cols as usize,
        parts,
        OutPtr(out.as_mut_ptr()),
        rows,
    );
    Ok(())
}

fn check_parts(layer: &EncodedLayer, parts: &[&ActivationMatrix]) -> Result<(), KernelError> {
    for part in parts {
        if part.rows() != layer.cols as usize {
            return Err(KernelError::ShapeMismatch(format!(
                "activation has {} features but the layer expects {}",
                part.rows(),
                layer.cols
            )));
        }
    }
    Ok(())
}

/// Decodes and accumulates every block in the given grid-row band.
///
/// # Safety
/// `out` must point at a live column-major buffer of `out_rows` rows and
/// `total_batch(parts)` columns, `out_rows` must equal the layer's logical
/// row count, and no other thread may touch logical rows
/// `[grid_rows.start · bh, grid_rows.end · bh)` of it while this runs.
pub unsafe fn accumulate_grid_rows_raw(
    layer: &EncodedLayer,
    parts: &[&ActivationMatrix],
    grid_rows: Range<usize>,
    out: OutPtr,
    out_rows: usize,
    buf: &mut WorkBuffer,
) -> Result<(), KernelError> {
    let grid_w = layer.grid_w();
    for gi in grid_rows {
        for gj in 0..grid_w {
            let block = decode_storage_row(layer, gi * grid_w + gj, buf)?;
            accumulate_block_unchecked(
                &block,
                layer.block_h as usize,
                layer.block_w as usize,
                out_rows.min(layer.rows as usize),
                layer.cols as usize,
                parts,
                out,
                out_rows,
            );
        }
    }
    Ok(())
}

/// Safe band accumulate into an exclusive output slice.
pub fn accumulate_grid_rows(
    layer: &EncodedLayer,
    parts: &[&ActivationMatrix],
    grid_rows: Range<usize>,
    out: &mut [f32],
    buf: &mut WorkBuffer,
) -> Result<(), KernelError> {
    check_parts(layer, parts)?;
    let rows = layer.rows as usize;
    if out.len() != rows * total_batch(parts) {
        return Err(KernelError::ShapeMismatch(format!(
            "output length {} does not match {rows} rows x {} columns",
            out.len(),
            total_batch(parts)
        )));
    }
    if grid_rows.end > layer.grid_h() {
        return Err(KernelError::ShapeMismatch(format!(
            "grid rows {grid_rows:?} exceed {} block rows",
            layer.grid_h()
        )));
    }
    // SAFETY: out is exclusively borrowed and spans all rows and columns.
    unsafe { accumulate_grid_rows_raw(layer, parts, grid_rows, OutPtr(out.as_mut_ptr()), rows, buf) }
}

/// Adds a per-row bias to every column of a column-major buffer.
pub fn add_bias_columns(out: &mut [f32], rows: usize, bias: &[f32]) {
    debug_assert_eq!(out.len() % rows, 0);
    debug_assert_eq!(bias.len(), rows);
    for col in out.chunks_exact_mut(rows) {
        for (o, &b) in col.iter_mut().zip(bias) {
            *o += b;
        }
    }
}

// ── Inference entry points ──────────────────────────────────────────────────

/// Row-at-a-time inference for unblocked layers.
///
/// Decodes each matrix row's token ranges, reconstructs absolute columns by
/// cumulative scan, substitutes codebook centers, and accumulates the
/// sparse-row × activation product. Kept independent of the blocked path
/// so the two can cross-check each other.
pub fn infer_naive(layer: &EncodedLayer, a: &ActivationMatrix) -> Result<ActivationMatrix, KernelError> {
    if layer.block_h != 1 || layer.block_w != layer.cols {
        return Err(KernelError::ShapeMismatch(format!(
            "row-wise inference needs 1x{} blocks, layer uses {}x{}",
            layer.cols, layer.block_h, layer.block_w
        )));
    }
    if a.rows() != layer.cols as usize {
        return Err(KernelError::ShapeMismatch(format!(
            "activation has {} features but the layer expects {}",
            a.rows(),
            layer.cols
        )));
    }
    let rows = layer.rows as usize;
    let cols = layer.cols as usize;
    let mut out = ActivationMatrix::zeros(rows, a.batch());
    let val_reader = BitReader::new(&layer.val_stream);
    let col_reader = BitReader::new(&layer.col_stream);

    for r in 0..rows {
        let (mut val_pos, mut col_pos) = layer.row_ptr[r];
        let (val_hi, col_hi) = layer.row_ptr[r + 1];
        let mut prev: i64 = -1;
        loop {
            if val_pos == val_hi && col_pos == col_hi {
                break;
            }
            if val_pos >= val_hi || col_pos >= col_hi {
                return Err(KernelError::MalformedStream(format!(
                    "val/col token counts disagree in row {r}"
                )));
            }
            let (val_sym, next_val) = layer.val_table.decode(&val_reader, val_pos)?;
            let (col_sym, next_col) = layer.col_table.decode(&col_reader, col_pos)?;
            if next_val > val_hi || next_col > col_hi {
                return Err(KernelError::MalformedStream(format!(
                    "code crosses the row boundary in row {r}"
                )));
            }
            val_pos = next_val;
            col_pos = next_col;
            let center = *layer
                .codebook
                .centers
                .get(val_sym as usize)
                .ok_or_else(|| {
                    KernelError::MalformedStream(format!(
                        "value token {val_sym} outside the codebook"
                    ))
                })?;
            let c = prev + col_sym as i64 + 1;
            if c >= cols as i64 {
                return Err(KernelError::MalformedStream(format!(
                    "decoded column {c} exceeds {cols} columns"
                )));
            }
            prev = c;
            if center != 0.0 {
                for b in 0..a.batch() {
                    let x = out.get(r, b) + center * a.get(c as usize, b);
                    out.set(r, b, x);
                }
            }
        }
    }

    if let Some(bias) = &layer.bias {
        add_bias_columns(out.data_mut(), rows, bias);
    }
    Ok(out)
}

/// Blocked inference: decode each storage row once, use it for the whole
/// batch.
pub fn infer_blocked(
    layer: &EncodedLayer,
    a: &ActivationMatrix,
    buf: &mut WorkBuffer,
) -> Result<ActivationMatrix, KernelError> {
    let mut out = ActivationMatrix::zeros(layer.rows as usize, a.batch());
    infer_blocked_into(layer, &[a], out.data_mut(), buf)?;
    Ok(out)
}

/// Blocked inference into a caller-owned buffer, with the batch supplied
/// as a sequence of column segments treated as one concatenated matrix.
pub fn infer_blocked_into(
    layer: &EncodedLayer,
    parts: &[&ActivationMatrix],
    out: &mut [f32],
    buf: &mut WorkBuffer,
) -> Result<(), KernelError> {
    let rows = layer.rows as usize;
    out.fill(0.0);
    accumulate_grid_rows(layer, parts, 0..layer.grid_h(), out, buf)?;
    if let Some(bias) = &layer.bias {
        add_bias_columns(out, rows, bias);
    }
    Ok(())
}

// ── Tests ───────────────────────────────────────────────────────────────────
