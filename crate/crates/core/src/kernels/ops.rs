//! Per-column network operations that surround the compressed layers:
//! ReLU, overlapping max-pooling, cross-channel response normalization,
//! and the im2col lowering that turns convolution into the blocked
//! matrix product.
//!
//! Every activation column holds one image as channel-major planes
//! (`data[c·H·W + y·W + x]`). The `*_into` variants write column-major
//! output into caller-owned storage so an executor can account for every
//! buffer it allocates.

use alloc::format;
use core::ops::Range;

use super::{ActivationMatrix, KernelError, WorkBuffer};
use crate::codec::EncodedLayer;

// ── ReLU ────────────────────────────────────────────────────────────────────

/// Clamps negatives to zero in place.
pub fn relu_into(data: &mut [f32]) {
    for v in data {
        if *v < 0.0 {
            *v = 0.0;
        }
    }
}

/// Element-wise `max(v, 0)`.
pub fn relu(a: &ActivationMatrix) -> ActivationMatrix {
    let mut out = a.clone();
    relu_into(out.data_mut());
    out
}

// ── Max pooling ─────────────────────────────────────────────────────────────

/// Geometry of a square pooling stage over channel-major planes.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct PoolGeom {
    pub channels: usize,
    pub in_h: usize,
    pub in_w: usize,
    pub window: usize,
    pub stride: usize,
}

impl PoolGeom {
    /// Output height: `(in_h - window) / stride + 1`.
    pub fn out_h(&self) -> usize {
        (self.in_h - self.window) / self.stride + 1
    }

    /// Output width: `(in_w - window) / stride + 1`.
    pub fn out_w(&self) -> usize {
        (self.in_w - self.window) / self.stride + 1
    }

    /// Features per input column.
    pub fn in_features(&self) -> usize {
        self.channels * self.in_h * self.in_w
    }

    /// Features per output column.
    pub fn out_features(&self) -> usize {
        self.channels * self.out_h() * self.out_w()
    }

    fn validate(&self) -> Result<(), KernelError> {
        if self.channels == 0 || self.in_h == 0 || self.in_w == 0 {
            return Err(KernelError::ShapeMismatch("empty pooling input".into()));
        }
        if self.window == 0 || self.stride == 0 {
            return Err(KernelError::ShapeMismatch(
                "pooling window and stride must be positive".into(),
            ));
        }
        if self.window > self.in_h || self.window > self.in_w {
            return Err(KernelError::ShapeMismatch(format!(
                "pooling window {} exceeds the {}x{} plane",
                self.window, self.in_h, self.in_w
            )));
        }
        Ok(())
    }
}

/// Max-pools one batch into a caller-owned column-major buffer.
pub fn max_pool_into(a: &ActivationMatrix, g: &PoolGeom, out: &mut [f32]) -> Result<(), KernelError> {
    g.validate()?;
    if a.rows() != g.in_features() {
        return Err(KernelError::ShapeMismatch(format!(
            "pooling expects {} features, activation has {}",
            g.in_features(),
            a.rows()
        )));
    }
    let (oh, ow) = (g.out_h(), g.out_w());
    let out_rows = g.out_features();
    if out.len() != out_rows * a.batch() {
        return Err(KernelError::ShapeMismatch(format!(
            "pooling output length {} does not match {out_rows} x {}",
            out.len(),
            a.batch()
        )));
    }
    let plane = g.in_h * g.in_w;
    for b in 0..a.batch() {
        let col = a.column(b);
        let out_col = &mut out[b * out_rows..(b + 1) * out_rows];
        for c in 0..g.channels {
            let src = &col[c * plane..(c + 1) * plane];
            let dst = &mut out_col[c * oh * ow..(c + 1) * oh * ow];
            for oy in 0..oh {
                for ox in 0..ow {
                    let mut m = f32::NEG_INFINITY;
                    for ky in 0..g.window {
                        let row = &src[(oy * g.stride + ky) * g.in_w..];
                        for kx in 0..g.window {
                            m = m.max(row[ox * g.stride + kx]);
                        }
                    }
                    dst[oy * ow + ox] = m;
                }
            }
        }
    }
    Ok(())
}

/// Max-pools one batch, allocating the output.
pub fn max_pool(a: &ActivationMatrix, g: &PoolGeom) -> Result<ActivationMatrix, KernelError> {
    g.validate()?;
    let mut out = ActivationMatrix::zeros(g.out_features(), a.batch());
    max_pool_into(a, g, out.data_mut())?;
    Ok(out)
}

// ── Local response normalization ────────────────────────────────────────────

/// Cross-channel normalization constants:
/// `b_c = a_c / (k + alpha · Σ_{j near c} a_j²)^beta`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LrnParams {
    pub size: usize,
    pub alpha: f32,
    pub beta: f32,
    pub k: f32,
}

impl Default for LrnParams {
    fn default() -> Self {
        Self {
            size: 5,
            alpha: 1e-4,
            beta: 0.75,
            k: 2.0,
        }
    }
}

/// Normalizes across channels into a caller-owned column-major buffer.
///
/// The channel window `[c - size/2, c + size/2]` is clamped at both ends
/// of the channel range.
pub fn lrn_into(
    a: &ActivationMatrix,
    channels: usize,
    p: &LrnParams,
    out: &mut [f32],
) -> Result<(), KernelError> {
    if channels == 0 || a.rows() % channels != 0 {
        return Err(KernelError::ShapeMismatch(format!(
            "{} features do not split into {channels} channels",
            a.rows()
        )));
    }
    if p.size == 0 {
        return Err(KernelError::ShapeMismatch(
            "normalization window must be positive".into(),
        ));
    }
    if out.len() != a.rows() * a.batch() {
        return Err(KernelError::ShapeMismatch(format!(
            "normalization output length {} does not match input {}",
            out.len(),
            a.rows() * a.batch()
        )));
    }
    let plane = a.rows() / channels;
    let half = p.size / 2;
    for b in 0..a.batch() {
        let col = a.column(b);
        let out_col = &mut out[b * a.rows()..(b + 1) * a.rows()];
        for pix in 0..plane {
            for c in 0..channels {
                let lo = c.saturating_sub(half);
                let hi = (c + half).min(channels - 1);
                let mut sum = 0.0f32;
                for j in lo..=hi {
                    let v = col[j * plane + pix];
                    sum += v * v;
                }
                let denom = libm::powf(p.k + p.alpha * sum, p.beta);
                out_col[c * plane + pix] = col[c * plane + pix] / denom;
            }
        }
    }
    Ok(())
}

/// Normalizes across channels, allocating the output.
pub fn lrn(
    a: &ActivationMatrix,
    channels: usize,
    p: &LrnParams,
) -> Result<ActivationMatrix, KernelError> {
    let mut out = ActivationMatrix::zeros(a.rows(), a.batch());
    lrn_into(a, channels, p, out.data_mut())?;
    Ok(out)
}

// ── im2col convolution lowering ─────────────────────────────────────────────

/// Geometry of a square convolution over channel-major planes.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct ConvGeom {
    pub in_channels: usize,
    pub in_h: usize,
    pub in_w: usize,
    pub kernel: usize,
    pub stride: usize,
    pub pad: usize,
}

impl ConvGeom {
    /// Output height: `(in_h + 2·pad - kernel) / stride + 1`.
    pub fn out_h(&self) -> usize {
        (self.in_h + 2 * self.pad - self.kernel) / self.stride + 1
    }

    /// Output width: `(in_w + 2·pad - kernel) / stride + 1`.
    pub fn out_w(&self) -> usize {
        (self.in_w + 2 * self.pad - self.kernel) / self.stride + 1
    }

    /// Rows of the patch matrix: one per weight in a filter.
    pub fn patch_rows(&self) -> usize {
        self.in_channels * self.kernel * self.kernel
    }

    /// Output pixels per image.
    pub fn out_pixels(&self) -> usize {
        self.out_h() * self.out_w()
    }

    /// Features per input column.
    pub fn in_features(&self) -> usize {
        self.in_channels * self.in_h * self.in_w
    }

    fn validate(&self) -> Result<(), KernelError> {
        if self.in_channels == 0 || self.in_h == 0 || self.in_w == 0 {
            return Err(KernelError::ShapeMismatch("empty convolution input".into()));
        }
        if self.kernel == 0 || self.stride == 0 {
            return Err(KernelError::ShapeMismatch(
                "kernel and stride must be positive".into(),
            ));
        }
        if self.in_h + 2 * self.pad < self.kernel || self.in_w + 2 * self.pad < self.kernel {
            return Err(KernelError::ShapeMismatch(format!(
                "kernel {} exceeds the padded {}x{} plane",
                self.kernel,
                self.in_h + 2 * self.pad,
                self.in_w + 2 * self.pad
            )));
        }
        Ok(())
    }
}

/// Builds patch-matrix columns `cols` into a caller-owned buffer.
///
/// Global pixel columns run `b · out_pixels + oy · out_w + ox` with the
/// image index `b` counted across all `parts` in order. Patch row
/// `c · kernel² + ky · kernel + kx` reads input `(c, oy·stride+ky-pad,
/// ox·stride+kx-pad)`; reads outside the plane contribute zero.
pub fn im2col_chunk(
    parts: &[&ActivationMatrix],
    g: &ConvGeom,
    cols: Range<usize>,
    out: &mut [f32],
) -> Result<(), KernelError> {
    g.validate()?;
    for part in parts {
        if part.rows() != g.in_features() {
            return Err(KernelError::ShapeMismatch(format!(
                "convolution expects {} features, activation has {}",
                g.in_features(),
                part.rows()
            )));
        }
    }
    let ohw = g.out_pixels();
    let total = super::total_batch(parts) * ohw;
    if cols.end > total {
        return Err(KernelError::ShapeMismatch(format!(
            "patch columns {cols:?} exceed {total}"
        )));
    }
    let patch_rows = g.patch_rows();
    if out.len() != patch_rows * cols.len() {
        return Err(KernelError::ShapeMismatch(format!(
            "patch buffer length {} does not match {patch_rows} x {}",
            out.len(),
            cols.len()
        )));
    }
    let plane = g.in_h * g.in_w;
    let k = g.kernel;
    for (slot, gcol) in cols.enumerate() {
        let (mut b, pix) = (gcol / ohw, gcol % ohw);
        let (oy, ox) = (pix / g.out_w(), pix % g.out_w());
        let mut part_idx = 0;
        while b >= parts[part_idx].batch() {
            b -= parts[part_idx].batch();
            part_idx += 1;
        }
        let col = parts[part_idx].column(b);
        let dst = &mut out[slot * patch_rows..(slot + 1) * patch_rows];
        for c in 0..g.in_channels {
            let src = &col[c * plane..(c + 1) * plane];
            for ky in 0..k {
                let y = (oy * g.stride + ky) as isize - g.pad as isize;
                for kx in 0..k {
                    let x = (ox * g.stride + kx) as isize - g.pad as isize;
                    dst[c * k * k + ky * k + kx] =
                        if y >= 0 && (y as usize) < g.in_h && x >= 0 && (x as usize) < g.in_w {
                            src[y as usize * g.in_w + x as usize]
                        } else {
                            0.0
                        };
                }
            }
        }
    }
    Ok(())
}

/// Builds the full patch matrix for one batch.
pub fn im2col(a: &ActivationMatrix, g: &ConvGeom) -> Result<ActivationMatrix, KernelError> {
    g.validate()?;
    let cols = a.batch() * g.out_pixels();
    let mut out = ActivationMatrix::zeros(g.patch_rows(), cols);
    im2col_chunk(&[a], g, 0..cols, out.data_mut())?;
    Ok(out)
}

/// Regroups a `W·patches` product (out_channels × batch·out_pixels) into
/// activation layout (out_channels·out_pixels × batch).
pub fn regroup_conv_columns(
    y: &ActivationMatrix,
    out_pixels: usize,
    batch: usize,
) -> Result<ActivationMatrix, KernelError> {
    if y.batch() != out_pixels * batch {
        return Err(KernelError::ShapeMismatch(format!(
            "{} product columns do not split into {batch} images of {out_pixels} pixels",
            y.batch()
        )));
    }
    let channels = y.rows();
    let mut out = ActivationMatrix::zeros(channels * out_pixels, batch);
    for b in 0..batch {
        let dst = &mut out.data_mut()[b * channels * out_pixels..(b + 1) * channels * out_pixels];
        for pix in 0..out_pixels {
            let src = y.column(b * out_pixels + pix);
            for (ch, &v) in src.iter().enumerate() {
                dst[ch * out_pixels + pix] = v;
            }
        }
    }
    Ok(out)
}

/// Reference convolution: lower the whole batch with `im2col`, multiply by
/// the compressed filter matrix, regroup to activation layout.
pub fn conv_via_im2col(
    layer: &EncodedLayer,
    a: &ActivationMatrix,
    g: &ConvGeom,
    buf: &mut WorkBuffer,
) -> Result<ActivationMatrix, KernelError> {
    if layer.cols as usize != g.patch_rows() {
        return Err(KernelError::ShapeMismatch(format!(
            "filter matrix has {} columns but patches have {} rows",
            layer.cols,
            g.patch_rows()
        )));
    }
    let patches = im2col(a, g)?;
    let y = super::infer_blocked(layer, &patches, buf)?;
    regroup_conv_columns(&y, g.out_pixels(), a.batch())
}

// ── Tests ───────────────────────────────────────────────────────────────────
