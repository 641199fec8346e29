//! Codebook quantization of the value stream.
//!
//! Nonzero values are clustered by 1-D Lloyd k-means into at most `2^r − 1`
//! centers; index 0 of every codebook is the reserved exact 0.0 so padding
//! entries stay representable. The whole procedure is deterministic and
//! depends only on the multiset of input values, never on their order.

use alloc::format;
use alloc::vec;
use alloc::vec::Vec;

use super::CodecError;

/// Iteration cap for the Lloyd loop.
pub const KMEANS_MAX_ITERS: usize = 50;
/// Center-movement threshold that counts as convergence.
pub const KMEANS_TOLERANCE: f32 = 1e-7;

// ── Codebook ────────────────────────────────────────────────────────────────

/// The cluster centers a quantized layer maps its indices through.
#[derive(Debug, Clone, PartialEq)]
pub struct Codebook {
    /// Bits per stored index; centers never outnumber `2^quant_bits`.
    pub quant_bits: u8,
    /// Center values; entry `zero_index` is exactly 0.0.
    pub centers: Vec<f32>,
    /// Index of the reserved zero center.
    pub zero_index: usize,
}

impl Codebook {
    /// Checks every structural invariant; used on untrusted input.
    pub fn validate(&self) -> Result<(), CodecError> {
        if self.quant_bits < 1 || self.quant_bits > 15 {
            return Err(CodecError::InvalidConfig(
                "quant_bits must be in 1..=15".into(),
            ));
        }
        if self.centers.is_empty() {
            return Err(CodecError::MalformedStream("codebook has no centers".into()));
        }
        if self.centers.len() > 1 << self.quant_bits {
            return Err(CodecError::MalformedStream(format!(
                "{} centers exceed {} quantization bits",
                self.centers.len(),
                self.quant_bits
            )));
        }
        if self.centers.iter().any(|c| !c.is_finite()) {
            return Err(CodecError::MalformedStream(
                "codebook centers must be finite".into(),
            ));
        }
        if self.centers.get(self.zero_index) != Some(&0.0) {
            return Err(CodecError::MalformedStream(
                "codebook zero_index does not point at 0.0".into(),
            ));
        }
        for (i, &a) in self.centers.iter().enumerate() {
            if self.centers[..i].contains(&a) {
                return Err(CodecError::MalformedStream(
                    "codebook centers must be pairwise distinct".into(),
                ));
            }
        }
        Ok(())
    }

    /// Index of the center nearest to `v`; exact zeros hit the reserved
    /// center, and distance ties resolve to the lowest index.
    pub fn nearest_index(&self, v: f32) -> usize {
        if v == 0.0 {
            return self.zero_index;
        }
        let mut best = 0;
        let mut best_dist = (v - self.centers[0]).abs();
        for (i, &c) in self.centers.iter().enumerate().skip(1) {
            let d = (v - c).abs();
            if d < best_dist {
                best = i;
                best_dist = d;
            }
        }
        best
    }
}

// ── Lloyd k-means ───────────────────────────────────────────────────────────

/// One assignment + update pass over sorted values and sorted centers.
///
/// Returns the non-empty cluster means in ascending order. The two-pointer
/// sweep is exact because both sequences ascend: the nearest center index
/// is nondecreasing in the value, with ties kept at the lower index.
fn lloyd_step(sorted: &[f32], centers: &[f32]) -> Vec<f32> {
    let mut sums = vec![0.0f64; centers.len()];
    let mut counts = vec![0u64; centers.len()];
    let mut j = 0;
    for &v in sorted {
        while j + 1 < centers.len() && (v - centers[j + 1]).abs() < (v - centers[j]).abs() {
            j += 1;
        }
        sums[j] += v as f64;
        counts[j] += 1;
    }
    let mut next: Vec<f32> = sums
        .iter()
        .zip(&counts)
        .filter(|&(_, &n)| n > 0)
        .map(|(&s, &n)| (s / n as f64) as f32)
        .collect();
    next.dedup();
    next
}

/// Clusters the nonzero values of a sorted slice into at most `m` centers.
fn cluster_nonzero(sorted: &[f32], m: usize) -> Vec<f32> {
    if sorted.is_empty() {
        return Vec::new();
    }
    let lo = sorted[0];
    let hi = *sorted.last().unwrap();
    let mut centers: Vec<f32> = if m == 1 {
        vec![(lo + hi) / 2.0]
    } else {
        (0..m)
            .map(|i| {
                if i == 0 {
                    lo
                } else if i == m - 1 {
                    hi
                } else {
                    lo + (hi - lo) * i as f32 / (m - 1) as f32
                }
            })
            .collect()
    };
    centers.dedup();
    for _ in 0..KMEANS_MAX_ITERS {
        let next = lloyd_step(sorted, &centers);
        let moved = if next.len() == centers.len() {
            next.iter()
                .zip(&centers)
                .map(|(a, b)| (a - b).abs())
                .fold(0.0f32, f32::max)
        } else {
            f32::INFINITY
        };
        centers = next;
        if moved <= KMEANS_TOLERANCE {
            break;
        }
    }
    centers
}

/// Builds a codebook for `values` and maps each one to its center index.
///
/// The codebook holds the reserved 0.0 at index 0 followed by at most
/// `2^r − 1` nonzero centers in ascending order. Exact-zero inputs map to
/// index 0; everything else maps to its nearest center (which can itself
/// be the zero center for values straddling it).
pub fn quantize(values: &[f32], quant_bits: u8) -> Result<(Codebook, Vec<u16>), CodecError> {
    if quant_bits < 1 || quant_bits > 15 {
        return Err(CodecError::InvalidConfig(
            "quant_bits must be in 1..=15".into(),
        ));
    }
    if values.iter().any(|v| !v.is_finite()) {
        return Err(CodecError::InvalidInput("values must be finite".into()));
    }

    let mut nonzero: Vec<f32> = values.iter().copied().filter(|&v| v != 0.0).collect();
    nonzero.sort_unstable_by(f32::total_cmp);
    let mut distinct = nonzero.clone();
    distinct.dedup();
    let m = distinct.len().min((1usize << quant_bits) - 1);

    let mut centers = vec![0.0f32];
    centers.extend(cluster_nonzero(&nonzero, m).into_iter().filter(|&c| c != 0.0));
    let codebook = Codebook {
        quant_bits,
        centers,
        zero_index: 0,
    };
    debug_assert!(codebook.validate().is_ok());

    let indices = values
        .iter()
        .map(|&v| codebook.nearest_index(v) as u16)
        .collect();
    Ok((codebook, indices))
}

// ── Tests ───────────────────────────────────────────────────────────────────
