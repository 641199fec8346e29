//! Measured per-layer cost profiles.
//!
//! The planner never touches a network directly: it works from a profile
//! that records, for each layer and each batch size on a measurement grid,
//! the wall time of one execution plus the fixed byte sizes of the layer's
//! inputs, outputs, and decode workspace. Activations are 4-byte floats,
//! so moving a batch of `B` columns across a layer boundary costs
//! `features · B · 4` bytes.

use alloc::collections::BTreeMap;
use alloc::string::String;
use alloc::vec::Vec;

/// Bytes per activation element.
pub const ELEM_BYTES: u64 = 4;

// ── Records ─────────────────────────────────────────────────────────────────

/// Costs of one layer across the measured batch grid.
#[derive(Debug, Clone, PartialEq)]
pub struct LayerProfile {
    /// Position in the network, 0-based.
    pub index: usize,
    /// Human-readable layer name.
    pub name: String,
    /// Features per input column.
    pub in_features: usize,
    /// Features per output column.
    pub out_features: usize,
    /// Decode workspace bytes; batch-independent.
    pub ws_bytes: u64,
    /// Wall time in milliseconds per measured batch size.
    pub time_ms: BTreeMap<u32, f64>,
    /// Portion of the wall time spent decoding blocks.
    pub decode_ms: BTreeMap<u32, f64>,
    /// Portion of the wall time spent in arithmetic.
    pub compute_ms: BTreeMap<u32, f64>,
}

impl LayerProfile {
    /// A profile with an empty measurement grid.
    pub fn new(
        index: usize,
        name: String,
        in_features: usize,
        out_features: usize,
        ws_bytes: u64,
    ) -> Self {
        Self {
            index,
            name,
            in_features,
            out_features,
            ws_bytes,
            time_ms: BTreeMap::new(),
            decode_ms: BTreeMap::new(),
            compute_ms: BTreeMap::new(),
        }
    }

    /// Records one measurement.
    pub fn insert(&mut self, batch: u32, time_ms: f64, decode_ms: f64, compute_ms: f64) {
        self.time_ms.insert(batch, time_ms);
        self.decode_ms.insert(batch, decode_ms);
        self.compute_ms.insert(batch, compute_ms);
    }

    /// Wall time at `batch`, if measured.
    pub fn time(&self, batch: u32) -> Option<f64> {
        self.time_ms.get(&batch).copied()
    }

    /// Bytes of an input batch of `batch` columns.
    pub fn in_bytes(&self, batch: u32) -> u64 {
        self.in_features as u64 * batch as u64 * ELEM_BYTES
    }

    /// Bytes of an output batch of `batch` columns.
    pub fn out_bytes(&self, batch: u32) -> u64 {
        self.out_features as u64 * batch as u64 * ELEM_BYTES
    }
}

/// How and when a profile was captured.
#[derive(Debug, Clone, PartialEq, Eq, Default)]
pub struct ProfileMeta {
    /// Worker threads used while measuring.
    pub threads: usize,
    /// Capture time, RFC 3339.
    pub timestamp: String,
    /// Free-form capture notes.
    pub notes: String,
}

/// A complete profile: every layer of one network.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct ProfileStore {
    /// Network the profile describes.
    pub network: String,
    /// Capture metadata.
    pub meta: ProfileMeta,
    /// Layer records ordered by `index`.
    pub layers: Vec<LayerProfile>,
}

impl ProfileStore {
    /// Batch sizes measured for *every* layer, ascending.
    pub fn batch_grid(&self) -> Vec<u32> {
        let mut grid: Vec<u32> = match self.layers.first() {
            Some(first) => first.time_ms.keys().copied().collect(),
            None => return Vec::new(),
        };
        for layer in &self.layers[1..] {
            grid.retain(|b| layer.time_ms.contains_key(b));
        }
        grid
    }

    /// The layer at `index`, if present.
    pub fn layer(&self, index: usize) -> Option<&LayerProfile> {
        self.layers.iter().find(|l| l.index == index)
    }
}

// ── Measurement grids ───────────────────────────────────────────────────────

/// Batch sizes worth measuring up to `max`: every divisor of `max` plus
/// every power of two below it. The result is divisor-closed — each
/// element's divisors all appear — so any batch a plan splits into stays
/// on the grid.
pub fn divisor_closed_grid(max: u32) -> Vec<u32> {
    let mut grid = Vec::new();
    for d in 1..=max {
        if max % d == 0 {
            grid.push(d);
        }
    }
    let mut p = 1u32;
    while p <= max {
        if max % p != 0 {
            grid.push(p);
        }
        match p.checked_mul(2) {
            Some(next) => p = next,
            None => break,
        }
    }
    grid.sort_unstable();
    grid
}

// ── Tests ───────────────────────────────────────────────────────────────────
