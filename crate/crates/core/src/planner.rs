//! Batch-size planning as a dynamic program.
//!
//! A configuration ⟨i, B, A⟩ stands for "layer i runs with batch B while A
//! bytes are reserved elsewhere". Its cost is the best total time for
//! pushing one batch of B images through layers 0..=i:
//!
//! ```text
//! OPT(i, B, A) = Time(i, B) + min over b | B of (B/b) · OPT(i−1, b, A + IN(i, B−b))
//! ```
//!
//! because a batch of B at layer i is assembled from B/b phases of the
//! prefix at batch b, and the staged phase outputs (up to B−b columns)
//! stay resident while the prefix runs. A configuration is feasible when
//! `A + IN(i,B) + WS(i) + OUT(i,B) ≤ TOT`; infeasible cells cost ∞, and
//! when a latency threshold is set any cell above it also becomes ∞.
//!
//! The memory axis is discretized to `memory_step`-byte units with the
//! staged term rounded *up*, so a plan read out of the table can only
//! over-reserve: every emitted plan also satisfies the exact byte
//! accounting. Extraction picks the outermost batch by realized total
//! time for the requested image count, re-planning any remainder
//! recursively.

use alloc::boxed::Box;
use alloc::collections::BTreeMap;
use alloc::format;
use alloc::string::String;
use alloc::vec;
use alloc::vec::Vec;
use core::fmt;

use crate::profile::{LayerProfile, ProfileStore};

/// Default memory-axis discretization: 100 KiB.
pub const DEFAULT_MEMORY_STEP: u64 = 100 * 1024;

/// Hard cap on table cells; larger instances are refused.
const MAX_TABLE_CELLS: u128 = 1 << 26;

// ── Errors ──────────────────────────────────────────────────────────────────

/// Errors raised while building or reading plans.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum PlannerError {
    /// A layer has no measurement at a required batch size.
    MissingProfile { layer: usize, batch: u32 },
    /// No batch size is measured for every layer.
    EmptyGrid,
    /// The table or search space exceeds the supported size.
    InstanceTooLarge(String),
    /// Every assignment violates a constraint; the message names the
    /// tightest one.
    NoFeasiblePlan(String),
    /// The constraints or profile records are malformed.
    InvalidConstraints(String),
}

impl fmt::Display for PlannerError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            PlannerError::MissingProfile { layer, batch } => {
                write!(f, "layer {layer} has no measurement at batch {batch}")
            }
            PlannerError::EmptyGrid => write!(f, "no batch size is measured for every layer"),
            PlannerError::InstanceTooLarge(msg) => write!(f, "instance too large: {msg}"),
            PlannerError::NoFeasiblePlan(msg) => write!(f, "no feasible plan: {msg}"),
            PlannerError::InvalidConstraints(msg) => write!(f, "invalid constraints: {msg}"),
        }
    }
}

impl core::error::Error for PlannerError {}

// ── Constraints ─────────────────────────────────────────────────────────────

/// Resource limits and the work the plan must cover.
#[derive(Debug, Clone, PartialEq)]
pub struct PlannerConstraints {
    /// Total memory available for inference, bytes.
    pub total_bytes: u64,
    /// Optional per-batch latency ceiling, milliseconds.
    pub latency_ms: Option<f32>,
    /// Number of images the plan must process.
    pub requested: u32,
    /// Discretization of the reserved-memory axis, bytes.
    pub memory_step: u64,
}

impl PlannerConstraints {
    /// Limits with the default memory step and no latency ceiling.
    pub fn new(total_bytes: u64, requested: u32) -> Self {
        Self {
            total_bytes,
            latency_ms: None,
            requested,
            memory_step: DEFAULT_MEMORY_STEP,
        }
    }

    fn validate(&self) -> Result<(), PlannerError> {
        if self.memory_step == 0 {
            return Err(PlannerError::InvalidConstraints(
                "memory step must be positive".into(),
            ));
        }
        if self.requested == 0 {
            return Err(PlannerError::InvalidConstraints(
                "at least one image must be requested".into(),
            ));
        }
        if let Some(thr) = self.latency_ms {
            if !thr.is_finite() || thr < 0.0 {
                return Err(PlannerError::InvalidConstraints(
                    "latency threshold must be finite and nonnegative".into(),
                ));
            }
        }
        Ok(())
    }
}

// ── Feasibility ─────────────────────────────────────────────────────────────

fn feasible_bytes(layer: &LayerProfile, batch: u32, reserved: u64, tot: u64) -> bool {
    reserved
        .checked_add(layer.in_bytes(batch))
        .and_then(|s| s.checked_add(layer.ws_bytes))
        .and_then(|s| s.checked_add(layer.out_bytes(batch)))
        .map(|s| s <= tot)
        .unwrap_or(false)
}

/// Whether layer `layer` can run at `batch` with `reserved_bytes` held
/// elsewhere: `reserved + IN + WS + OUT ≤ total`, inclusive.
pub fn feasible(
    layer: &LayerProfile,
    batch: u32,
    reserved_bytes: u64,
    constraints: &PlannerConstraints,
) -> Result<bool, PlannerError> {
    if layer.time(batch).is_none() {
        return Err(PlannerError::MissingProfile {
            layer: layer.index,
            batch,
        });
    }
    Ok(feasible_bytes(layer, batch, reserved_bytes, constraints.total_bytes))
}

fn checked_layers<'a>(store: &'a ProfileStore) -> Result<&'a [LayerProfile], PlannerError> {
    if store.layers.is_empty() {
        return Err(PlannerError::InvalidConstraints(
            "the profile has no layers".into(),
        ));
    }
    for (i, layer) in store.layers.iter().enumerate() {
        if layer.index != i {
            return Err(PlannerError::InvalidConstraints(format!(
                "layer records must be consecutive from zero; position {i} holds index {}",
                layer.index
            )));
        }
    }
    Ok(&store.layers)
}

fn common_grid(store: &ProfileStore, constraints: &PlannerConstraints) -> Result<Vec<u32>, PlannerError> {
    let mut grid = store.batch_grid();
    grid.retain(|&b| b >= 1 && b <= constraints.requested);
    if grid.is_empty() {
        return Err(PlannerError::EmptyGrid);
    }
    Ok(grid)
}

fn layer_time(layer: &LayerProfile, batch: u32) -> Result<f32, PlannerError> {
    let t = layer.time(batch).ok_or(PlannerError::MissingProfile {
        layer: layer.index,
        batch,
    })?;
    if !t.is_finite() || t < 0.0 {
        return Err(PlannerError::InvalidConstraints(format!(
            "layer {} has a non-finite or negative time at batch {batch}",
            layer.index
        )));
    }
    Ok(t as f32)
}

// ── Table construction ──────────────────────────────────────────────────────

/// The filled cost table plus everything needed to read plans out of it.
#[derive(Debug, Clone)]
pub struct PlanTable {
    profiles: ProfileStore,
    grid: Vec<u32>,
    a_len: usize,
    step: u64,
    cells: Vec<f32>,
    choice: Vec<u16>,
}

impl PlanTable {
    /// The batch sizes spanning the table's B axis, ascending.
    pub fn grid(&self) -> &[u32] {
        &self.grid
    }

    /// Number of reserved-memory grid points (the A axis).
    pub fn a_units(&self) -> usize {
        self.a_len
    }

    /// Number of layers (the i axis).
    pub fn layer_count(&self) -> usize {
        self.profiles.layers.len()
    }

    /// Bytes held by the cost cells themselves.
    pub fn cell_storage_bytes(&self) -> u64 {
        (self.cells.len() * core::mem::size_of::<f32>()) as u64
    }

    fn idx(&self, layer: usize, bi: usize, a: usize) -> usize {
        (layer * self.grid.len() + bi) * self.a_len + a
    }

    /// The cost of configuration ⟨layer, batch, a_units⟩; infinite when
    /// infeasible, `None` when the coordinates are off the table.
    pub fn value(&self, layer: usize, batch: u32, a_units: usize) -> Option<f32> {
        let bi = self.grid.iter().position(|&g| g == batch)?;
        if layer >= self.layer_count() || a_units >= self.a_len {
            return None;
        }
        Some(self.cells[self.idx(layer, bi, a_units)])
    }

    /// Best cost and per-layer batch chain for one round with outermost
    /// batch `batch`, read from the filled table.
    pub fn round_solution(&self, batch: u32) -> Option<(f32, Vec<u32>)> {
        let f = self.layer_count();
        let bi = self.grid.iter().position(|&g| g == batch)?;
        let cost = self.cells[self.idx(f - 1, bi, 0)];
        if !cost.is_finite() {
            return None;
        }
        let mut chain = vec![0u32; f];
        chain[f - 1] = batch;
        let (mut bi, mut a) = (bi, 0usize);
        for i in (1..f).rev() {
            let ch = self.choice[self.idx(i, bi, a)];
            if ch == u16::MAX {
                return None;
            }
            let b = self.grid[ch as usize];
            chain[i - 1] = b;
            let staged = self.profiles.layers[i].in_bytes(chain[i] - b);
            a += staged.div_ceil(self.step) as usize;
            bi = ch as usize;
        }
        Some((cost, chain))
    }
}

/// Fills the whole OPT table bottom-up.
pub fn build_table(
    store: &ProfileStore,
    constraints: &PlannerConstraints,
) -> Result<PlanTable, PlannerError> {
    constraints.validate()?;
    let layers = checked_layers(store)?;
    let grid = common_grid(store, constraints)?;
    if grid.len() >= u16::MAX as usize {
        return Err(PlannerError::InstanceTooLarge(format!(
            "{} batch sizes exceed the supported grid width",
            grid.len()
        )));
    }
    let f = layers.len();
    let step = constraints.memory_step;
    let a_len = (constraints.total_bytes / step) as usize + 1;
    let cell_count = f as u128 * grid.len() as u128 * a_len as u128;
    if cell_count > MAX_TABLE_CELLS {
        return Err(PlannerError::InstanceTooLarge(format!(
            "{cell_count} cells ({f} layers x {} batches x {a_len} memory steps)",
            grid.len()
        )));
    }

    let mut table = PlanTable {
        profiles: store.clone(),
        grid,
        a_len,
        step,
        cells: vec![f32::INFINITY; cell_count as usize],
        choice: vec![u16::MAX; cell_count as usize],
    };

    for i in 0..f {
        let layer = &layers[i];
        for (bi, &batch) in table.grid.iter().enumerate() {
            let t = layer_time(layer, batch)?;
            for a in 0..a_len {
                if !feasible_bytes(layer, batch, a as u64 * step, constraints.total_bytes) {
                    continue;
                }
                let mut best = f32::INFINITY;
                let mut best_choice = u16::MAX;
                if i == 0 {
                    best = t;
                } else {
                    for (bj, &b) in table.grid[..=bi].iter().enumerate() {
                        if batch % b != 0 {
                            continue;
                        }
                        let staged = layer.in_bytes(batch - b);
                        let a2 = a as u64 + staged.div_ceil(step);
                        if a2 >= a_len as u64 {
                            continue;
                        }
                        let prev = table.cells[table.idx(i - 1, bj, a2 as usize)];
                        if !prev.is_finite() {
                            continue;
                        }
                        let cand = t + (batch / b) as f32 * prev;
                        if cand <= best {
                            best = cand;
                            best_choice = bj as u16;
                        }
                    }
                }
                if let Some(thr) = constraints.latency_ms {
                    if best > thr {
                        best = f32::INFINITY;
                        best_choice = u16::MAX;
                    }
                }
                let at = table.idx(i, bi, a);
                table.cells[at] = best;
                table.choice[at] = best_choice;
            }
        }
    }
    Ok(table)
}

/// Recomputes one cell by direct recursion over the same discretized
/// recurrence, independently of the table's fill order and layout.
pub fn reference_cell_value(
    store: &ProfileStore,
    constraints: &PlannerConstraints,
    layer: usize,
    batch: u32,
    a_units: usize,
) -> Result<f32, PlannerError> {
    constraints.validate()?;
    let layers = checked_layers(store)?;
    let grid = common_grid(store, constraints)?;
    let step = constraints.memory_step;
    let a_len = (constraints.total_bytes / step) as usize + 1;

    fn rec(
        layers: &[LayerProfile],
        grid: &[u32],
        tot: u64,
        step: u64,
        a_len: usize,
        thr: Option<f32>,
        i: usize,
        batch: u32,
        a: usize,
    ) -> Result<f32, PlannerError> {
        let t = layer_time(&layers[i], batch)?;
        if !feasible_bytes(&layers[i], batch, a as u64 * step, tot) {
            return Ok(f32::INFINITY);
        }
        let mut best = f32::INFINITY;
        if i == 0 {
            best = t;
        } else {
            for &b in grid.iter().filter(|&&b| b <= batch) {
                if batch % b != 0 {
                    continue;
                }
                let staged = layers[i].in_bytes(batch - b);
                let a2 = a as u64 + staged.div_ceil(step);
                if a2 >= a_len as u64 {
                    continue;
                }
                let prev = rec(layers, grid, tot, step, a_len, thr, i - 1, b, a2 as usize)?;
                if !prev.is_finite() {
                    continue;
                }
                let cand = t + (batch / b) as f32 * prev;
                if cand <= best {
                    best = cand;
                }
            }
        }
        if let Some(thr) = thr {
            if best > thr {
                best = f32::INFINITY;
            }
        }
        Ok(best)
    }

    if !grid.contains(&batch) {
        return Err(PlannerError::MissingProfile { layer, batch });
    }
    rec(
        layers,
        &grid,
        constraints.total_bytes,
        step,
        a_len,
        constraints.latency_ms,
        layer,
        batch,
        a_units,
    )
}

// ── Plans ───────────────────────────────────────────────────────────────────

/// One layer's slot in a plan.
#[derive(Debug, Clone, PartialEq)]
pub struct LayerAssignment {
    /// Layer position, 0-based.
    pub index: usize,
    /// Layer name, echoed from the profile.
    pub name: String,
    /// Batch size this layer runs at.
    pub batch: u32,
    /// Executions of this layer per execution of the next one.
    pub phases: u32,
    /// Predicted time this layer contributes to one outermost round.
    pub predicted_ms: f64,
}

/// A complete batch assignment for a requested image count.
#[derive(Debug, Clone, PartialEq)]
pub struct BatchPlan {
    /// Images this plan (level) covers.
    pub requested: u32,
    /// Rounds of the outermost batch.
    pub rounds: u32,
    /// Per-layer assignments, innermost (layer 0) first; batches are
    /// nondecreasing and each divides the next.
    pub layers: Vec<LayerAssignment>,
    /// Predicted time of one outermost round.
    pub round_ms: f32,
    /// Predicted time for all rounds including the remainder.
    pub total_ms: f32,
    /// Simulated peak memory across this plan and its remainder.
    pub peak_bytes: u64,
    /// Plan for the `requested mod outer_batch` leftover images.
    pub remainder: Option<Box<BatchPlan>>,
}

impl BatchPlan {
    /// The outermost (final-layer) batch size.
    pub fn outer_batch(&self) -> u32 {
        self.layers.last().map(|l| l.batch).unwrap_or(0)
    }

    /// Images per second implied by the predicted total time.
    pub fn throughput_per_s(&self) -> f64 {
        self.requested as f64 * 1000.0 / self.total_ms as f64
    }

    /// Re-derives every invariant of the plan against the profile and
    /// constraints: shape, divisibility, costs, latency, and the exact
    /// byte-level peak.
    pub fn validate(
        &self,
        store: &ProfileStore,
        constraints: &PlannerConstraints,
    ) -> Result<(), PlannerError> {
        let layers = checked_layers(store)?;
        if self.layers.len() != layers.len() {
            return Err(PlannerError::InvalidConstraints(format!(
                "plan covers {} layers, profile has {}",
                self.layers.len(),
                layers.len()
            )));
        }
        let chain: Vec<u32> = self.layers.iter().map(|l| l.batch).collect();
        for (i, slot) in self.layers.iter().enumerate() {
            if slot.index != i || slot.name != layers[i].name {
                return Err(PlannerError::InvalidConstraints(format!(
                    "plan layer {i} does not match the profile"
                )));
            }
            if slot.batch == 0 {
                return Err(PlannerError::InvalidConstraints("zero batch".into()));
            }
            let next = chain.get(i + 1).copied().unwrap_or(slot.batch);
            if next % slot.batch != 0 || next < slot.batch {
                return Err(PlannerError::InvalidConstraints(format!(
                    "batch {} at layer {i} does not divide the next layer's {next}",
                    slot.batch
                )));
            }
            let phases = if i + 1 < chain.len() { next / slot.batch } else { 1 };
            if slot.phases != phases {
                return Err(PlannerError::InvalidConstraints(format!(
                    "layer {i} claims {} phases, expected {phases}",
                    slot.phases
                )));
            }
        }
        let round = round_cost(layers, &chain).unwrap_or(f32::INFINITY);
        if round != self.round_ms {
            return Err(PlannerError::InvalidConstraints(format!(
                "round time {round} does not match the recorded {}",
                self.round_ms
            )));
        }
        if let Some(thr) = constraints.latency_ms {
            if self.round_ms > thr {
                return Err(PlannerError::NoFeasiblePlan(format!(
                    "round takes {} ms, over the {thr} ms threshold",
                    self.round_ms
                )));
            }
        }
        if self.rounds == 0 || self.rounds != self.requested / self.outer_batch() {
            return Err(PlannerError::InvalidConstraints(format!(
                "{} rounds of {} do not cover {} images",
                self.rounds,
                self.outer_batch(),
                self.requested
            )));
        }
        let leftover = self.requested % self.outer_batch();
        let mut total = self.rounds as f32 * self.round_ms;
        let mut peak = simulate_peak(store, &chain);
        match (&self.remainder, leftover) {
            (None, 0) => {}
            (Some(rem), n) if n > 0 => {
                if rem.requested != n {
                    return Err(PlannerError::InvalidConstraints(format!(
                        "remainder covers {} images, expected {n}",
                        rem.requested
                    )));
                }
                rem.validate(store, constraints)?;
                total += rem.total_ms;
                peak = peak.max(rem.peak_bytes);
            }
            _ => {
                return Err(PlannerError::InvalidConstraints(
                    "remainder plan does not match the leftover image count".into(),
                ));
            }
        }
        if total != self.total_ms {
            return Err(PlannerError::InvalidConstraints(format!(
                "total time {total} does not match the recorded {}",
                self.total_ms
            )));
        }
        if peak != self.peak_bytes {
            return Err(PlannerError::InvalidConstraints(format!(
                "peak {peak} bytes does not match the recorded {}",
                self.peak_bytes
            )));
        }
        if peak > constraints.total_bytes {
            return Err(PlannerError::NoFeasiblePlan(format!(
                "peak {peak} bytes exceeds the {} byte budget",
                constraints.total_bytes
            )));
        }
        Ok(())
    }
}

/// Cost of one round of a batch chain, folded exactly as the recurrence
/// folds it (innermost layer first, all f32).
fn round_cost(layers: &[LayerProfile], chain: &[u32]) -> Option<f32> {
    let mut acc = layer_time(&layers[0], chain[0]).ok()?;
    for i in 1..layers.len() {
        let t = layer_time(&layers[i], chain[i]).ok()?;
        acc = t + (chain[i] / chain[i - 1]) as f32 * acc;
    }
    Some(acc)
}

/// Exact peak bytes of executing one round of `chain`: for each layer,
/// the staged inputs of all later layers plus its own live buffers.
pub fn simulate_peak(store: &ProfileStore, chain: &[u32]) -> u64 {
    let mut reserved = 0u64;
    let mut peak = 0u64;
    for i in (0..chain.len()).rev() {
        let layer = &store.layers[i];
        let own = reserved
            .saturating_add(layer.in_bytes(chain[i]))
            .saturating_add(layer.ws_bytes)
            .saturating_add(layer.out_bytes(chain[i]));
        peak = peak.max(own);
        if i > 0 {
            reserved = reserved.saturating_add(layer.in_bytes(chain[i] - chain[i - 1]));
        }
    }
    peak
}

// ── Plan assembly ───────────────────────────────────────────────────────────

/// Realized totals memo: image count → (best total, chosen outer batch).
type TotalsMemo = BTreeMap<u32, Option<(f32, u32)>>;

fn best_total<F>(grid: &[u32], opt: &F, memo: &mut TotalsMemo, k: u32) -> Option<(f32, u32)>
where
    F: Fn(u32) -> Option<(f32, Vec<u32>)>,
{
    if k == 0 {
        return Some((0.0, 0));
    }
    if let Some(hit) = memo.get(&k) {
        return *hit;
    }
    let mut best: Option<(f32, u32)> = None;
    for &b in grid.iter().filter(|&&b| b <= k) {
        let Some((cost, _)) = opt(b) else { continue };
        let rounds = k / b;
        let Some((rest, _)) = best_total(grid, opt, memo, k % b) else {
            continue;
        };
        let total = rounds as f32 * cost + rest;
        if best.map_or(true, |(t, _)| total <= t) {
            best = Some((total, b));
        }
    }
    memo.insert(k, best);
    best
}

fn assemble_level<F>(
    store: &ProfileStore,
    grid: &[u32],
    opt: &F,
    memo: &mut TotalsMemo,
    k: u32,
) -> BatchPlan
where
    F: Fn(u32) -> Option<(f32, Vec<u32>)>,
{
    let (total, outer) = best_total(grid, opt, memo, k).expect("checked feasible");
    let (cost, chain) = opt(outer).expect("chosen batch is solvable");
    let f = chain.len();
    let layers: Vec<LayerAssignment> = (0..f)
        .map(|i| LayerAssignment {
            index: i,
            name: store.layers[i].name.clone(),
            batch: chain[i],
            phases: if i + 1 < f { chain[i + 1] / chain[i] } else { 1 },
            predicted_ms: store.layers[i].time(chain[i]).unwrap_or(f64::NAN)
                * (outer / chain[i]) as f64,
        })
        .collect();
    let leftover = k % outer;
    let remainder = (leftover > 0)
        .then(|| Box::new(assemble_level(store, grid, opt, memo, leftover)));
    let peak = simulate_peak(store, &chain)
        .max(remainder.as_ref().map_or(0, |r| r.peak_bytes));
    BatchPlan {
        requested: k,
        rounds: k / outer,
        layers,
        round_ms: cost,
        total_ms: total,
        peak_bytes: peak,
        remainder,
    }
}

fn diagnose(store: &ProfileStore, constraints: &PlannerConstraints, grid: &[u32]) -> String {
    let mut worst: Option<(&LayerProfile, u64)> = None;
    for layer in &store.layers {
        let need = grid
            .iter()
            .map(|&b| {
                layer
                    .in_bytes(b)
                    .saturating_add(layer.ws_bytes)
                    .saturating_add(layer.out_bytes(b))
            })
            .min()
            .unwrap_or(u64::MAX);
        if worst.map_or(true, |(_, w)| need > w) {
            worst = Some((layer, need));
        }
    }
    if let Some((layer, need)) = worst {
        if need > constraints.total_bytes {
            return format!(
                "layer {} ({}) needs at least {need} bytes but only {} are available",
                layer.index, layer.name, constraints.total_bytes
            );
        }
    }
    if let Some(thr) = constraints.latency_ms {
        return format!("no assignment finishes a batch within the {thr} ms latency threshold");
    }
    format!(
        "{} images cannot be decomposed into feasible measured batch sizes",
        constraints.requested
    )
}

fn assemble<F>(
    store: &ProfileStore,
    constraints: &PlannerConstraints,
    grid: &[u32],
    opt: F,
) -> Result<BatchPlan, PlannerError>
where
    F: Fn(u32) -> Option<(f32, Vec<u32>)>,
{
    let mut memo = TotalsMemo::new();
    if best_total(grid, &opt, &mut memo, constraints.requested).is_none() {
        return Err(PlannerError::NoFeasiblePlan(diagnose(store, constraints, grid)));
    }
    Ok(assemble_level(store, grid, &opt, &mut memo, constraints.requested))
}

// ── Entry points ────────────────────────────────────────────────────────────

/// Reads the best plan for the requested image count out of a filled
/// table, choosing the outermost batch by realized total time and
/// re-planning remainders recursively. `constraints` must be the ones the
/// table was built with.
pub fn best_plan(
    table: &PlanTable,
    constraints: &PlannerConstraints,
) -> Result<BatchPlan, PlannerError> {
    constraints.validate()?;
    let grid: Vec<u32> = table
        .grid
        .iter()
        .copied()
        .filter(|&b| b <= constraints.requested)
        .collect();
    if grid.is_empty() {
        return Err(PlannerError::EmptyGrid);
    }
    assemble(&table.profiles, constraints, &grid, |b| table.round_solution(b))
}

/// The throughput-best plan that runs *every* layer at one constant batch
/// size, with the same remainder handling as the dynamic program. Used as
/// the comparison baseline.
pub fn fixed_batch_baseline(
    store: &ProfileStore,
    constraints: &PlannerConstraints,
) -> Result<BatchPlan, PlannerError> {
    constraints.validate()?;
    let layers = checked_layers(store)?;
    let grid = common_grid(store, constraints)?;
    let tot = constraints.total_bytes;
    let thr = constraints.latency_ms;
    assemble(store, constraints, &grid, move |b| {
        let mut acc = 0.0f32;
        for (i, layer) in layers.iter().enumerate() {
            if !feasible_bytes(layer, b, 0, tot) {
                return None;
            }
            let t = layer_time(layer, b).ok()?;
            acc = if i == 0 { t } else { t + acc };
            if thr.is_some_and(|thr| acc > thr) {
                return None;
            }
        }
        Some((acc, vec![b; layers.len()]))
    })
}

/// Exhaustive oracle: enumerates every monotone, divisibility-respecting
/// batch assignment with exact byte-level memory simulation. Only for
/// small instances.
pub fn brute_force_plan(
    store: &ProfileStore,
    constraints: &PlannerConstraints,
) -> Result<BatchPlan, PlannerError> {
    constraints.validate()?;
    let layers = checked_layers(store)?;
    let grid = common_grid(store, constraints)?;
    if layers.len() > 5 {
        return Err(PlannerError::InstanceTooLarge(format!(
            "{} layers; the oracle handles at most 5",
            layers.len()
        )));
    }
    if grid.len() > 8 {
        return Err(PlannerError::InstanceTooLarge(format!(
            "{} batch sizes; the oracle handles at most 8",
            grid.len()
        )));
    }
    let a_len = constraints.total_bytes / constraints.memory_step + 1;
    if a_len > 32 {
        return Err(PlannerError::InstanceTooLarge(format!(
            "{a_len} memory steps; the oracle handles at most 32"
        )));
    }

    let tot = constraints.total_bytes;
    let thr = constraints.latency_ms;
    let search_grid = grid.clone();

    fn rec(
        layers: &[LayerProfile],
        grid: &[u32],
        tot: u64,
        thr: Option<f32>,
        i: usize,
        batch: u32,
        staged: u64,
        chain: &mut [u32],
    ) -> f32 {
        let Ok(t) = layer_time(&layers[i], batch) else {
            return f32::INFINITY;
        };
        if !feasible_bytes(&layers[i], batch, staged, tot) {
            return f32::INFINITY;
        }
        chain[i] = batch;
        let mut best = f32::INFINITY;
        if i == 0 {
            best = t;
        } else {
            let mut best_sub: Vec<u32> = Vec::new();
            for &b in grid.iter().filter(|&&b| b <= batch) {
                if batch % b != 0 {
                    continue;
                }
                let staged2 = staged.saturating_add(layers[i].in_bytes(batch - b));
                let mut sub = vec![0u32; i];
                let prev = rec(layers, grid, tot, thr, i - 1, b, staged2, &mut sub);
                if !prev.is_finite() {
                    continue;
                }
                let cand = t + (batch / b) as f32 * prev;
                if cand <= best {
                    best = cand;
                    best_sub = sub;
                }
            }
            if best.is_finite() {
                chain[..i].copy_from_slice(&best_sub);
            }
        }
        if thr.is_some_and(|thr| best > thr) {
            return f32::INFINITY;
        }
        best
    }

    assemble(store, constraints, &grid, move |b| {
        let mut chain = vec![0u32; layers.len()];
        let cost = rec(layers, &search_grid, tot, thr, layers.len() - 1, b, 0, &mut chain);
        cost.is_finite().then_some((cost, chain))
    })
}

// ── Tests ───────────────────────────────────────────────────────────────────
