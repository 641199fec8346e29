//! Network execution: staged batch schedules under a live-memory audit.
//!
//! A plan assigns each layer a batch size; layer `i` gathers its `B_i`
//! inputs by running the previous layer `B_i / B_{i-1}` times (phases). All
//! but the last phase land in a staging buffer reserved up front, so while
//! the earlier layers re-run, exactly `B_i − B_{i-1}` finished columns sit
//! waiting. Every activation buffer, staging area, and decode workspace is
//! charged to a byte counter; crossing the configured budget aborts the run.
//! Images and final predictions live outside the budget — they model the
//! request stream, not working state.

use std::ops::Range;
use std::time::Instant;

use cramnet_core::kernels::ops::{
    im2col_chunk, lrn_into, max_pool_into, relu_into, ConvGeom, LrnParams, PoolGeom,
};
use cramnet_core::kernels::{
    accumulate_grid_rows, accumulate_grid_rows_raw, add_bias_columns, total_batch, OutPtr,
};
use cramnet_core::{ActivationMatrix, BatchPlan, CompressedModel, EncodedLayer, WorkBuffer};

use crate::error::CliError;
use crate::network::{LayerShape, ResolvedNetwork};

/// Pixel columns lowered per chunk when a convolution runs through the
/// matrix path; bounds the im2col scratch regardless of batch size.
pub const IM2COL_CHUNK_COLS: usize = 64;

// ── Thread pool size ─────────────────────────────────────────────────────────

/// Worker count: `CRAMNET_THREADS` if set and positive, otherwise the
/// hardware parallelism.
pub fn thread_count() -> usize {
    let default = || std::thread::available_parallelism().map_or(1, |n| n.get());
    match std::env::var("CRAMNET_THREADS") {
        Ok(raw) => match raw.trim().parse::<usize>() {
            Ok(n) if n > 0 => n,
            _ => {
                eprintln!("warning: ignoring invalid CRAMNET_THREADS={raw:?}");
                default()
            }
        },
        Err(_) => default(),
    }
}

// ── Memory audit ─────────────────────────────────────────────────────────────

/// Counts live working-state bytes and enforces an optional budget.
#[derive(Debug)]
pub struct MemoryTracker {
    live: u64,
    peak: u64,
    limit: Option<u64>,
}

impl MemoryTracker {
    /// A tracker that aborts allocations past `limit`, if one is given.
    pub fn new(limit: Option<u64>) -> Self {
        Self { live: 0, peak: 0, limit }
    }

    /// Charges an allocation; exceeding the budget is a hard failure.
    pub fn alloc(&mut self, bytes: u64) -> Result<(), CliError> {
        let next = self.live.saturating_add(bytes);
        if let Some(limit) = self.limit {
            if next > limit {
                return Err(CliError::Infeasible(format!(
                    "memory budget exceeded: {next} live bytes over the {limit}-byte limit"
                )));
            }
        }
        self.live = next;
        self.peak = self.peak.max(next);
        Ok(())
    }

    /// Releases a prior charge.
    pub fn free(&mut self, bytes: u64) {
        debug_assert!(bytes <= self.live, "freeing more than is live");
        self.live = self.live.saturating_sub(bytes);
    }

    /// Currently charged bytes.
    pub fn live(&self) -> u64 {
        self.live
    }

    /// High-water mark.
    pub fn peak(&self) -> u64 {
        self.peak
    }
}

fn matrix_bytes(rows: usize, batch: usize) -> u64 {
    (rows * batch * 4) as u64
}

fn alloc_matrix(
    tracker: &mut MemoryTracker,
    rows: usize,
    batch: usize,
) -> Result<ActivationMatrix, CliError> {
    tracker.alloc(matrix_bytes(rows, batch))?;
    Ok(ActivationMatrix::zeros(rows, batch))
}

fn free_matrix(tracker: &mut MemoryTracker, m: ActivationMatrix) {
    tracker.free(matrix_bytes(m.rows(), m.batch()));
}

// ── Prepared networks ────────────────────────────────────────────────────────

/// A layer bound to its decoded geometry and, when weighted, its encoding.
#[derive(Debug)]
pub enum RuntimeKind<'m> {
    Fc { enc: &'m EncodedLayer },
    Conv { enc: &'m EncodedLayer, geom: ConvGeom, out_channels: usize },
    Relu,
    Pool(PoolGeom),
    Lrn { channels: usize, params: LrnParams },
}

/// One executable stage.
#[derive(Debug)]
pub struct RuntimeLayer<'m> {
    pub name: String,
    pub in_features: usize,
    pub out_features: usize,
    pub kind: RuntimeKind<'m>,
}

/// A network descriptor matched against a compressed model.
#[derive(Debug)]
pub struct PreparedNetwork<'m> {
    pub name: String,
    pub input_features: usize,
    pub layers: Vec<RuntimeLayer<'m>>,
}

/// Binds each weighted layer to its matrix in the model, checking that the
/// model carries exactly the expected shapes in network order.
pub fn prepare<'m>(
    net: &ResolvedNetwork,
    model: &'m CompressedModel,
) -> Result<PreparedNetwork<'m>, CliError> {
    let weighted = net.weighted_indices();
    if weighted.len() != model.layers.len() {
        return Err(CliError::Data(format!(
            "network {} has {} weighted layers but the model holds {}",
            net.name,
            weighted.len(),
            model.layers.len()
        )));
    }
    let mut encs = model.layers.iter();
    let mut layers = Vec::with_capacity(net.layers.len());
    for layer in &net.layers {
        let kind = match &layer.shape {
            LayerShape::Conv { geom, out_channels } => {
                let enc = encs.next().expect("counted above");
                check_dims(&layer.name, enc, *out_channels, geom.patch_rows())?;
                RuntimeKind::Conv { enc, geom: *geom, out_channels: *out_channels }
            }
            LayerShape::Fc { in_features, out_features } => {
                let enc = encs.next().expect("counted above");
                check_dims(&layer.name, enc, *out_features, *in_features)?;
                RuntimeKind::Fc { enc }
            }
            LayerShape::Relu => RuntimeKind::Relu,
            LayerShape::Pool(g) => RuntimeKind::Pool(*g),
            LayerShape::Lrn { channels, params } => {
                RuntimeKind::Lrn { channels: *channels, params: *params }
            }
        };
        layers.push(RuntimeLayer {
            name: layer.name.clone(),
            in_features: layer.in_features,
            out_features: layer.out_features,
            kind,
        });
    }
    Ok(PreparedNetwork {
        name: net.name.clone(),
        input_features: net.input_features(),
        layers,
    })
}

fn check_dims(
    name: &str,
    enc: &EncodedLayer,
    rows: usize,
    cols: usize,
) -> Result<(), CliError> {
    if enc.rows as usize != rows || enc.cols as usize != cols {
        return Err(CliError::Data(format!(
            "layer {name}: model matrix is {}x{}, network expects {rows}x{cols}",
            enc.rows, enc.cols
        )));
    }
    Ok(())
}

// ── Kernels under the audit ──────────────────────────────────────────────────

/// Sparse product `enc · parts` into a zeroed column-major buffer, split
/// across `threads` disjoint grid-row bands. Adds the bias once per column.
fn product_into(
    enc: &EncodedLayer,
    parts: &[&ActivationMatrix],
    out: &mut [f32],
    threads: usize,
    tracker: &mut MemoryTracker,
) -> Result<(), CliError> {
    let grid_h = enc.grid_h();
    let t = threads.clamp(1, grid_h.max(1));
    let mut bufs: Vec<WorkBuffer> = (0..t).map(|_| WorkBuffer::for_layer(enc)).collect();
    let ws: u64 = bufs.iter().map(|b| b.size_bytes()).sum();
    tracker.alloc(ws)?;
    out.fill(0.0);
    let result: Result<(), cramnet_core::KernelError> = if t == 1 {
        accumulate_grid_rows(enc, parts, 0..grid_h, out, &mut bufs[0])
    } else {
        let rows = enc.rows as usize;
        let expected = rows * total_batch(parts);
        if out.len() != expected {
            return Err(CliError::Data(format!(
                "product buffer length {} does not match {expected}",
                out.len()
            )));
        }
        let ptr = OutPtr(out.as_mut_ptr());
        std::thread::scope(|s| {
            let handles: Vec<_> = bufs
                .iter_mut()
                .enumerate()
                .map(|(w, buf)| {
                    let band = band(grid_h, t, w);
                    // SAFETY: bands are disjoint, the buffer spans all rows
                    // and columns, and it outlives the scope.
                    s.spawn(move || unsafe {
                        accumulate_grid_rows_raw(enc, parts, band, ptr, rows, buf)
                    })
                })
                .collect();
            handles
                .into_iter()
                .map(|h| h.join().expect("product worker panicked"))
                .collect()
        })
    };
    tracker.free(ws);
    result?;
    if let Some(bias) = &enc.bias {
        add_bias_columns(out, enc.rows as usize, bias);
    }
    Ok(())
}

/// The `w`-th of `t` contiguous grid-row bands.
fn band(grid_h: usize, t: usize, w: usize) -> Range<usize> {
    (grid_h * w / t)..(grid_h * (w + 1) / t)
}

/// Convolution via chunked lowering: build `IM2COL_CHUNK_COLS` patch
/// columns at a time, multiply, and scatter into activation layout.
fn conv_into(
    enc: &EncodedLayer,
    geom: &ConvGeom,
    out_channels: usize,
    parts: &[&ActivationMatrix],
    out: &mut [f32],
    threads: usize,
    tracker: &mut MemoryTracker,
) -> Result<(), CliError> {
    let ohw = geom.out_pixels();
    let total_cols = total_batch(parts) * ohw;
    let chunk = IM2COL_CHUNK_COLS.min(total_cols);
    let patch_rows = geom.patch_rows();
    let scratch = ((patch_rows + out_channels) * chunk * 4) as u64;
    tracker.alloc(scratch)?;
    let mut patch = ActivationMatrix::zeros(patch_rows, chunk);
    let mut prod = vec![0.0f32; out_channels * chunk];
    let mut lo = 0;
    while lo < total_cols {
        let hi = (lo + chunk).min(total_cols);
        let n = hi - lo;
        if n != patch.batch() {
            patch = ActivationMatrix::zeros(patch_rows, n);
        }
        im2col_chunk(parts, geom, lo..hi, patch.data_mut())?;
        product_into(enc, &[&patch], &mut prod[..out_channels * n], threads, tracker)?;
        for j in 0..n {
            let g = lo + j;
            let (b, pix) = (g / ohw, g % ohw);
            let dst = &mut out[b * out_channels * ohw..(b + 1) * out_channels * ohw];
            for ch in 0..out_channels {
                dst[ch * ohw + pix] = prod[j * out_channels + ch];
            }
        }
        lo = hi;
    }
    tracker.free(scratch);
    Ok(())
}

/// Runs one layer over activation segments, producing a fresh output
/// buffer charged to the tracker.
fn apply_layer(
    layer: &RuntimeLayer<'_>,
    parts: &[&ActivationMatrix],
    threads: usize,
    tracker: &mut MemoryTracker,
) -> Result<ActivationMatrix, CliError> {
    let batch = total_batch(parts);
    let mut out = alloc_matrix(tracker, layer.out_features, batch)?;
    match &layer.kind {
        RuntimeKind::Fc { enc } => {
            product_into(enc, parts, out.data_mut(), threads, tracker)?;
        }
        RuntimeKind::Conv { enc, geom, out_channels } => {
            conv_into(enc, geom, *out_channels, parts, out.data_mut(), threads, tracker)?;
        }
        RuntimeKind::Relu => {
            let mut off = 0;
            for part in parts {
                let len = part.data().len();
                out.data_mut()[off..off + len].copy_from_slice(part.data());
                relu_into(&mut out.data_mut()[off..off + len]);
                off += len;
            }
        }
        RuntimeKind::Pool(g) => {
            let mut off = 0;
            for part in parts {
                let len = part.batch() * layer.out_features;
                max_pool_into(part, g, &mut out.data_mut()[off..off + len])?;
                off += len;
            }
        }
        RuntimeKind::Lrn { channels, params } => {
            let mut off = 0;
            for part in parts {
                let len = part.batch() * layer.out_features;
                lrn_into(part, *channels, params, &mut out.data_mut()[off..off + len])?;
                off += len;
            }
        }
    }
    Ok(out)
}

// ── Staged execution ─────────────────────────────────────────────────────────

/// Produces layer `layer`'s output for the `chain[layer]` images starting
/// at `start`, running earlier layers in phases through a staging buffer.
fn run_layer_group(
    net: &PreparedNetwork<'_>,
    chain: &[u32],
    images: &[(String, Vec<f32>)],
    layer: usize,
    start: usize,
    threads: usize,
    tracker: &mut MemoryTracker,
) -> Result<ActivationMatrix, CliError> {
    let b_here = chain[layer] as usize;
    let stage = &net.layers[layer];
    if layer == 0 {
        let mut input = alloc_matrix(tracker, stage.in_features, b_here)?;
        for (j, (_, values)) in images[start..start + b_here].iter().enumerate() {
            input.data_mut()[j * stage.in_features..(j + 1) * stage.in_features]
                .copy_from_slice(values);
        }
        let out = apply_layer(stage, &[&input], threads, tracker)?;
        free_matrix(tracker, input);
        return Ok(out);
    }

    let b_prev = chain[layer - 1] as usize;
    let phases = b_here / b_prev;
    let staged_cols = b_here - b_prev;
    let mut staging = if staged_cols > 0 {
        Some(alloc_matrix(tracker, stage.in_features, staged_cols)?)
    } else {
        None
    };
    for p in 0..phases - 1 {
        let seg = run_layer_group(net, chain, images, layer - 1, start + p * b_prev, threads, tracker)?;
        let staging = staging.as_mut().expect("phases > 1 implies staged columns");
        let off = p * b_prev * stage.in_features;
        staging.data_mut()[off..off + seg.data().len()].copy_from_slice(seg.data());
        free_matrix(tracker, seg);
    }
    let last = run_layer_group(
        net,
        chain,
        images,
        layer - 1,
        start + (phases - 1) * b_prev,
        threads,
        tracker,
    )?;

    let out = match &staging {
        Some(s) => apply_layer(stage, &[s, &last], threads, tracker)?,
        None => apply_layer(stage, &[&last], threads, tracker)?,
    };
    if let Some(s) = staging.take() {
        free_matrix(tracker, s);
    }
    free_matrix(tracker, last);
    Ok(out)
}

/// Measurements from one execution.
#[derive(Debug, Clone)]
pub struct RunMetrics {
    pub images: usize,
    pub total_ms: f64,
    pub peak_bytes: u64,
    pub limit_bytes: Option<u64>,
    pub round_ms: Vec<f64>,
    pub threads: usize,
}

impl RunMetrics {
    /// Mean wall time per image.
    pub fn per_image_ms(&self) -> f64 {
        if self.images == 0 {
            0.0
        } else {
            self.total_ms / self.images as f64
        }
    }
}

/// Checks a plan matches the network it is about to drive.
fn check_plan(net: &PreparedNetwork<'_>, plan: &BatchPlan) -> Result<(), CliError> {
    let mut level = Some(plan);
    while let Some(p) = level {
        if p.layers.len() != net.layers.len() {
            return Err(CliError::Data(format!(
                "plan covers {} layers but network {} has {}",
                p.layers.len(),
                net.name,
                net.layers.len()
            )));
        }
        for (a, l) in p.layers.iter().zip(&net.layers) {
            if a.name != l.name {
                return Err(CliError::Data(format!(
                    "plan layer {} does not match network layer {}",
                    a.name, l.name
                )));
            }
            if a.batch == 0 {
                return Err(CliError::Data(format!("plan gives {} a zero batch", a.name)));
            }
        }
        for w in p.layers.windows(2) {
            if w[1].batch % w[0].batch != 0 {
                return Err(CliError::Data(format!(
                    "plan batch {} at {} does not divide {} at {}",
                    w[0].batch, w[0].name, w[1].batch, w[1].name
                )));
            }
        }
        let outer = p.layers.last().map_or(0, |l| l.batch);
        if p.rounds * outer + p.remainder.as_ref().map_or(0, |r| r.requested) != p.requested {
            return Err(CliError::Data(
                "plan rounds and remainder do not cover the requested images".into(),
            ));
        }
        level = p.remainder.as_deref();
    }
    Ok(())
}

/// Executes a staged plan over `images`, returning per-image outputs in
/// order plus metrics. `limit` arms the memory audit; crossing it aborts.
pub fn run_plan(
    net: &PreparedNetwork<'_>,
    plan: &BatchPlan,
    images: &[(String, Vec<f32>)],
    threads: usize,
    limit: Option<u64>,
) -> Result<(Vec<Vec<f32>>, RunMetrics), CliError> {
    check_plan(net, plan)?;
    if images.len() != plan.requested as usize {
        return Err(CliError::Data(format!(
            "plan covers {} images but {} were supplied",
            plan.requested,
            images.len()
        )));
    }
    for (_, values) in images {
        if values.len() != net.input_features {
            return Err(CliError::Data(format!(
                "image holds {} floats, network input needs {}",
                values.len(),
                net.input_features
            )));
        }
    }
    let mut tracker = MemoryTracker::new(limit);
    let mut outputs = Vec::with_capacity(images.len());
    let mut round_ms = Vec::new();
    let started = Instant::now();

    let mut level = Some(plan);
    let mut offset = 0;
    while let Some(p) = level {
        let chain: Vec<u32> = p.layers.iter().map(|l| l.batch).collect();
        let outer = *chain.last().expect("checked non-empty") as usize;
        let last = net.layers.len() - 1;
        for _ in 0..p.rounds {
            let t0 = Instant::now();
            let out = run_layer_group(net, &chain, images, last, offset, threads, &mut tracker)?;
            for c in 0..out.batch() {
                outputs.push(out.column(c).to_vec());
            }
            free_matrix(&mut tracker, out);
            round_ms.push(t0.elapsed().as_secs_f64() * 1000.0);
            offset += outer;
        }
        level = p.remainder.as_deref();
    }
    debug_assert_eq!(offset, images.len());
    debug_assert_eq!(tracker.live(), 0, "all working buffers must be released");

    let metrics = RunMetrics {
        images: images.len(),
        total_ms: started.elapsed().as_secs_f64() * 1000.0,
        peak_bytes: tracker.peak(),
        limit_bytes: limit,
        round_ms,
        threads,
    };
    Ok((outputs, metrics))
}

/// Runs every layer at one batch size, groups of `batch` images at a time.
/// The transparency reference for staged plans.
pub fn run_fixed_batch(
    net: &PreparedNetwork<'_>,
    batch: usize,
    images: &[(String, Vec<f32>)],
    threads: usize,
    limit: Option<u64>,
) -> Result<(Vec<Vec<f32>>, RunMetrics), CliError> {
    if batch == 0 {
        return Err(CliError::Usage("batch size must be positive".into()));
    }
    let mut tracker = MemoryTracker::new(limit);
    let mut outputs = Vec::with_capacity(images.len());
    let mut round_ms = Vec::new();
    let started = Instant::now();
    for group in images.chunks(batch) {
        let t0 = Instant::now();
        let mut cur = alloc_matrix(&mut tracker, net.input_features, group.len())?;
        for (j, (_, values)) in group.iter().enumerate() {
            if values.len() != net.input_features {
                return Err(CliError::Data(format!(
                    "image holds {} floats, network input needs {}",
                    values.len(),
                    net.input_features
                )));
            }
            cur.data_mut()[j * net.input_features..(j + 1) * net.input_features]
                .copy_from_slice(values);
        }
        for layer in &net.layers {
            let next = apply_layer(layer, &[&cur], threads, &mut tracker)?;
            free_matrix(&mut tracker, cur);
            cur = next;
        }
        for c in 0..cur.batch() {
            outputs.push(cur.column(c).to_vec());
        }
        free_matrix(&mut tracker, cur);
        round_ms.push(t0.elapsed().as_secs_f64() * 1000.0);
    }
    let metrics = RunMetrics {
        images: images.len(),
        total_ms: started.elapsed().as_secs_f64() * 1000.0,
        peak_bytes: tracker.peak(),
        limit_bytes: limit,
        round_ms,
        threads,
    };
    Ok((outputs, metrics))
}
