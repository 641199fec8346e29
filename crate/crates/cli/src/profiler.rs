//! Layer cost measurement and the profile CSV format.
//!
//! Profiling runs each layer in isolation at every batch size on a grid,
//! single-threaded, with the sparse product instrumented per storage row so
//! decode time and arithmetic time are recorded separately. One warm-up
//! run precedes the measured repetitions; the repetition with the median
//! total survives. im2col lowering and output scatter count as compute.
//! After measurement, any timing that dips below a smaller batch's is
//! raised to keep wall time nondecreasing in batch size, which execution
//! planning relies on; the repair count lands in the capture notes.

use std::fs;
use std::path::Path;
use std::time::{Duration, Instant};

use cramnet_core::kernels::ops::{im2col_chunk, lrn_into, max_pool_into, relu_into, ConvGeom};
use cramnet_core::kernels::{accumulate_block, add_bias_columns, decode_storage_row};
use cramnet_core::profile::{LayerProfile, ProfileMeta, ProfileStore, ELEM_BYTES};
use cramnet_core::{
    compress_layer, ActivationMatrix, CompressionConfig, DenseMatrix, EncodedLayer, WorkBuffer,
};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::error::CliError;
use crate::exec::{PreparedNetwork, RuntimeKind, RuntimeLayer, IM2COL_CHUNK_COLS};

/// Measured repetitions per (layer, batch) point.
pub const DEFAULT_REPS: usize = 3;

// ── Instrumented kernels ─────────────────────────────────────────────────────

/// Accumulated sub-spans of one layer execution.
#[derive(Debug, Default, Clone, Copy)]
struct Spans {
    decode: Duration,
    compute: Duration,
}

/// Sparse product with per-storage-row decode/compute attribution.
fn timed_product(
    enc: &EncodedLayer,
    parts: &[&ActivationMatrix],
    out: &mut [f32],
    buf: &mut WorkBuffer,
    spans: &mut Spans,
) -> Result<(), CliError> {
    out.fill(0.0);
    for idx in 0..enc.storage_rows() {
        let t0 = Instant::now();
        let block = decode_storage_row(enc, idx, buf)?;
        let t1 = Instant::now();
        spans.decode += t1 - t0;
        accumulate_block(enc, &block, parts, out)?;
        spans.compute += t1.elapsed();
    }
    if let Some(bias) = &enc.bias {
        let t = Instant::now();
        add_bias_columns(out, enc.rows as usize, bias);
        spans.compute += t.elapsed();
    }
    Ok(())
}

/// Instrumented convolution through the chunked lowering path.
fn timed_conv(
    enc: &EncodedLayer,
    geom: &ConvGeom,
    out_channels: usize,
    input: &ActivationMatrix,
    out: &mut [f32],
    buf: &mut WorkBuffer,
    spans: &mut Spans,
) -> Result<(), CliError> {
    let ohw = geom.out_pixels();
    let total_cols = input.batch() * ohw;
    let chunk = IM2COL_CHUNK_COLS.min(total_cols);
    let mut patch = ActivationMatrix::zeros(geom.patch_rows(), chunk);
    let mut prod = vec![0.0f32; out_channels * chunk];
    let mut lo = 0;
    while lo < total_cols {
        let hi = (lo + chunk).min(total_cols);
        let n = hi - lo;
        if n != patch.batch() {
            patch = ActivationMatrix::zeros(geom.patch_rows(), n);
        }
        let t = Instant::now();
        im2col_chunk(&[input], geom, lo..hi, patch.data_mut())?;
        spans.compute += t.elapsed();
        timed_product(enc, &[&patch], &mut prod[..out_channels * n], buf, spans)?;
        let t = Instant::now();
        for j in 0..n {
            let g = lo + j;
            let (b, pix) = (g / ohw, g % ohw);
            let dst = &mut out[b * out_channels * ohw..(b + 1) * out_channels * ohw];
            for ch in 0..out_channels {
                dst[ch * ohw + pix] = prod[j * out_channels + ch];
            }
        }
        spans.compute += t.elapsed();
        lo = hi;
    }
    Ok(())
}

/// One instrumented execution of a layer; returns its sub-spans.
fn timed_layer(
    layer: &RuntimeLayer<'_>,
    input: &ActivationMatrix,
    out: &mut [f32],
) -> Result<Spans, CliError> {
    let mut spans = Spans::default();
    match &layer.kind {
        RuntimeKind::Fc { enc } => {
            let mut buf = WorkBuffer::for_layer(enc);
            timed_product(enc, &[input], out, &mut buf, &mut spans)?;
        }
        RuntimeKind::Conv { enc, geom, out_channels } => {
            let mut buf = WorkBuffer::for_layer(enc);
            timed_conv(enc, geom, *out_channels, input, out, &mut buf, &mut spans)?;
        }
        RuntimeKind::Relu => {
            let t = Instant::now();
            out.copy_from_slice(input.data());
            relu_into(out);
            spans.compute += t.elapsed();
        }
        RuntimeKind::Pool(g) => {
            let t = Instant::now();
            max_pool_into(input, g, out)?;
            spans.compute += t.elapsed();
        }
        RuntimeKind::Lrn { channels, params } => {
            let t = Instant::now();
            lrn_into(input, *channels, params, out)?;
            spans.compute += t.elapsed();
        }
    }
    Ok(spans)
}

/// Decode workspace bytes a layer needs, independent of batch size.
pub fn workspace_bytes(layer: &RuntimeLayer<'_>) -> u64 {
    match &layer.kind {
        RuntimeKind::Fc { enc } => WorkBuffer::for_layer(enc).size_bytes(),
        RuntimeKind::Conv { enc, geom, out_channels } => {
            WorkBuffer::for_layer(enc).size_bytes()
                + ((geom.patch_rows() + out_channels) * IM2COL_CHUNK_COLS) as u64 * ELEM_BYTES
        }
        _ => 0,
    }
}

// ── Network profiling ────────────────────────────────────────────────────────

/// Measures every layer at every grid batch size.
pub fn profile_network(
    net: &PreparedNetwork<'_>,
    batches: &[u32],
    reps: usize,
) -> Result<ProfileStore, CliError> {
    if batches.is_empty() {
        return Err(CliError::Usage("at least one batch size is required".into()));
    }
    if batches.contains(&0) {
        return Err(CliError::Usage("batch sizes must be positive".into()));
    }
    let reps = reps.max(1);
    let mut rng = ChaCha8Rng::seed_from_u64(0x9e3779b9);
    let mut layers = Vec::with_capacity(net.layers.len());
    let mut repairs = 0usize;

    for (index, layer) in net.layers.iter().enumerate() {
        let mut profile = LayerProfile::new(
            index,
            layer.name.clone(),
            layer.in_features,
            layer.out_features,
            workspace_bytes(layer),
        );
        for &batch in batches {
            let b = batch as usize;
            let mut input = ActivationMatrix::zeros(layer.in_features, b);
            for v in input.data_mut() {
                *v = rng.gen_range(-1.0..1.0);
            }
            let mut out = vec![0.0f32; layer.out_features * b];
            timed_layer(layer, &input, &mut out)?;
            let mut runs = Vec::with_capacity(reps);
            for _ in 0..reps {
                let t0 = Instant::now();
                let spans = timed_layer(layer, &input, &mut out)?;
                let total = t0.elapsed();
                runs.push((total, spans));
            }
            runs.sort_by_key(|(total, _)| *total);
            let (total, spans) = runs[runs.len() / 2];
            profile.insert(
                batch,
                total.as_secs_f64() * 1000.0,
                spans.decode.as_secs_f64() * 1000.0,
                spans.compute.as_secs_f64() * 1000.0,
            );
        }
        // Wall time must not shrink when the batch grows; raise dips to the
        // running maximum so the planner sees a coherent cost curve.
        let mut running = 0.0f64;
        for (_, t) in profile.time_ms.iter_mut() {
            if *t < running {
                *t = running;
                repairs += 1;
            } else {
                running = *t;
            }
        }
        layers.push(profile);
    }

    let notes = format!(
        "im2col counted as compute; {repairs} timings raised to keep time nondecreasing in batch"
    );
    Ok(ProfileStore {
        network: net.name.clone(),
        meta: ProfileMeta {
            threads: 1,
            timestamp: chrono::Utc::now().to_rfc3339(),
            notes,
        },
        layers,
    })
}

// ── Profile CSV ──────────────────────────────────────────────────────────────

const CSV_HEADER: &[&str] = &[
    "layer", "i", "B", "time_ms", "decode_ms", "compute_ms", "in_bytes", "out_bytes", "ws_bytes",
];

/// Renders a profile as CSV with `# key=value` capture metadata up top.
pub fn profile_to_csv(store: &ProfileStore) -> Result<String, CliError> {
    let mut text = String::new();
    text.push_str(&format!("# network={}\n", store.network));
    text.push_str(&format!("# threads={}\n", store.meta.threads));
    text.push_str(&format!("# timestamp={}\n", store.meta.timestamp));
    text.push_str(&format!("# notes={}\n", store.meta.notes));
    let mut writer = csv::Writer::from_writer(Vec::new());
    writer
        .write_record(CSV_HEADER)
        .map_err(|e| CliError::Data(format!("profile csv: {e}")))?;
    for layer in &store.layers {
        for (&batch, &time) in &layer.time_ms {
            let decode = layer.decode_ms.get(&batch).copied().unwrap_or(0.0);
            let compute = layer.compute_ms.get(&batch).copied().unwrap_or(0.0);
            writer
                .write_record(&[
                    layer.name.clone(),
                    layer.index.to_string(),
                    batch.to_string(),
                    format!("{time}"),
                    format!("{decode}"),
                    format!("{compute}"),
                    layer.in_bytes(batch).to_string(),
                    layer.out_bytes(batch).to_string(),
                    layer.ws_bytes.to_string(),
                ])
                .map_err(|e| CliError::Data(format!("profile csv: {e}")))?;
        }
    }
    let table = writer
        .into_inner()
        .map_err(|e| CliError::Data(format!("profile csv: {e}")))?;
    text.push_str(&String::from_utf8(table).expect("csv output is utf-8"));
    Ok(text)
}

/// Writes a profile CSV file.
pub fn write_profile(path: &Path, store: &ProfileStore) -> Result<(), CliError> {
    let text = profile_to_csv(store)?;
    fs::write(path, text).map_err(|e| CliError::file(path, e))
}

/// Parses a profile CSV, re-deriving feature counts from the byte columns
/// and reporting malformed rows by line number.
pub fn profile_from_csv(text: &str) -> Result<ProfileStore, CliError> {
    let mut meta = ProfileMeta::default();
    let mut network = String::new();
    let mut body_start = 0;
    let mut line_no = 0;
    for line in text.lines() {
        if !line.starts_with('#') {
            break;
        }
        line_no += 1;
        body_start += line.len() + 1;
        let rest = line.trim_start_matches('#').trim();
        if let Some((key, value)) = rest.split_once('=') {
            match key.trim() {
                "network" => network = value.trim().to_string(),
                "threads" => meta.threads = value.trim().parse().unwrap_or(0),
                "timestamp" => meta.timestamp = value.trim().to_string(),
                "notes" => meta.notes = value.trim().to_string(),
                _ => {}
            }
        }
    }
    let body = text.get(body_start..).unwrap_or("");
    let mut reader = csv::Reader::from_reader(body.as_bytes());
    let header_line = line_no + 1;
    {
        let headers = reader
            .headers()
            .map_err(|e| CliError::Data(format!("profile csv line {header_line}: {e}")))?;
        let got: Vec<&str> = headers.iter().collect();
        if got != CSV_HEADER {
            return Err(CliError::Data(format!(
                "profile csv line {header_line}: header {got:?} does not match {CSV_HEADER:?}"
            )));
        }
    }

    let mut layers: Vec<LayerProfile> = Vec::new();
    for (row_idx, record) in reader.records().enumerate() {
        let line = header_line + 1 + row_idx;
        let bad = |msg: String| CliError::Data(format!("profile csv line {line}: {msg}"));
        let record = record.map_err(|e| bad(e.to_string()))?;
        if record.len() != CSV_HEADER.len() {
            return Err(bad(format!("{} fields, expected {}", record.len(), CSV_HEADER.len())));
        }
        let name = record[0].to_string();
        let index: usize = record[1].parse().map_err(|_| bad("bad layer index".into()))?;
        let batch: u32 = record[2].parse().map_err(|_| bad("bad batch size".into()))?;
        if batch == 0 {
            return Err(bad("batch size must be positive".into()));
        }
        let time_ms: f64 = record[3].parse().map_err(|_| bad("bad time_ms".into()))?;
        let decode_ms: f64 = record[4].parse().map_err(|_| bad("bad decode_ms".into()))?;
        let compute_ms: f64 = record[5].parse().map_err(|_| bad("bad compute_ms".into()))?;
        let in_bytes: u64 = record[6].parse().map_err(|_| bad("bad in_bytes".into()))?;
        let out_bytes: u64 = record[7].parse().map_err(|_| bad("bad out_bytes".into()))?;
        let ws_bytes: u64 = record[8].parse().map_err(|_| bad("bad ws_bytes".into()))?;
        if !time_ms.is_finite() || time_ms < 0.0 {
            return Err(bad("time_ms must be finite and nonnegative".into()));
        }
        let per_col = ELEM_BYTES * batch as u64;
        if in_bytes % per_col != 0 || out_bytes % per_col != 0 {
            return Err(bad(format!(
                "byte columns are not a multiple of {per_col} (4 bytes x batch)"
            )));
        }
        let in_features = (in_bytes / per_col) as usize;
        let out_features = (out_bytes / per_col) as usize;

        let layer = match layers.iter_mut().find(|l| l.index == index) {
            Some(existing) => {
                if existing.name != name {
                    return Err(bad(format!(
                        "layer {index} renamed from {} to {name}",
                        existing.name
                    )));
                }
                if existing.in_features != in_features || existing.out_features != out_features {
                    return Err(bad(format!(
                        "layer {name} changes shape across rows"
                    )));
                }
                if existing.ws_bytes != ws_bytes {
                    return Err(bad(format!("layer {name} changes ws_bytes across rows")));
                }
                existing
            }
            None => {
                layers.push(LayerProfile::new(index, name, in_features, out_features, ws_bytes));
                layers.last_mut().expect("just pushed")
            }
        };
        if layer.time_ms.contains_key(&batch) {
            return Err(bad(format!("duplicate measurement for batch {batch}")));
        }
        layer.insert(batch, time_ms, decode_ms, compute_ms);
    }
    if layers.is_empty() {
        return Err(CliError::Data("profile csv holds no measurements".into()));
    }
    layers.sort_by_key(|l| l.index);
    for (slot, layer) in layers.iter().enumerate() {
        if layer.index != slot {
            return Err(CliError::Data(format!(
                "profile csv: layer indices must cover 0..{} without gaps",
                layers.len()
            )));
        }
    }
    Ok(ProfileStore { network, meta, layers })
}

/// Reads a profile CSV file.
pub fn read_profile(path: &Path) -> Result<ProfileStore, CliError> {
    let text = fs::read_to_string(path).map_err(|e| CliError::file(path, e))?;
    profile_from_csv(&text).map_err(|e| match e {
        CliError::Data(msg) => CliError::Data(format!("{}: {msg}", path.display())),
        other => other,
    })
}

// ── Block-size sweep ─────────────────────────────────────────────────────────

/// One measurement from a block-geometry sweep.
#[derive(Debug, Clone)]
pub struct SweepRow {
    pub block: usize,
    pub batch: u32,
    pub time_ms: f64,
    pub decode_ms: f64,
    pub compute_ms: f64,
    pub ws_bytes: u64,
}

/// Compresses one synthetic sparse layer at several square block sizes and
/// measures the decode/compute split at each batch size.
pub fn sweep_block_sizes(
    rows: usize,
    cols: usize,
    density: f64,
    batches: &[u32],
    blocks: &[usize],
    seed: u64,
) -> Result<Vec<SweepRow>, CliError> {
    if !(0.0..=1.0).contains(&density) {
        return Err(CliError::Usage("density must lie in [0, 1]".into()));
    }
    if batches.is_empty() || blocks.is_empty() {
        return Err(CliError::Usage("at least one batch and one block size".into()));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let data: Vec<f32> = (0..rows * cols)
        .map(|_| {
            if rng.gen_bool(density) {
                let mag = rng.gen_range(0.1..1.0f32);
                if rng.gen_bool(0.5) {
                    mag
                } else {
                    -mag
                }
            } else {
                0.0
            }
        })
        .collect();
    let dense = DenseMatrix::from_vec(rows, cols, data)?;

    let mut out = Vec::new();
    for &block in blocks {
        if block == 0 {
            return Err(CliError::Usage("block sizes must be positive".into()));
        }
        let config = CompressionConfig {
            prune_threshold: 0.0,
            quant_bits: 5,
            index_bits: 4,
            block_h: block,
            block_w: block,
        };
        let enc = compress_layer(&dense, &config)?;
        let mut buf = WorkBuffer::for_layer(&enc);
        let ws_bytes = buf.size_bytes();
        // One small pass warms code and touches the streams once.
        {
            let warm = ActivationMatrix::zeros(cols, 1);
            let mut sink = vec![0.0f32; rows];
            timed_product(&enc, &[&warm], &mut sink, &mut buf, &mut Spans::default())?;
        }
        for &batch in batches {
            if batch == 0 {
                return Err(CliError::Usage("batch sizes must be positive".into()));
            }
            let mut input = ActivationMatrix::zeros(cols, batch as usize);
            for v in input.data_mut() {
                *v = rng.gen_range(-1.0..1.0);
            }
            let mut sink = vec![0.0f32; rows * batch as usize];
            let mut spans = Spans::default();
            let t0 = Instant::now();
            timed_product(&enc, &[&input], &mut sink, &mut buf, &mut spans)?;
            let total = t0.elapsed();
            out.push(SweepRow {
                block,
                batch,
                time_ms: total.as_secs_f64() * 1000.0,
                decode_ms: spans.decode.as_secs_f64() * 1000.0,
                compute_ms: spans.compute.as_secs_f64() * 1000.0,
                ws_bytes,
            });
        }
    }
    Ok(out)
}

/// Renders sweep rows as CSV.
pub fn sweep_to_csv(rows: &[SweepRow]) -> Result<String, CliError> {
    let mut writer = csv::Writer::from_writer(Vec::new());
    writer
        .write_record(["block_h", "block_w", "batch", "time_ms", "decode_ms", "compute_ms", "ws_bytes"])
        .map_err(|e| CliError::Data(format!("sweep csv: {e}")))?;
    for row in rows {
        writer
            .write_record(&[
                row.block.to_string(),
                row.block.to_string(),
                row.batch.to_string(),
                format!("{}", row.time_ms),
                format!("{}", row.decode_ms),
                format!("{}", row.compute_ms),
                row.ws_bytes.to_string(),
            ])
            .map_err(|e| CliError::Data(format!("sweep csv: {e}")))?;
    }
    let bytes = writer
        .into_inner()
        .map_err(|e| CliError::Data(format!("sweep csv: {e}")))?;
    Ok(String::from_utf8(bytes).expect("csv output is utf-8"))
}
