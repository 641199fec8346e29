//! Command-line surface: argument parsing and one function per subcommand.
//!
//! `compress` turns raw weights into a model file, `decompress` inverts it,
//! `profile` measures per-layer costs onto CSV, `plan` turns a profile and
//! a memory budget into a batch schedule, `infer` executes a schedule over
//! a directory of images, `bench --sweep-blocks` measures the decode/compute
//! split across block geometries, and `demo` runs the whole pipeline on a
//! small synthetic network. Every subcommand prints a JSON summary to
//! stdout; diagnostics go to stderr.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use clap::{ArgGroup, Parser, Subcommand};
use cramnet_core::planner::{build_table, fixed_batch_baseline, PlannerError};
use cramnet_core::profile::divisor_closed_grid;
use cramnet_core::{
    best_plan, compress_layer, decompress_layer, serialize, CompressedModel, CompressionConfig,
    PlannerConstraints,
};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::Deserialize;
use serde_json::{json, Value};

use crate::error::CliError;
use crate::exec::{prepare, run_fixed_batch, run_plan, thread_count, RunMetrics};
use crate::io;
use crate::network::{resolve, InputGeom, LayerSpec, NetworkDescriptor};
use crate::plan::{read_plan, write_plan, PlanDocument};
use crate::profiler::{
    profile_network, read_profile, sweep_block_sizes, sweep_to_csv, write_profile, DEFAULT_REPS,
};

// ── Argument grammar ─────────────────────────────────────────────────────────

/// Inference on compressed weight matrices, end to end.
#[derive(Debug, Parser)]
#[command(name = "cramnet", version, about)]
pub struct Cli {
    #[command(subcommand)]
    pub cmd: Cmd,
}

#[derive(Debug, Subcommand)]
pub enum Cmd {
    /// Compress raw weights (f32 blob + JSON manifest) into a model file.
    Compress {
        /// Weights manifest; the blob path inside is resolved next to it.
        weights: PathBuf,
        /// Per-layer compression settings (JSON); defaults apply otherwise.
        #[arg(long)]
        config: Option<PathBuf>,
        /// Output model path.
        #[arg(short, long)]
        output: PathBuf,
    },
    /// Expand a model back into a raw weights blob + manifest.
    Decompress {
        model: PathBuf,
        /// Output prefix; writes `<prefix>.bin` and `<prefix>.json`.
        #[arg(short, long)]
        output: PathBuf,
    },
    /// Measure per-layer wall, decode, and compute time across batch sizes.
    Profile {
        model: PathBuf,
        network: PathBuf,
        /// Batch sizes: `1..64` (divisor-closed up to 64) or `1,2,4`.
        #[arg(long, default_value = "1..64")]
        batches: String,
        /// Measured repetitions per point (median survives).
        #[arg(long, default_value_t = DEFAULT_REPS)]
        reps: usize,
        /// Output profile CSV.
        #[arg(short, long)]
        output: PathBuf,
    },
    /// Build a batch schedule from a profile under a memory budget.
    Plan {
        profile: PathBuf,
        /// Total memory budget in bytes; KiB/MiB/GiB suffixes allowed.
        #[arg(long)]
        tot: String,
        /// Per-round latency ceiling in milliseconds.
        #[arg(long)]
        latency: Option<f32>,
        /// Number of images the plan must cover.
        #[arg(short = 'K', long = "requested")]
        requested: u32,
        /// Reserved-memory discretization; KiB/MiB suffixes allowed.
        #[arg(long, default_value = "100KiB")]
        step: String,
        /// Output plan JSON.
        #[arg(short, long)]
        output: PathBuf,
    },
    /// Run a network over a directory of raw f32 images.
    #[command(group = ArgGroup::new("schedule").required(true))]
    Infer {
        model: PathBuf,
        network: PathBuf,
        /// Batch schedule from `plan`; its memory budget is enforced.
        #[arg(long, group = "schedule")]
        plan: Option<PathBuf>,
        /// Run every layer at one fixed batch size instead.
        #[arg(long, group = "schedule")]
        batch: Option<u32>,
        /// Directory of images, one raw f32 file each.
        #[arg(long)]
        input: PathBuf,
        /// Output predictions CSV.
        #[arg(short, long)]
        output: PathBuf,
    },
    /// Microbenchmarks over synthetic layers.
    Bench {
        /// Sweep square block sizes on one sparse layer.
        #[arg(long)]
        sweep_blocks: bool,
        #[arg(long, default_value_t = 4096)]
        rows: usize,
        #[arg(long, default_value_t = 9216)]
        cols: usize,
        /// Fraction of weights pruned away.
        #[arg(long, default_value_t = 0.91)]
        sparsity: f64,
        #[arg(long, default_value = "16,256")]
        batches: String,
        #[arg(long, default_value = "16,32,64,128")]
        blocks: String,
        #[arg(long, default_value_t = 42)]
        seed: u64,
        /// Output sweep CSV.
        #[arg(short, long)]
        output: PathBuf,
    },
    /// Run the full pipeline on a small synthetic network.
    Demo {
        /// Directory for every artifact the demo writes.
        #[arg(long, default_value = "demo")]
        dir: PathBuf,
    },
}

// ── Shared parsing helpers ───────────────────────────────────────────────────

/// Parses a byte count with optional binary suffix: `1024`, `100KiB`, `14MiB`.
pub fn parse_bytes(text: &str) -> Result<u64, CliError> {
    let t = text.trim();
    let split = t.find(|c: char| !c.is_ascii_digit()).unwrap_or(t.len());
    let (digits, suffix) = t.split_at(split);
    let n: u64 = digits
        .parse()
        .map_err(|_| CliError::Usage(format!("bad byte count {text:?}")))?;
    let mult = match suffix.trim().to_ascii_lowercase().as_str() {
        "" | "b" => 1u64,
        "k" | "kb" | "kib" => 1 << 10,
        "m" | "mb" | "mib" => 1 << 20,
        "g" | "gb" | "gib" => 1 << 30,
        other => return Err(CliError::Usage(format!("unknown byte suffix {other:?}"))),
    };
    n.checked_mul(mult)
        .ok_or_else(|| CliError::Usage(format!("byte count {text:?} overflows")))
}

/// Parses a batch list: `lo..hi` takes the divisor-closed grid up to `hi`
/// (dropping entries below `lo`), otherwise a comma-separated list.
pub fn parse_batches(text: &str) -> Result<Vec<u32>, CliError> {
    let t = text.trim();
    if let Some((lo, hi)) = t.split_once("..") {
        let lo: u32 = lo
            .trim()
            .parse()
            .map_err(|_| CliError::Usage(format!("bad batch range {text:?}")))?;
        let hi: u32 = hi
            .trim()
            .parse()
            .map_err(|_| CliError::Usage(format!("bad batch range {text:?}")))?;
        if lo == 0 || hi < lo {
            return Err(CliError::Usage(format!("bad batch range {text:?}")));
        }
        let mut grid = divisor_closed_grid(hi);
        grid.retain(|&b| b >= lo);
        return Ok(grid);
    }
    let mut out = Vec::new();
    for piece in t.split(',') {
        let b: u32 = piece
            .trim()
            .parse()
            .map_err(|_| CliError::Usage(format!("bad batch size {piece:?}")))?;
        if b == 0 {
            return Err(CliError::Usage("batch sizes must be positive".into()));
        }
        out.push(b);
    }
    out.sort_unstable();
    out.dedup();
    if out.is_empty() {
        return Err(CliError::Usage("at least one batch size is required".into()));
    }
    Ok(out)
}

fn parse_block_list(text: &str) -> Result<Vec<usize>, CliError> {
    let mut out = Vec::new();
    for piece in text.split(',') {
        let b: usize = piece
            .trim()
            .parse()
            .map_err(|_| CliError::Usage(format!("bad block size {piece:?}")))?;
        if b == 0 {
            return Err(CliError::Usage("block sizes must be positive".into()));
        }
        out.push(b);
    }
    if out.is_empty() {
        return Err(CliError::Usage("at least one block size is required".into()));
    }
    Ok(out)
}

fn read_network(path: &Path) -> Result<NetworkDescriptor, CliError> {
    let text = std::fs::read_to_string(path).map_err(|e| CliError::file(path, e))?;
    serde_json::from_str(&text).map_err(|e| CliError::file(path, e))
}

// ── Compression settings ─────────────────────────────────────────────────────

/// Partial settings; unset fields fall through to the next level.
#[derive(Debug, Default, Clone, Deserialize)]
pub struct PartialConfig {
    pub prune_threshold: Option<f32>,
    pub quant_bits: Option<u8>,
    pub index_bits: Option<u8>,
    pub block_h: Option<usize>,
    pub block_w: Option<usize>,
}

/// The config file: shared defaults plus per-layer overrides by name.
#[derive(Debug, Default, Deserialize)]
pub struct ConfigFile {
    #[serde(default)]
    pub default: PartialConfig,
    #[serde(default)]
    pub layers: BTreeMap<String, PartialConfig>,
}

impl ConfigFile {
    /// Settings for one layer: builtin defaults, then the file's defaults,
    /// then the layer's overrides. A block side given alone makes a square
    /// block; no block at all stores whole rows.
    pub fn resolve(&self, name: &str, cols: usize) -> CompressionConfig {
        let mut threshold = 0.0f32;
        let mut quant = 8u8;
        let mut index = 4u8;
        let mut bh = None;
        let mut bw = None;
        for partial in [Some(&self.default), self.layers.get(name)].into_iter().flatten() {
            if let Some(v) = partial.prune_threshold {
                threshold = v;
            }
            if let Some(v) = partial.quant_bits {
                quant = v;
            }
            if let Some(v) = partial.index_bits {
                index = v;
            }
            if let Some(v) = partial.block_h {
                bh = Some(v);
            }
            if let Some(v) = partial.block_w {
                bw = Some(v);
            }
        }
        let (block_h, block_w) = match (bh, bw) {
            (Some(h), Some(w)) => (h, w),
            (Some(h), None) => (h, h),
            (None, Some(w)) => (w, w),
            (None, None) => (1, cols),
        };
        CompressionConfig {
            prune_threshold: threshold,
            quant_bits: quant,
            index_bits: index,
            block_h,
            block_w,
        }
    }
}

fn read_config(path: Option<&Path>) -> Result<ConfigFile, CliError> {
    match path {
        None => Ok(ConfigFile::default()),
        Some(p) => {
            let text = std::fs::read_to_string(p).map_err(|e| CliError::file(p, e))?;
            serde_json::from_str(&text).map_err(|e| CliError::file(p, e))
        }
    }
}

// ── Subcommand bodies ────────────────────────────────────────────────────────

/// `compress`: manifest + blob + settings → model file.
pub fn cmd_compress(
    weights: &Path,
    config: Option<&Path>,
    output: &Path,
) -> Result<Value, CliError> {
    let (matrices, names) = io::read_weights(weights)?;
    let settings = read_config(config)?;
    let mut layers = Vec::with_capacity(matrices.len());
    let mut report = Vec::with_capacity(matrices.len());
    let mut dense_total = 0u64;
    for (dense, name) in matrices.iter().zip(&names) {
        let cfg = settings.resolve(name, dense.cols());
        let enc = compress_layer(dense, &cfg)
            .map_err(|e| CliError::Data(format!("{name}: {e}")))?;
        let dense_bytes =
            ((dense.rows() * dense.cols() + dense.bias().map_or(0, <[f32]>::len)) * 4) as u64;
        dense_total += dense_bytes;
        let encoded_bytes = encoded_layer_bytes(&enc);
        report.push(json!({
            "name": name,
            "rows": dense.rows(),
            "cols": dense.cols(),
            "block_h": cfg.block_h,
            "block_w": cfg.block_w,
            "dense_bytes": dense_bytes,
            "encoded_bytes": encoded_bytes,
        }));
        layers.push(enc);
    }
    let model = CompressedModel { layers };
    let model_bytes = io::write_model(output, &model)?;
    Ok(json!({
        "model": output.display().to_string(),
        "layers": report,
        "dense_bytes": dense_total,
        "model_bytes": model_bytes,
        "ratio": model_bytes as f64 / dense_total as f64,
    }))
}

/// Serialized size of one layer, excluding the shared file header.
fn encoded_layer_bytes(enc: &cramnet_core::EncodedLayer) -> u64 {
    let single = CompressedModel { layers: vec![enc.clone()] };
    let empty = CompressedModel { layers: vec![] };
    (serialize(&single).len() - serialize(&empty).len()) as u64
}

/// `decompress`: model file → blob + manifest with generic layer names.
pub fn cmd_decompress(model_path: &Path, output: &Path) -> Result<Value, CliError> {
    let model = io::read_model(model_path)?;
    let mut matrices = Vec::with_capacity(model.layers.len());
    let mut names = Vec::with_capacity(model.layers.len());
    for (i, enc) in model.layers.iter().enumerate() {
        matrices.push(decompress_layer(enc)?);
        names.push(format!("layer{i}"));
    }
    let manifest = io::write_weights(output, &matrices, &names)?;
    Ok(json!({
        "manifest": manifest.display().to_string(),
        "layers": matrices.len(),
    }))
}

/// `profile`: measure a model driven by its network descriptor.
pub fn cmd_profile(
    model_path: &Path,
    network_path: &Path,
    batches_spec: &str,
    reps: usize,
    output: &Path,
) -> Result<Value, CliError> {
    let model = io::read_model(model_path)?;
    let desc = read_network(network_path)?;
    let net = resolve(&desc)?;
    let prepared = prepare(&net, &model)?;
    let batches = parse_batches(batches_spec)?;
    let store = profile_network(&prepared, &batches, reps)?;
    write_profile(output, &store)?;
    Ok(json!({
        "profile": output.display().to_string(),
        "network": store.network,
        "layers": store.layers.len(),
        "batches": batches,
    }))
}

/// `plan`: profile + constraints → schedule, with the best fixed-batch
/// baseline reported alongside when one exists.
pub fn cmd_plan(
    profile_path: &Path,
    tot: u64,
    latency: Option<f32>,
    requested: u32,
    step: u64,
    output: &Path,
) -> Result<Value, CliError> {
    let store = read_profile(profile_path)?;
    let constraints = PlannerConstraints {
        total_bytes: tot,
        latency_ms: latency,
        requested,
        memory_step: step,
    };
    let table = build_table(&store, &constraints)?;
    let plan = best_plan(&table, &constraints)?;
    let baseline = match fixed_batch_baseline(&store, &constraints) {
        Ok(b) => Some(b),
        Err(PlannerError::NoFeasiblePlan(_)) => None,
        Err(e) => return Err(e.into()),
    };
    let doc = PlanDocument::from_plan(&store.network, &constraints, &plan);
    write_plan(output, &doc)?;
    let baseline_json = baseline.map(|b| {
        json!({
            "batch": b.outer_batch(),
            "total_ms": b.total_ms,
            "speedup": b.total_ms as f64 / plan.total_ms as f64,
        })
    });
    Ok(json!({
        "plan": output.display().to_string(),
        "network": store.network,
        "requested": requested,
        "outer_batch": plan.outer_batch(),
        "rounds": plan.rounds,
        "batches": plan.layers.iter().map(|l| l.batch).collect::<Vec<_>>(),
        "round_ms": plan.round_ms,
        "total_ms": plan.total_ms,
        "throughput_img_per_s": plan.throughput_per_s(),
        "peak_bytes": plan.peak_bytes,
        "table_cell_bytes": table.cell_storage_bytes(),
        "fixed_batch_baseline": baseline_json,
    }))
}

fn metrics_json(metrics: &RunMetrics) -> Value {
    let max_round = metrics.round_ms.iter().copied().fold(0.0f64, f64::max);
    let mean_round = if metrics.round_ms.is_empty() {
        0.0
    } else {
        metrics.round_ms.iter().sum::<f64>() / metrics.round_ms.len() as f64
    };
    json!({
        "images": metrics.images,
        "total_ms": metrics.total_ms,
        "per_image_ms": metrics.per_image_ms(),
        "peak_bytes": metrics.peak_bytes,
        "limit_bytes": metrics.limit_bytes,
        "threads": metrics.threads,
        "rounds": metrics.round_ms.len(),
        "round_ms_max": max_round,
        "round_ms_mean": mean_round,
    })
}

/// `infer`: execute a plan (budget enforced) or a fixed batch size.
pub fn cmd_infer(
    model_path: &Path,
    network_path: &Path,
    plan_path: Option<&Path>,
    batch: Option<u32>,
    input: &Path,
    output: &Path,
) -> Result<Value, CliError> {
    let model = io::read_model(model_path)?;
    let desc = read_network(network_path)?;
    let net = resolve(&desc)?;
    let prepared = prepare(&net, &model)?;
    let images = io::load_images(input, net.input_features())?;
    let threads = thread_count();

    let (outputs, metrics, audit) = match (plan_path, batch) {
        (Some(path), None) => {
            let doc = read_plan(path)?;
            if doc.network != net.name {
                return Err(CliError::Data(format!(
                    "plan was built for network {}, descriptor names {}",
                    doc.network, net.name
                )));
            }
            let (plan, constraints) = doc.to_plan()?;
            let (outputs, metrics) =
                run_plan(&prepared, &plan, &images, threads, Some(constraints.total_bytes))?;
            let audit = constraints.latency_ms.map(|thr| {
                let worst = metrics.round_ms.iter().copied().fold(0.0f64, f64::max);
                let within = worst <= thr as f64 * 1.25;
                if !within {
                    eprintln!(
                        "warning: worst round took {worst:.2} ms against a {thr} ms ceiling \
                         (advisory, 25% margin)"
                    );
                }
                json!({ "latency_ceiling_ms": thr, "worst_round_ms": worst, "within_margin": within })
            });
            (outputs, metrics, audit)
        }
        (None, Some(b)) => {
            let (outputs, metrics) = run_fixed_batch(&prepared, b as usize, &images, threads, None)?;
            (outputs, metrics, None)
        }
        _ => return Err(CliError::Usage("exactly one of --plan or --batch is required".into())),
    };

    let names: Vec<String> = images.iter().map(|(n, _)| n.clone()).collect();
    io::write_outputs_csv(output, &names, &outputs)?;
    let mut summary = metrics_json(&metrics);
    summary["predictions"] = json!(output.display().to_string());
    if let Some(audit) = audit {
        summary["latency_audit"] = audit;
    }
    Ok(summary)
}

/// `bench --sweep-blocks`: block-geometry sweep on one synthetic layer.
pub fn cmd_bench_sweep(
    rows: usize,
    cols: usize,
    sparsity: f64,
    batches_spec: &str,
    blocks_spec: &str,
    seed: u64,
    output: &Path,
) -> Result<Value, CliError> {
    if !(0.0..=1.0).contains(&sparsity) {
        return Err(CliError::Usage("sparsity must lie in [0, 1]".into()));
    }
    let batches = parse_batches(batches_spec)?;
    let blocks = parse_block_list(blocks_spec)?;
    let sweep = sweep_block_sizes(rows, cols, 1.0 - sparsity, &batches, &blocks, seed)?;
    let text = sweep_to_csv(&sweep)?;
    std::fs::write(output, text).map_err(|e| CliError::file(output, e))?;
    Ok(json!({
        "sweep": output.display().to_string(),
        "rows": rows,
        "cols": cols,
        "sparsity": sparsity,
        "points": sweep.len(),
    }))
}

// ── Demo ─────────────────────────────────────────────────────────────────────

/// `demo`: synthesize a small network, then compress → profile → plan →
/// infer, checking the staged run against a single-batch reference.
pub fn cmd_demo(dir: &Path) -> Result<Value, CliError> {
    std::fs::create_dir_all(dir).map_err(|e| CliError::file(dir, e))?;
    let mut rng = ChaCha8Rng::seed_from_u64(2024);

    let desc = NetworkDescriptor {
        name: "demo-cnn".into(),
        input: InputGeom { channels: 2, height: 6, width: 6 },
        layers: vec![
            LayerSpec::Conv { name: "conv1".into(), out_channels: 4, kernel: 3, stride: 1, pad: 1 },
            LayerSpec::Relu { name: "relu1".into() },
            LayerSpec::Pool { name: "pool1".into(), window: 2, stride: 2 },
            LayerSpec::Fc { name: "fc1".into(), out_features: 24 },
            LayerSpec::Relu { name: "relu2".into() },
            LayerSpec::Fc { name: "fc2".into(), out_features: 10 },
        ],
    };
    let network_path = dir.join("net.json");
    std::fs::write(
        &network_path,
        serde_json::to_string_pretty(&desc).map_err(|e| CliError::Data(e.to_string()))?,
    )
    .map_err(|e| CliError::file(&network_path, e))?;
    let net = resolve(&desc)?;

    let mut matrices = Vec::new();
    let mut names = Vec::new();
    for layer in &net.layers {
        if let Some((rows, cols)) = layer.weight_dims() {
            let data: Vec<f32> = (0..rows * cols).map(|_| rng.gen_range(-1.0..1.0)).collect();
            let bias: Vec<f32> = (0..rows).map(|_| rng.gen_range(-0.2..0.2)).collect();
            matrices.push(
                cramnet_core::DenseMatrix::from_vec(rows, cols, data)
                    .and_then(|m| m.with_bias(bias))
                    .map_err(|e| CliError::Data(e.to_string()))?,
            );
            names.push(layer.name.clone());
        }
    }
    let manifest = io::write_weights(&dir.join("weights"), &matrices, &names)?;

    let config_path = dir.join("config.json");
    std::fs::write(
        &config_path,
        r#"{ "default": { "prune_threshold": 0.05, "quant_bits": 5, "index_bits": 4, "block_h": 4 } }"#,
    )
    .map_err(|e| CliError::file(&config_path, e))?;

    let model_path = dir.join("model.cdni");
    let compress_summary = cmd_compress(&manifest, Some(&config_path), &model_path)?;

    let images_dir = dir.join("images");
    std::fs::create_dir_all(&images_dir).map_err(|e| CliError::file(&images_dir, e))?;
    let features = net.input_features();
    for i in 0..10 {
        let values: Vec<f32> = (0..features).map(|_| rng.gen_range(-1.0..1.0)).collect();
        io::write_image(&images_dir.join(format!("img{i:02}.bin")), &values)?;
    }

    let profile_path = dir.join("profile.csv");
    let profile_summary = cmd_profile(&model_path, &network_path, "1..8", 2, &profile_path)?;

    let plan_path = dir.join("plan.json");
    let plan_summary = cmd_plan(&profile_path, 1 << 20, None, 10, 4 << 10, &plan_path)?;

    let predictions_path = dir.join("out.csv");
    let infer_summary = cmd_infer(
        &model_path,
        &network_path,
        Some(&plan_path),
        None,
        &images_dir,
        &predictions_path,
    )?;

    // Cross-check the staged run against one flat batch over all images.
    let model = io::read_model(&model_path)?;
    let prepared = prepare(&net, &model)?;
    let images = io::load_images(&images_dir, features)?;
    let doc = read_plan(&plan_path)?;
    let (plan, constraints) = doc.to_plan()?;
    let (staged, _) = run_plan(&prepared, &plan, &images, 1, Some(constraints.total_bytes))?;
    let (reference, _) = run_fixed_batch(&prepared, images.len(), &images, 1, None)?;
    let mut worst = 0.0f32;
    for (a, b) in staged.iter().zip(&reference) {
        for (x, y) in a.iter().zip(b) {
            worst = worst.max((x - y).abs() / y.abs().max(1.0));
        }
    }
    if worst >= 1e-5 {
        return Err(CliError::Data(format!(
            "staged outputs diverge from the single-batch reference by {worst}"
        )));
    }

    Ok(json!({
        "dir": dir.display().to_string(),
        "compress": compress_summary,
        "profile": profile_summary,
        "plan": plan_summary,
        "infer": infer_summary,
        "staged_vs_flat_rel_error": worst,
    }))
}

// ── Dispatch ─────────────────────────────────────────────────────────────────

/// Runs one parsed command, printing its JSON summary.
pub fn run(cmd: Cmd) -> Result<(), CliError> {
    let summary = match cmd {
        Cmd::Compress { weights, config, output } => {
            cmd_compress(&weights, config.as_deref(), &output)?
        }
        Cmd::Decompress { model, output } => cmd_decompress(&model, &output)?,
        Cmd::Profile { model, network, batches, reps, output } => {
            cmd_profile(&model, &network, &batches, reps, &output)?
        }
        Cmd::Plan { profile, tot, latency, requested, step, output } => {
            let tot = parse_bytes(&tot)?;
            let step = parse_bytes(&step)?;
            cmd_plan(&profile, tot, latency, requested, step, &output)?
        }
        Cmd::Infer { model, network, plan, batch, input, output } => {
            cmd_infer(&model, &network, plan.as_deref(), batch, &input, &output)?
        }
        Cmd::Bench { sweep_blocks, rows, cols, sparsity, batches, blocks, seed, output } => {
            if !sweep_blocks {
                return Err(CliError::Usage(
                    "bench currently requires --sweep-blocks".into(),
                ));
            }
            cmd_bench_sweep(rows, cols, sparsity, &batches, &blocks, seed, &output)?
        }
        Cmd::Demo { dir } => cmd_demo(&dir)?,
    };
    println!("{}", serde_json::to_string_pretty(&summary).expect("summary serializes"));
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn byte_counts_accept_binary_suffixes() {
        assert_eq!(parse_bytes("1024").unwrap(), 1024);
        assert_eq!(parse_bytes("100KiB").unwrap(), 102_400);
        assert_eq!(parse_bytes("14MiB").unwrap(), 14 << 20);
        assert_eq!(parse_bytes("2GB").unwrap(), 2 << 30);
        assert!(parse_bytes("12XB").is_err());
        assert!(parse_bytes("").is_err());
    }

    #[test]
    fn batch_ranges_expand_to_the_divisor_closed_grid() {
        assert_eq!(parse_batches("1..64").unwrap(), [1, 2, 4, 8, 16, 32, 64]);
        assert_eq!(parse_batches("2..12").unwrap(), [2, 3, 4, 6, 8, 12]);
        assert_eq!(parse_batches("4,1,4,2").unwrap(), [1, 2, 4]);
        assert!(parse_batches("0..8").is_err());
        assert!(parse_batches("8..2").is_err());
        assert!(parse_batches("a,b").is_err());
    }

    #[test]
    fn layer_overrides_win_over_file_defaults() {
        let file: ConfigFile = serde_json::from_str(
            r#"{
                "default": {"prune_threshold": 0.02, "quant_bits": 5, "block_h": 16},
                "layers": {"fc6": {"quant_bits": 4, "block_h": 64, "block_w": 32}}
            }"#,
        )
        .unwrap();
        let conv = file.resolve("conv1", 363);
        assert_eq!(conv.quant_bits, 5);
        assert_eq!((conv.block_h, conv.block_w), (16, 16));
        let fc = file.resolve("fc6", 9216);
        assert_eq!(fc.quant_bits, 4);
        assert_eq!((fc.block_h, fc.block_w), (64, 32));
        assert!((fc.prune_threshold - 0.02).abs() < 1e-9);
    }

    #[test]
    fn missing_config_falls_back_to_row_storage() {
        let cfg = ConfigFile::default().resolve("any", 100);
        assert_eq!((cfg.block_h, cfg.block_w), (1, 100));
        assert_eq!(cfg.quant_bits, 8);
        assert_eq!(cfg.index_bits, 4);
    }

    #[test]
    fn cli_grammar_parses_the_documented_invocations() {
        use clap::Parser;
        let cases: &[&[&str]] = &[
            &["cramnet", "compress", "w.json", "--config", "c.json", "-o", "m.cdni"],
            &["cramnet", "compress", "w.json", "-o", "m.cdni"],
            &["cramnet", "decompress", "m.cdni", "-o", "out"],
            &["cramnet", "profile", "m.cdni", "net.json", "--batches", "1..64", "-o", "p.csv"],
            &["cramnet", "plan", "p.csv", "--tot", "14MiB", "-K", "64", "-o", "plan.json"],
            &["cramnet", "plan", "p.csv", "--tot", "0", "--latency", "50", "-K", "8", "-o", "x.json"],
            &["cramnet", "infer", "m.cdni", "net.json", "--plan", "plan.json", "--input", "imgs", "-o", "out.csv"],
            &["cramnet", "infer", "m.cdni", "net.json", "--batch", "8", "--input", "imgs", "-o", "out.csv"],
            &["cramnet", "bench", "--sweep-blocks", "-o", "sweep.csv"],
            &["cramnet", "demo", "--dir", "d"],
        ];
        for case in cases {
            Cli::try_parse_from(*case).unwrap_or_else(|e| panic!("{case:?}: {e}"));
        }
    }

    #[test]
    fn infer_requires_exactly_one_schedule_source() {
        use clap::Parser;
        assert!(Cli::try_parse_from([
            "cramnet", "infer", "m.cdni", "net.json", "--input", "imgs", "-o", "out.csv",
        ])
        .is_err());
        assert!(Cli::try_parse_from([
            "cramnet", "infer", "m.cdni", "net.json", "--plan", "p.json", "--batch", "4",
            "--input", "imgs", "-o", "out.csv",
        ])
        .is_err());
    }
}
