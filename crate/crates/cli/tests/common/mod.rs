//! Shared fixtures for the integration suites: random layers with exact
//! reference results, synthetic planner instances, and the network-scale
//! profile tables the acceptance gate exercises.

#![allow(dead_code)]

use cramnet_cli::exec::{prepare, PreparedNetwork};
use cramnet_cli::network::{resolve, InputGeom, LayerSpec, NetworkDescriptor, ResolvedNetwork};
use cramnet_core::codec::quantize;
use cramnet_core::kernels::ops::ConvGeom;
use cramnet_core::kernels::ActivationMatrix;
use cramnet_core::profile::{LayerProfile, ProfileMeta, ProfileStore};
use cramnet_core::{compress_layer, CompressedModel, CompressionConfig, DenseMatrix, PlannerConstraints};
use rand::Rng;
use rand_chacha::ChaCha8Rng;

// ── Random layers and reference results ──────────────────────────────────────

/// Fills a `rows x cols` matrix where each entry is nonzero with probability
/// `density`, drawn uniformly from `[-1, 1]`.
pub fn random_dense(rng: &mut ChaCha8Rng, rows: usize, cols: usize, density: f64) -> DenseMatrix {
    let data: Vec<f32> = (0..rows * cols)
        .map(|_| {
            if rng.gen_bool(density) {
                rng.gen_range(-1.0f32..=1.0)
            } else {
                0.0
            }
        })
        .collect();
    DenseMatrix::from_vec(rows, cols, data).unwrap()
}

/// Like [`random_dense`], but attaches a random bias half the time.
pub fn random_weights(rng: &mut ChaCha8Rng, rows: usize, cols: usize, density: f64) -> DenseMatrix {
    let m = random_dense(rng, rows, cols, density);
    if rng.gen_bool(0.5) {
        let bias: Vec<f32> = (0..rows).map(|_| rng.gen_range(-0.5f32..=0.5)).collect();
        m.with_bias(bias).unwrap()
    } else {
        m
    }
}

/// What lossy compression must reproduce, computed without the codec:
/// prune by strict magnitude, cluster the survivors, snap each to its
/// nearest center.
pub fn prune_quantize_reference(dense: &DenseMatrix, threshold: f32, quant_bits: u8) -> DenseMatrix {
    let mut kept = Vec::new();
    for r in 0..dense.rows() {
        for c in 0..dense.cols() {
            let w = dense.get(r, c);
            if w.abs() > threshold {
                kept.push(w);
            }
        }
    }
    let mut out = DenseMatrix::zeros(dense.rows(), dense.cols());
    if !kept.is_empty() {
        let (codebook, _) = quantize(&kept, quant_bits).unwrap();
        for r in 0..dense.rows() {
            for c in 0..dense.cols() {
                let w = dense.get(r, c);
                if w.abs() > threshold {
                    out.set(r, c, codebook.centers[codebook.nearest_index(w)]);
                }
            }
        }
    }
    match dense.bias() {
        Some(b) => out.with_bias(b.to_vec()).unwrap(),
        None => out,
    }
}

/// Dense product reference in f64: `out[.,j] = W a[.,j] + bias`.
pub fn gemm_reference(w: &DenseMatrix, a: &ActivationMatrix) -> ActivationMatrix {
    assert_eq!(a.rows(), w.cols());
    let mut out = ActivationMatrix::zeros(w.rows(), a.batch());
    for j in 0..a.batch() {
        let col = a.column(j);
        for r in 0..w.rows() {
            let mut acc = 0.0f64;
            for (c, &x) in col.iter().enumerate() {
                acc += w.get(r, c) as f64 * x as f64;
            }
            if let Some(bias) = w.bias() {
                acc += bias[r] as f64;
            }
            out.set(r, j, acc as f32);
        }
    }
    out
}

/// Direct convolution reference in f64, matching the patch-lowered layout:
/// filter row `ch` holds weights ordered `(channel, ky, kx)`, output feature
/// `ch * out_pixels + oy * out_w + ox`.
pub fn conv_reference(w: &DenseMatrix, g: &ConvGeom, a: &ActivationMatrix) -> ActivationMatrix {
    assert_eq!(w.cols(), g.patch_rows());
    assert_eq!(a.rows(), g.in_features());
    let (out_h, out_w) = (g.out_h(), g.out_w());
    let plane = g.in_h * g.in_w;
    let mut out = ActivationMatrix::zeros(w.rows() * g.out_pixels(), a.batch());
    for b in 0..a.batch() {
        let col = a.column(b);
        for ch in 0..w.rows() {
            for oy in 0..out_h {
                for ox in 0..out_w {
                    let mut acc = 0.0f64;
                    for c in 0..g.in_channels {
                        for ky in 0..g.kernel {
                            for kx in 0..g.kernel {
                                let iy = (oy * g.stride + ky) as isize - g.pad as isize;
                                let ix = (ox * g.stride + kx) as isize - g.pad as isize;
                                if iy < 0 || ix < 0 || iy >= g.in_h as isize || ix >= g.in_w as isize {
                                    continue;
                                }
                                let x = col[c * plane + iy as usize * g.in_w + ix as usize];
                                let f = w.get(ch, c * g.kernel * g.kernel + ky * g.kernel + kx);
                                acc += f as f64 * x as f64;
                            }
                        }
                    }
                    if let Some(bias) = w.bias() {
                        acc += bias[ch] as f64;
                    }
                    out.set(ch * g.out_pixels() + oy * out_w + ox, b, acc as f32);
                }
            }
        }
    }
    out
}

/// Largest entrywise deviation divided by the reference's max-norm.
pub fn rel_max_norm(got: &[f32], want: &[f32]) -> f64 {
    assert_eq!(got.len(), want.len());
    let scale = want.iter().fold(0.0f64, |m, &v| m.max(v.abs() as f64)).max(1e-30);
    let diff = got
        .iter()
        .zip(want)
        .fold(0.0f64, |m, (&g, &w)| m.max((g as f64 - w as f64).abs()));
    diff / scale
}

/// Random activations in `[-2, 2]`.
pub fn random_activation(rng: &mut ChaCha8Rng, rows: usize, batch: usize) -> ActivationMatrix {
    let data: Vec<f32> = (0..rows * batch).map(|_| rng.gen_range(-2.0f32..=2.0)).collect();
    ActivationMatrix::from_vec(rows, batch, data).unwrap()
}

// ── Synthetic planner instances ───────────────────────────────────────────────

pub fn profiled_layer(
    index: usize,
    in_f: usize,
    out_f: usize,
    ws: u64,
    times: &[(u32, f64)],
) -> LayerProfile {
    let mut l = LayerProfile::new(index, format!("l{index}"), in_f, out_f, ws);
    for &(b, t) in times {
        l.insert(b, t, t / 2.0, t / 2.0);
    }
    l
}

pub fn store_of(name: &str, layers: Vec<LayerProfile>) -> ProfileStore {
    ProfileStore {
        network: name.to_string(),
        meta: ProfileMeta::default(),
        layers,
    }
}

/// A byte-scale instance small enough for the exhaustive planner: at most
/// four layers, a divisor-closed grid of at most eight batches, and an
/// exact (one-byte-step) memory axis.
pub fn random_small_instance(rng: &mut ChaCha8Rng) -> (ProfileStore, PlannerConstraints) {
    let f = rng.gen_range(1..=4usize);
    // Grid sizes 3, 4, 5, 7, and 8 — the exhaustive oracle caps at 8.
    let gmax = [4u32, 6, 8, 12, 20][rng.gen_range(0..5usize)];
    let grid = cramnet_core::profile::divisor_closed_grid(gmax);
    let layers: Vec<LayerProfile> = (0..f)
        .map(|i| {
            let mut l = profiled_layer(
                i,
                rng.gen_range(0..=3),
                rng.gen_range(0..=3),
                rng.gen_range(0..=12),
                &[],
            );
            for &b in &grid {
                l.insert(b, rng.gen_range(1.0..30.0), 0.0, 0.0);
            }
            l
        })
        .collect();
    let c = PlannerConstraints {
        // The exhaustive oracle handles at most 32 reserve levels (0..=budget).
        total_bytes: rng.gen_range(4..=31),
        latency_ms: rng.gen_bool(0.4).then(|| rng.gen_range(10.0..200.0f32)),
        requested: rng.gen_range(1..=gmax),
        memory_step: 1,
    };
    (store_of("small", layers), c)
}

// ── Network-scale profile fixtures ───────────────────────────────────────────

/// Measured anchors for a thirteen-layer image classifier: name, input and
/// output features, and round times in ms at batches 16 and 256.
pub const CLASSIFIER_ANCHORS: [(&str, usize, usize, f64, f64); 13] = [
    ("conv1", 154_587, 290_400, 349.93, 5_408.93),
    ("norm1", 290_400, 290_400, 98.87, 1_597.83),
    ("pool1", 290_400, 69_984, 11.68, 176.42),
    ("conv2", 69_984, 186_624, 341.72, 5_745.49),
    ("norm2", 186_624, 186_624, 68.06, 1_081.80),
    ("pool2", 186_624, 43_264, 7.12, 116.49),
    ("conv3", 43_264, 64_896, 153.11, 2_573.47),
    ("conv4", 64_896, 64_896, 204.01, 3_135.62),
    ("conv5", 64_896, 43_264, 135.66, 2_242.94),
    ("pool5", 43_264, 9_216, 1.92, 25.72),
    ("fc6", 9_216, 4_096, 51.77, 112.62),
    ("fc7", 4_096, 4_096, 21.06, 46.61),
    ("fc8", 4_096, 1_000, 9.66, 22.61),
];

/// Profile table shaped like the classifier: the feature-map layers get a
/// strictly convex time curve anchored at the batch-16 measurement (batching
/// them never pays), the fully connected tail keeps its large per-round
/// setup cost (batching amortizes it), and the early feature maps are so
/// wide that memory caps their batch well below the fc one.
pub fn classifier_store() -> ProfileStore {
    let grid = [1u32, 2, 4, 8, 16, 32, 64];
    let layers = CLASSIFIER_ANCHORS
        .iter()
        .enumerate()
        .map(|(i, &(name, in_f, out_f, t16, t256))| {
            let ws = if name.starts_with("conv") || name.starts_with("fc") {
                65_536
            } else {
                0
            };
            let mut l = LayerProfile::new(i, name.to_string(), in_f, out_f, ws);
            for &b in &grid {
                let t = if name.starts_with("fc") {
                    // Affine through both anchors; positive intercept.
                    let slope = (t256 - t16) / 240.0;
                    (t16 - 16.0 * slope) + slope * b as f64
                } else {
                    // Convex through the batch-16 anchor: r·B + q·B².
                    let q = t16 / 25_600.0;
                    let r = (t16 - 256.0 * q) / 16.0;
                    r * b as f64 + q * (b as f64) * (b as f64)
                };
                l.insert(b, t, t / 2.0, t / 2.0);
            }
            l
        })
        .collect();
    store_of("classifier", layers)
}

/// The budget under which the classifier's wide early layers cap at small
/// batches while the fc tail still fits at the full request.
pub fn classifier_constraints() -> PlannerConstraints {
    PlannerConstraints {
        total_bytes: 16 << 20,
        latency_ms: None,
        requested: 64,
        memory_step: 1 << 20,
    }
}

/// Fourteen uniform layers measured at every batch from 1 to 64: the
/// table-size fixture.
pub fn fourteen_layer_store() -> ProfileStore {
    let layers = (0..14)
        .map(|i| {
            let mut l = LayerProfile::new(i, format!("layer{i}"), 256, 256, 0);
            for b in 1..=64u32 {
                l.insert(b, (1.0 + i as f64 / 10.0) * b as f64, 0.0, 0.0);
            }
            l
        })
        .collect();
    store_of("fourteen", layers)
}

// ── Executable networks ──────────────────────────────────────────────────────

/// A network descriptor, its compressed weights, and inputs, ready to run.
pub struct ExecInstance {
    pub desc: NetworkDescriptor,
    pub model: CompressedModel,
    pub images: Vec<(String, Vec<f32>)>,
}

impl ExecInstance {
    pub fn resolved(&self) -> ResolvedNetwork {
        resolve(&self.desc).unwrap()
    }

    /// Binds the descriptor to its own model; the result borrows `self`.
    pub fn prepared(&self) -> PreparedNetwork<'_> {
        prepare(&self.resolved(), &self.model).unwrap()
    }
}

/// Builds a small fully connected network with optional ReLU layers,
/// compresses random weights for it, and draws `images` random inputs.
pub fn random_fc_instance(rng: &mut ChaCha8Rng, images: usize) -> ExecInstance {
    let in_features = rng.gen_range(4..=16usize);
    let depth = rng.gen_range(1..=3usize);
    let mut layers = Vec::new();
    let mut features = in_features;
    let mut dims = Vec::new();
    for i in 0..depth {
        let out = rng.gen_range(4..=20usize);
        layers.push(LayerSpec::Fc {
            name: format!("fc{i}"),
            out_features: out,
        });
        dims.push((out, features));
        features = out;
        if rng.gen_bool(0.5) {
            layers.push(LayerSpec::Relu {
                name: format!("relu{i}"),
            });
        }
    }
    let desc = NetworkDescriptor {
        name: "random-fc".to_string(),
        input: InputGeom {
            channels: in_features,
            height: 1,
            width: 1,
        },
        layers,
    };
    let model = CompressedModel {
        layers: dims
            .iter()
            .map(|&(rows, cols)| {
                let dense = random_weights(rng, rows, cols, 0.7);
                let config = CompressionConfig {
                    prune_threshold: 0.0,
                    quant_bits: 8,
                    index_bits: 4,
                    block_h: 1,
                    block_w: cols,
                };
                compress_layer(&dense, &config).unwrap()
            })
            .collect(),
    };
    let images = (0..images)
        .map(|i| {
            let v: Vec<f32> = (0..in_features).map(|_| rng.gen_range(-1.0f32..=1.0)).collect();
            (format!("img{i:03}"), v)
        })
        .collect();
    ExecInstance { desc, model, images }
}
