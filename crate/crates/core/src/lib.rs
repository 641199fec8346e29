//! Inference directly on compressed neural-network weights.
//!
//! Weight matrices are pruned, codebook-quantized, and entropy-coded, then
//! multiplied against activation batches without ever materializing the dense
//! matrix. The crate has three parts:
//!
//! * [`codec`] — the compressed representation: pruning, k-bit relative
//!   column indexing, k-means codebooks, canonical Huffman streams, and a
//!   bit-exact container format.
//! * [`kernels`] — sparse-times-dense inference kernels that decode each
//!   stored block exactly once per call, plus the auxiliary layer ops
//!   (ReLU, max-pool, LRN, im2col lowering).
//! * [`planner`] — a dynamic program that assigns a batch size to every
//!   layer so total memory stays under a budget while throughput is
//!   maximized; [`profile`] holds the measurement data it consumes.
//!
//! The crate is `no_std` (with `alloc`); everything that needs a clock, a
//! filesystem, or threads lives in the companion CLI crate.

#![no_std]

extern crate alloc;

#[cfg(test)]
extern crate std;

pub mod codec;
pub mod kernels;
pub mod planner;
pub mod profile;

pub use codec::{
    compress_layer, decompress_layer, deserialize, serialize, Codebook, CodecError,
    CompressedModel, CompressionConfig, DenseMatrix, EncodedLayer,
};
pub use kernels::{
    infer_blocked, infer_naive, ActivationMatrix, DecodedBlock, KernelError, WorkBuffer,
};
pub use planner::{
    best_plan, brute_force_plan, build_table, fixed_batch_baseline, BatchPlan, PlannerConstraints,
    PlannerError,
};
pub use profile::{LayerProfile, ProfileMeta, ProfileStore};
