//! The compressed weight representation.
//!
//! A dense matrix goes through five stages on its way into a model file:
//! block-contiguous reordering, magnitude pruning, codebook quantization,
//! k-bit relative column indexing, and canonical Huffman coding of the two
//! resulting token streams. Every stage is reversible except pruning and
//! quantization, so a decompressed layer equals the pruned-and-quantized
//! original exactly, bit for bit.

use alloc::string::String;
use core::fmt;

pub mod bits;
mod csr;
mod dense;
mod huffman;
mod layer;
mod model;
mod quant;
mod relative;

pub use csr::{prune, SparseCSR};
pub use dense::DenseMatrix;
pub use huffman::{HuffmanTable, MAX_CODE_LEN};
pub use layer::{compress_layer, decompress_layer, CompressionConfig, EncodedLayer};
pub use model::{deserialize, serialize, CompressedModel, FORMAT_VERSION, MAGIC};
pub use quant::{quantize, Codebook, KMEANS_MAX_ITERS, KMEANS_TOLERANCE};
pub use relative::{decode_relative, encode_relative, RelativeIndexedCSR};

/// Errors shared by every codec stage.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum CodecError {
    /// A compression parameter is out of range (bit widths, block dims, ...).
    InvalidConfig(String),
    /// Input data violates a precondition (non-finite value, bad length, ...).
    InvalidInput(String),
    /// An operation that needs at least one element got none.
    Empty,
    /// An encoded stream or table does not decode consistently.
    MalformedStream(String),
    /// Serialized bytes do not start with the container magic.
    BadMagic,
    /// The container declares a format version this build does not read.
    UnsupportedVersion(u16),
    /// Serialized bytes end before the structure they promise.
    Truncated,
}

impl fmt::Display for CodecError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            CodecError::InvalidConfig(msg) => write!(f, "invalid config: {msg}"),
            CodecError::InvalidInput(msg) => write!(f, "invalid input: {msg}"),
            CodecError::Empty => write!(f, "empty input"),
            CodecError::MalformedStream(msg) => write!(f, "malformed stream: {msg}"),
            CodecError::BadMagic => write!(f, "bad magic: not a compressed model"),
            CodecError::UnsupportedVersion(v) => write!(f, "unsupported format version {v}"),
            CodecError::Truncated => write!(f, "truncated input"),
        }
    }
}

impl core::error::Error for CodecError {}
