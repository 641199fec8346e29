//! Everything around the core inference library that needs an OS: file
//! formats, measurement, plan documents, staged execution with a memory
//! audit, and the `cramnet` command-line tool.
//!
//! * [`network`] — JSON network descriptors and shape resolution.
//! * [`io`] — raw weight blobs, model files, images, prediction CSVs.
//! * [`exec`] — staged plan execution under a live-memory budget.
//! * [`profiler`] — instrumented per-layer timing and the profile CSV.
//! * [`plan`] — the JSON plan document.
//! * [`cli`] — argument grammar and subcommand implementations.

pub mod cli;
pub mod error;
pub mod exec;
pub mod io;
pub mod network;
pub mod plan;
pub mod profiler;

pub use cli::{Cli, Cmd};
pub use error::CliError;
