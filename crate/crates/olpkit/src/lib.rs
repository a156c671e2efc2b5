//! File formats, evaluation and benchmarking on top of [`olpkit_core`].
//!
//! - [`dataset`]: `manifest.json` + `samples.bin` labeled datasets.
//! - [`weights`]: the GNN weights file (JSON header + f64 blob).
//! - [`generate`]: drawing and labeling samples.
//! - [`eval`]: pooled spectral-efficiency metrics and CDFs.
//! - [`bench`]: per-stage timings.
//! - [`export_check`]: loading externally trained weights and parity checks.

pub mod bench;
pub mod dataset;
pub mod eval;
pub mod export_check;
pub mod generate;
pub mod weights;

pub use olpkit_core as core;
