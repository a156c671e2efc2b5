//! Max-min SINR downlink precoding for cell-free massive MIMO.
//!
//! This crate is `no_std` (it needs `alloc`) and carries every numerical piece
//! of the toolkit:
//!
//! - [`system`]: channel/precoder types, effective channel, SINR and spectral
//!   efficiency, pseudo-inverse and null-space projector.
//! - [`channel`]: random AP/UE drops with path loss and Rayleigh fast fading.
//! - [`socp`]: a log-barrier second-order cone solver for margin programs.
//! - [`olp`]: the optimal linear precoder by bisection over cone feasibility.
//! - [`baseline`]: zero forcing and max-min maximum ratio precoders.
//! - [`graph`]: the AP/UE node graph and feature pre/postprocessing.
//! - [`gnn`]: graph-transformer inference producing a feasible precoder.
//! - [`metrics`]: quantiles, CDFs and relative spectral-efficiency losses.
//!
//! File formats, the CLI and anything touching the OS live in the `olpkit`
//! companion crate.
#![cfg_attr(not(test), no_std)]

extern crate alloc;

pub mod baseline;
pub mod channel;
mod error;
pub mod gnn;
pub mod graph;
pub mod linalg;
pub(crate) mod math;
pub mod metrics;
pub mod olp;
pub mod socp;
pub mod system;

pub use error::{Error, Result};
pub use linalg::{CMatrix, C64};
pub use system::{ChannelMatrix, Precoder, SystemConfig, UserMetrics};
