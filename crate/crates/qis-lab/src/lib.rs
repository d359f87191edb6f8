//! Workbench for QIM steganography in low-bit-rate-speech quantization-index
//! streams and its detection with a hierarchical convolution/attention network.
//!
//! The crate is organized around the pipeline:
//!
//! * [`codebook`]: split-VQ codebooks, complementary sub-codebook partitions,
//!   nearest-neighbor quantization and single-index QIM embed/extract;
//! * [`stego`]: correlated cover stream generation, rate-controlled embedding,
//!   labeled dataset files;
//! * [`nn`]: dense-tensor layers with hand-derived backward passes, Adam, and
//!   finite-difference verification;
//! * [`hrn`]: the hierarchical representation network (cascaded 1-D conv
//!   blocks with per-level attention pooling) plus ablation variants;
//! * [`experiment`]: training, evaluation, rate/length sweeps, ablations and
//!   report emission;
//! * [`stream`]: sliding-window online detection and latency benchmarking.

pub mod codebook;
pub mod error;
pub mod experiment;
pub mod hrn;
pub mod nn;
pub mod stego;
pub mod stream;
pub mod threads;

pub use error::{Error, Result};
