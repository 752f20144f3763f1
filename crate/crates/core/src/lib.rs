//! Training-free, per-step switching between a content and a style LoRA.
//!
//! Each adapter is profiled once: the change, across consecutive denoising
//! steps, of its output's DFT-magnitude difference from the base model marks
//! the steps where it injects information. A cosine switch coefficient built
//! from both profiles then picks one adapter per step, stochastically.
//!
//! Modules:
//! - [`signal`]: DFT magnitudes, radial band filters and band fidelities.
//! - [`toy`]: an analytic coarse-to-fine denoiser used as a testbed.
//! - [`profiler`]: per-step importance profiles.
//! - [`scheduler`]: mixing ratio, switch coefficient and schedules.
//! - [`alignment`]: VLM prompt refinement for the adapter pair.
//! - [`trace`]: the `FSTR` per-step frame format.
//! - [`weights`]: safetensors magnitude statistics.
//! - [`pipeline`]: toy generation, scoring and ablations.
//! - [`cli`]: run configuration and the command-line commands.

pub mod alignment;
pub mod cli;
pub mod error;
pub mod pipeline;
pub mod profiler;
pub mod scheduler;
pub mod signal;
pub mod toy;
pub mod trace;
pub mod weights;

pub use error::{Error, Result};
