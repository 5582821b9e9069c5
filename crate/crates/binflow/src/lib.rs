//! Streaming binaural speech rendering.
//!
//! `binflow` renders two-ear audio from a mono signal plus speaker/listener
//! poses. A conditional flow matching model defined over complex STFT
//! spectrograms is backed by a causal U-Net, so inference can run chunk by
//! chunk: a buffer bank carries every causal layer's temporal history across
//! chunks and per solver step, making streamed output match a single offline
//! pass.
//!
//! Module map:
//! - [`numkern`] — dense f32 kernels (conv, per-frame group norm, SiLU) with a
//!   reverse-mode tape; no external ML framework.
//! - [`dsp`] — offline and streaming STFT/ISTFT plus complex packing.
//! - [`cfm`] — flow interpolation, target fields, the CFM loss, training.
//! - [`caunet`] — the causal U-Net and its condition encoders.
//! - [`solvers`] — fixed-step ODE solvers and time schedules.
//! - [`streampipe`] — the continuous inference pipeline and buffer bank.
//! - [`synthdata`] — synthetic paired-data generator for desk-scale training.
//! - [`evalkit`] — waveform/magnitude/phase metrics and the RTF profiler.
//! - [`cli`] — command implementations behind the `binflow` binary.

pub mod caunet;
pub mod cfm;
pub mod checkpoint;
pub mod cli;
pub mod config;
pub mod dsp;
pub mod evalkit;
pub mod numkern;
pub mod pose;
pub mod solvers;
pub mod streampipe;
pub mod synthdata;
pub mod wavio;

mod error;

pub use error::{Error, Result};
