//! Minimal deterministic numeric kernel.
//!
//! Dense 2D convolutions (plain, strided, transposed), per-frame group
//! normalization, SiLU, and reverse-mode gradients for all of them — the
//! complete op set the U-Net and training loop need. Everything is f32,
//! tensors are plain `Vec`-backed, and all kernels are pure: identical
//! inputs give bit-identical outputs within one build, independent of the
//! rayon thread count (no cross-thread float accumulation).

mod ops;
pub mod reference;
mod store;
mod tape;
mod tensor;

pub use ops::{
    conv2d, conv2d_transposed, frame_group_norm, silu, silu_backward, Pad2d,
};
pub use store::{Param, ParamStore};
pub use tape::{Tape, ValueId};
pub use tensor::Tensor4;
