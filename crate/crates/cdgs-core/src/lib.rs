//! Desk-scale dynamic Gaussian splatting with a differentiable Gaussian-count
//! budget, static/dynamic scene decomposition, and a compact two-branch codec.
//!
//! The crate is organized around the training pipeline:
//!
//! - [`scene`] — Gaussian containers, trajectories, cameras, datasets, checkpoints
//! - [`render`] — tile-based CPU rasterizer with hand-written reverse-mode gradients
//! - [`budget`] — differentiable count gate, proxy count, budget loss, annealing
//! - [`importance`] — per-Gaussian cue accumulation and fused importance scores
//! - [`population`] — growth schedule, densify (clone/split), prune
//! - [`allocator`] — motion-magnitude histogram analysis and static/dynamic re-tagging
//! - [`train`] — three-phase training loop with Adam parameter groups
//! - [`codec`] — quantization, KD reordering, delta + range coding, outlier handling
//! - [`synth`] — deterministic synthetic scene generator
//! - [`eval`] — held-out view evaluation (PSNR/SSIM, sizes, counts)
//! - [`sweep`] — rate-distortion sweeps over count targets

pub mod allocator;
pub mod budget;
pub mod codec;
pub mod error;
pub mod eval;
pub mod image_buf;
pub mod importance;
pub mod math;
pub mod population;
pub mod render;
pub mod scene;
pub mod sweep;
pub mod synth;
pub mod train;

pub use error::{Error, Result};
pub use image_buf::ImageBuf;
pub use scene::{
    CameraView, Dataset, DynamicExtras, Extras, GaussianCore, GaussianSet, Kind, StaticExtras,
};
