//! Fixed-topology network kernel: dense and shared per-point layers, ReLU,
//! max-pool with arg tracking, dropout, Adam, and checkpoints.
//!
//! Every forward op has a hand-written backward. There is no autodiff graph;
//! callers keep the caches they need and chain the backward calls themselves.

mod adam;
mod checkpoint;
mod layers;
mod params;
mod tensor;

pub use adam::{adam_step, AdamState};
pub use checkpoint::{load_checkpoint, save_checkpoint, ArrayEntry, Checkpoint, Manifest, CHECKPOINT_FORMAT};
pub use layers::{
    dense_backward, dense_backward_acc, dense_forward, dropout_backward, dropout_forward, maxpool_backward,
    maxpool_points, relu_backward, relu_forward, relu_inplace, DropoutMask,
};
pub use params::{init_params, Grads, Layer, LayerSpec, ParamStore};
pub use tensor::Tensor2;

/// Network scalar type. `f32` by default; the `f64` feature switches the
/// whole kernel to double precision.
#[cfg(not(feature = "f64"))]
pub type Real = f32;
#[cfg(feature = "f64")]
pub type Real = f64;

/// Name of [`Real`] as stored in checkpoint manifests.
#[cfg(not(feature = "f64"))]
pub const REAL_DTYPE: &str = "f32";
#[cfg(feature = "f64")]
pub const REAL_DTYPE: &str = "f64";
