//! A small from-scratch 1-D CNN engine.
//!
//! Activations use a channels-last `[batch, length, channels]` layout, which
//! turns a same-padded convolution into a single strided matrix product per
//! sample: row `t` of the (virtual) im2col matrix is the contiguous slice of
//! the padded input starting at `t * channels`.
//!
//! Everything is generic over [`Scalar`] so the same code runs in `f32` for
//! training and in `f64` for finite-difference gradient checks.

mod adam;
mod checkpoint;
mod gradcheck;
mod layers;
mod linalg;
mod model;
mod tensor;
mod train;

use std::fmt::Debug;
use std::iter::Sum;
use std::ops::{AddAssign, MulAssign, SubAssign};

use thiserror::Error;

pub use adam::{adam_update, AdamConfig, AdamState};
pub use checkpoint::{load_checkpoint, read_checkpoint, save_checkpoint, write_checkpoint, CHECKPOINT_MAGIC};
pub use gradcheck::{gradient_check, GradCheckReport, GRAD_FLOOR};
pub use layers::{
    batchnorm1d, conv1d, dense, dropout, elu, maxpool1d, sigmoid, sigmoid_bce, BatchNorm1d, Conv1d,
    Dense, Dropout, Layer, MaxPool1d, Param,
};
pub use model::{build_model, ConvBlockConfig, Model, ModelConfig, TensorSpec};
pub use tensor::Tensor;
pub use train::{fit, predict, predict_logits, EpochRecord, History, TrainConfig};

#[derive(Debug, Error)]
pub enum NnError {
    #[error("shape mismatch: {0}")]
    ShapeMismatch(String),
    #[error("non-finite activation after layer {layer} ({kind})")]
    NonFiniteActivation { layer: usize, kind: &'static str },
    #[error("backward called without a matching training forward pass")]
    StaleCache,
    #[error("invalid model config: {0}")]
    ConfigInvalid(String),
    #[error("checkpoint magic mismatch")]
    MagicMismatch,
    #[error("checkpoint architecture mismatch: {0}")]
    ArchitectureMismatch(String),
    #[error("empty dataset")]
    EmptyDataset,
    #[error(transparent)]
    Io(#[from] std::io::Error),
    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

pub type Result<T, E = NnError> = std::result::Result<T, E>;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Mode {
    Train,
    Eval,
}

/// Floating-point element type of tensors and parameters.
pub trait Scalar:
    num_traits::Float
    + Default
    + Debug
    + Send
    + Sync
    + Sum
    + AddAssign
    + SubAssign
    + MulAssign
    + 'static
{
    fn of_f64(v: f64) -> Self;
    fn as_f64(self) -> f64;

    /// `C <- alpha * A B + beta * C` on strided row/column-major views.
    ///
    /// # Safety
    /// All strided views must stay inside their allocations; see
    /// [`matrixmultiply::sgemm`].
    #[allow(clippy::too_many_arguments)]
    unsafe fn gemm_raw(
        m: usize,
        k: usize,
        n: usize,
        alpha: Self,
        a: *const Self,
        rsa: isize,
        csa: isize,
        b: *const Self,
        rsb: isize,
        csb: isize,
        beta: Self,
        c: *mut Self,
        rsc: isize,
        csc: isize,
    );
}

impl Scalar for f32 {
    fn of_f64(v: f64) -> Self {
        v as f32
    }
    fn as_f64(self) -> f64 {
        f64::from(self)
    }
    unsafe fn gemm_raw(
        m: usize,
        k: usize,
        n: usize,
        alpha: f32,
        a: *const f32,
        rsa: isize,
        csa: isize,
        b: *const f32,
        rsb: isize,
        csb: isize,
        beta: f32,
        c: *mut f32,
        rsc: isize,
        csc: isize,
    ) {
        matrixmultiply::sgemm(m, k, n, alpha, a, rsa, csa, b, rsb, csb, beta, c, rsc, csc)
    }
}

impl Scalar for f64 {
    fn of_f64(v: f64) -> Self {
        v
    }
    fn as_f64(self) -> f64 {
        self
    }
    unsafe fn gemm_raw(
        m: usize,
        k: usize,
        n: usize,
        alpha: f64,
        a: *const f64,
        rsa: isize,
        csa: isize,
        b: *const f64,
        rsb: isize,
        csb: isize,
        beta: f64,
        c: *mut f64,
        rsc: isize,
        csc: isize,
    ) {
        matrixmultiply::dgemm(m, k, n, alpha, a, rsa, csa, b, rsb, csb, beta, c, rsc, csc)
    }
}
