//! Dense numeric kernel: matrices, rectifier MLPs with exact backprop,
//! unit-sphere projection, Adam, and finite-difference gradient checks.
//!
//! Everything is `f64` and single-threaded.

pub mod adam;
pub mod gradcheck;
pub mod matrix;
pub mod mlp;
pub mod normalize;

pub use adam::{adam_step, scheduled_rate, AdamState};
pub use gradcheck::{grad_check, grad_check_values, GradCheckReport};
pub use matrix::{dot, euclidean_distance, gemm, norm, DenseMatrix, Op};
pub use mlp::{LinearGrad, LinearLayer, Mlp, MlpGrad, MlpTape};
pub use normalize::{l2_normalize, l2_normalize_backward, NORM_FLOOR};

use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum NumError {
    #[error("dimension mismatch in {context}: expected {expected}, found {found}")]
    DimensionMismatch {
        context: &'static str,
        expected: usize,
        found: usize,
    },
    #[error("non-finite value in {context} at index {index}")]
    NonFinite { context: &'static str, index: usize },
    #[error("cannot normalize a vector of norm {norm:e}: direction is degenerate")]
    DegenerateNorm { norm: f64 },
    #[error("activation tape does not belong to the current network parameters")]
    StaleTape,
    #[error("network must have at least one layer")]
    EmptyNetwork,
}
