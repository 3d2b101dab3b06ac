//! Dense 64-bit matrices, the forward kernels of the attention stack, and a
//! tape that differentiates exactly those kernels.

pub mod gradcheck;
mod matrix;
pub mod ops;
mod params;
mod tape;

pub use gradcheck::{finite_diff_grad, relative_error};
pub use matrix::Matrix;
pub use params::{ParamBlock, ParamId, ParamStore};
pub use tape::{Gradients, Tape, Var};
pub(crate) use tape::inv_pair_distance_value;

use thiserror::Error;

#[derive(Debug, Error)]
pub enum NumError {
    #[error("dimension mismatch in {op}: {}x{} vs {}x{}", left.0, left.1, right.0, right.1)]
    Dimension { op: &'static str, left: (usize, usize), right: (usize, usize) },
    #[error("row {row} is fully masked")]
    DegenerateRow { row: usize },
    #[error("backward called on an empty tape")]
    EmptyTape,
    #[error("loss must be 1x1, got {}x{}", shape.0, shape.1)]
    NotScalar { shape: (usize, usize) },
    #[error("non-finite value in {what}")]
    NonFinite { what: String },
    #[error("finite-difference step must be positive, got {0}")]
    InvalidStep(f64),
    #[error("label {label} out of range for {classes} classes")]
    LabelOutOfRange { label: usize, classes: usize },
}
