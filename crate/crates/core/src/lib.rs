//! Spatio-temporal graph attention over actor and object detections.
//!
//! Detections from consecutive keyframe clips of a video become the nodes of
//! one graph. Multi-head graph-attention layers update every node from its
//! neighbours, with attention logits scaled by box proximity and zeroed
//! between clips that are too far apart in time. Actor nodes are then
//! classified into (possibly several) action classes.
//!
//! The crate is self-contained: [`numcore`] provides the matrix kernels and the
//! reverse-mode tape used for training, [`graph`] the adjacency and masks,
//! [`attention`] the heads and layers, [`model`] the full parameterized model,
//! [`training`] the optimization loop, [`evaluation`] frame-level mAP, and
//! [`dataio`] the line-delimited dataset format plus a synthetic generator.
//! Runnable walkthroughs live in the crate's `examples/` directory.

pub mod attention;
pub mod cli;
pub mod dataio;
pub mod evaluation;
pub mod graph;
pub mod model;
pub mod numcore;
pub mod training;

use std::path::PathBuf;

use thiserror::Error;

pub use graph::{BoxGeometry, EntityKind};
pub use model::{ParameterSet, StageConfig};
pub use numcore::Matrix;

#[derive(Debug, Error)]
pub enum Error {
    #[error(transparent)]
    Num(#[from] numcore::NumError),
    #[error("invalid box {coords:?}: expected 0 <= x1 < x2 <= 1 and 0 <= y1 < y2 <= 1")]
    InvalidBox { coords: [f64; 4] },
    #[error("clips are not consecutive: timestamp {before} is followed by {after}")]
    TimestampGap { before: i64, after: i64 },
    #[error("invalid configuration: {0}")]
    Config(String),
    #[error("{path}:{line}: {msg}")]
    Parse { path: String, line: usize, msg: String },
    #[error("{path}:{line}: field `{field}`: {msg}")]
    Invalid { path: String, line: usize, field: &'static str, msg: String },
    #[error("{kind} feature width mismatch: expected {expected}, found {found} (line {line})")]
    WidthMismatch { kind: &'static str, expected: usize, found: usize, line: usize },
    #[error("non-finite gradient in parameter block `{block}`")]
    NonFiniteGradient { block: String },
    #[error("training diverged at epoch {epoch}: loss {loss}")]
    Diverged { epoch: usize, loss: f64 },
    #[error("ground truth is empty")]
    EmptyGroundTruth,
    #[error("checkpoint: {0}")]
    Checkpoint(String),
    #[error("{}: {source}", path.display())]
    Io { path: PathBuf, source: std::io::Error },
    #[error(transparent)]
    Csv(#[from] csv::Error),
    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

impl Error {
    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io { path: path.into(), source }
    }
}

pub type Result<T, E = Error> = std::result::Result<T, E>;
