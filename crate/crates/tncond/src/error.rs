//! Crate-wide error type.
//!
//! Every fallible operation in this crate returns [`Result`]. Variants are
//! grouped roughly by the layer that raises them: dense-tensor arithmetic,
//! network assembly, iterative solvers, and the chain/grid front ends.

use thiserror::Error;

#[derive(Debug, Clone, Error)]
pub enum Error {
    /// Two legs were paired for contraction but their dimensions differ.
    #[error("dimension mismatch: leg '{a_leg}' has dim {a_dim}, leg '{b_leg}' has dim {b_dim}")]
    DimensionError {
        a_leg: String,
        a_dim: usize,
        b_leg: String,
        b_dim: usize,
    },
    /// A leg id was referenced that the tensor does not carry.
    #[error("leg '{leg}' not found on tensor")]
    LegNotFound { leg: String },
    /// Row/column leg lists do not partition the tensor's legs.
    #[error("row/col legs do not partition the tensor legs: {detail}")]
    PartitionError { detail: String },
    /// An iteration failed to converge; carries the best estimate seen.
    #[error("no convergence after {iters} iterations (best estimate {best:.6e})")]
    ConvergenceError { best: f64, iters: usize },
    /// A dense intermediate or output would exceed the materialization cap.
    #[error("materialization of {entries} entries exceeds cap {cap}")]
    TooLargeToMaterialize { entries: u128, cap: u128 },
    /// A network description failed validation.
    #[error("invalid network: {detail}")]
    NetworkInvalid { detail: String },
    /// A vertex id was referenced that the network does not contain.
    #[error("vertex '{vertex}' not found in network")]
    VertexNotFound { vertex: String },
    /// A site tensor is degenerate (zero norm) where a nonzero one is required.
    #[error("degenerate site '{vertex}': {detail}")]
    DegenerateSite { vertex: String, detail: String },
    /// Requested shapes are infeasible for the operation.
    #[error("infeasible shape: {detail}")]
    ShapeError { detail: String },
    /// A chain or grid claimed to be canonical failed the canonicality check.
    #[error("not canonical: {detail}")]
    NotCanonical { detail: String },
    /// A perturbation budget is empty, negative, or declared dependent.
    #[error("invalid perturbation budget: {detail}")]
    InvalidPerturbationBudget { detail: String },
    /// I/O failure while reading or writing files.
    #[error("io error: {0}")]
    Io(String),
    /// Malformed JSON or CSV input.
    #[error("parse error: {0}")]
    Parse(String),
}

pub type Result<T> = std::result::Result<T, Error>;

impl From<std::io::Error> for Error {
    fn from(e: std::io::Error) -> Self {
        Error::Io(e.to_string())
    }
}

impl From<serde_json::Error> for Error {
    fn from(e: serde_json::Error) -> Self {
        Error::Parse(e.to_string())
    }
}
