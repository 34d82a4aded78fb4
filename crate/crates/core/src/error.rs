//! Shared error type for the whole crate.

use thiserror::Error;

/// Crate-wide result alias.
pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    /// Operand shapes do not line up (cost vs marginals, plan vs cost, ...).
    #[error("dimension mismatch in {context}: expected {expected}, got {got}")]
    DimensionMismatch {
        context: &'static str,
        expected: String,
        got: String,
    },

    /// A value failed a domain invariant (negativity, non-finite, simplex, ...).
    #[error("invalid {context}: {message}")]
    InvalidValue {
        context: &'static str,
        message: String,
    },

    /// A marginal distribution contains a zero (or negative) entry where the
    /// solver requires strictly positive mass.
    #[error("marginal entry {index} is not strictly positive")]
    ZeroMarginalEntry { index: usize },

    /// Sinkhorn scaling failed to reach the requested marginal tolerance.
    #[error(
        "sinkhorn did not converge within {iterations} iterations \
         (marginal violation {violation:.3e})"
    )]
    NonConvergence { iterations: usize, violation: f64 },

    /// Masked Sinkhorn failed to converge; the smallest mask entry is the
    /// most likely offender.
    #[error(
        "masked sinkhorn did not converge within {iterations} iterations \
         (marginal violation {violation:.3e}, smallest mask weight at index {min_mask_index})"
    )]
    MaskedNonConvergence {
        iterations: usize,
        violation: f64,
        min_mask_index: usize,
    },

    /// The permutation oracle only enumerates instances up to 8 nodes.
    #[error("exact oracle limited to n <= 8, got n = {n}")]
    OracleTooLarge { n: usize },

    /// An intra-graph cost matrix must be square.
    #[error("matrix must be square, got {rows}x{cols}")]
    NotSquare { rows: usize, cols: usize },

    /// An intra-graph cost matrix must be symmetric.
    #[error("matrix not symmetric (max deviation {max_deviation:.3e})")]
    NotSymmetric { max_deviation: f64 },

    /// An intra-graph cost matrix must have a zero diagonal.
    #[error("matrix diagonal entry {index} is not zero")]
    NonzeroDiagonal { index: usize },

    /// Class index outside the probability vector.
    #[error("index {index} out of range for length {len}")]
    IndexOutOfRange { index: usize, len: usize },

    /// Gradient computation produced a non-finite value.
    #[error("non-finite gradient in {context}")]
    NonFiniteGradient { context: &'static str },

    /// Training loss diverged.
    #[error("training loss became non-finite at epoch {epoch}")]
    NonFiniteLoss { epoch: usize },

    /// Embedding ids must be unique.
    #[error("duplicate id {id:?}")]
    DuplicateId { id: String },

    /// Embedding rows must have positive Euclidean norm.
    #[error("embedding row {index} has zero norm")]
    ZeroNormRow { index: usize },

    /// Binary embedding file does not start with the expected magic bytes.
    #[error("bad magic bytes {found:?}, expected \"EMB1\"")]
    BadMagic { found: [u8; 4] },

    /// Binary payload ended before the header-declared size.
    #[error("truncated input: {context}")]
    Truncated { context: String },

    /// A text format failed to parse; `line` is 1-based and counts the header.
    #[error("parse error at line {line}: {message}")]
    Parse { line: usize, message: String },

    /// An input that must be non-empty was empty.
    #[error("empty input: {context}")]
    EmptyInput { context: &'static str },

    /// Every class was excluded by the metric's degenerate-case policy.
    #[error("{metric}: every class was skipped")]
    AllClassesSkipped { metric: &'static str },

    /// PQD is undefined when the best group accuracy is zero.
    #[error("all group accuracies are zero; PQD undefined")]
    AllAccuraciesZero,

    /// Label rejection sampling could not satisfy the pairwise-cosine bound.
    #[error("rejection sampling failed after {attempts} draws")]
    RejectionSamplingFailed { attempts: usize },

    #[error("i/o error: {0}")]
    Io(#[from] std::io::Error),
}
