use thiserror::Error;

/// Errors produced by the localization toolkit.
#[derive(Debug, Clone, PartialEq, Error)]
pub enum Error {
    /// Two points that must be distinct coincide (or a vector has zero length).
    #[error("degenerate geometry: {0}")]
    DegenerateGeometry(String),

    /// A model vector vanished where a nonzero one is required (zero `h`, zero gain).
    #[error("degenerate model: {0}")]
    DegenerateModel(String),

    /// A normal matrix could not be factorized.
    #[error("rank-deficient normal matrix: {0}")]
    RankDeficient(String),

    /// A NaN or infinity appeared during a computation.
    #[error("numerical failure: {0}")]
    NumericalFailure(String),

    /// The Fisher information matrix is singular or too badly conditioned.
    #[error("parameters are not identifiable: {0}")]
    Unidentifiable(String),

    /// An input violates a documented invariant.
    #[error("invalid input: {0}")]
    InvalidInput(String),
}

pub type Result<T> = std::result::Result<T, Error>;
