use thiserror::Error;

/// Errors produced by the certification and learning routines.
#[derive(Debug, Clone, PartialEq, Error)]
pub enum Error {
    #[error("size mismatch: {left} vs {right} qubits")]
    SizeMismatch { left: usize, right: usize },

    #[error("{n} qubits exceeds the dense limit of {limit}")]
    DenseLimit { n: usize, limit: usize },

    #[error("parse error: {0}")]
    Parse(String),

    #[error("invalid state: {0}")]
    InvalidState(String),

    #[error("invalid parameter: {0}")]
    InvalidParameter(String),

    #[error("observable is not Hermitian: {0}")]
    NonHermitian(String),

    #[error("channel is not completely positive and trace preserving: {0}")]
    NotCptp(String),

    #[error("target channel is not unitary")]
    NonUnitaryTarget,

    #[error("unsupported representation: {0}")]
    Unsupported(String),

    #[error("sampling failed: {0}")]
    Sampling(String),

    #[error("budget infeasible: {0}")]
    BudgetInfeasible(String),

    #[error("numerical failure: {0}")]
    Numerical(String),

    #[error("rank-deficient constraint system: rank {rank} < {columns} unknowns")]
    RankDeficient { rank: usize, columns: usize },
}

pub type Result<T, E = Error> = std::result::Result<T, E>;
