use thiserror::Error;

use crate::protocol::Axis;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("dimension must be odd (got d = {0})")]
    EvenDimension(usize),
    #[error("dimension too small: {0}")]
    DimensionTooSmall(String),
    #[error("dimension mismatch: expected d = {expected}, found d = {found}")]
    DimensionMismatch { expected: usize, found: usize },
    #[error("mode index l = {l} outside [-{max}, {max}]")]
    ModeOutOfRange { l: i64, max: usize },
    #[error("basis mismatch: expected {expected}, found {found}")]
    BasisMismatch {
        expected: &'static str,
        found: &'static str,
    },
    #[error("state is not physical: {0}")]
    NotPhysical(String),
    #[error("input matrix is not Hermitian (max deviation {0:.3e})")]
    NonHermitianInput(f64),
    #[error("wedge {wedge} at tau = {tau} has zero post-selected weight")]
    ZeroWeightWedge { wedge: i64, tau: i64 },
    #[error("measurement plan not covered: missing setting (tau = {tau}, axis {axis:?})")]
    MissingSetting { tau: i64, axis: Axis },
    #[error("iterative maximum likelihood requires measurement records")]
    MleRequiresRecords,
    #[error("ensemble weights sum to {0}, expected 1")]
    UnnormalizedEnsemble(f64),
    #[error("schema error: {0}")]
    Schema(String),
    #[error("normalization error: {0}")]
    Norm(String),
    #[error("range error: {0}")]
    Range(String),
    #[error("frame contains no samples")]
    EmptyFrame,
    #[error("invalid frame: {0}")]
    InvalidFrame(String),
    #[error("PGM format error: {0}")]
    PgmFormat(String),
    #[error("geometry error: {0}")]
    Geometry(String),
    #[error("invalid argument: {0}")]
    InvalidArgument(String),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}
