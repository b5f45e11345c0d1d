//! Error taxonomy shared by all modules.

use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum FppError {
    #[error("edge {0} is outside the environment box")]
    EdgeOutOfBox(String),
    #[error("vertex {0} is outside the environment box")]
    VertexOutOfBox(String),
    #[error("index {index} out of range for a path with {len} vertices")]
    IndexOutOfRange { index: usize, len: usize },
    #[error("no critical probability entry for dimension {0}")]
    MissingCriticalProbability(usize),
    #[error("invalid distribution: {0}")]
    InvalidDistribution(String),
    #[error("invalid path: {0}")]
    InvalidPath(String),
    #[error("path is not self-avoiding")]
    PathNotSelfAvoiding,
    #[error("endpoints are disconnected under the current overrides")]
    Disconnected,
    #[error("no margin certificate: the infimum of the support is zero")]
    NoCertificate,
    #[error("zero-weight edge present; DAG counting requires positive weights")]
    ZeroWeightPresent,
    #[error("search cap of {0} exceeded")]
    CapExceeded(usize),
    #[error("geodesic enumeration saturated; the property is undecidable")]
    SaturatedEnumeration,
    #[error("first passage times could not be certified within the environment box")]
    UncertifiedFpt,
    #[error("wrong box kind: expected {expected}")]
    WrongKind { expected: &'static str },
    #[error("alpha has zero probability under the distribution")]
    AlphaNotAtom,
    #[error("path does not meet the outer boundary of the box")]
    NoHit,
    #[error("no path satisfying the regime conditions exists: {0}")]
    InfeasibleGeometry(String),
    #[error("invalid configuration: {0}")]
    InvalidConfig(String),
    #[error("i/o error: {0}")]
    Io(String),
}

pub type Result<T> = std::result::Result<T, FppError>;
