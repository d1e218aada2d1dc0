use thiserror::Error;

/// Errors produced by model construction, simulation, and sampling.
#[derive(Debug, Error)]
pub enum Error {
    #[error("shape mismatch: {0}")]
    Shape(String),
    #[error("invalid phase coefficients")]
    InvalidPhaseCoefficients,
    #[error("undefined angle: arctan4 at (0, 0)")]
    UndefinedAngle,
    #[error("rank-deficient design: regressor is constant")]
    RankDeficientDesign,
    #[error("invalid argument: {0}")]
    InvalidArgument(String),
    #[error("region out of bounds: {0}")]
    RegionOutOfBounds(String),
    #[error("overlapping regions: {0}")]
    OverlappingRegions(String),
    #[error("cannot place regions after {0} attempts")]
    RegionPlacement(usize),
    #[error("non-finite value in {context} at voxel {voxel}")]
    NonFinite { context: &'static str, voxel: usize },
    #[error("degenerate variance at voxel {0}")]
    DegenerateVariance(usize),
    #[error("linear algebra failure: {0}")]
    Linalg(String),
    #[error("AUC undefined: single-class truth")]
    AucUndefined,
    #[error("zero variance in true values")]
    ZeroTruthVariance,
}

pub type Result<T> = std::result::Result<T, Error>;
