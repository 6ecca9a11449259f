use thiserror::Error;

/// Errors raised across the crate.
///
/// Matrix indices in messages are 1-based, matching the usual row/column
/// notation for small dense matrices.
#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    #[error("dimension must be at least 2, got {0}")]
    DimensionTooSmall(usize),

    #[error("matrix must be square, got {rows}x{cols}")]
    NotSquare { rows: usize, cols: usize },

    #[error("negative off-diagonal entry m({i},{j}) = {value}")]
    NegativeOffDiagonal { i: usize, j: usize, value: f64 },

    #[error("non-finite entry at ({i},{j})")]
    NonFinite { i: usize, j: usize },

    #[error("matrix is not irreducible")]
    NotIrreducible,

    #[error("spectrum is defective or nearly so (eigenvalue gap {gap:.3e})")]
    DefectiveSpectrum { gap: f64 },

    #[error("imaginary residue {residue:.3e} exceeds tolerance")]
    ImaginaryResidue { residue: f64 },

    #[error("dimension mismatch: expected {expected}, found {found}")]
    DimensionMismatch { expected: usize, found: usize },

    #[error("control parameter {alpha} outside [{lo}, {hi}]")]
    OutOfRange { alpha: f64, lo: f64, hi: f64 },

    #[error("invalid range [{lo}, {hi}]")]
    InvalidRange { lo: f64, hi: f64 },

    #[error("operation requires a segment control set")]
    WrongVariant,

    #[error("control set has no matrices")]
    EmptyControlSet,

    #[error("control index {index} out of bounds for {count} vertices")]
    BadControl { index: usize, count: usize },

    #[error("point is outside the open cone or too close to its boundary")]
    Domain,

    #[error("point is not on the simplex: {0}")]
    NotOnSimplex(String),

    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("step {dt} exceeds the admissible step {limit}")]
    StepTooLarge { dt: f64, limit: f64 },

    #[error("state left the positive cone at t = {t}")]
    NonPositiveState { t: f64 },

    #[error("contraction rate unavailable: some off-diagonal entry vanishes")]
    MissingRate,

    #[error("periodic samples invalid: {0}")]
    NonPeriodicSamples(String),

    #[error("value iteration did not converge after {iterations} iterations (residual {residual:.3e})")]
    NoConvergence { iterations: usize, residual: f64 },

    #[error("time step {dt} violates the CFL bound {limit}")]
    CflViolation { dt: f64, limit: f64 },

    #[error("grid solver supports n in {{2, 3}}, got {0}")]
    UnsupportedDimension(usize),

    #[error("horizon too short: boundary curve ended {distance:.3e} away from its limit point")]
    HorizonTooShort { distance: f64 },

    #[error("Legendre/high-frequency identity residual {residual:.3e} too large")]
    IdentityViolated { residual: f64 },

    #[error("unknown preset `{0}`")]
    UnknownPreset(String),

    #[error("invalid override `{0}`")]
    InvalidOverride(String),

    #[error("conservation law violated (residual {residual:.3e})")]
    ConservationViolated { residual: f64 },

    #[error("model file: {0}")]
    Model(String),

    #[error("i/o: {0}")]
    Io(String),
}

pub type Result<T> = std::result::Result<T, Error>;

impl From<std::io::Error> for Error {
    fn from(e: std::io::Error) -> Self {
        Error::Io(e.to_string())
    }
}

impl From<serde_json::Error> for Error {
    fn from(e: serde_json::Error) -> Self {
        Error::Model(e.to_string())
    }
}

impl Error {
    /// Short machine-readable tag used in CLI diagnostics.
    pub fn kind(&self) -> &'static str {
        match self {
            Error::DimensionTooSmall(_) => "DimensionTooSmall",
            Error::NotSquare { .. } => "NotSquare",
            Error::NegativeOffDiagonal { .. } => "NegativeOffDiagonal",
            Error::NonFinite { .. } => "NonFinite",
            Error::NotIrreducible => "NotIrreducible",
            Error::DefectiveSpectrum { .. } => "DefectiveSpectrum",
            Error::ImaginaryResidue { .. } => "ImaginaryResidue",
            Error::DimensionMismatch { .. } => "DimensionMismatch",
            Error::OutOfRange { .. } => "OutOfRange",
            Error::InvalidRange { .. } => "InvalidRange",
            Error::WrongVariant => "WrongVariant",
            Error::EmptyControlSet => "EmptyControlSet",
            Error::BadControl { .. } => "BadControl",
            Error::Domain => "Domain",
            Error::NotOnSimplex(_) => "NotOnSimplex",
            Error::InvalidArgument(_) => "InvalidArgument",
            Error::StepTooLarge { .. } => "StepTooLarge",
            Error::NonPositiveState { .. } => "NonPositiveState",
            Error::MissingRate => "MissingRate",
            Error::NonPeriodicSamples(_) => "NonPeriodicSamples",
            Error::NoConvergence { .. } => "NoConvergence",
            Error::CflViolation { .. } => "CFLViolation",
            Error::UnsupportedDimension(_) => "UnsupportedDimension",
            Error::HorizonTooShort { .. } => "HorizonTooShort",
            Error::IdentityViolated { .. } => "IdentityViolated",
            Error::UnknownPreset(_) => "UnknownPreset",
            Error::InvalidOverride(_) => "InvalidOverride",
            Error::ConservationViolated { .. } => "ConservationViolated",
            Error::Model(_) => "Model",
            Error::Io(_) => "Io",
        }
    }
}
