use thiserror::Error;

pub type Result<T, E = Error> = core::result::Result<T, E>;

/// Failure modes of the numerical routines.
///
/// [`Error::name`] gives a stable identifier used by the command line front
/// end when reporting failures.
#[derive(Debug, Clone, PartialEq, Error)]
pub enum Error {
    #[error("domain error: {0}")]
    Domain(&'static str),
    #[error("geometry error: {0}")]
    Geometry(&'static str),
    #[error("critical value hit: target coincides with the map's critical value")]
    Root,
    #[error("empty preimage: no preimage of the target lands in K")]
    EmptyPreimage,
    #[error("numeric error: {0}")]
    Numeric(&'static str),
    #[error("contraction rate {eta} is not below 1")]
    Contraction { eta: f64 },
    #[error("pressure does not change sign on [{lo}, {hi}] (P(lo) = {p_lo}, P(hi) = {p_hi})")]
    NoSignChange { lo: f64, hi: f64, p_lo: f64, p_hi: f64 },
    #[error("pressure is not strictly decreasing near s = {s}")]
    NotMonotone { s: f64 },
    #[error("degenerate dimension bound: {0}")]
    DegenerateBound(&'static str),
    #[error("map {index} of the sampled sequence is invalid: {reason}")]
    Validation { index: usize, reason: &'static str },
    #[error("cloud spacing {spacing} exceeds the smallest box radius {min_radius}")]
    Resolution { spacing: f64, min_radius: f64 },
    #[error("clustering scale {delta} is below the cloud resolution {resolution}")]
    Scale { delta: f64, resolution: f64 },
    #[error("invalid input: {0}")]
    InvalidInput(&'static str),
}

impl Error {
    pub fn name(&self) -> &'static str {
        match self {
            Error::Domain(_) => "DomainError",
            Error::Geometry(_) => "GeometryError",
            Error::Root => "RootError",
            Error::EmptyPreimage => "EmptyPreimage",
            Error::Numeric(_) => "NumericError",
            Error::Contraction { .. } => "ContractionError",
            Error::NoSignChange { .. } => "NoSignChange",
            Error::NotMonotone { .. } => "NotMonotone",
            Error::DegenerateBound(_) => "DegenerateBound",
            Error::Validation { .. } => "ValidationError",
            Error::Resolution { .. } => "ResolutionError",
            Error::Scale { .. } => "ScaleError",
            Error::InvalidInput(_) => "InvalidInput",
        }
    }
}
