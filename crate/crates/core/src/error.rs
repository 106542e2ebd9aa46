use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid ensemble: {0}")]
    InvalidEnsemble(String),

    #[error("degenerate direction: the zero vector has no angle")]
    DegenerateDirection,

    #[error("matrix is not unimodular (det = {0})")]
    NotUnimodular(f64),

    #[error("singular basis change (det = {0})")]
    SingularBasisChange(f64),

    #[error("invalid parameter: {0}")]
    InvalidParameter(String),

    #[error("wrong anomaly class: expected {expected}, found {found}")]
    WrongClass { expected: String, found: String },

    #[error("E[p^2] not strictly positive (min over the circle = {0:e})")]
    NotElliptic(f64),

    #[error("spectral solve failed: {0}; increase K")]
    IncreaseK(String),

    #[error("parabolic anomaly is not covered (the case det E[P] = 0, E[P] != 0 is non-generic)")]
    Parabolic,

    #[error("raw transfer matrix is not specified for the Kronig-Penney model")]
    RawFormUnavailable,

    #[error("config: {0}")]
    Config(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

impl Error {
    /// True for failures of a numerical routine, as opposed to bad input.
    pub fn is_numerical(&self) -> bool {
        matches!(
            self,
            Error::NotElliptic(_) | Error::IncreaseK(_) | Error::Parabolic | Error::WrongClass { .. }
        )
    }
}
