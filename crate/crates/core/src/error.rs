use thiserror::Error;

#[derive(Debug, Error)]
pub enum LabError {
    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("integer overflow while computing {0}")]
    Overflow(&'static str),

    #[error("basis has {size} states, above the ceiling of {ceiling}")]
    BasisTooLarge { size: u128, ceiling: usize },

    #[error("mode {mode} out of range for {modes} modes")]
    ModeOutOfRange { mode: usize, modes: usize },

    #[error("dimension mismatch: {0}")]
    DimensionMismatch(String),

    #[error("operator is not Hermitian (deviation {0:.3e})")]
    NotHermitian(f64),

    #[error("kernel violates {what} (deviation {deviation:.3e})")]
    KernelStructure { what: &'static str, deviation: f64 },

    #[error("cutoff too small: {0}")]
    CutoffTooSmall(String),

    #[error("coherent amplitude |u|^2 = {norm_sq:.3} too large for cutoff {n_max}")]
    AmplitudeTooLarge { norm_sq: f64, n_max: usize },

    #[error("tail certificate {tail:.3e} exceeds threshold {threshold:.3e}")]
    TailCertificate { tail: f64, threshold: f64 },

    #[error("configuration error: {0}")]
    Config(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

pub type Result<T> = std::result::Result<T, LabError>;

pub(crate) fn invalid<T>(msg: impl Into<String>) -> Result<T> {
    Err(LabError::InvalidArgument(msg.into()))
}
