use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("dimension mismatch: expected {expected}, found {found}")]
    DimensionMismatch { expected: usize, found: usize },

    #[error("harmonic index {k} exceeds the configured maximum {max}")]
    HarmonicOutOfRange { k: i64, max: u32 },

    #[error("first Fourier coefficient vanishes, the function cannot be renormalized")]
    DegenerateFunction,

    #[error("dataset is empty")]
    EmptyDataset,

    #[error("incompatible sketches: {0}")]
    IncompatibleSketch(String),

    #[error("no analytic sketch available: {0}")]
    UnsupportedAnalyticSketch(&'static str),

    #[error("feature maps cannot be compared: {0}")]
    IncomparableMaps(String),

    #[error("infeasible task: {0}")]
    InfeasibleTask(String),

    #[error("could not place means with the requested separation after {0} rounds")]
    InfeasibleSeparation(usize),

    #[error("candidate grid is empty")]
    EmptyGrid,

    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("malformed input: {0}")]
    Parse(String),

    #[error("numerical failure: {0}")]
    Numerical(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),
}

impl Error {
    pub(crate) fn invalid(msg: impl Into<String>) -> Self {
        Error::InvalidArgument(msg.into())
    }

    /// True for errors caused by the input data or files rather than by the
    /// numerics or by the caller's arguments.
    pub fn is_data_error(&self) -> bool {
        matches!(
            self,
            Error::DimensionMismatch { .. }
                | Error::EmptyDataset
                | Error::IncompatibleSketch(_)
                | Error::Parse(_)
                | Error::Io(_)
                | Error::Json(_)
                | Error::Csv(_)
        )
    }
}
