use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid grid: {0}")]
    InvalidGrid(String),

    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("density out of range: value {value} at cell {index} (allowed [{lo}, {hi}])")]
    DensityOutOfRange {
        index: usize,
        value: f64,
        lo: f64,
        hi: f64,
    },

    #[error("non-finite value at cell {index}")]
    NonFinite { index: usize },

    #[error("malformed kernel `{0}`: expected zero | sk | infinite | uniform | sk:L=<float> | linear")]
    MalformedKernel(String),

    #[error("numerical failure at t = {t}: {reason}")]
    Numerical {
        t: f64,
        reason: String,
        /// Cell values of the last state, kept so callers can dump it.
        dump: Option<Vec<f64>>,
    },

    #[error("factor series ends at t = {available}, integration requested up to t = {requested}")]
    FactorSeriesTooShort { available: f64, requested: f64 },

    #[error("io: {0}")]
    Io(#[from] std::io::Error),

    #[error("csv: {0}")]
    Csv(#[from] csv::Error),

    #[error("json: {0}")]
    Json(#[from] serde_json::Error),

    #[error("{context}: {source}")]
    Context {
        context: String,
        #[source]
        source: Box<Error>,
    },
}

impl Error {
    pub fn with_context(self, context: impl Into<String>) -> Self {
        Error::Context {
            context: context.into(),
            source: Box::new(self),
        }
    }

    /// True for failures of the numerics, as opposed to bad input.
    pub fn is_numerical(&self) -> bool {
        match self {
            Error::Numerical { .. } | Error::NonFinite { .. } => true,
            Error::Context { source, .. } => source.is_numerical(),
            _ => false,
        }
    }

    /// The last solver state attached to a numerical failure, if any.
    pub fn dump(&self) -> Option<&[f64]> {
        match self {
            Error::Numerical { dump, .. } => dump.as_deref(),
            Error::Context { source, .. } => source.dump(),
            _ => None,
        }
    }
}
