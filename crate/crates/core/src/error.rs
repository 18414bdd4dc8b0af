use thiserror::Error;

/// Errors produced by fitting, estimation and simulation.
#[derive(Debug, Error)]
pub enum Error {
    #[error("domain error: {0}")]
    Domain(String),

    #[error("invalid configuration: {0}")]
    Config(String),

    #[error("fit of {nuisance} failed: {reason}")]
    Fit { nuisance: &'static str, reason: String },

    #[error("fit of {nuisance} failed: design column `{column}` is degenerate")]
    DegenerateColumn {
        nuisance: &'static str,
        column: String,
    },

    #[error("fold {fold} is empty")]
    EmptyFold { fold: usize },

    #[error("fold {fold}: {source}")]
    InFold {
        fold: usize,
        #[source]
        source: Box<Error>,
    },

    #[error("non-finite value in moment term `{term}`")]
    NonFinite { term: &'static str },

    #[error("degenerate quadrature grid: mediator scale {scale}")]
    DegenerateGrid { scale: f64 },

    #[error("unsupported data-generating process: {0}")]
    UnsupportedDgp(String),

    #[error("degenerate sample: {0}")]
    Degenerate(String),

    #[error("data error at row {row}, column `{column}`: {reason}")]
    Data {
        row: usize,
        column: String,
        reason: String,
    },

    #[error("{path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },

    #[error("csv: {0}")]
    Csv(#[from] csv::Error),

    #[error("json: {0}")]
    Json(#[from] serde_json::Error),
}

impl Error {
    pub(crate) fn in_fold(self, fold: usize) -> Self {
        Error::InFold {
            fold,
            source: Box::new(self),
        }
    }
}

pub type Result<T, E = Error> = std::result::Result<T, E>;
