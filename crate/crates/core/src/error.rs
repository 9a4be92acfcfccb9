use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    /// Argument outside the mathematical domain of a function.
    #[error("domain error: {0}")]
    Domain(String),

    /// Invalid ray geometry (e.g. grazing incidence).
    #[error("geometry error: {0}")]
    Geometry(String),

    /// Structurally invalid input (scene, dataset, dimensions).
    #[error("validation error: {0}")]
    Validation(String),

    #[error("config error: {0}")]
    Config(String),

    #[error("no propagation paths between the device pair")]
    EmptyPathSet,

    #[error(
        "observation {observation}: G matrix is rank deficient \
         (singular value ratio {ratio:.3e} below {tolerance:.1e})"
    )]
    RankDeficient {
        observation: usize,
        ratio: f64,
        tolerance: f64,
    },

    #[error("calibration diverged at iteration {iteration}: non-finite loss (last finite theta {last_theta:?})")]
    Divergence {
        iteration: usize,
        last_theta: Vec<(f64, f64)>,
    },

    #[error("{context}: {source}")]
    Context {
        context: String,
        #[source]
        source: Box<Error>,
    },

    #[error("io error on {path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },

    #[error("json error: {0}")]
    Json(#[from] serde_json::Error),

    #[error("csv error: {0}")]
    Csv(#[from] csv::Error),
}

impl Error {
    pub fn context(self, context: impl Into<String>) -> Self {
        Error::Context {
            context: context.into(),
            source: Box::new(self),
        }
    }

    /// Innermost error, skipping context wrappers.
    pub fn root(&self) -> &Error {
        match self {
            Error::Context { source, .. } => source.root(),
            other => other,
        }
    }

    /// True for failures of the numerics rather than of the inputs.
    pub fn is_numerical(&self) -> bool {
        matches!(
            self.root(),
            Error::RankDeficient { .. } | Error::Divergence { .. } | Error::Domain(_) | Error::EmptyPathSet
        )
    }
}
