use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("dimension mismatch: expected {expected}, found {found}")]
    DimensionMismatch { expected: usize, found: usize },

    #[error("invalid configuration: {0}")]
    Config(String),

    #[error("client index {index} out of range for {n} clients")]
    ClientOutOfRange { index: usize, n: usize },

    #[error("server expected {expected} uplinks, received {found}")]
    UplinkCount { expected: usize, found: usize },

    #[error("malformed sparse message: {0}")]
    Malformed(String),

    #[error("lanczos breakdown persisted after {restarts} restarts at step {step}")]
    LanczosBreakdown { step: usize, restarts: usize },

    #[error("lanczos estimate {lanczos} disagrees with dense estimate {dense} beyond tolerance {tol}")]
    EigenCrossCheck { lanczos: f64, dense: f64, tol: f64 },

    #[error("i/o error on {path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },

    #[error("config parse error: {0}")]
    Parse(String),

    #[error("serialization error: {0}")]
    Serialize(String),
}

impl Error {
    pub(crate) fn config(msg: impl Into<String>) -> Self {
        Error::Config(msg.into())
    }

    pub fn io(path: impl AsRef<std::path::Path>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.as_ref().display().to_string(),
            source,
        }
    }
}

pub(crate) fn check_dim(expected: usize, found: usize) -> Result<()> {
    if expected == found {
        Ok(())
    } else {
        Err(Error::DimensionMismatch { expected, found })
    }
}
