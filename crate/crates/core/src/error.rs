use thiserror::Error;

use ccc_tensor::TensorError;

#[derive(Debug, Error)]
pub enum Error {
    #[error("domain error: {0}")]
    Domain(String),
    #[error("shape error: {0}")]
    Shape(String),
    #[error("numeric error: {0}")]
    Numeric(String),
    #[error("no convergence after {iterations} iterations (last xy = ({:.6}, {:.6}))", last_xy.0, last_xy.1)]
    Convergence { iterations: usize, last_xy: (f64, f64) },
    #[error("fit error: {0}")]
    Fit(String),
    #[error("estimation error: {0}")]
    Estimation(String),
    #[error("config error: {0}")]
    Config(String),
    #[error("format error in {path} at byte {offset}: {msg}")]
    Format { path: String, offset: usize, msg: String },
    #[error("load error: {0}")]
    Load(String),
    #[error("training aborted: {0}")]
    Training(String),
    #[error(transparent)]
    Tensor(#[from] TensorError),
    #[error("{path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
}

pub type Result<T> = std::result::Result<T, Error>;

impl Error {
    pub(crate) fn io(path: impl AsRef<std::path::Path>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.as_ref().display().to_string(),
            source,
        }
    }
}

pub(crate) fn domain<T>(msg: impl Into<String>) -> Result<T> {
    Err(Error::Domain(msg.into()))
}
