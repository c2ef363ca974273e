use std::path::PathBuf;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, thiserror::Error)]
pub enum Error {
    #[error("format error: {0}")]
    Format(String),
    #[error("corrupt data: {0}")]
    Corruption(String),
    #[error("validation error: {0}")]
    Validation(String),
    #[error("dimension error: {0}")]
    Dimension(String),
    #[error("normalisation state error: {0}")]
    State(String),
    #[error("configuration error: {0}")]
    Config(String),
    #[error("non-finite values in {layer}")]
    Numeric { layer: String },
    #[error("training diverged at step {step} (last good checkpoint: {last_good:?})")]
    Diverged {
        step: u64,
        last_good: Option<PathBuf>,
    },
    #[error("sample generation failed: {0}")]
    Generation(String),
    #[error("resource limit exceeded: {0}")]
    Resource(String),
    #[error("i/o error on {path:?}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error(transparent)]
    Json(#[from] serde_json::Error),
    #[error(transparent)]
    Csv(#[from] csv::Error),
}

impl Error {
    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }
}
