use std::path::PathBuf;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, thiserror::Error)]
pub enum Error {
    #[error("layer {layer}: expected {what} of width {expected}, got {got}")]
    Dimension {
        layer: usize,
        what: &'static str,
        expected: usize,
        got: usize,
    },

    #[error("shape mismatch: {0}")]
    Shape(String),

    #[error("layer {layer}: gain values must lie in [0, 1]")]
    GainRange { layer: usize },

    #[error("tape does not belong to this network: {0}")]
    TapeMismatch(String),

    #[error("non-finite value encountered: {0}")]
    NonFinite(String),

    #[error("training diverged: {0}")]
    Diverged(String),

    #[error("invalid argument: {0}")]
    Invalid(String),

    #[error("class {0} is not present")]
    MissingClass(u32),

    #[error("no samples available: {0}")]
    Empty(String),

    #[error("malformed file at byte {offset}: {msg}")]
    Format { offset: usize, msg: String },

    #[error("{}:{line}: {msg}", path.display())]
    Parse {
        path: PathBuf,
        line: usize,
        msg: String,
    },

    #[error("names not found: {}", .0.join(", "))]
    MissingNames(Vec<String>),

    #[error("config `{path}`: {msg}")]
    Config { path: String, msg: String },

    #[error("stage `{stage}` failed: {source}")]
    Stage {
        stage: String,
        #[source]
        source: Box<Error>,
    },

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),
}

impl Error {
    pub(crate) fn config(path: impl Into<String>, msg: impl Into<String>) -> Self {
        Error::Config {
            path: path.into(),
            msg: msg.into(),
        }
    }

    pub(crate) fn in_stage(self, stage: &str) -> Self {
        Error::Stage {
            stage: stage.to_string(),
            source: Box::new(self),
        }
    }
}
