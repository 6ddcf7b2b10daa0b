use std::path::PathBuf;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, thiserror::Error)]
pub enum Error {
    #[error("degenerate ray")]
    DegenerateRay,

    #[error("empty scene")]
    EmptyScene,

    #[error("not an IRIS scene file")]
    NotSceneFile,

    #[error("not an IRIS model file")]
    NotModelFile,

    /// Malformed binary or text input, positioned at a byte offset.
    #[error("{message} (byte offset {offset})")]
    Format { offset: u64, message: String },

    #[error("unsupported maxval {0}")]
    UnsupportedMaxval(u32),

    #[error("shape mismatch: {0}")]
    ShapeMismatch(String),

    #[error("non-finite gradient in parameter group `{0}`")]
    NonFiniteGradient(&'static str),

    #[error("selection {start}..{end} out of range for {count} anchors")]
    SelectionOutOfRange { start: usize, end: usize, count: usize },

    #[error("scene is not baked")]
    NotBaked,

    #[error("model has no hash grid")]
    MissingHashGrid,

    #[error("invalid camera: {0}")]
    InvalidCamera(String),

    #[error("dataset mismatch: missing frames {0:?}")]
    MissingFrames(Vec<PathBuf>),

    #[error("invalid config: {0}")]
    Config(String),

    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

impl Error {
    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }

    pub(crate) fn format(offset: usize, message: impl Into<String>) -> Self {
        Error::Format {
            offset: offset as u64,
            message: message.into(),
        }
    }
}
