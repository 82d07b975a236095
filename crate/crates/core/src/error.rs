use std::path::PathBuf;

/// Errors produced by polarkit.
#[derive(Debug, thiserror::Error)]
pub enum Error {
    #[error("i/o error on {}", path.display())]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("malformed header: {0}")]
    MalformedHeader(String),

    #[error("truncated payload: expected {expected} bytes, found {found}")]
    TruncatedPayload { expected: usize, found: usize },

    #[error("size mismatch: {0}")]
    SizeMismatch(String),

    #[error("invalid dimensions {width}x{height}: {reason}")]
    InvalidDimensions {
        width: usize,
        height: usize,
        reason: &'static str,
    },

    #[error("unsupported bit depth {0} (expected 8 or 16)")]
    UnsupportedBitDepth(u32),

    #[error("invalid mosaic layout: {0}")]
    InvalidLayout(String),

    #[error("code {code} exceeds maximum {max} for the bit depth")]
    CodeOutOfRange { code: u16, max: u16 },

    #[error("unknown {kind} '{token}'")]
    UnknownToken { kind: &'static str, token: String },

    #[error("dimension mismatch: {0}")]
    DimensionMismatch(String),

    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("total internal reflection at {theta_deg} degrees")]
    Evanescent { theta_deg: f64 },

    #[error("unphysical Stokes vector ({s0}, {s1}, {s2})")]
    UnphysicalStokes { s0: f64, s1: f64, s2: f64 },

    #[error("invalid scene: {0}")]
    InvalidScene(String),

    #[error("json error: {0}")]
    Json(#[from] serde_json::Error),

    #[error("invalid annotations: {0}")]
    InvalidAnnotations(String),

    #[error("{file}:{line}: {message}")]
    LabelLine {
        file: String,
        line: usize,
        message: String,
    },

    #[error("split lists not disjoint: '{0}' appears in more than one list")]
    SplitOverlap(String),

    #[error("split list entry '{0}' is not in the annotation set")]
    SplitUnknownName(String),

    #[error("empty annotation set")]
    EmptySet,

    #[error("category mismatch: {0}")]
    CategoryMismatch(String),
}

pub type Result<T, E = Error> = std::result::Result<T, E>;

impl Error {
    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }
}
