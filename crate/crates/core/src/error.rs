use std::path::PathBuf;

use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("line {line}: {message}")]
    Parse { line: usize, message: String },

    #[error("line {line}: face has {count} vertices, only triangles are supported")]
    NonTriangleFace { line: usize, count: usize },

    #[error("line {line}: vertex index {index} out of range (mesh has {count} vertices)")]
    IndexOutOfRange {
        line: usize,
        index: i64,
        count: usize,
    },

    #[error("mesh is empty")]
    EmptyMesh,

    #[error("face {face} is degenerate (repeated vertex index)")]
    DegenerateFace { face: usize },

    #[error("face {face} has zero area")]
    ZeroAreaTriangle { face: usize },

    #[error("edge ({0}, {1}) borders more than two faces")]
    NonManifoldEdge(usize, usize),

    #[error("vertex {vertex} is isolated")]
    IsolatedVertex { vertex: usize },

    #[error("mesh graph is disconnected")]
    Disconnected,

    #[error("vertex {vertex}: all 1-ring edges have zero length")]
    CoincidentNeighborhood { vertex: usize },

    #[error("meshes do not share connectivity")]
    ConnectivityMismatch,

    #[error("feature was encoded against reference {found}, expected {expected}")]
    ReferenceMismatch { expected: String, found: String },

    #[error("dimension mismatch: {0}")]
    Dimension(String),

    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("linear system is singular: {0}")]
    Singular(String),

    #[error("non-finite value in {component}")]
    NonFinite { component: String },

    #[error("training diverged at stage {stage}, epoch {epoch}: non-finite {component}")]
    Diverged {
        stage: u8,
        epoch: usize,
        component: String,
    },

    #[error("malformed {what}: {message}")]
    Format { what: &'static str, message: String },

    #[error("{path}: {source}")]
    File {
        path: PathBuf,
        #[source]
        source: Box<Error>,
    },

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

impl Error {
    pub(crate) fn format(what: &'static str, message: impl Into<String>) -> Self {
        Error::Format {
            what,
            message: message.into(),
        }
    }

    pub(crate) fn dim(message: impl Into<String>) -> Self {
        Error::Dimension(message.into())
    }

    /// Attach the file a failure originated from.
    pub fn in_file(self, path: impl Into<PathBuf>) -> Self {
        Error::File {
            path: path.into(),
            source: Box::new(self),
        }
    }
}
