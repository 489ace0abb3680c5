use std::path::PathBuf;

/// Crate-wide error type.
#[derive(Debug, thiserror::Error)]
pub enum Error {
    #[error("i/o error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("{path}:{line}: {msg}")]
    Parse { path: PathBuf, line: usize, msg: String },

    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("field has no usable pixels")]
    EmptyField,

    #[error("frame {frame}: grid shape or spacing differs from frame 0")]
    FrameMismatch { frame: usize },

    #[error("label {0} exceeds the 16-bit label-map limit of 65535")]
    LabelOverflow(u32),

    #[error(
        "object {label} contains no anchor point; lower the zone simplification threshold"
    )]
    ObjectWithoutAnchor { label: u32 },

    #[error("node cap {cap} cannot be reached: a single-branch tree still has {nodes} nodes")]
    NodeCapUnreachable { cap: usize, nodes: usize },

    #[error("unknown node id {0}")]
    UnknownNode(u32),

    #[error("anchor node {node} is not a row of the measure network")]
    AnchorNotInNetwork { node: u32 },

    #[error("transport mass {m} outside (0, {max}]")]
    MassOutOfRange { m: f64, max: f64 },

    #[error("mass range [{lo}, {hi}] is empty")]
    EmptyMassRange { lo: f64, hi: f64 },

    #[error("transport solver failed to terminate (pivot limit {0} exceeded)")]
    SolverStalled(usize),

    #[error("{context}: {source}")]
    Context {
        context: String,
        #[source]
        source: Box<Error>,
    },
}

impl Error {
    /// Wraps an error with frame/pair context for pipeline diagnostics.
    pub fn context(self, context: impl Into<String>) -> Self {
        Error::Context { context: context.into(), source: Box::new(self) }
    }
}

pub type Result<T> = std::result::Result<T, Error>;
