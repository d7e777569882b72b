use thiserror::Error;

/// Broad failure category, used by front-ends to pick exit codes.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ErrorKind {
    /// Bad parameters or an impossible request.
    Usage,
    /// Malformed or inconsistent input data.
    Data,
    /// Numerical preconditions violated (normalization and the like).
    Numeric,
}

impl ErrorKind {
    pub fn as_str(self) -> &'static str {
        match self {
            ErrorKind::Usage => "usage",
            ErrorKind::Data => "data",
            ErrorKind::Numeric => "numeric",
        }
    }
}

#[derive(Debug, Error)]
pub enum Error {
    #[error("hierarchy node `{path}`: {reason}")]
    Hierarchy { path: String, reason: String },

    #[error("hierarchy document: {0}")]
    HierarchyJson(#[source] serde_json::Error),

    #[error("node id {0} is out of range")]
    InvalidNode(usize),

    #[error("class id {0} is out of range")]
    InvalidClass(usize),

    #[error("unknown class name `{0}`")]
    UnknownClass(String),

    #[error("probability vector: {0}")]
    Distribution(String),

    #[error("branch table: {0}")]
    BranchTable(String),

    #[error("invalid parameter: {0}")]
    InvalidParameter(String),

    #[error("{what}: length mismatch ({left} vs {right})")]
    LengthMismatch {
        what: &'static str,
        left: usize,
        right: usize,
    },

    #[error("empty input: {0}")]
    Empty(&'static str),

    #[error("brute-force oracle limited to {limit} nodes, hierarchy has {nodes}")]
    OracleTooLarge { nodes: usize, limit: usize },

    #[error("unknown method `{0}`")]
    UnknownMethod(String),

    #[error("{0}")]
    Format(String),

    #[error(transparent)]
    Csv(#[from] csv::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error("{path}: {source}")]
    File {
        path: String,
        #[source]
        source: std::io::Error,
    },

    #[error("{path}, line {line}: {reason}")]
    Parse {
        path: String,
        line: usize,
        reason: String,
    },
}

impl Error {
    pub fn kind(&self) -> ErrorKind {
        match self {
            Error::InvalidParameter(_) | Error::UnknownMethod(_) | Error::OracleTooLarge { .. } => {
                ErrorKind::Usage
            }
            Error::Distribution(_) | Error::BranchTable(_) => ErrorKind::Numeric,
            _ => ErrorKind::Data,
        }
    }

    pub(crate) fn hierarchy(path: impl Into<String>, reason: impl Into<String>) -> Self {
        Error::Hierarchy {
            path: path.into(),
            reason: reason.into(),
        }
    }
}

pub type Result<T, E = Error> = std::result::Result<T, E>;
