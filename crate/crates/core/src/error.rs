use std::path::PathBuf;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, thiserror::Error)]
pub enum Error {
    #[error("unknown lexical unit `{0}`")]
    UnknownLu(String),

    #[error("sentence `{0}` has no tokens")]
    EmptySentence(String),

    #[error("invalid structure: {0}")]
    Invalid(String),

    #[error("shape mismatch at node {node} ({op}): {detail}")]
    Shape {
        node: usize,
        op: &'static str,
        detail: String,
    },

    #[error("loss must be a scalar, got {0} values")]
    NonScalarLoss(usize),

    #[error("non-finite gradient in parameter `{0}`")]
    NonFiniteGradient(String),

    #[error("non-finite loss on instance `{0}`")]
    NonFiniteLoss(String),

    #[error("unknown label `{0}`")]
    UnknownLabel(String),

    #[error("infeasible factor graph: {0}")]
    Infeasible(String),

    #[error("factor graph too large for exhaustive search: {0}")]
    TooLarge(String),

    #[error("{}:{line}: {msg}", path.display())]
    Parse {
        path: PathBuf,
        line: usize,
        msg: String,
    },

    #[error("checkpoint {}: {msg}", path.display())]
    Checkpoint { path: PathBuf, msg: String },

    #[error("misaligned inputs: {0}")]
    Misaligned(String),

    #[error("empty corpus")]
    EmptyCorpus,

    #[error("invalid configuration: {0}")]
    Config(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

impl Error {
    pub(crate) fn parse(path: impl Into<PathBuf>, line: usize, msg: impl Into<String>) -> Self {
        Error::Parse {
            path: path.into(),
            line,
            msg: msg.into(),
        }
    }

    /// Whether this error stems from bad user input rather than an internal
    /// failure.
    pub fn is_validation(&self) -> bool {
        !matches!(
            self,
            Error::NonFiniteGradient(_) | Error::NonFiniteLoss(_) | Error::Shape { .. }
        )
    }
}
