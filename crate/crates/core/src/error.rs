use alloc::string::String;

pub type Result<T> = core::result::Result<T, Error>;

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum Error {
    #[error("invalid parameter: {0}")]
    InvalidParameter(String),

    #[error("node index {index} out of range for graph with {node_count} nodes")]
    NodeOutOfRange { index: usize, node_count: usize },

    #[error("graph has no nodes")]
    EmptyGraph,

    #[error("unknown node label `{0}`")]
    UnknownNode(String),

    #[error("node `{node}` labeled with both `{first}` and `{second}`")]
    ConflictingLabel {
        node: String,
        first: String,
        second: String,
    },

    /// Some infected, non-seed node has zero total incoming hazard, so the
    /// cascade has probability zero under the current rates.
    #[error("cascade {cascade} is impossible under the current rates: node {node} has zero incoming hazard")]
    ImpossibleCascade { cascade: usize, node: usize },

    #[error("numerical failure: {0}")]
    NonFinite(String),

    #[error("dimension mismatch: expected {expected}, found {found}")]
    DimensionMismatch { expected: usize, found: usize },

    #[error("training set contains fewer than two classes")]
    DegenerateTraining,

    #[error("empty input: {0}")]
    EmptyInput(String),
}

impl Error {
    /// True for errors caused by the numerics rather than by the input data.
    pub fn is_numerical(&self) -> bool {
        matches!(self, Error::NonFinite(_) | Error::ImpossibleCascade { .. })
    }
}
