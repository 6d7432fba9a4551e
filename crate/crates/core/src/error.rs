use thiserror::Error;

/// Errors produced by the decomposition pipeline.
#[derive(Debug, Error)]
pub enum Error {
    #[error("graph syntax error on line {line}: {message}")]
    GraphSyntax { line: usize, message: String },

    #[error("unknown node kind `{0}`")]
    UnknownNodeKind(String),

    #[error("unknown node `{0}`")]
    UnknownNode(String),

    #[error("duplicate node `{0}`")]
    DuplicateNode(String),

    #[error("self-loop on node `{0}`")]
    SelfLoop(String),

    #[error("duplicate edge between `{0}` and `{1}`")]
    DuplicateEdge(String, String),

    #[error("directed cycle through `{0}`")]
    DirectedCycle(String),

    #[error("invalid graph: {0}")]
    InvalidGraph(String),

    #[error("invalid path: {0}")]
    InvalidPath(String),

    #[error("position {position} is not an interior position of a path with {len} nodes")]
    PositionOutOfRange { position: usize, len: usize },

    #[error("edge between `{0}` and `{1}` is undirected")]
    UndirectedEdge(String, String),

    #[error("extension budget of {0} exhausted")]
    BudgetExhausted(usize),

    #[error("schema error: {0}")]
    Schema(String),

    #[error("data error on line {line}, column `{column}`: {message}")]
    DataCell {
        line: usize,
        column: String,
        message: String,
    },

    #[error("data error: {0}")]
    Data(String),

    #[error("missing outcome: {0}")]
    MissingOutcome(String),

    #[error("singular design matrix while fitting group {group}")]
    SingularDesign { group: String },

    #[error("stratum Y={y} has {size} rows, fewer than the minimum {min}")]
    StratumTooSmall { y: u8, size: usize, min: usize },

    #[error("empty group: {0}")]
    EmptyGroup(String),

    #[error("order relation is not complete")]
    IncompleteOrder,

    #[error("outcome has a single class ({0})")]
    SingleClassOutcome(f64),

    #[error("training failed: {0}")]
    Training(String),

    #[error("dimension mismatch: expected {expected}, got {got}")]
    Dimension { expected: usize, got: usize },

    #[error("protocol error on line {line}: {message}")]
    Protocol { line: usize, message: String },

    #[error("protocol timeout after {0:?}")]
    Timeout(std::time::Duration),

    #[error("coalition references unknown path id {0}")]
    UnknownPath(usize),

    #[error("no path from the sensitive attribute reaches the prediction")]
    NoPaths,

    #[error("missing residual for row {0}")]
    MissingResidual(usize),

    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("oracle guard exceeded: {paths} paths, limit {limit}")]
    GuardExceeded { paths: usize, limit: usize },

    #[error("undefined score: {0}")]
    Undefined(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

pub type Result<T> = std::result::Result<T, Error>;
