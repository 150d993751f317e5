use thiserror::Error;

/// Every failure the library can report.
///
/// Node ids in messages are 1-based, matching the public API.
#[derive(Debug, Error)]
pub enum Error {
    #[error("node id {node} out of range 1..={d}")]
    NodeOutOfRange { node: usize, d: usize },
    #[error("edge set contains a cycle through edge ({0}, {1})")]
    CycleDetected(usize, usize),
    #[error("graph is disconnected: node {node} is unreachable from the root")]
    Disconnected { node: usize },
    #[error("self-loop on node {0}")]
    SelfLoop(usize),
    #[error("node set {0:?} does not induce a connected subtree")]
    DisconnectedSubgraph(Vec<usize>),

    #[error("invalid axis specification: {0}")]
    AxisSpec(String),
    #[error("shape mismatch: {0}")]
    ShapeMismatch(String),
    #[error("{what} has {size} entries, above the limit of {limit}")]
    TooLarge { what: &'static str, size: u128, limit: u128 },

    #[error("rank {rank} at node {node} exceeds the sketch dimensions (max {max})")]
    RankTooLarge { node: usize, rank: usize, max: usize },
    #[error("retained singular value {index} of the node-{node} sketch is zero; lower the rank or add samples")]
    ZeroSingularValue { node: usize, index: usize },
    #[error("conditional at node {node} has nonpositive total mass {mass}")]
    NonPositiveMass { node: usize, mass: f64 },
    #[error("reference model has zero norm")]
    ZeroNorm,

    #[error("row {row}: state {value} at node {node} outside 1..={n}")]
    StateOutOfRange { row: usize, node: usize, value: usize, n: usize },
    #[error("unknown preset `{0}`")]
    UnknownPreset(String),
    #[error("interaction graph is not the given tree: {0}")]
    NotATree(String),
    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("malformed header: {0}")]
    MalformedHeader(String),
    #[error("format version mismatch: found {found}, expected {expected}")]
    VersionMismatch { found: String, expected: String },
    #[error("i/o error: {0}")]
    Io(#[from] std::io::Error),
    #[error("json error: {0}")]
    Json(#[from] serde_json::Error),
    #[error("config error: {0}")]
    Config(String),
}

pub type Result<T> = std::result::Result<T, Error>;

impl Error {
    /// True for failures caused by the numbers rather than by the inputs' shape.
    pub fn is_numerical(&self) -> bool {
        matches!(
            self,
            Error::ZeroSingularValue { .. } | Error::NonPositiveMass { .. } | Error::ZeroNorm
        )
    }
}
