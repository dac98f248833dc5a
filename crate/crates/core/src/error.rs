use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

/// Errors raised while building networks, operators and schedules, or while running them.
#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    #[error("malformed network file: {0}")]
    NetworkParse(String),
    #[error("node label must be nonempty")]
    EmptyLabel,
    #[error("duplicate node label `{0}`")]
    DuplicateNode(String),
    #[error("duplicate edge ({0}, {1})")]
    DuplicateEdge(String, String),
    #[error("edge ({0}, {1}) has no reverse edge ({1}, {0})")]
    AsymmetricEdge(String, String),
    #[error("self-loop ({0}, {0}) must not be listed; self-loops are implicit")]
    ListedSelfLoop(String),
    #[error("unknown node `{0}`")]
    UnknownNode(String),
    #[error("unknown data qubit `{0}`")]
    UnknownQubit(String),
    #[error("duplicate data qubit `{0}`")]
    DuplicateQubit(String),

    #[error("invalid path: {0}")]
    InvalidPath(String),
    #[error("invalid tree: {0}")]
    InvalidTree(String),

    #[error("vertex {vertex} has no coin value {coin}")]
    InvalidCoin { vertex: usize, coin: usize },
    #[error("vertex index {0} out of range")]
    InvalidVertex(usize),
    #[error("walker {0} out of range")]
    InvalidWalker(usize),
    #[error("matrix is not unitary: {0}")]
    NotUnitary(String),
    #[error("single-qubit state is not normalized (norm^2 = {0})")]
    NotNormalized(f64),
    #[error("operator or state was built for a different register layout")]
    LayoutMismatch,
    #[error("register layout needs {bits} bits, above the cap of {max}")]
    TooManyBits { bits: usize, max: usize },
    #[error("qubit index {0} outside the register layout")]
    InvalidQubitIndex(usize),
    #[error("invalid subsystem: {0}")]
    InvalidSubsystem(String),

    #[error("control and target walker must differ (both are {0})")]
    SameWalker(usize),
    #[error("data qubit {qubit} is not located at vertex {vertex}")]
    LocalityViolation { qubit: usize, vertex: usize },
    #[error("control string has {got} bits but there are {expected} control qubits")]
    PatternLength { expected: usize, got: usize },
    #[error("fan-out successor {0} listed twice")]
    DuplicateSuccessor(usize),
    #[error("vertex {0} is not a neighbor of vertex {1}")]
    NotNeighbor(usize, usize),
    #[error("helper walker {0} is not initialized at the fan-out vertex")]
    UninitializedHelper(usize),
    #[error("schedule contains a measurement and cannot be inverted")]
    MeasurementInSchedule,
    #[error("walker budget exceeded: protocol needs {needed} walkers, {available} available")]
    WalkerBudget { needed: usize, available: usize },
    #[error("qubit sets overlap: {0}")]
    OverlappingQubits(String),
    #[error("precondition violated: {0}")]
    Precondition(String),
}
