use thiserror::Error;

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum FieldError {
    #[error("{0} is not prime")]
    NotPrime(u64),
    #[error("field order {0} is too large")]
    TooLarge(u64),
    #[error("bad modulus: {0}")]
    BadModulus(String),
    #[error("modulus is not irreducible")]
    NotIrreducible,
    #[error("element {value} is outside a field of order {order}")]
    InvalidElement { value: u64, order: u64 },
    #[error("division by zero")]
    DivisionByZero,
    #[error("operands belong to different fields")]
    SpecMismatch,
    #[error("matrix is singular")]
    Singular,
    #[error("dimension mismatch: {0}")]
    DimensionMismatch(String),
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum NetworkError {
    #[error("cycle detected")]
    Cycle,
    #[error("source {0} has an incoming edge")]
    SourceWithInEdge(String),
    #[error("vertex {0} has no path to the sink")]
    UnreachableSink(String),
    #[error("duplicate edge id {0}")]
    DuplicateEdge(String),
    #[error("duplicate vertex id {0}")]
    DuplicateVertex(String),
    #[error("unknown vertex {0}")]
    UnknownVertex(String),
    #[error("unknown edge {0}")]
    UnknownEdge(String),
    #[error("sink {0} is also listed as a source")]
    SinkIsSource(String),
    #[error("network has no sources")]
    NoSources,
    #[error("no path from {from} to {to}")]
    Unreachable { from: String, to: String },
    #[error("flow value {found} is below the required {required}")]
    InsufficientFlow { found: usize, required: usize },
    #[error("invalid request: {0}")]
    InvalidRequest(String),
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum CodeError {
    #[error(transparent)]
    Field(#[from] FieldError),
    #[error(transparent)]
    Network(#[from] NetworkError),
    #[error("coefficient on edge {edge} violates the network topology: {reason}")]
    Topology { edge: String, reason: String },
    #[error("dimension mismatch: {0}")]
    Dimension(String),
    #[error("code does not compute the target function")]
    NotComputing,
    #[error("decoding failed: {0}")]
    DecodeFailure(String),
    #[error("ambiguous decoding: {0}")]
    Ambiguous(String),
    #[error("invariant violated: {0}")]
    Invariant(String),
    #[error("invalid input: {0}")]
    Invalid(String),
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum ConstructionError {
    #[error(transparent)]
    Code(#[from] CodeError),
    #[error(transparent)]
    Network(#[from] NetworkError),
    #[error(transparent)]
    Field(#[from] FieldError),
    #[error("rate {k} exceeds the achievable value {max}")]
    RateTooLarge { k: usize, max: usize },
    #[error("field of order {q} is too small: {reason}")]
    FieldTooSmall { q: u64, reason: String },
    #[error("random search exhausted after {attempts} attempts: {detail}")]
    RetriesExhausted { attempts: usize, detail: String },
    #[error("too many error patterns: {count} exceeds the cap {cap}")]
    TooManyPatterns { count: usize, cap: usize },
    #[error("τ = {tau} is too large: need 2τ below the smallest cut {mincut}")]
    TauTooLarge { tau: usize, mincut: usize },
    #[error("network is not three-layer: {0}")]
    NotThreeLayer(String),
    #[error("invalid parameters: {0}")]
    Invalid(String),
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum GradientError {
    #[error(transparent)]
    Construction(#[from] ConstructionError),
    #[error(transparent)]
    Code(#[from] CodeError),
    #[error(transparent)]
    Network(#[from] NetworkError),
    #[error("data subset {0} is not assigned to any worker")]
    OrphanSubset(usize),
    #[error("replication {found} is below the required {required}")]
    InsufficientReplication { found: usize, required: usize },
    #[error("infeasible load problem: {0}")]
    Infeasible(String),
    #[error("worker {worker} is missing the gradient of subset {subset}")]
    MissingGradient { worker: usize, subset: usize },
    #[error("invalid parameters: {0}")]
    Invalid(String),
}
