use alloc::string::String;

pub type Result<T, E = Error> = core::result::Result<T, E>;

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum Error {
    #[error("line {line}: {reason}")]
    MalformedLine { line: usize, reason: String },
    #[error("line {line}: self-loop triple on `{label}`")]
    SelfLoop { line: usize, label: String },
    #[error("line {line}: unknown {kind} label `{label}`")]
    UnknownLabel {
        line: usize,
        kind: &'static str,
        label: String,
    },
    #[error("reciprocal triples were already added")]
    ReciprocalsAlreadyAdded,
    #[error("{kind} id {id} out of range (size {len})")]
    OutOfRange {
        kind: &'static str,
        id: usize,
        len: usize,
    },
    #[error("dimension mismatch: expected {expected}, got {got}")]
    DimensionMismatch { expected: usize, got: usize },
    #[error("ComplEx needs an even dimension, got {0}")]
    OddDimension(usize),
    #[error("non-finite value in {0}")]
    NonFinite(&'static str),
    #[error("no features for entity `{0}`")]
    MissingFeatures(String),
    #[error("entity `{0}` appears in both the training and the inductive graph")]
    EntityOverlap(String),
    #[error("relation vocabularies differ")]
    RelationMismatch,
    #[error("candidate set is empty")]
    EmptyCandidates,
    #[error("entity {0} listed twice")]
    DuplicateId(usize),
    #[error("gold entity {0} is not a candidate")]
    GoldNotCandidate(usize),
    #[error("probabilities sum to {0}, expected 1")]
    NotNormalised(f64),
    #[error("probability {0} outside [0, 1]")]
    ProbabilityOutOfRange(f64),
    #[error("self-loop triple on entity {0}")]
    SelfLoopInScope(usize),
    #[error("scope contains no triples")]
    EmptyScope,
    #[error("graph contains no triples")]
    EmptyGraph,
    #[error("no ranks to aggregate")]
    EmptyRanks,
    #[error("rank {0} is below 1")]
    InvalidRank(f64),
    #[error("non-finite loss at epoch {epoch}, batch {batch}")]
    NonFiniteLoss { epoch: usize, batch: usize },
    #[error("invalid configuration: {0}")]
    InvalidConfig(String),
}
