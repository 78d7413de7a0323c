use thiserror::Error;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum ProbError {
    #[error("no positive weight; the question has no consistent outcome")]
    AllZero,
    #[error("weights must be finite and nonnegative")]
    NegativeOrNaN,
    #[error("expected {expected} entries, got {got}")]
    LengthMismatch { expected: usize, got: usize },
    #[error("probabilities sum to {0}, not 1")]
    NotNormalized(f64),
    #[error("expected {expected} table rows, got {got}")]
    RowCount { expected: usize, got: usize },
    #[error("value `{value}` is not in domain `{domain}`")]
    UnknownParentValue { domain: String, value: String },
    #[error("factor {0} is outside [0, 1]")]
    FactorOutOfRange(f64),
    #[error("domains differ: {left} vs {right}")]
    DomainMismatch { left: String, right: String },
    #[error("domain `{0}` has no values")]
    EmptyDomain(String),
    #[error("domain `{domain}` repeats value `{value}`")]
    DuplicateValue { domain: String, value: String },
}

#[derive(Debug, Clone, PartialEq, Error)]
pub enum ModelError {
    #[error("invalid model parameters: {0}")]
    InvalidParams(String),
    #[error("invalid snapshot: {0}")]
    InvalidSnapshot(String),
    #[error("unknown target `{0}`")]
    UnknownTarget(String),
    #[error("roster of {0} is too large for exhaustive enumeration")]
    TooLarge(usize),
    #[error(transparent)]
    Prob(#[from] ProbError),
}

#[derive(Debug, Clone, PartialEq, Error)]
pub enum PerceptionError {
    #[error("invalid hit points {hp}/{hp_max}")]
    InvalidHp { hp: u32, hp_max: u32 },
    #[error("no history for character `{0}`")]
    UnknownCharacter(String),
    #[error("empty roster")]
    EmptyRoster,
    #[error("history frame {next} does not follow {last}")]
    NonContiguous { last: i64, next: i64 },
    #[error(transparent)]
    Model(#[from] ModelError),
}

#[derive(Debug, Error)]
pub enum SimError {
    #[error("actor `{0}` is dead or absent")]
    DeadActor(String),
    #[error("illegal action {skill} on `{target}`")]
    IllegalAction { skill: String, target: String },
    #[error("bad scenario: {0}")]
    BadScenario(String),
    #[error("malformed log: {0}")]
    MalformedLog(String),
    #[error("episode already finished")]
    Finished,
    #[error(transparent)]
    Perception(#[from] PerceptionError),
    #[error(transparent)]
    Model(#[from] ModelError),
    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

#[derive(Debug, Error)]
pub enum LearnError {
    #[error("no decision records and zero pseudocount")]
    NoData,
    #[error("malformed log: {0}")]
    MalformedLog(String),
    #[error("model structures differ: {0}")]
    DomainMismatch(String),
    #[error("invalid argument: {0}")]
    InvalidArgument(String),
    #[error(transparent)]
    Sim(#[from] SimError),
    #[error(transparent)]
    Model(#[from] ModelError),
}
