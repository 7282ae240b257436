//! Error types for every core subsystem.

use alloc::string::String;

use thiserror::Error;

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum StreamError {
    #[error("stream name must not be empty")]
    EmptyName,
}

#[derive(Debug, Clone, PartialEq, Error)]
pub enum FieldError {
    #[error("zero has no multiplicative inverse")]
    ZeroInverse,
    #[error("clip range must be positive and finite, got {0}")]
    InvalidClipRange(f64),
    #[error("quantization bits must be in 1..=59, got {0}")]
    InvalidBits(u32),
    #[error("{count} addends exceed the codec limit of {max}")]
    TooManyAddends { count: u64, max: u64 },
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum SharingError {
    #[error("threshold {threshold} and total {total} must satisfy 1 <= t <= n")]
    InvalidParams { threshold: usize, total: usize },
    #[error("need at least {needed} shares, got {got}")]
    NotEnoughShares { needed: usize, got: usize },
    #[error("duplicate evaluation point x = {0}")]
    DuplicatePoint(u64),
    #[error("evaluation point must be nonzero")]
    ZeroPoint,
    #[error("share sets are evaluated at different points")]
    MismatchedPoints,
}

#[derive(Debug, Clone, PartialEq, Error)]
pub enum SecAggError {
    #[error("invalid session configuration: {0}")]
    Config(String),
    #[error("operation requires round {expected}, session is in {actual}")]
    WrongRound {
        expected: &'static str,
        actual: &'static str,
    },
    #[error("client {0} is not a participant")]
    UnknownClient(usize),
    #[error("client {0} already submitted a masked input")]
    DuplicateSubmission(usize),
    #[error("vector has length {got}, session dimension is {expected}")]
    DimensionMismatch { expected: usize, got: usize },
    #[error("session aborted: {survivors} survivors below threshold {threshold}")]
    Aborted { survivors: usize, threshold: usize },
    #[error("insufficient shares to reconstruct {0}")]
    InsufficientShares(String),
    #[error("mask-leak hazard: shares of both the self mask and a pairwise seed of client {0} were revealed")]
    MaskLeak(usize),
    #[error(transparent)]
    Sharing(#[from] SharingError),
    #[error(transparent)]
    Field(#[from] FieldError),
}

#[derive(Debug, Clone, PartialEq, Error)]
pub enum DpError {
    #[error("epsilon must be positive, got {0}")]
    NonPositiveEpsilon(f64),
    #[error("invalid privacy parameter: {0}")]
    InvalidParameter(String),
    #[error("no updates to aggregate")]
    EmptyUpdates,
    #[error("lot size {lot} exceeds client dataset size {available}")]
    LotTooLarge { lot: usize, available: usize },
}

#[derive(Debug, Clone, PartialEq, Error)]
pub enum LearnerError {
    #[error("invalid model spec: {0}")]
    InvalidSpec(String),
    #[error("batch is empty")]
    EmptyBatch,
    #[error("label {label} out of range for {num_classes} classes")]
    LabelOutOfRange { label: usize, num_classes: usize },
    #[error("non-finite feature at sample {0}")]
    NonFiniteFeature(usize),
    #[error("feature width {got} does not match model input {expected}")]
    InputMismatch { expected: usize, got: usize },
    #[error("parameter length {got} does not match layout {expected}")]
    ParamMismatch { expected: usize, got: usize },
    #[error("training set is empty")]
    EmptyTrainingSet,
}

#[derive(Debug, Clone, PartialEq, Error)]
pub enum DataError {
    #[error("invalid dataset parameters: {0}")]
    InvalidParams(String),
    #[error("{clients} clients requested for {samples} samples")]
    TooManyClients { clients: usize, samples: usize },
    #[error("dirichlet partition left a client empty after {0} attempts")]
    EmptyClient(usize),
    #[error("train fraction must lie in (0, 1), got {0}")]
    InvalidFraction(f64),
}

#[derive(Debug, Clone, PartialEq, Error)]
pub enum FederationError {
    #[error("invalid federation config: {0}")]
    Config(String),
    #[error("no updates to aggregate")]
    EmptyUpdates,
    #[error("update {index} has length {got}, expected {expected}")]
    DimensionMismatch {
        index: usize,
        expected: usize,
        got: usize,
    },
    #[error("aggregation weights must be positive")]
    NonPositiveWeight,
    #[error(transparent)]
    Learner(#[from] LearnerError),
    #[error(transparent)]
    Data(#[from] DataError),
    #[error(transparent)]
    Dp(#[from] DpError),
    #[error(transparent)]
    SecAgg(#[from] SecAggError),
    #[error(transparent)]
    Stream(#[from] StreamError),
}

#[derive(Debug, Clone, PartialEq, Error)]
pub enum MetricsError {
    #[error("length mismatch: {0}")]
    LengthMismatch(String),
    #[error("need at least two classes, got {0}")]
    TooFewClasses(usize),
    #[error("label {label} out of range for {num_classes} classes")]
    LabelOutOfRange { label: usize, num_classes: usize },
    #[error("need at least {needed} observations, got {got}")]
    TooFewSamples { needed: usize, got: usize },
    #[error("pooled standard deviation is zero")]
    ZeroPooledDeviation,
    #[error("comparison count {m} is smaller than the number of p-values {n}")]
    TooFewComparisons { m: usize, n: usize },
    #[error("overhead baseline must be positive, got {0}")]
    NonPositiveBaseline(f64),
    #[error("invalid power profile: {0}")]
    InvalidPowerProfile(String),
}
