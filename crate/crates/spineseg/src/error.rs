//! Error types shared across the toolkit.

use thiserror::Error;

/// Errors from spec-level transformations.
#[derive(Debug, Error)]
pub enum SpecError {
    #[error("block repeats must be in 1..=3, got {0}")]
    InvalidRepeats(u32),
    #[error("filter multiplier must be positive, got {0}")]
    InvalidMultiplier(f64),
    #[error("spec is already in the inverted-bottleneck family")]
    AlreadyMobile,
    #[error("output stride must be one of 4, 8, 16, got {0}")]
    InvalidOutputStride(u32),
}

/// Spec parse failure with serde's line/column diagnostics.
#[derive(Debug, Error)]
#[error("spec parse error: {0}")]
pub struct ParseError(#[from] pub serde_json::Error);

/// Errors while lowering a spec to a compute graph.
#[derive(Debug, Error)]
pub enum BuildError {
    #[error("input {h}x{w} not divisible by 2^{level} (max block level)")]
    IndivisibleInput { h: usize, w: usize, level: u32 },
    #[error("spec is invalid: {0}")]
    InvalidSpec(String),
    #[error("block {block} references undefined input {input_id}")]
    DanglingConnection { block: usize, input_id: usize },
    #[error("graph invariant violated: {0}")]
    Invariant(String),
}

/// Errors while executing a compute graph.
#[derive(Debug, Error)]
pub enum ExecError {
    #[error("missing weight slot '{0}'")]
    MissingWeight(String),
    #[error("weight slot '{name}' has shape {got:?}, expected {expected:?}")]
    WeightShape {
        name: String,
        got: Vec<usize>,
        expected: Vec<usize>,
    },
    #[error("node {node} ({op}): {detail}")]
    Shape {
        node: usize,
        op: String,
        detail: String,
    },
    #[error("input shape {got:?} does not match graph input {expected:?}")]
    InputMismatch {
        got: (usize, usize, usize, usize),
        expected: (usize, usize, usize),
    },
}

/// Errors from tensor arithmetic outside graph execution.
#[derive(Debug, Error)]
pub enum TensorError {
    #[error("channel mismatch: input has {input} channels, kernel expects {kernel}")]
    ChannelMismatch { input: usize, kernel: usize },
    #[error("kernel size {0} must be odd")]
    EvenKernel(usize),
    #[error("stride and dilation must be >= 1")]
    ZeroStride,
    #[error("resize factor must be >= 1")]
    ZeroFactor,
    #[error("parameter vector '{name}' has length {got}, expected {expected}")]
    ParamLength {
        name: &'static str,
        got: usize,
        expected: usize,
    },
    #[error("tensor dims {dims:?} do not match data length {len}")]
    DimMismatch {
        dims: (usize, usize, usize, usize),
        len: usize,
    },
}

/// Errors reading or writing the binary tensor/weight formats.
#[derive(Debug, Error)]
pub enum TensorIoError {
    #[error("io error: {0}")]
    Io(#[from] std::io::Error),
    #[error("bad magic: expected \"TNSR\"")]
    BadMagic,
    #[error("unsupported tensor rank {0} (expected 4)")]
    BadRank(u32),
    #[error("truncated tensor payload")]
    Truncated,
    #[error("weight record name is not valid UTF-8")]
    BadName,
}

/// Errors from static graph analysis.
#[derive(Debug, Error)]
pub enum AnalysisError {
    #[error("input {h}x{w} is not divisible by the graph's stride structure")]
    IndivisibleInput { h: usize, w: usize },
    #[error("non-uniform output stride: height ratio {h} vs width ratio {w}")]
    NonUniformStride { h: f64, w: f64 },
    #[error(transparent)]
    Build(#[from] BuildError),
}

/// Errors from search-space operations.
#[derive(Debug, Error)]
pub enum SearchError {
    #[error("invalid candidate: {0}")]
    InvalidCandidate(String),
    #[error("search config invalid: {0}")]
    InvalidConfig(String),
    #[error("trials must be >= 1")]
    NoTrials,
    #[error("evaluator failed: {0}")]
    Evaluator(String),
    #[error(transparent)]
    Build(#[from] BuildError),
}
