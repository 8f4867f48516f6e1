use thiserror::Error;

#[derive(Debug, Error)]
pub enum ConfigError {
    #[error("{name} sums to {sum}")]
    PmfSum { name: String, sum: f64 },
    #[error("{name} has length {got}, expected {expected}")]
    PmfLength { name: String, expected: usize, got: usize },
    #[error("{name}({index}) = {value} is not a probability")]
    PmfNegative { name: String, index: usize, value: f64 },
    #[error("{name} = {value} violates {constraint}")]
    OutOfRange { name: &'static str, value: f64, constraint: &'static str },
    #[error("M must be even for orthogonal reuse (M = {m})")]
    OddLevels { m: usize },
    #[error("unknown config key '{key}'")]
    UnknownKey { key: String },
    #[error("bad value '{value}' for {key}: expected {expected}")]
    BadValue { key: String, value: String, expected: &'static str },
    #[error("line {line}: expected 'key = value', got '{text}'")]
    Syntax { line: usize, text: String },
    #[error("line {line}: key '{key}' given more than once")]
    DuplicateKey { key: String, line: usize },
    #[error("line {line}: {source}")]
    AtLine {
        line: usize,
        #[source]
        source: Box<ConfigError>,
    },
    #[error("cannot read config {path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
}

impl ConfigError {
    pub(crate) fn at_line(self, line: usize) -> ConfigError {
        ConfigError::AtLine { line, source: Box::new(self) }
    }
}

#[derive(Debug, Error)]
pub enum FronthaulError {
    #[error("zero fronthaul capacity gives infinite quantization noise")]
    ZeroCapacity,
    #[error("quantization bracket search failed for cell {cell}: f({lo:e}) = {f_lo}, f({hi:e}) = {f_hi}")]
    Bracket { cell: u8, lo: f64, hi: f64, f_lo: f64, f_hi: f64 },
}

#[derive(Debug, Error)]
pub enum DetectError {
    #[error("received sample {index} is not finite: {value}")]
    NonFinite { index: usize, value: String },
    #[error("received vector has {got} samples, model expects {expected}")]
    Length { expected: usize, got: usize },
    #[error("empty observation sequence")]
    Empty,
}

#[derive(Debug, Error)]
pub enum ExponentError {
    #[error("edge exponent requires 0 < rho < 1, got rho = {rho}")]
    RhoOutOfRange { rho: f64 },
    #[error("cloud covariance surrogate not positive definite at these parameters ({label})")]
    NotPositiveDefinite { label: String },
    #[error("covariance factorization failed: {0}")]
    Factorization(String),
    #[error("dimension mismatch: {0} vs {1}")]
    Dimension(usize, usize),
    #[error("alpha = {0} outside [0, 1]")]
    Alpha(f64),
    #[error(transparent)]
    Fronthaul(#[from] FronthaulError),
    #[error(transparent)]
    Config(#[from] ConfigError),
}

#[derive(Debug, Error)]
pub enum LearnError {
    #[error("model expects {expected} inputs, dataset has {got}")]
    InputDim { expected: usize, got: usize },
    #[error("model has {outputs} outputs, labels need {classes} classes")]
    OutputDim { outputs: usize, classes: usize },
    #[error("dataset is empty")]
    EmptyDataset,
    #[error("label {label} out of range for {classes} classes")]
    Label { label: usize, classes: usize },
    #[error("non-finite feature at row {row}, column {col}")]
    NonFinite { row: usize, col: usize },
    #[error("cloud target needs a quantization spec")]
    MissingQuantization,
    #[error("model file: {0}")]
    Format(String),
    #[error(transparent)]
    Io(#[from] std::io::Error),
    #[error(transparent)]
    Csv(#[from] csv::Error),
}

#[derive(Debug, Error)]
pub enum ExperimentError {
    #[error("trial count must be positive")]
    NoTrials,
    #[error("unknown plan '{0}'")]
    UnknownPlan(String),
    #[error("sweep value list is empty")]
    NoValues,
    #[error("sweep parameter '{0}' does not resolve")]
    BadParameter(String),
    #[error("cannot write {path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
    #[error(transparent)]
    Csv(#[from] csv::Error),
}

/// Top-level error for code that spans several modules.
#[derive(Debug, Error)]
pub enum Error {
    #[error(transparent)]
    Config(#[from] ConfigError),
    #[error(transparent)]
    Fronthaul(#[from] FronthaulError),
    #[error(transparent)]
    Detect(#[from] DetectError),
    #[error(transparent)]
    Exponent(#[from] ExponentError),
    #[error(transparent)]
    Learn(#[from] LearnError),
    #[error(transparent)]
    Experiment(#[from] ExperimentError),
}

impl Error {
    /// Whether this is a configuration problem (CLI exit code 1) rather than a
    /// runtime failure.
    pub fn is_config(&self) -> bool {
        matches!(self, Error::Config(_))
            || matches!(
                self,
                Error::Experiment(
                    ExperimentError::UnknownPlan(_) | ExperimentError::BadParameter(_) | ExperimentError::NoValues
                )
            )
    }
}

pub type Result<T, E = Error> = std::result::Result<T, E>;
