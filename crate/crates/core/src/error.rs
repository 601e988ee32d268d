use thiserror::Error;

pub type Result<T, E = MessError> = std::result::Result<T, E>;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum MessError {
    #[error("grid too small: need at least 3 distinct time points, got {0}")]
    GridTooSmall(usize),
    #[error("invalid time: {0}")]
    InvalidTime(f64),
    #[error("off-grid observation at t = {0}")]
    OffGrid(f64),
    #[error("extrapolation not supported: t = {t} outside [{lo}, {hi}]")]
    Extrapolation { t: f64, lo: f64, hi: f64 },
    #[error("grid mismatch")]
    GridMismatch,
    #[error("dimension mismatch: {0}")]
    Dimension(String),
    #[error("invalid sample: {0}")]
    InvalidSample(String),
    #[error("variance components degenerate")]
    DegenerateComponents,
    #[error("mean system singular")]
    MeanSystemSingular,
    #[error("model selection failed: {0}")]
    SelectionFailed(String),
    #[error("no null distribution")]
    EmptyNull,
    #[error("invalid p-value: {0}")]
    InvalidPValue(f64),
    #[error("invalid parameter: {0}")]
    InvalidParameter(String),
    #[error("basis too rich for design: {0}")]
    BasisTooRich(String),
    #[error("degenerate labels: need at least one positive and one negative")]
    DegenerateLabels,
}
