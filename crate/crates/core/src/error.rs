use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    #[error("size mismatch: expected {expected}, found {found}")]
    SizeMismatch { expected: usize, found: usize },

    #[error("non-finite coordinate at index {index}")]
    NonFinite { index: usize },

    #[error("constellation has zero average power")]
    ZeroPower,

    #[error("scale factor must be positive, got {0}")]
    NonPositiveScale(f64),

    #[error("unsupported H-QAM order: m_l = {0} (expected 2 or 3)")]
    UnsupportedOrder(u32),

    #[error("index {index} out of range 1..={max}")]
    IndexOutOfRange { index: usize, max: usize },

    #[error("constellation carries no low-priority bits")]
    NoLpBits,

    #[error("invalid parameter: {0}")]
    InvalidParameter(String),

    #[error("KKT system could not be solved: {0}")]
    LinearSolveFailure(String),

    #[error("no strictly feasible start found (best r_H = {best_r_h:.6})")]
    NoFeasibleStart { best_r_h: f64 },

    #[error("problem infeasible: r* = {r_star} exceeds best achievable r_H = {best_r_h:.6}")]
    Infeasible { r_star: f64, best_r_h: f64 },

    #[error("empty input")]
    EmptyInput,

    #[error("distance must be positive, got {0}")]
    NonPositiveDistance(f64),

    #[error("target probability {0} cannot be bracketed")]
    NotBracketed(f64),

    #[error("malformed document: {0}")]
    Format(String),
}

pub type Result<T> = std::result::Result<T, Error>;
