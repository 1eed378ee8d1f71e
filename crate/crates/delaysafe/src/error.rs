use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    #[error("parse error at line {line}, column {col}: {msg}")]
    Parse { line: usize, col: usize, msg: String },

    #[error("missing field `{0}`")]
    MissingField(String),

    #[error("invalid configuration: {0}")]
    Config(String),

    #[error("delay bounds invalid: D_lo = {lo}, D_hi = {hi}")]
    DelayBounds { lo: f64, hi: f64 },

    #[error("jet order {requested} exceeds available order {available}")]
    JetOrder { requested: usize, available: usize },

    #[error("derivative order {requested} exceeds smoothness budget {limit} for {what}")]
    SmoothnessBudget { what: String, requested: usize, limit: usize },

    #[error("assumption violated: {0}")]
    Assumption(String),

    #[error("gain requirement violated at {which}: need > {required}, got {given}")]
    Gain { which: String, required: f64, given: f64 },

    #[error("contract violation: {0}")]
    Contract(String),

    #[error("time {t} outside stored history starting at {start}")]
    OutOfHistory { t: f64, start: f64 },

    #[error("divergence at t = {t}: |state| = {magnitude:e}")]
    Divergence { t: f64, magnitude: f64 },

    #[error("io: {0}")]
    Io(String),
}

pub type Result<T> = std::result::Result<T, Error>;

impl From<std::io::Error> for Error {
    fn from(e: std::io::Error) -> Self {
        Error::Io(e.to_string())
    }
}

impl From<csv::Error> for Error {
    fn from(e: csv::Error) -> Self {
        Error::Io(e.to_string())
    }
}
