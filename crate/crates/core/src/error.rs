use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    #[error("point {coords:?} lies outside the phase space of {system}")]
    Domain { system: String, coords: Vec<f64> },

    #[error("invalid parameter: {0}")]
    InvalidParameter(String),

    /// The computation is well posed but its result would not mean anything,
    /// e.g. an L^p diagnostic on a heavily censored sample.
    #[error("refused: {0}")]
    Refused(String),

    #[error("no admissible schedule: {0}")]
    NoAdmissibleSchedule(String),

    #[error("degenerate fit: {0}")]
    Degenerate(String),

    #[error("internal error: {0}")]
    Internal(String),
}
