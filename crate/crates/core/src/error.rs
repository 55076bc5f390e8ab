use thiserror::Error;

/// Errors raised by the laboratory.
#[derive(Debug, Error, Clone, PartialEq)]
pub enum LabError {
    #[error("parameter out of domain: {0}")]
    Parameter(String),

    #[error("coordinate x = {x} outside [-1, 1]")]
    Domain { x: f64 },

    #[error("point ({x}, {y}) does not lie in the space")]
    OutsideSpace { x: f64, y: f64 },

    #[error("profile vanishes at x = {x}; the ratio y / f(x) is undefined")]
    SingularProfile { x: f64 },

    #[error("inadmissible input: {0}")]
    Inadmissible(String),

    #[error("infeasible transport problem: {0}")]
    Infeasible(String),

    #[error("structured map unavailable: {split_fraction:.4} of the mass is split")]
    StructuredMapUnavailable { split_fraction: f64 },

    #[error("nonpositive Jacobian factor {value} at ({x}, {y})")]
    SingularConfiguration { x: f64, y: f64, value: f64 },

    #[error("midpoint map is not injective: {collisions} collisions")]
    Collision { collisions: usize },

    #[error("entropy undefined: atom {index} has zero reference mass")]
    ZeroReferenceMass { index: usize },

    #[error("configuration error: {0}")]
    Config(String),

    #[error("i/o error: {0}")]
    Io(String),
}

impl From<std::io::Error> for LabError {
    fn from(e: std::io::Error) -> Self {
        LabError::Io(e.to_string())
    }
}

impl From<csv::Error> for LabError {
    fn from(e: csv::Error) -> Self {
        LabError::Io(e.to_string())
    }
}

impl From<serde_json::Error> for LabError {
    fn from(e: serde_json::Error) -> Self {
        LabError::Io(e.to_string())
    }
}

pub type Result<T> = std::result::Result<T, LabError>;
