use thiserror::Error;

/// Errors reported by the library.
#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    #[error("dimension mismatch in {context}: expected {expected}, got {actual}")]
    Dimension {
        context: &'static str,
        expected: usize,
        actual: usize,
    },

    #[error("non-finite value in {0}")]
    NonFinite(&'static str),

    #[error("invalid input: {0}")]
    Input(String),

    #[error("mode index {index} out of range for a system with {modes} modes")]
    ModeOutOfRange { index: usize, modes: usize },

    #[error("polyhedron is empty")]
    EmptyPolyhedron,

    #[error("polyhedron is unbounded")]
    UnboundedPolyhedron,

    #[error("barrier has empty invariant region")]
    EmptyInvariantRegion,

    #[error("point lies outside every member region of the barrier family")]
    OutsideFamily,

    #[error("barrier family is empty")]
    EmptyFamily,

    #[error("initial state has positive barrier value {0}")]
    PositiveInitialValue(f64),

    #[error("numerical failure: {0}")]
    Numerical(String),
}

pub type Result<T, E = Error> = std::result::Result<T, E>;

pub(crate) fn check_dim(context: &'static str, expected: usize, actual: usize) -> Result<()> {
    if expected == actual {
        Ok(())
    } else {
        Err(Error::Dimension {
            context,
            expected,
            actual,
        })
    }
}
