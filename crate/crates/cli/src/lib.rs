//! Problem files, bundled benchmark fixtures and the command implementations
//! behind the `pwa-cbf` binary.

pub mod commands;
pub mod fixtures;
pub mod problem;

pub use commands::{Artifact, Status};
pub use problem::{load_problem, parse_problem, InputError, ProblemSpec};
