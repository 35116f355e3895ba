//! Synthesis, verification and closed-loop execution of piecewise-affine
//! control barrier functions for continuous-time switched affine systems.
//!
//! The numeric core is generic over [`Scalar`] (`f32` or `f64`); the aliases
//! below fix it to `f64`. Mode and piece indices are zero-based throughout.

pub mod barrier;
pub mod error;
pub mod geometry;
pub mod linalg;
pub mod multibarrier;
pub mod scalar;
pub mod sim;
pub mod synth;
pub mod system;
pub mod verifier;

pub use barrier::{BarrierKind, Piece};
pub use error::{Error, Result};
pub use scalar::Scalar;
pub use synth::SynthConfig;

pub type Polyhedron = geometry::Polyhedron<f64>;
pub type SwitchedAffineSystem = system::SwitchedAffineSystem<f64>;
pub type PiecewiseAffineBarrier = barrier::PiecewiseAffineBarrier<f64>;
pub type BarrierFamily = multibarrier::BarrierFamily<f64>;
pub type VerificationOutcome = verifier::VerificationOutcome<f64>;
pub type SynthOutcome = synth::SynthOutcome<f64>;
pub type Trajectory = sim::Trajectory<f64>;
