//! Simulation of abelian anyons in continuous-variable surface-code states.
//!
//! Two engines live side by side:
//!
//! * [`gaussian`] evolves the first and second moments of an n-mode Gaussian
//!   state under Clifford gates and homodyne measurement (finite squeezing);
//! * [`weyl`] tracks Weyl-Heisenberg operators with exact phases and ideal
//!   nullifier sets (infinite squeezing).
//!
//! [`lattice`] supplies the star/plaquette geometry, [`protocols`] strings the
//! pieces into preparation, braiding and detection experiments, and
//! [`verify`] turns states into moment reports and verdicts.

pub mod error;
pub mod gaussian;
pub mod lattice;
pub mod linalg;
pub mod protocols;
pub mod sampling;
pub mod verify;
pub mod weyl;

pub use error::{Error, Result};
pub use gaussian::{GaussianState, MeasurementOutcome, Quadrature, SymplecticOp};
pub use lattice::{Boundary, Lattice, LoopTarget, LoopVariant, Species, StringSpec};
pub use sampling::Execution;
pub use verify::ExperimentReport;
pub use weyl::{AnyonConfig, LinearForm, NullifierSet, Site, WeylOp};
