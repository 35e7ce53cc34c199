//! Simulator for a direct-communication qubit channel protected by feedback
//! verification and a secret random walk of the coding basis.
//!
//! The algebra (`qubit`, `walk`, `tomography`) is generic over the float
//! type; the session machinery works in `f64`. Every random draw comes from
//! an [`RngStream`] keyed by an explicit seed.

pub mod adversary;
pub mod codec;
pub mod harness;
pub mod protocol;
pub mod qubit;
pub mod rng;
pub mod scalar;
pub mod tomography;
pub mod walk;

pub use adversary::{EveRecord, EveStrategy};
pub use codec::{make_scheme, Decoded, Package, PackageRole, PackageScheme};
pub use protocol::{run_session, SessionConfig, SessionOutcome, Transcript};
pub use qubit::{Bit, BlochVector, DensityMatrix, Detector};
pub use rng::RngStream;
pub use scalar::Scalar;
pub use walk::WalkState;

pub type Bloch = BlochVector<f64>;
pub type Bloch32 = BlochVector<f32>;
pub type Density = DensityMatrix<f64>;
pub type Density32 = DensityMatrix<f32>;
pub type Walk = WalkState<f64>;
pub type Walk32 = WalkState<f32>;
pub type Estimate = tomography::BlochEstimate<f64>;
