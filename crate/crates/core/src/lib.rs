//! Mean-field engine for coupled driven-dissipative Rydberg chains.
//!
//! The crate is organised bottom-up:
//!
//! * [`lattice`] builds the periodic unit cell and the interaction matrix `W`;
//! * [`dynamics`] evaluates the mean-field equations of motion and
//!   [`integrate`] steps them in time;
//! * [`steady`] finds and classifies fixed points, backed by the dense
//!   eigen-solver in [`linalg`];
//! * [`oscillation`] detects and classifies limit cycles and samples basins;
//! * [`continuation`] tracks branches in the inter-chain coupling and locates
//!   the Hopf, pitchfork and merge points;
//! * [`config`] and [`report`] handle the flat-file inputs and outputs.
//!
//! All numerics are generic over [`Real`]; the aliases below pin `f64`, which
//! is what every analysis in this crate is tuned for.

pub mod config;
pub mod continuation;
pub mod dynamics;
pub mod error;
pub mod field;
pub mod integrate;
pub mod lattice;
pub mod linalg;
pub mod oscillation;
pub mod report;
pub mod scalar;
pub mod seeds;
pub mod steady;

pub use error::{Error, Result};
pub use scalar::Real;

pub type Params = lattice::ModelParams<f64>;
pub type Couplings = lattice::CouplingTable<f64>;
pub type Model = dynamics::MeanField<f64>;
pub type State = dynamics::StateVector<f64>;
pub type Traj = integrate::Trajectory<f64>;
pub type Fixed = steady::FixedPoint<f64>;
pub type Census = steady::SolutionCensus<f64>;
pub type Cycle = oscillation::CycleDescriptor<f64>;
pub type DenseMatrix = linalg::Matrix<f64>;
