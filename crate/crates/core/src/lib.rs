//! Spectral-Galerkin laboratory for parabolic equations with impulses at
//! state-dependent moments: simulation, beating exclusion, and almost
//! periodic solutions through a two-level fixed-point construction.

#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod ap_analysis;
pub mod error;
pub mod evolution;
pub mod io;
pub mod quadrature;
pub mod sampling;
pub mod sim;
pub mod solver;
pub mod spectral;
pub mod system;
pub mod trajectory;
pub mod trig;

pub use error::{Error, Result};
pub use sim::{BeatingCertificate, SimSettings, Simulation, Simulator};
pub use spectral::{DirichletLaplacian, SpectralGrid, SpectralVec};
pub use system::{Forcing, ImpulseSystem, Jumps, PointwiseMap, Surfaces, SystemParts};
pub use trajectory::{HitRecord, PiecewiseTrajectory, Segment};
pub use trig::{APSequenceGen, TrigSum, TrigTerm};
