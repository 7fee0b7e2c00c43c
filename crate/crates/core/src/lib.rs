//! Bohmian trajectories of the free Klein-Gordon current.
//!
//! The crate evaluates the conserved current of finite plane-wave
//! superpositions, integrates its integral curves in an affine parameter
//! (so trajectories may run backwards in coordinate time), and does the
//! global probability bookkeeping over trajectory families: crossing
//! multiplicities, signed and unsigned fluxes, and hypersurfaces crossed at
//! most once by every trajectory. It also evaluates the two-frequency
//! interference densities and their time averages.
//!
//! Modules, bottom up:
//!
//! - [`geometry`]: four-vectors, boxes, planar hypersurfaces, foliations
//! - [`wavefunction`]: mode sums and both normalizations
//! - [`current`]: single- and n-particle currents and densities
//! - [`integrator`], [`trajectory`]: adaptive integration with events
//! - [`congruence`]: launching families and flux accounting
//! - [`interference`]: conventional vs Klein-Gordon interference densities
//! - [`scenario`]: JSON scenario configs and the report writers

pub mod congruence;
pub mod current;
pub mod error;
pub mod exec;
pub mod geometry;
pub mod integrator;
pub mod interference;
pub mod output;
pub mod scenario;
pub mod stats;
pub mod trajectory;
pub mod wavefunction;

pub use current::{CurrentField, NParticleCurrent, NParticleWaveFunction};
pub use error::{Error, Result};
pub use exec::Exec;
pub use geometry::{FourVector, Hypersurface, Patch, Quadrature, SpatialBox};
pub use trajectory::{IntegratorConfig, Trajectory};
pub use wavefunction::{make_two_mode, Normalization, PlaneWaveMode, WaveFunction};
