//! Numerical laboratory for classical Coulomb gases in dimensions two and three.
//!
//! The crate is organised bottom-up:
//!
//! * [`kernel`] holds the Coulomb kernels, the dimensional constants, smeared
//!   charges and the n-body Hamiltonian.
//! * [`equilibrium`] computes the equilibrium measure (radial closed form and a
//!   grid obstacle-problem solver), the effective potential and the
//!   finite-temperature mean-field density.
//! * [`splitting`] decomposes the Hamiltonian into mean-field, confinement and
//!   next-order pieces.
//! * [`jellium`] evaluates renormalized energies of periodic configurations
//!   with Ewald sums, Epstein zeta functions and the lattice catalog.
//! * [`sampler`] contains Metropolis / Langevin chains, the ground-state
//!   search, thermodynamic integration and the tiled configuration generator.
//! * [`diagnostics`] measures charge discrepancies, density profiles and bond
//!   order.
//!
//! With the default `parallel` feature, pair sums, grid sweeps and independent
//! chains run on rayon. Every reduction is ordered, so results are bit-identical
//! with the feature on or off.

pub mod diagnostics;
pub mod equilibrium;
pub mod error;
pub mod grid;
pub mod io;
pub mod jellium;
pub mod kernel;
pub mod par;
pub mod potential;
pub mod quad;
pub mod sampler;
pub mod special;
pub mod splitting;
pub mod verify;

pub use error::{Error, Result};

/// Crate version, recorded in run manifests.
pub const VERSION: &str = env!("CARGO_PKG_VERSION");

pub use kernel_reexports::*;
mod kernel_reexports {
    pub use crate::kernel::{Configuration, Dimension, SpaceConstants};
    pub use crate::potential::{Potential, PowerPotential};
}
