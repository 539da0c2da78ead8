//! Momentum-space (Fock representation) solver for one electron in the
//! field of several fixed Coulomb centers, with a finite-difference
//! position-space reference solver.
//!
//! The electron energy follows from the roots `p0` of `det H(p0) = 0`,
//! where `H` is built over Sturmian orbitals that all share the exponent
//! `p0`; each root gives `E = -p0²/2` and the null vectors of `H` give the
//! expansion coefficients of the wave function.

pub mod basis;
pub mod error;
pub mod geometry;
pub mod gridref;
pub mod hamiltonian;
pub mod integrals;
pub mod par;
pub mod quadrature;
pub mod solver;
pub mod specfun;

pub use basis::{build_basis, BasisSet, OrbitalIndex, QuantumNumbers, Shell};
pub use error::{Error, Result};
pub use geometry::{ClusterGeometry, Ion};
pub use integrals::QuadratureSpec;
pub use par::Execution;
pub use solver::{find_levels, ScanConfig, SpectrumLevel};
