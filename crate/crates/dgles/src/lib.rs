//! Modal discontinuous-Galerkin solver for the compressible Navier-Stokes
//! equations with LES subgrid closures, specialized to the periodic turbulent
//! channel benchmark.
//!
//! The library is organized around the main building blocks of the scheme:
//!
//! * [`basis`] — orthonormal modal polynomial basis on the reference
//!   tetrahedron and quadrature rules exact to degree `2q`;
//! * [`mesh`] — stretched structured hex grid split into tetrahedra, with
//!   periodic and wall face connectivity;
//! * [`fields`] — modal coefficient storage, projection (grid) filter,
//!   modal-truncation test filter and Favre pointwise operations;
//! * [`gas`] — nondimensional gas relations, primitive recovery and
//!   molecular constitutive fluxes;
//! * [`sgs`] — subgrid closures: classical Smagorinsky with Van Driest
//!   damping, and the dynamic anisotropic tensor-coefficient model;
//! * [`solver`] — LDG auxiliary gradients and the semi-discrete residual
//!   with Rusanov/centered numerical fluxes;
//! * [`timestep`] — SSPRK(5,4) integrator, CFL step control and the bulk
//!   flow-rate forcing controller;
//! * [`stats`] — wall-parallel plane statistics and mean-flow wall
//!   quantities;
//! * [`init`] — laminar base state and deterministic logistic-map
//!   perturbations;
//! * [`config`], [`runner`], [`checkpoint`] — batch run driver, key=value
//!   configuration and bit-exact restart files.

pub mod basis;
pub mod checkpoint;
pub mod config;
pub mod fields;
pub mod gas;
pub mod init;
pub mod mesh;
pub mod runner;
pub mod sgs;
pub mod solver;
pub mod stats;
pub mod timestep;

mod error;

pub use error::Error;

/// Crate-wide result alias.
pub type Result<T> = std::result::Result<T, Error>;
