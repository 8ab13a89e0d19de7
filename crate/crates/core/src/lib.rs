//! Deterministic solver for the semiclassical Boltzmann-Poisson system on a
//! piecewise-constant (lowest-order DG) discretization of k-space.
//!
//! The collision matrix `K[α][β]` can be built two ways: by a semi-analytic
//! co-area quadrature ([`collision::k_matrix_oracle`]) or by short-time
//! Monte Carlo of the homogeneous, field-free problem started from the
//! indicator of each source cell ([`mc_extract::extract_k_matrix`]).
//!
//! Module map:
//!
//! - [`params`]: constants, material data, device configuration and scales
//! - [`band`]: Kane nonparabolic band
//! - [`kgrid`]: annular cells in cylindrical `(u, r, θ)` coordinates
//! - [`collision`]: phonon kernel, total rate, oracle matrix, collision operator
//! - [`mc_extract`]: null-collision Monte Carlo coefficient extraction
//! - [`transport`]: semidiscrete right-hand side with upwind fluxes
//! - [`field`]: 1-D Poisson solve
//! - [`driver`]: time integration, moments, diagnostics and output
//!
//! Data-parallel loops go through [`par::Execution`]; with the `parallel`
//! feature disabled every policy runs sequentially.

pub mod band;
pub mod collision;
pub mod driver;
pub mod error;
pub mod field;
pub mod kgrid;
pub mod kmatrix_io;
pub mod mc_extract;
pub mod par;
pub mod params;
pub mod quadrature;
pub mod transport;

pub use error::{Error, Result};
