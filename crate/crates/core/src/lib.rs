//! Action ground states, nodal action ground states and normalized solutions
//! of `-Laplacian u + lambda u = |u|^{p-2} u` with Dirichlet conditions on
//! intervals and rectangles.
//!
//! The crate is organised bottom-up:
//!
//! * [`grid`]: uniform grids, the finite-difference Laplacian, quadratures.
//! * [`spectral`]: the lowest Dirichlet eigenpairs.
//! * [`action`]: action/energy functionals, the Nehari projection and the
//!   positive ground-state solver.
//! * [`nodal`]: the nodal Nehari projection and the nodal ground-state solver.
//! * [`curves`]: level curves `lambda -> J(lambda)`, mass thresholds and
//!   asymptotics.
//! * [`normalized`]: the prescribed-mass problem, certification, Pohozaev.

#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod action;
pub mod curves;
pub mod dump;
pub mod error;
pub mod grid;
pub mod linalg;
pub mod nodal;
pub mod normalized;
pub mod spectral;

pub use action::{ActionParams, Context, GroundState, Kind, SolverOptions};
pub use error::{NlsError, Result};
pub use grid::{build_grid, DomainSpec, Field, Grid};
